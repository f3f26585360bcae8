/// @file kernels.cpp
/// @brief Closed-form kernel evaluation and derivative composition.

#include "mfgpi/kernels.hpp"

#include <array>
#include <cmath>

namespace mfgpi {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

/// One multiplicative factor g(tau) of a product kernel together with its
/// derivatives up to fourth order.  g = exp(h) with h a smooth profile, so
/// the derivatives follow Faa di Bruno's formula in terms of h', ..., h''''.
struct Factor {
    bool periodic;    ///< periodic profile vs. squared-exponential
    double inv_sq;    ///< 1 / lengthscale^2

    /// g(tau), g'(tau), ..., g''''(tau).
    std::array<double, 5> derivs(double tau) const {
        double h, h1, h2, h3, h4;
        if (periodic) {
            // h(tau) = (cos(2 pi tau) - 1) / l^2  ==  -2 sin^2(pi tau)/l^2.
            const double c = std::cos(kTwoPi * tau);
            const double s = std::sin(kTwoPi * tau);
            h = inv_sq * (c - 1.0);
            h1 = -inv_sq * kTwoPi * s;
            h2 = -inv_sq * kTwoPi * kTwoPi * c;
            h3 = inv_sq * kTwoPi * kTwoPi * kTwoPi * s;
            h4 = inv_sq * kTwoPi * kTwoPi * kTwoPi * kTwoPi * c;
        } else {
            // h(tau) = -tau^2 / s^2.
            h = -inv_sq * tau * tau;
            h1 = -2.0 * inv_sq * tau;
            h2 = -2.0 * inv_sq;
            h3 = 0.0;
            h4 = 0.0;
        }
        const double g = std::exp(h);
        std::array<double, 5> d;
        d[0] = g;
        d[1] = h1 * g;
        d[2] = (h2 + h1 * h1) * g;
        d[3] = (h3 + 3.0 * h1 * h2 + h1 * h1 * h1) * g;
        d[4] = (h4 + 4.0 * h1 * h3 + 3.0 * h2 * h2 + 6.0 * h1 * h1 * h2 +
                h1 * h1 * h1 * h1) * g;
        return d;
    }
};

/// Per-coordinate factors of a KernelSpec.
std::vector<Factor> factors_of(const KernelSpec& spec) {
    spec.validate();
    std::vector<Factor> f;
    f.reserve(spec.point_dim());
    switch (spec.family) {
        case KernelFamily::Periodic1D:
        case KernelFamily::ProductPeriodic:
            for (int a = 0; a < spec.dims; ++a) {
                const double l = spec.lengthscales[a < (int)spec.lengthscales.size() ? a : 0];
                f.push_back({true, 1.0 / (l * l)});
            }
            break;
        case KernelFamily::GaussianRBF: {
            const double s = spec.lengthscales.at(0);
            for (int a = 0; a < spec.dims; ++a) f.push_back({false, 1.0 / (s * s)});
            break;
        }
        case KernelFamily::PeriodicTimesGaussianTime:
            for (int a = 0; a < spec.dims; ++a) {
                const double l = spec.lengthscales[a < (int)spec.lengthscales.size() ? a : 0];
                f.push_back({true, 1.0 / (l * l)});
            }
            break;
    }
    if (spec.has_time) {
        const double s = spec.time_lengthscale;
        f.push_back({false, 1.0 / (s * s)});
    }
    return f;
}

/// A differential operator expanded into a sum of per-coordinate
/// derivative-order terms: op = sum_t coeff_t * prod_f d^{orders_t[f]}.
struct OpTerm {
    double coeff;
    /// Derivative order per coordinate; at most one nonzero entry per term
    /// for the operators in this library.
    std::vector<int> orders;
};

std::vector<OpTerm> expand_op(const DiffOp& op, const KernelSpec& spec) {
    const int n = spec.point_dim();
    std::vector<OpTerm> terms;
    switch (op.kind) {
        case DiffOp::Kind::Identity:
            terms.push_back({1.0, std::vector<int>(n, 0)});
            break;
        case DiffOp::Kind::Dt: {
            if (!spec.has_time)
                throw InvalidOperatorError("Dt applied to a kernel without a time coordinate");
            OpTerm t{1.0, std::vector<int>(n, 0)};
            t.orders[n - 1] = 1;
            terms.push_back(t);
            break;
        }
        case DiffOp::Kind::Grad: {
            if (op.axis < 0 || op.axis >= spec.dims)
                throw DimensionError("Grad axis out of range for kernel", op.axis);
            OpTerm t{1.0, std::vector<int>(n, 0)};
            t.orders[op.axis] = 1;
            terms.push_back(t);
            break;
        }
        case DiffOp::Kind::Laplacian:
            for (int a = 0; a < spec.dims; ++a) {
                OpTerm t{1.0, std::vector<int>(n, 0)};
                t.orders[a] = 2;
                terms.push_back(t);
            }
            break;
    }
    return terms;
}

void check_point(const KernelSpec& spec, const Vec& z, const char* which) {
    if ((int)z.size() != spec.point_dim())
        throw DimensionError(std::string("point '") + which + "' has dimension " +
                                 std::to_string(z.size()) + ", kernel expects " +
                                 std::to_string(spec.point_dim()),
                             (int)z.size());
}

}  // namespace

KernelSpec KernelSpec::periodic(double ell) {
    KernelSpec s;
    s.family = KernelFamily::Periodic1D;
    s.lengthscales = {ell};
    s.dims = 1;
    return s;
}

KernelSpec KernelSpec::product_periodic(std::vector<double> ells) {
    KernelSpec s;
    s.family = KernelFamily::ProductPeriodic;
    s.dims = (int)ells.size();
    s.lengthscales = std::move(ells);
    return s;
}

KernelSpec KernelSpec::gaussian(double sbar, int dims) {
    KernelSpec s;
    s.family = KernelFamily::GaussianRBF;
    s.lengthscales = {sbar};
    s.dims = dims;
    return s;
}

KernelSpec KernelSpec::periodic_time(double space_ell, double time_ell, int dims) {
    KernelSpec s;
    s.family = KernelFamily::PeriodicTimesGaussianTime;
    s.lengthscales = std::vector<double>(dims, space_ell);
    s.dims = dims;
    s.has_time = true;
    s.time_lengthscale = time_ell;
    return s;
}

void KernelSpec::validate() const {
    if (dims < 1) throw DimensionError("kernel spatial dimension must be >= 1", dims);
    if (lengthscales.empty()) throw Error("kernel has no lengthscales");
    for (std::size_t i = 0; i < lengthscales.size(); ++i)
        if (!(lengthscales[i] > 0.0))
            throw DimensionError("non-positive lengthscale", (int)i);
    if (has_time && !(time_lengthscale > 0.0))
        throw DimensionError("non-positive time lengthscale", dims);
    if (family == KernelFamily::Periodic1D && dims != 1)
        throw DimensionError("Periodic1D kernel requires d = 1", dims);
}

double eval_kernel(const KernelSpec& spec, const Vec& z, const Vec& zp) {
    return eval_kernel_op(spec, DiffOp::identity(), z, DiffOp::identity(), zp);
}

double eval_kernel_op(const KernelSpec& spec, const DiffOp& opL, const Vec& z,
                      const DiffOp& opR, const Vec& zp) {
    check_point(spec, z, "z");
    check_point(spec, zp, "z'");
    const auto factors = factors_of(spec);
    const auto termsL = expand_op(opL, spec);
    const auto termsR = expand_op(opR, spec);
    const int n = spec.point_dim();

    // Cache the profile derivatives of each factor at tau_f = z_f - z'_f.
    std::vector<std::array<double, 5>> d(n);
    for (int f = 0; f < n; ++f) d[f] = factors[f].derivs(z[f] - zp[f]);

    double total = 0.0;
    for (const auto& tl : termsL) {
        for (const auto& tr : termsR) {
            double prod = tl.coeff * tr.coeff;
            for (int f = 0; f < n; ++f) {
                const int a = tl.orders[f];
                const int b = tr.orders[f];
                // d^a/dz_f^a d^b/dz'_f^b of g(z_f - z'_f) = (-1)^b g^(a+b).
                double v = d[f][a + b];
                if (b % 2 == 1) v = -v;
                prod *= v;
            }
            total += prod;
        }
    }
    return total;
}

Mat matrix_kernel_block(const MatrixKernelSpec& spec, const Vec& z, const Vec& zp) {
    return eval_kernel(spec.scalar, z, zp) * Mat::Identity(spec.dims, spec.dims);
}

}  // namespace mfgpi

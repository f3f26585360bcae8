/// @file test_kernels.cpp
/// @brief Unit and property tests for kernel evaluation and derivative
/// composition, checked against finite differences of the plain kernel.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mfgpi/gp_core.hpp"
#include "mfgpi/kernels.hpp"

using namespace mfgpi;

namespace {

Vec pt(std::initializer_list<double> v) {
    Vec p((int)v.size());
    int i = 0;
    for (double x : v) p[i++] = x;
    return p;
}

using Fn = std::function<double(const Vec&)>;

/// Fourth-order central first derivative along one coordinate.
Fn d1(Fn f, int axis, double h) {
    return [f, axis, h](const Vec& x) {
        Vec a = x, b = x, c = x, d = x;
        a[axis] -= 2 * h;
        b[axis] -= h;
        c[axis] += h;
        d[axis] += 2 * h;
        return (f(a) - 8 * f(b) + 8 * f(c) - f(d)) / (12 * h);
    };
}

/// Independent expansion of a differential operator into coordinate
/// derivative applications (the oracle's own bookkeeping, not the library's).
std::vector<std::vector<int>> op_multiindices(const DiffOp& op, const KernelSpec& spec) {
    const int n = spec.point_dim();
    std::vector<std::vector<int>> terms;
    if (op.kind == DiffOp::Kind::Identity) {
        terms.push_back(std::vector<int>(n, 0));
    } else if (op.kind == DiffOp::Kind::Dt) {
        std::vector<int> t(n, 0);
        t[n - 1] = 1;
        terms.push_back(t);
    } else if (op.kind == DiffOp::Kind::Grad) {
        std::vector<int> t(n, 0);
        t[op.axis] = 1;
        terms.push_back(t);
    } else {
        for (int a = 0; a < spec.dims; ++a) {
            std::vector<int> t(n, 0);
            t[a] = 2;
            terms.push_back(t);
        }
    }
    return terms;
}

/// Finite-difference value of (opL x opR) applied to the kernel, built by
/// recursively stacking 4th-order first-derivative stencils on the joint
/// (z, z') variable.
double fd_pair(const KernelSpec& spec, const DiffOp& opL, const Vec& z, const DiffOp& opR,
               const Vec& zp, double h) {
    const int n = spec.point_dim();
    double total = 0.0;
    for (const auto& ml : op_multiindices(opL, spec)) {
        for (const auto& mr : op_multiindices(opR, spec)) {
            Fn f = [&spec, n](const Vec& joint) {
                return eval_kernel(spec, joint.head(n), joint.tail(n));
            };
            for (int axis = 0; axis < n; ++axis) {
                for (int rep = 0; rep < ml[axis]; ++rep) f = d1(f, axis, h);
                for (int rep = 0; rep < mr[axis]; ++rep) f = d1(f, n + axis, h);
            }
            Vec joint(2 * n);
            joint << z, zp;
            total += f(joint);
        }
    }
    return total;
}

std::vector<DiffOp> ops_for(const KernelSpec& spec) {
    std::vector<DiffOp> ops = {DiffOp::identity(), DiffOp::laplacian()};
    for (int a = 0; a < spec.dims; ++a) ops.push_back(DiffOp::grad(a));
    if (spec.has_time) ops.push_back(DiffOp::dt());
    return ops;
}

}  // namespace

TEST_CASE("kernel values at closed-form points") {
    const KernelSpec per = KernelSpec::periodic(1.0);
    CHECK(eval_kernel(per, pt({0.3}), pt({0.3})) == doctest::Approx(1.0).epsilon(1e-14));
    // cos(pi) - 1 = -2 at separation 1/2.
    CHECK(eval_kernel(per, pt({0.75}), pt({0.25})) ==
          doctest::Approx(std::exp(-2.0)).epsilon(1e-12));

    const KernelSpec gauss = KernelSpec::gaussian(0.6);
    CHECK(eval_kernel(gauss, pt({0.6}), pt({0.0})) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("derivative composition closed forms") {
    const KernelSpec per = KernelSpec::periodic(1.0);
    // (Identity, Identity) reduces to the plain kernel.
    CHECK(eval_kernel_op(per, DiffOp::identity(), pt({0.4}), DiffOp::identity(), pt({0.1})) ==
          doctest::Approx(eval_kernel(per, pt({0.4}), pt({0.1}))).epsilon(1e-14));
    // Odd symmetry: first derivative vanishes at coincident points.
    CHECK(eval_kernel_op(per, DiffOp::grad(0), pt({0.2}), DiffOp::identity(), pt({0.2})) ==
          doctest::Approx(0.0).epsilon(1e-12));
    // Mixed first derivatives at zero separation equal 4 pi^2 for l = 1
    // (frozen from a central-difference oracle with step 1e-5: 39.4784176).
    CHECK(eval_kernel_op(per, DiffOp::grad(0), pt({0.2}), DiffOp::grad(0), pt({0.2})) ==
          doctest::Approx(4.0 * M_PI * M_PI).epsilon(1e-10));
}

TEST_CASE("first-derivative entries match step-1e-5 central differences") {
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const KernelSpec spec = KernelSpec::periodic(0.6);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const Vec z = pt({unif(rng)});
        const Vec zp = pt({unif(rng)});
        const double analytic =
            eval_kernel_op(spec, DiffOp::grad(0), z, DiffOp::identity(), zp);
        Vec zu = z, zd = z;
        zu[0] += h;
        zd[0] -= h;
        const double numeric =
            (eval_kernel(spec, zu, zp) - eval_kernel(spec, zd, zp)) / (2 * h);
        CHECK(std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)) < 1e-5);
    }
}

TEST_CASE("matrix kernel blocks are diagonal") {
    MatrixKernelSpec mk{KernelSpec::product_periodic({0.3, 0.3}), 2};
    const Vec z = pt({0.1, 0.2});
    const Mat I2 = matrix_kernel_block(mk, z, z);
    CHECK(I2.isApprox(Mat::Identity(2, 2), 1e-14));
    const Mat B = matrix_kernel_block(mk, z, pt({0.4, -0.1}));
    CHECK(B(0, 1) == 0.0);
    CHECK(B(1, 0) == 0.0);
    CHECK(B(0, 0) == doctest::Approx(eval_kernel(mk.scalar, z, pt({0.4, -0.1}))));

    MatrixKernelSpec mk1{KernelSpec::periodic(0.5), 1};
    CHECK(matrix_kernel_block(mk1, pt({0.3}), pt({0.1}))(0, 0) ==
          doctest::Approx(eval_kernel(mk1.scalar, pt({0.3}), pt({0.1}))));
}

TEST_CASE("finite-difference consistency across operator pairs and families") {
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    std::vector<KernelSpec> specs = {
        KernelSpec::periodic(0.7),
        KernelSpec::gaussian(0.8, 2),
        KernelSpec::product_periodic({0.6, 0.9}),
        KernelSpec::periodic_time(0.7, 0.8),
    };
    auto order = [](const DiffOp& op) {
        switch (op.kind) {
            case DiffOp::Kind::Identity: return 0;
            case DiffOp::Kind::Dt: return 1;
            case DiffOp::Kind::Grad: return 1;
            default: return 2;  // Laplacian
        }
    };
    // Step grows with total derivative order: stacked stencils amplify
    // round-off by ~(1/h) per level, so deep stacks need a coarser step.
    const double steps[5] = {1e-3, 1e-3, 1e-3, 3e-3, 1e-2};

    for (const auto& spec : specs) {
        const auto ops = ops_for(spec);
        for (const auto& a : ops) {
            for (const auto& b : ops) {
                const double h = steps[order(a) + order(b)];
                // Errors are judged against the magnitude of this operator
                // pair across the sample, not pointwise: a 4th derivative
                // passing through zero is still resolved on the scale of its
                // neighbors.
                double worst = 0.0, mag = 1.0;
                for (int trial = 0; trial < 25; ++trial) {
                    Vec z(spec.point_dim()), zp(spec.point_dim());
                    for (int i = 0; i < z.size(); ++i) {
                        z[i] = unif(rng);
                        zp[i] = unif(rng);
                    }
                    const double analytic = eval_kernel_op(spec, a, z, b, zp);
                    // Richardson extrapolation of the 4th-order stencil
                    // stack: (16 f(h/2) - f(h)) / 15 cancels the h^4 term.
                    const double numeric = (16.0 * fd_pair(spec, a, z, b, zp, h / 2) -
                                            fd_pair(spec, a, z, b, zp, h)) / 15.0;
                    worst = std::max(worst, std::abs(analytic - numeric));
                    mag = std::max({mag, std::abs(analytic), std::abs(numeric)});
                }
                CHECK(worst / mag < 1e-5);
            }
        }
    }
}

TEST_CASE("operator symmetry") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const KernelSpec spec = KernelSpec::periodic_time(0.5, 0.7, 2);
    const auto ops = ops_for(spec);
    for (int trial = 0; trial < 20; ++trial) {
        Vec z(3), zp(3);
        for (int i = 0; i < 3; ++i) {
            z[i] = unif(rng);
            zp[i] = unif(rng);
        }
        for (const auto& a : ops)
            for (const auto& b : ops) {
                const double lhs = eval_kernel_op(spec, a, z, b, zp);
                const double rhs = eval_kernel_op(spec, b, zp, a, z);
                CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
            }
    }
}

TEST_CASE("periodic shift invariance") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const KernelSpec spec = KernelSpec::product_periodic({0.4, 0.8});
    const auto ops = ops_for(spec);
    for (int trial = 0; trial < 10; ++trial) {
        Vec z(2), zp(2);
        for (int i = 0; i < 2; ++i) {
            z[i] = unif(rng);
            zp[i] = unif(rng);
        }
        for (const auto& a : ops)
            for (const auto& b : ops) {
                const double base = eval_kernel_op(spec, a, z, b, zp);
                for (int axis = 0; axis < 2; ++axis) {
                    Vec zs = z;
                    zs[axis] += 1.0;  // one full period
                    const double shifted = eval_kernel_op(spec, a, zs, b, zp);
                    CHECK(std::abs(base - shifted) <= 1e-12 * std::max(1.0, std::abs(base)));
                }
            }
    }
}

TEST_CASE("space-time kernels factor into space times time") {
    const KernelSpec st = KernelSpec::periodic_time(0.5, 0.9);
    const KernelSpec sp = KernelSpec::periodic(0.5);
    const Vec z = pt({0.2, 0.7}), zp = pt({-0.1, 0.3});
    const double timefac = std::exp(-std::pow(z[1] - zp[1], 2) / (0.9 * 0.9));
    for (const auto op : {DiffOp::identity(), DiffOp::grad(0), DiffOp::laplacian()}) {
        const double full = eval_kernel_op(st, op, z, DiffOp::identity(), zp);
        const double spatial = eval_kernel_op(sp, op, pt({z[0]}), DiffOp::identity(), pt({zp[0]}));
        CHECK(full == doctest::Approx(spatial * timefac).epsilon(1e-12));
    }
}

TEST_CASE("structured errors") {
    const KernelSpec per = KernelSpec::periodic(0.5);
    CHECK_THROWS_AS(eval_kernel(per, pt({0.1, 0.2}), pt({0.1})), DimensionError);
    CHECK_THROWS_AS(
        eval_kernel_op(per, DiffOp::dt(), pt({0.1}), DiffOp::identity(), pt({0.2})),
        InvalidOperatorError);
    CHECK_THROWS_AS(
        eval_kernel_op(per, DiffOp::grad(3), pt({0.1}), DiffOp::identity(), pt({0.2})),
        DimensionError);
    KernelSpec bad = KernelSpec::periodic(-1.0);
    CHECK_THROWS_AS(bad.validate(), DimensionError);
}

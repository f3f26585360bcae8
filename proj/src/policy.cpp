/// @file policy.cpp
/// @brief Pointwise policy improvement and GP policy fields.

#include "mfgpi/policy.hpp"

#include <cmath>

namespace mfgpi {

namespace {

/// Closed-form LQR maximizer of -s q - R^{2/3} |q|^{4/3} with s = p B:
/// q*(s) = -sgn(s) (3|s| / (4 R^{2/3}))^3 = -27 s^3 / (64 R^2).
double lqr_argmax(double p, const HamiltonianSpec& ham) {
    const double s = p * ham.B;
    return -27.0 * s * s * s / (64.0 * ham.R_cost * ham.R_cost);
}

double lqr_argmax_slope(double p, const HamiltonianSpec& ham) {
    const double s = p * ham.B;
    return -81.0 * s * s * ham.B / (64.0 * ham.R_cost * ham.R_cost);
}

/// Bounded numeric argmax of q p - cost(q) over [-R, R]: coarse scan
/// followed by golden-section refinement.  Ties break toward the smallest
/// |q| by scanning outward from zero.
double numeric_argmax(double p, const HamiltonianSpec& ham) {
    const double R = ham.bound_R;
    auto obj = [&](double q) { return q * p - ham.numeric_cost(q); };
    const int n = 4001;
    double best_q = 0.0, best_v = obj(0.0);
    for (int i = 0; i < n; ++i) {
        const double q = -R + 2.0 * R * i / (n - 1);
        const double v = obj(q);
        if (v > best_v + 1e-15 || (std::abs(v - best_v) <= 1e-15 && std::abs(q) < std::abs(best_q))) {
            best_v = v;
            best_q = q;
        }
    }
    // Golden-section around the best bracket.
    const double h = 2.0 * R / (n - 1);
    double a = std::max(-R, best_q - h), b = std::min(R, best_q + h);
    const double gr = 0.6180339887498949;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    for (int it = 0; it < 200 && (b - a) > 1e-14; ++it) {
        if (obj(c) > obj(d)) { b = d; } else { a = c; }
        c = b - gr * (b - a);
        d = a + gr * (b - a);
    }
    return 0.5 * (a + b);
}

}  // namespace

double HamiltonianSpec::running_cost(const Vec& q) const {
    return 0.5 * q.squaredNorm();
}

Vec HamiltonianSpec::running_cost_grad(const Vec& q) const {
    return q;
}

double HamiltonianSpec::control_cost(double q) const {
    return std::pow(R_cost * q * q, 2.0 / 3.0);
}

double HamiltonianSpec::control_cost_grad(double q) const {
    if (q == 0.0) return 0.0;
    return (4.0 / 3.0) * std::pow(R_cost, 2.0 / 3.0) * std::cbrt(std::abs(q)) *
           (q > 0 ? 1.0 : -1.0);
}

Mat improve_pointwise(const Mat& grads, const HamiltonianSpec& ham) {
    if (!grads.allFinite()) throw Error("improve_pointwise: non-finite gradient input");
    const int M = (int)grads.rows();
    const int d = (int)grads.cols();
    Mat q(M, d);
    switch (ham.family) {
        case HamiltonianFamily::QuadraticIsotropic:
            for (int i = 0; i < M; ++i) {
                Vec p = grads.row(i);
                const double norm = p.norm();
                // argmax of q.p - |q|^2/2 over ||q|| <= R: p projected onto the R-ball.
                q.row(i) = (norm <= ham.bound_R) ? p : Vec(ham.bound_R / norm * p);
            }
            break;
        case HamiltonianFamily::LQRPowerCost:
            if (d != 1) throw Error("LQRPowerCost argmax implemented for 1-D control");
            for (int i = 0; i < M; ++i) q(i, 0) = lqr_argmax(grads(i, 0), ham);
            break;
        case HamiltonianFamily::BoundedNumeric:
            if (d != 1) throw Error("BoundedNumeric argmax implemented for 1-D control");
            for (int i = 0; i < M; ++i) q(i, 0) = numeric_argmax(grads(i, 0), ham);
            break;
    }
    return q;
}

Mat improve_jacobian(const Vec& p, const HamiltonianSpec& ham) {
    const int d = (int)p.size();
    switch (ham.family) {
        case HamiltonianFamily::QuadraticIsotropic: {
            const double norm = p.norm();
            if (norm <= ham.bound_R) return Mat::Identity(d, d);
            // Jacobian of the radial projection R p/|p|: tangential projector.
            const Vec phat = p / norm;
            return (ham.bound_R / norm) * (Mat::Identity(d, d) - phat * phat.transpose());
        }
        case HamiltonianFamily::LQRPowerCost: {
            Mat J(1, 1);
            J(0, 0) = lqr_argmax_slope(p[0], ham);
            return J;
        }
        case HamiltonianFamily::BoundedNumeric: {
            // Central difference on the numeric maximizer.
            const double h = 1e-6;
            Mat J(1, 1);
            J(0, 0) = (numeric_argmax(p[0] + h, ham) - numeric_argmax(p[0] - h, ham)) / (2 * h);
            return J;
        }
    }
    return Mat::Identity(d, d);
}

PolicyField fit_policy_field(const Mat& nodes, const Mat& qvals, const MatrixKernelSpec& kernel,
                             double nugget) {
    if (nodes.rows() < 1) throw Error("fit_policy_field: need at least one node");
    if (!qvals.allFinite()) throw Error("fit_policy_field: non-finite node values");
    PolicyField f;
    f.kernel = kernel;
    f.nodes = nodes;
    f.nugget = nugget;
    const int M = (int)nodes.rows();
    const int d = kernel.dims;

    std::vector<LinearFunctional> diracs;
    diracs.reserve(M);
    for (int i = 0; i < M; ++i) diracs.push_back(LinearFunctional::dirac(nodes.row(i)));
    const Mat G = regularized(assemble_gram(kernel.scalar, diracs), nugget);
    SymSolver chol(G);
    if (chol.used_fallback() && chol.condition_estimate() > 1e15)
        throw SingularMatrixError("policy Gram singular beyond nugget repair",
                                  chol.condition_estimate());

    f.coeffs = chol.solve(Mat(qvals));
    f.qvec.resize(M * d);
    for (int i = 0; i < M; ++i)
        for (int a = 0; a < d; ++a) f.qvec[i * d + a] = qvals(i, a);
    return f;
}

Vec eval_policy(const PolicyField& field, const Vec& z) {
    const int M = field.count();
    Vec row(M);
    for (int i = 0; i < M; ++i)
        row[i] = eval_kernel(field.kernel.scalar, z, field.nodes.row(i));
    return field.coeffs.transpose() * row;
}

double div_policy(const PolicyField& field, const Vec& z) {
    const int M = field.count();
    double acc = 0.0;
    for (int a = 0; a < field.dim(); ++a) {
        double comp = 0.0;
        for (int i = 0; i < M; ++i)
            comp += eval_kernel_op(field.kernel.scalar, DiffOp::grad(a), z, DiffOp::identity(),
                                   field.nodes.row(i)) *
                    field.coeffs(i, a);
        acc += comp;
    }
    return acc;
}

PolicyNodeOps policy_node_ops(const MatrixKernelSpec& kernel, const Mat& nodes,
                              const Mat& eval_points, double nugget) {
    const int M = (int)nodes.rows();
    const int P = (int)eval_points.rows();
    std::vector<LinearFunctional> diracs;
    diracs.reserve(M);
    for (int i = 0; i < M; ++i) diracs.push_back(LinearFunctional::dirac(nodes.row(i)));
    const Mat G = regularized(assemble_gram(kernel.scalar, diracs), nugget);
    SymSolver chol(G);

    Mat K(P, M);
    for (int p = 0; p < P; ++p)
        for (int i = 0; i < M; ++i)
            K(p, i) = eval_kernel(kernel.scalar, eval_points.row(p), nodes.row(i));

    PolicyNodeOps ops;
    // S = K G^{-1} computed as (G^{-1} K^T)^T through the factorization.
    ops.S = chol.solve(Mat(K.transpose())).transpose();
    for (int a = 0; a < kernel.dims; ++a) {
        Mat Ka(P, M);
        for (int p = 0; p < P; ++p)
            for (int i = 0; i < M; ++i)
                Ka(p, i) = eval_kernel_op(kernel.scalar, DiffOp::grad(a), eval_points.row(p),
                                          DiffOp::identity(), nodes.row(i));
        ops.D.push_back(chol.solve(Mat(Ka.transpose())).transpose());
    }
    return ops;
}

}  // namespace mfgpi

#pragma once

/// @file policy.hpp
/// @brief Hamiltonian families, pointwise policy improvement, and
/// vector-valued GP policy fields with analytic divergence.

#include <functional>
#include <vector>

#include "mfgpi/gp_core.hpp"

namespace mfgpi {

enum class HamiltonianFamily {
    QuadraticIsotropic,  ///< H(p) = |p|^2/2, running cost L(q) = |q|^2/2
    LQRPowerCost,        ///< drift A x + B q, control cost (q^T R q)^{2/3}
    BoundedNumeric,      ///< user-tabulated running cost, bounded numeric argmax
};

/// Immutable description of the control structure of a problem.
struct HamiltonianSpec {
    HamiltonianFamily family = HamiltonianFamily::QuadraticIsotropic;
    double A = 0.0;       ///< LQR drift gain (1-D)
    double B = 0.0;       ///< LQR control gain (1-D)
    double R_cost = 1.0;  ///< LQR cost scale (symmetric positive definite; scalar in 1-D)
    double bound_R = 50.0;  ///< policy-norm cap (argmax runs over ||q|| <= bound_R)

    /// Tabulated running cost for BoundedNumeric (1-D control).
    std::function<double(double q)> numeric_cost;

    static HamiltonianSpec quadratic(double bound_R = 50.0) {
        HamiltonianSpec h;
        h.family = HamiltonianFamily::QuadraticIsotropic;
        h.bound_R = bound_R;
        return h;
    }
    static HamiltonianSpec lqr(double A, double B, double R_cost, double bound_R = 50.0) {
        HamiltonianSpec h;
        h.family = HamiltonianFamily::LQRPowerCost;
        h.A = A;
        h.B = B;
        h.R_cost = R_cost;
        h.bound_R = bound_R;
        return h;
    }

    /// Running cost of the MFG policy-evaluation step, L(q) = |q|^2/2
    /// (QuadraticIsotropic only).
    double running_cost(const Vec& q) const;
    Vec running_cost_grad(const Vec& q) const;

    /// LQR control cost G(q) = (q^T R q)^{2/3} and its derivative (1-D).
    double control_cost(double q) const;
    double control_cost_grad(double q) const;
};

/// Maximizer of q . p - L(q) over ||q|| <= R for the MFG families, or of
/// -p B q - G(q) for LQRPowerCost (p is then the value-function gradient and
/// the x-dependent drift/cost terms do not move the argmax).  One row of
/// grads per node; returns one row of controls per node.
Mat improve_pointwise(const Mat& grads, const HamiltonianSpec& ham);

/// d(argmax)/d(gradient) at one node: identity inside the ball, the
/// tangential projector (R/|p|)(I - pp^T/|p|^2) on the active bound, or the
/// LQR closed-form slope.
Mat improve_jacobian(const Vec& p, const HamiltonianSpec& ham);

/// A vector-valued GP policy field with the diagonal matrix kernel
/// K_Q(z, z') = k(z, z') I_d: components decouple into scalar GPs sharing
/// one Gram factorization.
struct PolicyField {
    MatrixKernelSpec kernel;
    Mat nodes;        ///< one collocation point per row
    Vec qvec;         ///< stacked node values, node-major with axis fastest
    Mat coeffs;       ///< |nodes| x d, column a = (G + nugget)^{-1} q_a
    double nugget = kDefaultNugget;

    int dim() const { return kernel.dims; }
    int count() const { return (int)nodes.rows(); }
};

/// Fits the field: solves (G + nugget I) coeffs_a = q_a per component.
/// qvals has one d-vector per node (row-wise).
PolicyField fit_policy_field(const Mat& nodes, const Mat& qvals, const MatrixKernelSpec& kernel,
                             double nugget = kDefaultNugget);

/// Representer mean at z.
Vec eval_policy(const PolicyField& field, const Vec& z);

/// Spatial divergence sum_a d_a Q_a at z via analytic kernel derivatives.
double div_policy(const PolicyField& field, const Vec& z);

/// Precomputed linear maps from stacked node values q to policy values and
/// divergences at a fixed list of evaluation points: the residual systems
/// need the policy evaluated *as the same linear map the field uses*, so
/// these share the (G + nugget) factorization with fit_policy_field.
struct PolicyNodeOps {
    Mat S;               ///< values: Q_a(eval points) = S q_a  (per component)
    std::vector<Mat> D;  ///< divergence contribution of component a: D[a] q_a
};

PolicyNodeOps policy_node_ops(const MatrixKernelSpec& kernel, const Mat& nodes,
                              const Mat& eval_points, double nugget = kDefaultNugget);

}  // namespace mfgpi

#pragma once

/// @file kernels.hpp
/// @brief Covariance kernels with closed-form derivative composition.
///
/// Every kernel in this library is a product of one-dimensional factors, one
/// per coordinate of the (space, optional time) point:
///
///   k(z, z') = prod_f g_f(z_f - z'_f)
///
/// with each factor either periodic, g(tau) = exp((cos(2*pi*tau) - 1)/l^2),
/// or squared-exponential, g(tau) = exp(-tau^2 / s^2).  Because the factors
/// depend on coordinate differences only, any mixed partial derivative of k
/// factorizes as
///
///   d^a/dz_f^a d^b/dz'_f^b k = (-1)^b g_f^(a+b)(tau_f) * (other factors),
///
/// so composing k with the differential operators used by the collocation
/// solvers (identity, d/dt, gradient components, Laplacian) only requires the
/// 1-D profile derivatives g^(n) up to order four.  These are hard-coded via
/// Faa di Bruno's formula; no numerical differentiation is used anywhere in
/// the production path.

#include <Eigen/Dense>
#include <vector>

#include "mfgpi/errors.hpp"

namespace mfgpi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class KernelFamily {
    Periodic1D,                ///< exp((cos(2 pi (x-x')) - 1) / l^2), d = 1
    GaussianRBF,               ///< exp(-|x-x'|^2 / s^2)
    PeriodicTimesGaussianTime, ///< periodic in each spatial axis, squared-exponential in time
    ProductPeriodic,           ///< product of periodic factors over d spatial axes
};

/// Immutable description of a covariance kernel.  All operations on a
/// KernelSpec are pure functions and thread-safe.
struct KernelSpec {
    KernelFamily family = KernelFamily::Periodic1D;
    /// One lengthscale per spatial axis (GaussianRBF uses the same scale for
    /// every axis and stores it once).
    std::vector<double> lengthscales;
    int dims = 1;           ///< spatial dimension d >= 1
    bool has_time = false;  ///< whether points carry a trailing time coordinate
    double time_lengthscale = 0.0;  ///< temporal scale when has_time

    /// Number of coordinates a point must have.
    int point_dim() const { return dims + (has_time ? 1 : 0); }

    static KernelSpec periodic(double ell);
    static KernelSpec product_periodic(std::vector<double> ells);
    static KernelSpec gaussian(double sbar, int dims = 1);
    static KernelSpec periodic_time(double space_ell, double time_ell, int dims = 1);

    /// Throws if a lengthscale is non-positive or counts are inconsistent.
    void validate() const;
};

/// A Dirac-composed differential operator acting on one kernel argument.
struct DiffOp {
    enum class Kind { Identity, Dt, Grad, Laplacian };
    Kind kind = Kind::Identity;
    int axis = 0;  ///< spatial axis for Grad

    static DiffOp identity() { return {Kind::Identity, 0}; }
    static DiffOp dt() { return {Kind::Dt, 0}; }
    static DiffOp grad(int axis) { return {Kind::Grad, axis}; }
    static DiffOp laplacian() { return {Kind::Laplacian, 0}; }

    bool operator==(const DiffOp& o) const { return kind == o.kind && axis == o.axis; }
};

/// k(z, z').  Equals 1 at coincident points for every family.
double eval_kernel(const KernelSpec& spec, const Vec& z, const Vec& zp);

/// (opL applied to the first argument)(opR applied to the second argument)
/// of k, evaluated at (z, z').  Closed-form analytic.
double eval_kernel_op(const KernelSpec& spec, const DiffOp& opL, const Vec& z,
                      const DiffOp& opR, const Vec& zp);

/// A matrix-valued kernel K_Q(z, z') = k(z, z') * I_d used for vector-valued
/// policy fields; the diagonal structure decouples the components.
struct MatrixKernelSpec {
    KernelSpec scalar;
    int dims = 1;  ///< output dimension d
};

/// Returns k(z, z') * I_d.
Mat matrix_kernel_block(const MatrixKernelSpec& spec, const Vec& z, const Vec& zp);

}  // namespace mfgpi

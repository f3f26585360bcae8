#pragma once

/// @file hjb_solver.hpp
/// @brief GP policy iteration for the time-dependent HJB equation
///   -dU/dt - (1/2) sigma^2 Lap(U) + sup_q { -grad(U).f(x,t,q) - V(x) - G(q) } = 0
///   U(., T) = U_T,
/// on the flat torus in space, in forward mode (V known) and inverse mode
/// (U and V inferred jointly from sparse, noisy observations).
///
/// The policy-evaluation step is the linearly constrained QP over the joint
/// latent vector (z, v): z carries the value field reads (values on all
/// collocation nodes, time derivatives / gradients / Laplacians on interior
/// nodes, observation reads) and v the spatial-cost reads (values at the
/// interior nodes plus observation reads).  Collocation rows are solved for
/// the time-derivative entries; terminal rows pin the value entries on the
/// t = T slice, so terminal exactness holds by construction.

#include "mfgpi/policy.hpp"
#include "mfgpi/problem_common.hpp"
#include "mfgpi/schwarz_newton.hpp"

namespace mfgpi {

struct HjbConfig {
    int dim = 1;
    double x_origin = -0.5;  ///< spatial domain [x_origin, x_origin+1)^dim
    double T = 1.0;

    /// Constant diffusion coefficient; sigma_fn overrides it when set
    /// (called with the space-time point (x, t)).
    double sigma = 1.0;
    std::function<double(const Vec& xt)> sigma_fn;

    HamiltonianSpec ham = HamiltonianSpec::lqr(0.1, 0.5, std::pow(0.4, 1.5));
    std::function<double(const Vec& x)> V_true;  ///< spatial cost (forward mode)
    std::function<double(const Vec& x)> U_T;     ///< terminal cost

    Mat interior_nodes;  ///< M_int x (dim+1) space-time points, t in (0, T)
    Mat terminal_nodes;  ///< M_term x (dim+1) space-time points, t = T

    KernelSpec kernel_u;        ///< space-time kernel for U
    KernelSpec kernel_v;        ///< spatial kernel for V (inverse mode)
    MatrixKernelSpec kernel_q;  ///< space-time kernel for the policy field

    double alpha_u = 0.5, alpha_v = 0.0, alpha_vo = 0.0, alpha_uo = 0.0;
    Observations obs_u;  ///< space-time points
    Observations obs_v;  ///< spatial points
    bool infer_potential = false;

    double nugget = kDefaultNugget;
    int max_iters = 100;
    double tol = 1e-6;
    double relaxation = 1.0;  ///< policy under-relaxation of the plain iteration

    int interior_count() const { return (int)interior_nodes.rows(); }
    int node_count() const { return (int)(interior_nodes.rows() + terminal_nodes.rows()); }
    double sigma_at(const Vec& xt) const { return sigma_fn ? sigma_fn(xt) : sigma; }
    void validate() const;
};

/// Uniform space-time collocation grid: nx^dim spatial points per time level,
/// time levels t = n T / nt for n = 1..nt (t = 0 excluded, consistent with
/// collocation on (0, T]).  Interior rows are ordered time-level slowest.
struct SpaceTimeNodes {
    Mat interior;  ///< (nt-1) * nx^dim rows
    Mat terminal;  ///< nx^dim rows at t = T
};
SpaceTimeNodes hjb_grid_nodes(int nx, int dim, double x_origin, int nt, double T);

/// Joint latent layout.  Interior nodes come first in the value block; the
/// potential block (inverse mode only) keeps one entry per interior node --
/// entries sharing a spatial location are tied by equality constraints, since
/// the spatial-cost kernel cannot distinguish them.
struct HjbLayout {
    int M_int = 0, M_term = 0, d = 1, n_obs_u = 0, n_obs_v = 0;
    bool with_v = false;

    int M() const { return M_int + M_term; }
    int value(int i) const { return i; }                              ///< i < M
    int dt(int i) const { return M() + i; }                           ///< i < M_int
    int grad(int a, int i) const { return M() + M_int + a * M_int + i; }
    int lap(int i) const { return M() + M_int * (1 + d) + i; }
    int obs_u(int j) const { return M() + M_int * (2 + d) + j; }
    int z_total() const { return M() + M_int * (2 + d) + n_obs_u; }
    int v_value(int i) const { return z_total() + i; }                ///< i < M_int
    int v_obs(int j) const { return z_total() + M_int + j; }
    int total() const { return z_total() + (with_v ? M_int + n_obs_v : 0); }
};

/// Assembled coupled system (two-block: value QP + policy; no density).
struct HjbSystem {
    CoupledSystem sys;
    HjbLayout layout;

    std::vector<LinearFunctional> functionals_u, functionals_v;
    Mat gram_u, gram_v;  ///< regularized
};

HjbSystem build_hjb_system(const HjbConfig& config);

/// One policy-evaluation solve against explicit policy values at the
/// interior nodes (one d-row per node); the constraint data are read through
/// the fitted policy field, exactly as the coupled driver does.
struct HjbState {
    Vec z;       ///< value latent (layout above, without the v block)
    Vec v;       ///< potential latent (empty in forward mode)
    Mat qvals;   ///< the policy values the solve was run against
    GPModel u_model;
    GPModel v_model;  ///< empty functional list in forward mode
};
HjbState evaluate_policy_hjb(const HjbConfig& config, const Mat& qvals);

/// Full GP policy iteration (alternating policy evaluation / pointwise
/// improvement) and the Schwarz-Newton accelerated variant.
CoupledRunResult gppi_hjb(const HjbConfig& config);
CoupledRunResult as_hjb(const HjbConfig& config, const SolveOptions& opts = {});

}  // namespace mfgpi

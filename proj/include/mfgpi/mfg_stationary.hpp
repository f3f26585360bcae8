#pragma once

/// @file mfg_stationary.hpp
/// @brief GP policy iteration for the stationary mean-field game
///   nu Lap(u) - Q.grad(u) + |Q|^2/2 + V + F(m) = lambda,
///   nu Lap(m) + div(m Q) = 0,  integral m = 1,  integral u = 0,
/// in forward mode (V known) and inverse mode (V inferred from sparse,
/// noisy observations of m and V).

#include "mfgpi/policy.hpp"
#include "mfgpi/problem_common.hpp"
#include "mfgpi/schwarz_newton.hpp"

namespace mfgpi {

struct StationaryConfig {
    int dim = 1;
    double origin = 0.0;  ///< domain [origin, origin+1)^dim
    double nu = 0.5;
    HamiltonianSpec ham = HamiltonianSpec::quadratic();
    PowerCoupling F{1.0, 4.0};
    std::function<double(const Vec&)> V_true;  ///< known potential (forward mode)

    Mat nodes;  ///< M x dim collocation points
    KernelSpec kernel_m, kernel_u, kernel_v;
    MatrixKernelSpec kernel_q;

    double alpha_m = 0.5, alpha_mo = 0.0;
    double alpha_u = 0.5, alpha_lambda = 0.5;
    double alpha_v = 0.5, alpha_vo = 0.0;

    Observations obs_m, obs_v;
    bool infer_potential = false;  ///< inverse mode: V becomes a latent GP

    double nugget = kDefaultNugget;
    int max_iters = 100;
    double tol = 1e-6;
    double relaxation = 1.0;  ///< policy under-relaxation of the plain iteration

    int node_count() const { return (int)nodes.rows(); }
    void validate() const;
};

/// Latent layout of the density QP:
///   [ values (M) | gradients (d*M, axis-major) | Laplacians (M) | obs (N_m) ]
/// with the transport rows solved for the Laplacian entries and the mass row
/// solved for the last value entry.
struct StationaryLayoutFp {
    int M = 0, d = 0, n_obs = 0;
    int value(int i) const { return i; }
    int grad(int a, int i) const { return M + a * M + i; }
    int lap(int i) const { return M * (1 + d) + i; }
    int obs(int j) const { return M * (2 + d) + j; }
    int total() const { return M * (2 + d) + n_obs; }
};

/// Latent layout of the value QP:
///   [ values | gradients | Laplacians | lambda | V values (M) | V obs (N_v) ]
/// (the V blocks exist only in inverse mode).
struct StationaryLayoutHjb {
    int M = 0, d = 0, n_obs_v = 0;
    bool with_v = false;
    int value(int i) const { return i; }
    int grad(int a, int i) const { return M + a * M + i; }
    int lap(int i) const { return M * (1 + d) + i; }
    int lambda() const { return M * (2 + d); }
    int v_value(int i) const { return M * (2 + d) + 1 + i; }
    int v_obs(int j) const { return M * (2 + d) + 1 + M + j; }
    int total() const { return M * (2 + d) + 1 + (with_v ? M + n_obs_v : 0); }
};

/// Fully assembled coupled system plus the layouts needed to interpret
/// latent vectors (exposed so tests can address individual entries).
struct StationarySystem {
    CoupledSystem sys;
    StationaryLayoutFp fp_layout;
    StationaryLayoutHjb hjb_layout;
    PolicyNodeOps policy_ops;  ///< maps node controls to values/divergence

    /// Functional lists and regularized Gram matrices backing the QPs;
    /// exposed so representer models can be built from latent solutions.
    std::vector<LinearFunctional> functionals_m, functionals_u, functionals_v;
    Mat gram_m, gram_u, gram_v;
};

StationarySystem build_stationary_system(const StationaryConfig& config);

/// One density policy-evaluation solve against an externally supplied
/// policy field (the transport data come from evaluating the field).
struct StationaryFpSolution {
    Vec rho;        ///< full latent vector
    GPModel m_model;
};
StationaryFpSolution solve_fp_stationary(const StationaryConfig& config,
                                         const PolicyField& policy);

/// One value policy-evaluation solve; the coupling F(m) is read through the
/// density representer at the nodes.
struct StationaryHjbSolution {
    Vec z;  ///< full joint latent (value, lambda, and V blocks)
    double lambda = 0.0;
    GPModel u_model;
    GPModel v_model;  ///< empty functional list in forward mode
};
StationaryHjbSolution solve_hjb_stationary(const StationaryConfig& config,
                                           const PolicyField& policy, const GPModel& m_model);

/// Full GP policy iteration (Gauss-Seidel over density / value / policy).
CoupledRunResult gppi_stationary(const StationaryConfig& config);

/// The additive-Schwarz Newton accelerated variant.
CoupledRunResult as_stationary(const StationaryConfig& config, const SolveOptions& opts = {});

}  // namespace mfgpi

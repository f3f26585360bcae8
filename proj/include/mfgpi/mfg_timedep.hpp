#pragma once

/// @file mfg_timedep.hpp
/// @brief GP policy iteration for the time-dependent mean-field game
///   -du/dt - nu Lap(u) + H(grad(u)) = F(m) + V(x),
///    dm/dt - nu Lap(m) - div(m D_p H(grad(u))) = 0,
///    m(., 0) = m0,  u(., T) = U_T,
/// on the flat torus in space, in forward mode (V known) and inverse mode
/// (V inferred from sparse, noisy observations of m and V).
///
/// Both sub-problems are linearly constrained QPs over latent reads of the
/// fields: the density and value blocks share the interior space-time
/// collocation points, the density adds an initial slice (t = 0) and the
/// value a terminal slice (t = T).  Transport rows are solved for the
/// density time derivatives, HJB rows for the value time derivatives, so the
/// slice data are enforced exactly at every iteration.

#include "mfgpi/policy.hpp"
#include "mfgpi/problem_common.hpp"
#include "mfgpi/schwarz_newton.hpp"

namespace mfgpi {

struct TimeDepConfig {
    int dim = 1;
    double x_origin = -0.5;  ///< spatial domain [x_origin, x_origin+1)^dim
    double T = 1.0;
    double nu = 1.0 / 3.0;

    HamiltonianSpec ham = HamiltonianSpec::quadratic();
    PowerCoupling F{1.0, 4.0};
    std::function<double(const Vec& x)> V_true;  ///< spatial cost (forward mode)
    std::function<double(const Vec& x)> m0;      ///< initial density
    std::function<double(const Vec& x)> U_T;     ///< terminal cost

    Mat interior_nodes;  ///< M_int x (dim+1) points in T^d x (0, T), shared by both blocks
    Mat initial_nodes;   ///< density slice points, t = 0
    Mat terminal_nodes;  ///< value slice points, t = T

    KernelSpec kernel_m, kernel_u;  ///< space-time kernels
    KernelSpec kernel_v;            ///< spatial kernel for V (inverse mode)
    MatrixKernelSpec kernel_q;      ///< space-time kernel for the policy field

    double alpha_m = 0.5, alpha_mo = 0.0;
    double alpha_u = 0.5, alpha_v = 0.0, alpha_vo = 0.0;
    Observations obs_m;  ///< space-time points
    Observations obs_v;  ///< spatial points
    bool infer_potential = false;

    double nugget = kDefaultNugget;
    int max_iters = 100;
    double tol = 1e-6;
    double relaxation = 1.0;  ///< policy under-relaxation of the plain iteration

    int interior_count() const { return (int)interior_nodes.rows(); }
    int fp_node_count() const { return (int)(interior_nodes.rows() + initial_nodes.rows()); }
    int hjb_node_count() const { return (int)(interior_nodes.rows() + terminal_nodes.rows()); }
    void validate() const;
};

/// Uniform space-time collocation sets: nx^dim spatial points at each of the
/// time levels t = n T / nt for n = 1..nt-1 (interior), plus n_slice^dim
/// spatial points on each of the t = 0 and t = T slices.  Interior rows are
/// ordered time-level slowest.
struct TdNodes {
    Mat interior, initial, terminal;
};
TdNodes td_grid_nodes(int nx, int dim, double x_origin, int nt, double T, int n_slice);

/// Latent layout of the density QP:
///   [ values (interior then initial) | dt (M_int) | gradients (d*M_int,
///     axis-major) | Laplacians (M_int) | obs (N_m) ]
/// with the transport rows solved for the dt entries and the initial-slice
/// rows solved for the slice value entries.
struct TdLayoutFp {
    int M_int = 0, M_init = 0, d = 1, n_obs = 0;
    int M() const { return M_int + M_init; }
    int value(int i) const { return i; }                              ///< i < M
    int dt(int i) const { return M() + i; }                           ///< i < M_int
    int grad(int a, int i) const { return M() + M_int + a * M_int + i; }
    int lap(int i) const { return M() + M_int * (1 + d) + i; }
    int obs(int j) const { return M() + M_int * (2 + d) + j; }
    int total() const { return M() + M_int * (2 + d) + n_obs; }
};

/// Latent layout of the value QP (the V blocks exist only in inverse mode):
///   [ values (interior then terminal) | dt | gradients | Laplacians |
///     V values (M_int) | V obs (N_v) ].
struct TdLayoutHjb {
    int M_int = 0, M_term = 0, d = 1, n_obs_v = 0;
    bool with_v = false;
    int M() const { return M_int + M_term; }
    int value(int i) const { return i; }
    int dt(int i) const { return M() + i; }
    int grad(int a, int i) const { return M() + M_int + a * M_int + i; }
    int lap(int i) const { return M() + M_int * (1 + d) + i; }
    int z_total() const { return M() + M_int * (2 + d); }
    int v_value(int i) const { return z_total() + i; }  ///< i < M_int
    int v_obs(int j) const { return z_total() + M_int + j; }
    int total() const { return z_total() + (with_v ? M_int + n_obs_v : 0); }
};

/// Fully assembled coupled system plus the layouts and Gram data needed to
/// interpret latent vectors and build representer models.
struct TimeDepSystem {
    CoupledSystem sys;
    TdLayoutFp fp_layout;
    TdLayoutHjb hjb_layout;

    std::vector<LinearFunctional> functionals_m, functionals_u, functionals_v;
    Mat gram_m, gram_u, gram_v;  ///< regularized
};

TimeDepSystem build_timedep_system(const TimeDepConfig& config);

/// One density policy-evaluation solve against an externally supplied
/// policy field (transport data come from evaluating the field).
struct TdFpSolution {
    Vec rho;  ///< full latent vector
    GPModel m_model;
};
TdFpSolution solve_fp_td(const TimeDepConfig& config, const PolicyField& policy);

/// One joint value/cost policy-evaluation solve; the coupling F(m) is read
/// through the density representer at the interior nodes.
struct TdHjbSolution {
    Vec z;  ///< value latent
    Vec v;  ///< cost latent (empty in forward mode)
    GPModel u_model;
    GPModel v_model;  ///< empty functional list in forward mode
};
TdHjbSolution solve_hjb_td(const TimeDepConfig& config, const PolicyField& policy,
                           const GPModel& m_model);

/// Full GP policy iteration (Gauss-Seidel over density / value / policy)
/// and the additive-Schwarz Newton accelerated variant.
CoupledRunResult gppi_td(const TimeDepConfig& config);
CoupledRunResult as_td(const TimeDepConfig& config, const SolveOptions& opts = {});

}  // namespace mfgpi

#pragma once

/// @file schwarz_newton.hpp
/// @brief The coupled fixed-point system shared by all solvers and its two
/// drivers: plain policy iteration (Gauss-Seidel over the three blocks) and
/// the additive-Schwarz-preconditioned Newton accelerator.
///
/// The state is w = (m, u, q):
///   m -- free coordinates of the density QP (after constraint elimination),
///   u -- free coordinates of the value QP (value latent, lambda, potential),
///   q -- stacked policy values on the policy nodes.
/// Each block has an update map (the sub-problem solve) and a stationarity
/// residual; Newton runs on R(w) = 0 where R stacks the three residuals,
/// preconditioned by the block solves whose normal matrices are reused as
/// the diagonal Jacobian blocks.

#include <functional>
#include <optional>
#include <vector>

#include "mfgpi/latent_qp.hpp"

namespace mfgpi {

/// One fully-assembled coupled problem.  Builders for the concrete problem
/// families fill in the closures; the drivers below are problem-agnostic.
/// A missing density block (n_m == 0) degenerates to the two-block
/// value/policy fixed point of the plain HJB problem.
struct CoupledSystem {
    int n_m = 0, n_u = 0, n_q = 0;

    LatentQp fp;   ///< density QP, parametrized by theta_fp(q)
    LatentQp hjb;  ///< value QP, parametrized by theta_hjb(m, q)

    std::function<Vec(const Vec& q)> theta_fp;
    std::function<Vec(const Vec& m, const Vec& q)> theta_hjb;

    Mat dtheta_fp_dq;  ///< constant: theta_fp is linear in q
    std::function<Mat(const Vec& m)> dtheta_hjb_dm;
    std::function<Mat(const Vec& q)> dtheta_hjb_dq;

    /// Pointwise policy improvement from the value block's free coordinates
    /// (the gradient latents are free), and its derivative.
    std::function<Vec(const Vec& u)> improve;
    std::function<Mat(const Vec& u)> dimprove_du;

    /// Constant affine maps from free coordinates to the node values of the
    /// density and value fields (the value rows of the elimination are
    /// parameter-independent for every problem family).
    Mat m_values_A;
    Vec m_values_b;
    Mat u_values_A;
    Vec u_values_b;

    int lambda_free_index = -1;  ///< free index of the ergodic constant, or -1
    double cell_volume = 1.0;    ///< quadrature weight of the node set

    Vec m_init, u_init, q_init;

    Vec m_values(const Vec& m) const {
        return n_m > 0 ? Vec(m_values_A * m + m_values_b) : Vec();
    }
    Vec u_values(const Vec& u) const { return u_values_A * u + u_values_b; }
};

struct SolveOptions {
    int max_iters = 100;
    double tol = 1e-6;
    double damping = 1.0;            ///< Newton step scale in (0, 1]
    double relaxation = 1.0;         ///< policy under-relaxation of the plain
                                     ///< iteration: q <- (1-r) q + r improve(u);
                                     ///< r < 1 damps improvement 2-cycles
                                     ///< without moving the fixed-point set
    bool mixed_jacobian_args = true; ///< evaluate off-diagonal blocks at the
                                     ///< half-step (vs. all at w^k)
    double divergence_factor = 10.0; ///< abort when the residual grows this
                                     ///< much over three Newton steps
};

/// One Jacobi sweep: all three update maps evaluated from the same state.
struct SweepResult {
    std::optional<LatentQp::Assembled> fp_a;
    LatentQp::Assembled hjb_a;
    Vec L1, L2, L3;  ///< block updates
    Vec F;           ///< stacked fixed-point residual w - (L1, L2, L3)
};

SweepResult sweep(const CoupledSystem& sys, const Vec& m, const Vec& u, const Vec& q);

/// The Newton matrices of one step.
struct JacobianParts {
    Mat J;     ///< block-diagonal dR_i/d(own block); diagonal blocks are the
               ///< exact normal matrices factored during the sweep
    Mat dRdw;  ///< full residual Jacobian (four nonzero off-diagonal blocks)
};

JacobianParts assemble_jacobian(const CoupledSystem& sys, const SweepResult& sw, const Vec& m,
                                const Vec& u, const Vec& q, bool mixed_args = true);

/// Stacked stationarity residual R(w) (for diagnostics and derivative
/// oracles): (N1 m + rhs1, N2 u + rhs2, q - improve(u)).
Vec residual_stack(const CoupledSystem& sys, const Vec& m, const Vec& u, const Vec& q);

/// Solves dRdw * dw = -R(w) and applies damping; R(w) equals J * F(w).
Vec newton_step(const CoupledSystem& sys, const SweepResult& sw, const JacobianParts& jac,
                const Vec& m, const Vec& u, const Vec& q, double damping = 1.0);

struct CoupledRunResult {
    bool converged = false;
    int iterations = 0;
    std::optional<double> lambda;
    Vec m, u, q;              ///< final free coordinates
    Vec m_values, u_values;   ///< node values of the final fields
    std::vector<Vec> m_value_trace;     ///< node values per iteration
    std::vector<Vec> u_value_trace;
    std::vector<double> residual_trace;  ///< convergence metric per iteration
    std::vector<double> seconds_trace;
    double total_seconds = 0.0;
    std::string failure;  ///< non-empty on divergence aborts
};

/// Plain policy iteration: m <- L1(q), u <- L2(m, q), q <- improve(u),
/// until the discretized-L2 change of the density (or of the value when
/// there is no density block) drops below tol.
CoupledRunResult gppi_solve(const CoupledSystem& sys, const SolveOptions& opts = {});

/// Additive Schwarz Newton: one Jacobi sweep per iteration, then the
/// preconditioned Newton increment on the fixed-point residual.
CoupledRunResult as_newton_solve(const CoupledSystem& sys, const SolveOptions& opts = {});

}  // namespace mfgpi

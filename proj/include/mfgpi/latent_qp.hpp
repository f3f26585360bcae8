#pragma once

/// @file latent_qp.hpp
/// @brief A linearly constrained Gram-weighted QP whose constraint
/// coefficients depend affinely on an external parameter vector theta.
///
/// Every policy-evaluation step solves a problem of this shape: minimize a
/// sum of alpha-weighted RKHS norms and observation penalties over latent
/// variables, subject to collocation constraints that each isolate one
/// latent entry.  The constraint coefficients carry the current policy
/// values (and coupling data) -- collected here into theta -- so the same
/// object yields
///   * the minimizer (the update map L of the fixed-point iteration),
///   * the stationarity residual R(w) = Xi^T Gamma^{-1} (Xi w + y) over the
///     free variables,
///   * dR/dw = Xi^T Gamma^{-1} Xi (the normal matrix, cached from the solve),
///   * dR/dtheta, assembled analytically from the affine dependence of the
///     elimination map (A(theta), b(theta)) on theta.

#include <vector>

#include "mfgpi/gp_core.hpp"

namespace mfgpi {

/// An affine scalar c(theta) = c0 + sum_l d_l * theta[l].
struct ParamCoef {
    double c0 = 0.0;
    std::vector<std::pair<int, double>> dtheta;  ///< (theta index, d c/d theta)

    ParamCoef() = default;
    /*implicit*/ ParamCoef(double constant) : c0(constant) {}
    static ParamCoef linear(int theta_index, double slope, double c0 = 0.0) {
        ParamCoef c;
        c.c0 = c0;
        c.dtheta.emplace_back(theta_index, slope);
        return c;
    }
    double value(const Vec& theta) const {
        double v = c0;
        for (const auto& [l, d] : dtheta) v += d * theta[l];
        return v;
    }
};

/// latent[solved_index] = sum_j coef_j(theta) * latent[index_j] + rhs(theta).
struct ParamConstraint {
    int solved_index = -1;
    std::vector<std::pair<int, ParamCoef>> terms;
    ParamCoef rhs;
};

/// The parametrized constrained QP.
class LatentQp {
public:
    int n_full = 0;
    int n_theta = 0;
    std::vector<ParamConstraint> constraints;
    std::vector<ObjectiveBlock> blocks;

    /// Everything derived from one parameter value: the elimination map, the
    /// reduced QP, its solution (with cached factorizations), and the exact
    /// per-theta derivatives of the elimination rows.
    struct Assembled {
        Vec theta;
        Elimination elim;
        AffineQP qp;
        QpSolution sol;

        /// d(A row)/d theta_l and d b/d theta_l for one affected full row.
        struct RowDelta {
            int row;                   ///< full latent index whose A-row changes
            Eigen::RowVectorXd drow;   ///< derivative of that A-row (over free vars)
            double db;                 ///< derivative of b at that row
        };
        std::vector<std::vector<RowDelta>> dA;  ///< indexed by theta component

        /// Full latent vector for a given free vector.
        Vec expand(const Vec& w_free) const { return elim.A * w_free + elim.b; }
    };

    /// Eliminates constraints at the given theta, solves the reduced QP, and
    /// prepares the derivative structures.
    Assembled assemble(const Vec& theta) const;

    /// Stationarity residual over the free variables.
    Vec residual(const Assembled& a, const Vec& w_free) const;

    /// dR/dw: the cached normal matrix.
    const Mat& dresidual_dw(const Assembled& a) const { return a.sol.normal; }

    /// dR/dtheta, exact (the elimination map is affine in theta).
    Mat dresidual_dtheta(const Assembled& a, const Vec& w_free) const;

    /// Maximum violation of the original equality constraints by a full
    /// latent vector (diagnostic; the elimination enforces them exactly).
    double constraint_violation(const Vec& latent, const Vec& theta) const;

private:
    /// Gamma does not depend on theta, so its block factorizations are
    /// computed on first assembly and shared by all later assemblies.
    mutable std::shared_ptr<std::vector<SymSolver>> gamma_cache_;
};

}  // namespace mfgpi

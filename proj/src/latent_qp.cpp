/// @file latent_qp.cpp
/// @brief Parametrized constrained QP: assembly, solve, and analytic
/// residual derivatives.

#include "mfgpi/latent_qp.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mfgpi {

namespace {

/// Sparse derivative of one elimination row: d(A-row)/d theta_l and d b/d theta_l.
struct RowDeriv {
    Eigen::RowVectorXd drow;
    double db = 0.0;
};

}  // namespace

LatentQp::Assembled LatentQp::assemble(const Vec& theta) const {
    if ((int)theta.size() != n_theta)
        throw DimensionError("theta has wrong length", (int)theta.size());

    Assembled a;
    a.theta = theta;

    // Numeric constraints at this theta.
    std::vector<AffineConstraint> numeric;
    numeric.reserve(constraints.size());
    for (const auto& c : constraints) {
        AffineConstraint nc;
        nc.solved_index = c.solved_index;
        nc.rhs = c.rhs.value(theta);
        for (const auto& [j, coef] : c.terms) nc.terms.emplace_back(j, coef.value(theta));
        numeric.push_back(std::move(nc));
    }
    a.elim = eliminate_constraints(n_full, numeric);
    const int n_free = (int)a.elim.free_indices.size();

    // Propagate the exact theta-derivatives of each resolved row.  Resolution
    // order: same worklist as the elimination (a row is ready once every
    // referenced variable is free or already handled).
    std::vector<char> solved(n_full, 0), resolved(n_full, 0);
    for (const auto& c : constraints) solved[c.solved_index] = 1;
    // per solved latent index: theta -> derivative of its row
    std::vector<std::map<int, RowDeriv>> row_derivs(n_full);
    std::vector<const ParamConstraint*> pending;
    for (const auto& c : constraints) pending.push_back(&c);
    while (!pending.empty()) {
        bool progress = false;
        for (auto it = pending.begin(); it != pending.end();) {
            const ParamConstraint& c = **it;
            bool ready = true;
            for (const auto& [j, coef] : c.terms)
                if (solved[j] && !resolved[j]) { ready = false; break; }
            if (!ready) { ++it; continue; }

            auto& derivs = row_derivs[c.solved_index];
            auto bump = [&](int l) -> RowDeriv& {
                auto [itd, inserted] = derivs.try_emplace(l);
                if (inserted) itd->second.drow = Eigen::RowVectorXd::Zero(n_free);
                return itd->second;
            };
            for (const auto& [l, d] : c.rhs.dtheta) bump(l).db += d;
            for (const auto& [j, coef] : c.terms) {
                // d/dtheta_l [ coef(theta) * row_j(theta) ]
                for (const auto& [l, d] : coef.dtheta) {
                    RowDeriv& rd = bump(l);
                    rd.drow += d * a.elim.A.row(j);
                    rd.db += d * a.elim.b[j];
                }
                if (solved[j]) {
                    const double cj = coef.value(theta);
                    for (const auto& [l, inner] : row_derivs[j]) {
                        RowDeriv& rd = bump(l);
                        rd.drow += cj * inner.drow;
                        rd.db += cj * inner.db;
                    }
                }
            }
            resolved[c.solved_index] = 1;
            it = pending.erase(it);
            progress = true;
        }
        if (!progress)
            throw NonTriangularConstraintError("parametrized constraints are not triangular");
    }

    a.dA.assign(n_theta, {});
    for (int s = 0; s < n_full; ++s)
        for (const auto& [l, rd] : row_derivs[s])
            a.dA[l].push_back({s, rd.drow, rd.db});

    a.qp = build_affine_qp(a.elim, blocks);
    a.sol = solve_affine_qp(a.qp, gamma_cache_);
    gamma_cache_ = a.sol.gamma_chol;
    return a;
}

Vec LatentQp::residual(const Assembled& a, const Vec& w_free) const {
    return a.sol.normal * w_free + a.sol.rhs;
}

Mat LatentQp::dresidual_dtheta(const Assembled& a, const Vec& w_free) const {
    const int rows = a.qp.rows();
    const int n_free = a.qp.cols();
    const Vec r = a.qp.Xi * w_free + a.qp.y;
    const Vec g = a.sol.gamma_solve(r, a.sol.block_offsets);

    // Xi-row positions covering each full latent row, per objective block.
    // S collects d(Xi)/dtheta_l * w + d(y)/dtheta_l columnwise.
    Mat out = Mat::Zero(n_free, n_theta);
    Mat S = Mat::Zero(rows, n_theta);
    for (int l = 0; l < n_theta; ++l) {
        for (const auto& delta : a.dA[l]) {
            int start = 0;
            for (const auto& blk : blocks) {
                if (delta.row >= blk.offset && delta.row < blk.offset + blk.length) {
                    const int xi_row = start + (delta.row - blk.offset);
                    // term (d Xi_l)^T Gamma^{-1} (Xi w + y)
                    out.col(l) += delta.drow.transpose() * g[xi_row];
                    S(xi_row, l) += delta.drow.dot(w_free) + delta.db;
                }
                start += blk.length;
            }
        }
    }
    out += a.qp.Xi.transpose() * a.sol.gamma_solve(S, a.sol.block_offsets);
    return out;
}

double LatentQp::constraint_violation(const Vec& latent, const Vec& theta) const {
    double worst = 0.0;
    for (const auto& c : constraints) {
        double v = c.rhs.value(theta) - latent[c.solved_index];
        for (const auto& [j, coef] : c.terms) v += coef.value(theta) * latent[j];
        worst = std::max(worst, std::abs(v));
    }
    return worst;
}

}  // namespace mfgpi

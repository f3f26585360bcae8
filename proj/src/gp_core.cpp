/// @file gp_core.cpp
/// @brief Gram assembly, affine QP solve, and constraint elimination.

#include "mfgpi/gp_core.hpp"

#include <algorithm>
#include <cmath>

namespace mfgpi {

double functional_entry(const KernelSpec& kernel, const LinearFunctional& fi,
                        const LinearFunctional& fj) {
    if (fi.is_sum && fj.is_sum) {
        double acc = 0.0;
        for (int a = 0; a < fi.sum_weights.size(); ++a)
            for (int b = 0; b < fj.sum_weights.size(); ++b)
                acc += fi.sum_weights[a] * fj.sum_weights[b] *
                       eval_kernel(kernel, fi.sum_points.row(a), fj.sum_points.row(b));
        return acc;
    }
    if (fi.is_sum) {
        double acc = 0.0;
        for (int a = 0; a < fi.sum_weights.size(); ++a)
            acc += fi.sum_weights[a] * eval_kernel_op(kernel, DiffOp::identity(),
                                                      fi.sum_points.row(a), fj.op, fj.point);
        return acc;
    }
    if (fj.is_sum) {
        double acc = 0.0;
        for (int b = 0; b < fj.sum_weights.size(); ++b)
            acc += fj.sum_weights[b] * eval_kernel_op(kernel, fi.op, fi.point,
                                                      DiffOp::identity(), fj.sum_points.row(b));
        return acc;
    }
    return eval_kernel_op(kernel, fi.op, fi.point, fj.op, fj.point);
}

Mat assemble_gram(const KernelSpec& kernel, const std::vector<LinearFunctional>& functionals) {
    const int n = (int)functionals.size();
    Mat G(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            const double v = functional_entry(kernel, functionals[i], functionals[j]);
            G(i, j) = v;
            G(j, i) = v;
        }
    }
    return G;
}

double nugget_scale(const Mat& G, double eta) {
    const int n = (int)G.rows();
    return n > 0 ? eta * G.trace() / n : 0.0;
}

Mat regularized(const Mat& G, double eta) {
    // Relative-diagonal nugget: derivative-augmented Gram matrices mix rows
    // whose diagonal entries differ by many orders of magnitude (values O(1),
    // fourth-derivative entries O(1/l^8)), so a uniform trace-scaled shift
    // would drown the small-scale rows.  Scaling per diagonal entry keeps the
    // perturbation relatively uniform; for homogeneous matrices this equals
    // the trace-scaled shift.
    Mat R = G;
    const double fallback = nugget_scale(G, eta);
    for (int i = 0; i < G.rows(); ++i)
        R(i, i) += G(i, i) > 0.0 ? eta * G(i, i) : fallback;
    return R;
}

void SymSolver::compute(const Mat& A) {
    llt_.compute(A);
    used_fallback_ = (llt_.info() != Eigen::Success);
    if (used_fallback_) {
        // Symmetric-eigendecomposition pseudo-inverse with threshold
        // 1e-12 * lambda_max: deterministic repair for semidefinite blocks.
        Eigen::SelfAdjointEigenSolver<Mat> es(A);
        const Vec& ev = es.eigenvalues();
        const double lmax = ev.cwiseAbs().maxCoeff();
        const double thresh = 1e-12 * lmax;
        Vec inv = Vec::Zero(ev.size());
        double lmin_kept = lmax;
        for (int i = 0; i < ev.size(); ++i) {
            if (ev[i] > thresh) {
                inv[i] = 1.0 / ev[i];
                lmin_kept = std::min(lmin_kept, ev[i]);
            }
        }
        condition_estimate_ = lmax / std::max(lmin_kept, thresh);
        pinv_ = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    }
}

Vec SymSolver::solve(const Vec& b) const {
    return used_fallback_ ? Vec(pinv_ * b) : Vec(llt_.solve(b));
}

Mat SymSolver::solve(const Mat& B) const {
    return used_fallback_ ? Mat(pinv_ * B) : Mat(llt_.solve(B));
}

Vec QpSolution::gamma_solve(const Vec& r, const std::vector<int>& offsets) const {
    Vec out(r.size());
    for (std::size_t k = 0; k < gamma_chol->size(); ++k) {
        const int off = offsets[k];
        const int len = (k + 1 < offsets.size() ? offsets[k + 1] : (int)r.size()) - off;
        out.segment(off, len) = (*gamma_chol)[k].solve(Vec(r.segment(off, len)));
    }
    return out;
}

Mat QpSolution::gamma_solve(const Mat& R, const std::vector<int>& offsets) const {
    Mat out(R.rows(), R.cols());
    for (std::size_t k = 0; k < gamma_chol->size(); ++k) {
        const int off = offsets[k];
        const int len = (k + 1 < offsets.size() ? offsets[k + 1] : (int)R.rows()) - off;
        out.middleRows(off, len) = (*gamma_chol)[k].solve(Mat(R.middleRows(off, len)));
    }
    return out;
}

QpSolution solve_affine_qp(const AffineQP& qp,
                           std::shared_ptr<std::vector<SymSolver>> prefactored) {
    QpSolution sol;
    int total = 0;
    for (const auto& B : qp.gamma_blocks) {
        sol.block_offsets.push_back(total);
        total += (int)B.rows();
    }
    if (total != qp.rows())
        throw DimensionError("Gamma block sizes do not sum to Xi row count", total);

    if (prefactored) {
        if (prefactored->size() != qp.gamma_blocks.size())
            throw DimensionError("prefactored Gamma has wrong block count",
                                 (int)prefactored->size());
        sol.gamma_chol = std::move(prefactored);
    } else {
        sol.gamma_chol = std::make_shared<std::vector<SymSolver>>();
        sol.gamma_chol->reserve(qp.gamma_blocks.size());
        for (const auto& B : qp.gamma_blocks) sol.gamma_chol->emplace_back(B);
    }

    const Mat GiXi = sol.gamma_solve(qp.Xi, sol.block_offsets);
    sol.normal = qp.Xi.transpose() * GiXi;
    // Symmetrize against round-off so downstream factorizations see an
    // exactly symmetric matrix.
    sol.normal = 0.5 * (sol.normal + sol.normal.transpose()).eval();
    sol.rhs = GiXi.transpose() * qp.y;
    sol.normal_solver.compute(sol.normal);
    if (sol.normal_solver.used_fallback() && sol.normal_solver.condition_estimate() > 1e15)
        throw SingularMatrixError("reduced normal matrix singular beyond nugget repair",
                                  sol.normal_solver.condition_estimate());
    sol.w = -sol.normal_solver.solve(sol.rhs);
    return sol;
}

Elimination eliminate_constraints(int n_full, const std::vector<AffineConstraint>& constraints) {
    Elimination e;
    e.n_full = n_full;
    std::vector<char> solved(n_full, 0);
    for (const auto& c : constraints) {
        if (c.solved_index < 0 || c.solved_index >= n_full)
            throw NonTriangularConstraintError("constraint solves an out-of-range latent index");
        if (solved[c.solved_index])
            throw NonTriangularConstraintError("two constraints solve the same latent index");
        solved[c.solved_index] = 1;
    }
    e.column_of.assign(n_full, -1);
    for (int i = 0; i < n_full; ++i) {
        if (!solved[i]) {
            e.column_of[i] = (int)e.free_indices.size();
            e.free_indices.push_back(i);
        }
    }
    const int n_free = (int)e.free_indices.size();
    e.A = Mat::Zero(n_full, n_free);
    e.b = Vec::Zero(n_full);
    for (int i = 0; i < n_full; ++i)
        if (e.column_of[i] >= 0) e.A(i, e.column_of[i]) = 1.0;

    // Resolve constraints with a worklist: a row can be expanded once every
    // variable it references is free or already resolved.
    std::vector<char> resolved(n_full, 0);
    std::vector<const AffineConstraint*> pending;
    for (const auto& c : constraints) pending.push_back(&c);
    while (!pending.empty()) {
        bool progress = false;
        for (auto it = pending.begin(); it != pending.end();) {
            const AffineConstraint& c = **it;
            bool ready = true;
            for (const auto& [j, coef] : c.terms) {
                if (j < 0 || j >= n_full)
                    throw NonTriangularConstraintError("constraint references an out-of-range index");
                if (solved[j] && !resolved[j]) { ready = false; break; }
            }
            if (!ready) { ++it; continue; }
            auto rowA = e.A.row(c.solved_index);
            rowA.setZero();
            double rb = c.rhs;
            for (const auto& [j, coef] : c.terms) {
                rowA += coef * e.A.row(j);
                rb += coef * e.b[j];
            }
            e.b[c.solved_index] = rb;
            resolved[c.solved_index] = 1;
            it = pending.erase(it);
            progress = true;
        }
        if (!progress)
            throw NonTriangularConstraintError(
                "constraints are not triangular in their designated variables");
    }
    return e;
}

AffineQP build_affine_qp(const Elimination& elim, const std::vector<ObjectiveBlock>& blocks) {
    int rows = 0;
    for (const auto& blk : blocks) rows += blk.length;
    AffineQP qp;
    qp.Xi.resize(rows, elim.A.cols());
    qp.y.resize(rows);
    int r = 0;
    for (const auto& blk : blocks) {
        qp.Xi.middleRows(r, blk.length) = elim.A.middleRows(blk.offset, blk.length);
        qp.y.segment(r, blk.length) = elim.b.segment(blk.offset, blk.length);
        if (blk.data.size() > 0) qp.y.segment(r, blk.length) -= blk.data;
        qp.gamma_blocks.push_back(blk.weight);
        r += blk.length;
    }
    return qp;
}

double GPModel::eval(const Vec& z, const DiffOp& op) const {
    return representer_eval(*this, z, op);
}

double representer_eval(const GPModel& model, const Vec& z, const DiffOp& op) {
    double acc = 0.0;
    LinearFunctional probe = LinearFunctional::of(op, z);
    for (std::size_t j = 0; j < model.functionals.size(); ++j)
        acc += functional_entry(model.kernel, probe, model.functionals[j]) * model.coeffs[j];
    return acc;
}

}  // namespace mfgpi

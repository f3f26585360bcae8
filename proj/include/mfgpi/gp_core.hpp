#pragma once

/// @file gp_core.hpp
/// @brief Linear-functional algebra over an RKHS: Gram assembly, the
/// canonical affine quadratic program, constraint elimination, and
/// representer-formula evaluation.

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

#include "mfgpi/kernels.hpp"

namespace mfgpi {

/// A linear functional acting on RKHS elements: either a Dirac measure
/// composed with a differential operator at a point, or a weighted sum of
/// plain Dirac evaluations (used for discretized mass / mean constraints).
struct LinearFunctional {
    // Operator form.
    DiffOp op = DiffOp::identity();
    Vec point;

    // Sum form: sum_i weights[i] * delta_{points.row(i)}.
    bool is_sum = false;
    Mat sum_points;   ///< one point per row
    Vec sum_weights;

    static LinearFunctional dirac(const Vec& p) { return {DiffOp::identity(), p}; }
    static LinearFunctional of(const DiffOp& op, const Vec& p) { return {op, p}; }
    static LinearFunctional sum(const Mat& points, const Vec& weights) {
        LinearFunctional f;
        f.is_sum = true;
        f.sum_points = points;
        f.sum_weights = weights;
        return f;
    }
};

/// (f_i tensor f_j) applied to the kernel: one Gram entry.
double functional_entry(const KernelSpec& kernel, const LinearFunctional& fi,
                        const LinearFunctional& fj);

/// Symmetric Gram matrix G[i][j] = (functional i tensor functional j)(k).
Mat assemble_gram(const KernelSpec& kernel, const std::vector<LinearFunctional>& functionals);

/// eta * tr(G)/n: the scale of the default diagonal regularizer.
double nugget_scale(const Mat& G, double eta);

/// Diagonal nugget: adds eta * G[i][i] to each diagonal entry (relative
/// regularization, robust to the mixed scales of derivative-augmented Gram
/// matrices); coincides with G + nugget_scale(G, eta) * I when the diagonal
/// is constant.
Mat regularized(const Mat& G, double eta);

/// Deterministic SPD solver: Cholesky with a symmetric-eigendecomposition
/// pseudo-inverse fallback (threshold 1e-12 * lambda_max) when the
/// factorization fails.
class SymSolver {
public:
    SymSolver() = default;
    explicit SymSolver(const Mat& A) { compute(A); }

    void compute(const Mat& A);
    Vec solve(const Vec& b) const;
    Mat solve(const Mat& B) const;

    bool used_fallback() const { return used_fallback_; }
    /// Rough condition estimate (eigenvalue ratio) when the fallback ran.
    double condition_estimate() const { return condition_estimate_; }

private:
    Eigen::LLT<Mat> llt_;
    bool used_fallback_ = false;
    double condition_estimate_ = 0.0;
    // Fallback pieces: A^+ = V diag(1/lambda_i restricted) V^T.
    Mat pinv_;
};

/// The canonical problem every GPPI step reduces to:
///   minimize (Xi w + y)^T Gamma^{-1} (Xi w + y)
/// with Gamma block-diagonal (Gram blocks over kernel norms plus
/// noise-covariance blocks over observation penalties).  Gamma^{-1} is never
/// formed; each block is factored and applied through triangular solves.
struct AffineQP {
    Mat Xi;
    Vec y;
    std::vector<Mat> gamma_blocks;  ///< SPD blocks; row sizes sum to Xi.rows()

    int rows() const { return (int)Xi.rows(); }
    int cols() const { return (int)Xi.cols(); }
};

/// Solution of an AffineQP with the factorizations cached for reuse (the
/// Schwarz accelerator reads the normal matrix back as a Jacobian block).
struct QpSolution {
    Vec w;  ///< the unique minimizer
    /// Per-block factors of Gamma, shareable across repeated solves with the
    /// same Gamma (the blocks never change within a policy iteration).
    std::shared_ptr<std::vector<SymSolver>> gamma_chol;
    Mat normal;  ///< Xi^T Gamma^{-1} Xi
    SymSolver normal_solver;
    Vec rhs;  ///< Xi^T Gamma^{-1} y

    /// Applies Gamma^{-1} blockwise to a stacked vector.
    Vec gamma_solve(const Vec& r, const std::vector<int>& offsets) const;
    Mat gamma_solve(const Mat& R, const std::vector<int>& offsets) const;
    std::vector<int> block_offsets;  ///< starting row of each Gamma block
};

/// Minimizes (Xi w + y)^T Gamma^{-1} (Xi w + y); closed form
/// w = -(Xi^T Gamma^{-1} Xi)^{-1} Xi^T Gamma^{-1} y.  A prefactored Gamma
/// may be supplied to skip the per-block factorizations.
QpSolution solve_affine_qp(const AffineQP& qp,
                           std::shared_ptr<std::vector<SymSolver>> prefactored = nullptr);

/// One equality constraint expressing a designated latent entry in terms of
/// others:  latent[solved_index] = sum_j coef_j * latent[index_j] + rhs.
struct AffineConstraint {
    int solved_index = -1;
    std::vector<std::pair<int, double>> terms;  ///< (latent index, coefficient)
    double rhs = 0.0;
};

/// The affine map latent_full = A * w_free + b produced by eliminating
/// triangular equality constraints.
struct Elimination {
    int n_full = 0;
    std::vector<int> free_indices;   ///< ascending latent indices of free vars
    std::vector<int> column_of;      ///< latent index -> free column, or -1
    Mat A;                           ///< n_full x n_free
    Vec b;                           ///< n_full
};

/// Eliminates the constraints; throws NonTriangularConstraintError when a
/// constraint references a variable that is neither free nor previously
/// resolved.
Elimination eliminate_constraints(int n_full, const std::vector<AffineConstraint>& constraints);

/// One quadratic objective block over a contiguous latent range:
/// alpha-weighted Gram norm (weight = (G + nugget)/alpha, data = 0) or an
/// observation penalty (weight = I/alpha, data = observed values).
struct ObjectiveBlock {
    int offset = 0;
    int length = 0;
    Mat weight;  ///< the Gamma block (already includes 1/alpha and nugget)
    Vec data;    ///< subtracted from the residual rows; empty means zero
};

/// Builds the reduced AffineQP over the free variables from latent-space
/// objective blocks and an elimination map.  This is the spec's
/// eliminate_constraints operation in its full form: labeled latent
/// objective + affine equality rows -> AffineQP.
AffineQP build_affine_qp(const Elimination& elim, const std::vector<ObjectiveBlock>& blocks);

/// Kernel + functional list + representer coefficients; evaluable anywhere.
struct GPModel {
    KernelSpec kernel;
    std::vector<LinearFunctional> functionals;
    Vec coeffs;             ///< K(phi,phi)^{-1} (latent values), length = |functionals|
    double nugget = 1e-8;   ///< eta used when the Gram block was regularized

    /// op applied to the representer mean at z.
    double eval(const Vec& z, const DiffOp& op = DiffOp::identity()) const;
};

/// op at z applied against the representer mean: the cross-row
/// K(op at z, functionals) dotted with coeffs.
double representer_eval(const GPModel& model, const Vec& z, const DiffOp& op = DiffOp::identity());

/// Default nugget strength used across the library.
inline constexpr double kDefaultNugget = 1e-8;

}  // namespace mfgpi

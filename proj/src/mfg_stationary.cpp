/// @file mfg_stationary.cpp
/// @brief Stationary mean-field game solvers: QP assembly for the density
/// and value sub-problems, the coupled-system builder, and the GPPI /
/// Schwarz-Newton entry points.

#include "mfgpi/mfg_stationary.hpp"

#include <cmath>
#include <memory>
#include <utility>

namespace mfgpi {

Mat uniform_grid_nodes(int per_axis, int dim, double origin) {
    if (per_axis < 1 || dim < 1) throw ConfigError("grid needs per_axis >= 1 and dim >= 1");
    int M = 1;
    for (int a = 0; a < dim; ++a) M *= per_axis;
    Mat nodes(M, dim);
    for (int f = 0; f < M; ++f) {
        int rem = f;
        for (int a = dim - 1; a >= 0; --a) {
            nodes(f, a) = origin + (double)(rem % per_axis) / per_axis;
            rem /= per_axis;
        }
    }
    return nodes;
}

void StationaryConfig::validate() const {
    if (nodes.rows() < 2) throw ConfigError("stationary problem needs at least two nodes");
    if ((int)nodes.cols() != dim) throw ConfigError("node coordinate count differs from dim");
    if (nu <= 0.0) throw ConfigError("viscosity nu must be positive");
    if (alpha_m <= 0.0 || alpha_u <= 0.0 || alpha_lambda <= 0.0)
        throw ConfigError("Gram-norm weights alpha_m, alpha_u, alpha_lambda must be positive");
    if (kernel_m.point_dim() != dim || kernel_u.point_dim() != dim)
        throw ConfigError("density/value kernel dimension differs from problem dim");
    if (kernel_q.scalar.point_dim() != dim || kernel_q.dims != dim)
        throw ConfigError("policy kernel dimension differs from problem dim");
    if (!infer_potential && !V_true) throw ConfigError("forward mode requires a known potential");
    if (infer_potential) {
        if (alpha_v <= 0.0) throw ConfigError("inverse mode requires alpha_v > 0");
        if (kernel_v.point_dim() != dim)
            throw ConfigError("potential kernel dimension differs from problem dim");
    }
    if (alpha_mo > 0.0 && obs_m.count() == 0)
        throw ConfigError("alpha_mo > 0 but no density observations were given");
    if (alpha_vo > 0.0 && obs_v.count() == 0)
        throw ConfigError("alpha_vo > 0 but no potential observations were given");
}

namespace {

/// Everything shared by the closures of the coupled system.
struct StationaryCtx {
    StationaryConfig cfg;
    StationaryLayoutFp Lf;
    StationaryLayoutHjb Lh;
    Mat T_fp;  ///< theta_fp = T_fp * q  (policy values then divergences)
    Mat TQ;    ///< top rows of T_fp: node policy values only
    Mat m_values_A;
    Vec m_values_b;
    std::vector<int> grad_col;  ///< free column of value-gradient latent (i*d + a)
};

/// One scalar QP half of the problem, before coupling.
struct QpPart {
    LatentQp qp;
    std::vector<LinearFunctional> functionals;
    Mat gram;  ///< regularized
};

std::vector<LinearFunctional> field_functionals(const Mat& nodes) {
    const int M = (int)nodes.rows(), d = (int)nodes.cols();
    std::vector<LinearFunctional> fs;
    fs.reserve((std::size_t)M * (2 + d));
    for (int i = 0; i < M; ++i) fs.push_back(LinearFunctional::dirac(nodes.row(i)));
    for (int a = 0; a < d; ++a)
        for (int i = 0; i < M; ++i)
            fs.push_back(LinearFunctional::of(DiffOp::grad(a), nodes.row(i)));
    for (int i = 0; i < M; ++i)
        fs.push_back(LinearFunctional::of(DiffOp::laplacian(), nodes.row(i)));
    return fs;
}

/// Density QP: transport collocation rows solved for the Laplacian entries,
/// the discretized unit-mass row solved for the last value entry.
QpPart build_fp_part(const StationaryConfig& cfg, const StationaryLayoutFp& Lf) {
    const int M = Lf.M, d = Lf.d;
    QpPart part;
    part.functionals = field_functionals(cfg.nodes);
    for (int j = 0; j < Lf.n_obs; ++j)
        part.functionals.push_back(LinearFunctional::dirac(cfg.obs_m.points.row(j)));
    part.gram = regularized(assemble_gram(cfg.kernel_m, part.functionals), cfg.nugget);

    part.qp.n_full = Lf.total();
    part.qp.n_theta = M * (d + 1);

    // Unit mass: (1/M) sum_i m_i = 1, solved for the last value entry.
    ParamConstraint mass;
    mass.solved_index = Lf.value(M - 1);
    for (int i = 0; i < M - 1; ++i) mass.terms.emplace_back(Lf.value(i), ParamCoef(-1.0));
    mass.rhs = ParamCoef((double)M);
    part.qp.constraints.push_back(std::move(mass));

    // nu Lap(m) + Q . grad(m) + div(Q) m = 0 at each node, solved for Lap(m).
    for (int i = 0; i < M; ++i) {
        ParamConstraint c;
        c.solved_index = Lf.lap(i);
        for (int a = 0; a < d; ++a)
            c.terms.emplace_back(Lf.grad(a, i), ParamCoef::linear(i * d + a, -1.0 / cfg.nu));
        c.terms.emplace_back(Lf.value(i), ParamCoef::linear(M * d + i, -1.0 / cfg.nu));
        part.qp.constraints.push_back(std::move(c));
    }

    part.qp.blocks.push_back({0, Lf.total(), part.gram / cfg.alpha_m, Vec()});
    if (Lf.n_obs > 0)
        part.qp.blocks.push_back({Lf.obs(0), Lf.n_obs,
                                  Mat::Identity(Lf.n_obs, Lf.n_obs) / cfg.alpha_mo,
                                  cfg.obs_m.values});
    return part;
}

/// Value QP: HJB collocation rows solved for the Laplacian entries, the
/// zero-mean row solved for the last value entry.  theta packs the node
/// policy values, running costs, and coupling values.
struct HjbPart : QpPart {
    std::vector<LinearFunctional> functionals_v;
    Mat gram_v;
};

HjbPart build_hjb_part(const StationaryConfig& cfg, const StationaryLayoutHjb& Lh) {
    const int M = Lh.M, d = Lh.d;
    HjbPart part;
    part.functionals = field_functionals(cfg.nodes);
    part.gram = regularized(assemble_gram(cfg.kernel_u, part.functionals), cfg.nugget);
    if (Lh.with_v) {
        for (int i = 0; i < M; ++i)
            part.functionals_v.push_back(LinearFunctional::dirac(cfg.nodes.row(i)));
        for (int j = 0; j < Lh.n_obs_v; ++j)
            part.functionals_v.push_back(LinearFunctional::dirac(cfg.obs_v.points.row(j)));
        part.gram_v = regularized(assemble_gram(cfg.kernel_v, part.functionals_v), cfg.nugget);
    }

    part.qp.n_full = Lh.total();
    part.qp.n_theta = M * (d + 2);

    // Zero mean: sum_i u_i = 0, solved for the last value entry.
    ParamConstraint mean;
    mean.solved_index = Lh.value(M - 1);
    for (int i = 0; i < M - 1; ++i) mean.terms.emplace_back(Lh.value(i), ParamCoef(-1.0));
    part.qp.constraints.push_back(std::move(mean));

    // nu Lap(u) - Q . grad(u) + L(Q) + V + F = lambda at each node, solved
    // for Lap(u); in forward mode V enters the constant part, in inverse
    // mode it is the latent potential value at the node.
    for (int i = 0; i < M; ++i) {
        ParamConstraint c;
        c.solved_index = Lh.lap(i);
        c.terms.emplace_back(Lh.lambda(), ParamCoef(1.0 / cfg.nu));
        for (int a = 0; a < d; ++a)
            c.terms.emplace_back(Lh.grad(a, i), ParamCoef::linear(i * d + a, 1.0 / cfg.nu));
        if (Lh.with_v) c.terms.emplace_back(Lh.v_value(i), ParamCoef(-1.0 / cfg.nu));
        ParamCoef rhs;
        rhs.c0 = Lh.with_v ? 0.0 : -cfg.V_true(cfg.nodes.row(i)) / cfg.nu;
        rhs.dtheta.emplace_back(M * d + i, -1.0 / cfg.nu);      // running cost
        rhs.dtheta.emplace_back(M * d + M + i, -1.0 / cfg.nu);  // coupling F
        c.rhs = std::move(rhs);
        part.qp.constraints.push_back(std::move(c));
    }

    part.qp.blocks.push_back({0, M * (2 + d), part.gram / cfg.alpha_u, Vec()});
    part.qp.blocks.push_back(
        {Lh.lambda(), 1, Mat::Constant(1, 1, 1.0 / cfg.alpha_lambda), Vec()});
    if (Lh.with_v) {
        part.qp.blocks.push_back(
            {Lh.v_value(0), M + Lh.n_obs_v, part.gram_v / cfg.alpha_v, Vec()});
        if (Lh.n_obs_v > 0)
            part.qp.blocks.push_back({Lh.v_obs(0), Lh.n_obs_v,
                                      Mat::Identity(Lh.n_obs_v, Lh.n_obs_v) / cfg.alpha_vo,
                                      cfg.obs_v.values});
    }
    return part;
}

/// theta of the value QP from node policy values (stacked node-major with
/// axis fastest) and node density values.
Vec hjb_theta(const StationaryCtx& ctx, const Vec& q_flat, const Vec& m_nodes) {
    const int M = ctx.Lh.M, d = ctx.Lh.d;
    Vec theta(M * (d + 2));
    theta.head(M * d) = q_flat;
    for (int i = 0; i < M; ++i) {
        const Vec qi = q_flat.segment(i * d, d);
        theta[M * d + i] = ctx.cfg.ham.running_cost(qi);
        theta[M * d + M + i] = ctx.cfg.F(m_nodes[i]);
    }
    return theta;
}

}  // namespace

StationarySystem build_stationary_system(const StationaryConfig& config) {
    config.validate();
    const int M = config.node_count(), d = config.dim;

    auto ctx = std::make_shared<StationaryCtx>();
    ctx->cfg = config;
    ctx->Lf = {M, d, config.alpha_mo > 0.0 ? config.obs_m.count() : 0};
    ctx->Lh = {M, d, config.infer_potential && config.alpha_vo > 0.0 ? config.obs_v.count() : 0,
               config.infer_potential};

    StationarySystem out;
    out.fp_layout = ctx->Lf;
    out.hjb_layout = ctx->Lh;
    out.policy_ops = policy_node_ops(config.kernel_q, config.nodes, config.nodes, config.nugget);

    QpPart fp = build_fp_part(config, ctx->Lf);
    HjbPart hjb = build_hjb_part(config, ctx->Lh);
    out.functionals_m = fp.functionals;
    out.functionals_u = hjb.functionals;
    out.functionals_v = hjb.functionals_v;
    out.gram_m = fp.gram;
    out.gram_u = hjb.gram;
    out.gram_v = hjb.gram_v;

    // theta_fp = T_fp q: policy values per node, then the divergences.
    ctx->T_fp = Mat::Zero(M * (d + 1), M * d);
    for (int a = 0; a < d; ++a)
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j) {
                ctx->T_fp(i * d + a, j * d + a) = out.policy_ops.S(i, j);
                ctx->T_fp(M * d + i, j * d + a) += out.policy_ops.D[a](i, j);
            }
    ctx->TQ = ctx->T_fp.topRows(M * d);

    CoupledSystem& sys = out.sys;
    sys.fp = std::move(fp.qp);
    sys.hjb = std::move(hjb.qp);
    sys.n_q = M * d;

    // Constant structural maps read off parameter-free assemblies: the value
    // rows of both eliminations do not depend on theta.
    {
        const auto a0 = sys.fp.assemble(Vec::Zero(sys.fp.n_theta));
        sys.n_m = (int)a0.elim.free_indices.size();
        ctx->m_values_A = a0.elim.A.topRows(M);
        ctx->m_values_b = a0.elim.b.head(M);
        sys.m_values_A = ctx->m_values_A;
        sys.m_values_b = ctx->m_values_b;
        // Initial density identically one: value and observation-read
        // latents start at 1, gradients at 0.
        sys.m_init = Vec::Zero(sys.n_m);
        for (int c = 0; c < sys.n_m; ++c) {
            const int idx = a0.elim.free_indices[c];
            if (idx < M || idx >= ctx->Lf.obs(0)) sys.m_init[c] = 1.0;
        }
    }
    {
        const auto a0 = sys.hjb.assemble(Vec::Zero(sys.hjb.n_theta));
        sys.n_u = (int)a0.elim.free_indices.size();
        sys.u_values_A = a0.elim.A.topRows(M);
        sys.u_values_b = a0.elim.b.head(M);
        sys.lambda_free_index = a0.elim.column_of[ctx->Lh.lambda()];
        ctx->grad_col.resize((std::size_t)M * d);
        for (int i = 0; i < M; ++i)
            for (int a = 0; a < d; ++a)
                ctx->grad_col[(std::size_t)i * d + a] = a0.elim.column_of[ctx->Lh.grad(a, i)];
        sys.u_init = Vec::Zero(sys.n_u);
    }
    sys.q_init = Vec::Zero(sys.n_q);
    sys.cell_volume = 1.0 / M;

    sys.dtheta_fp_dq = ctx->T_fp;
    sys.theta_fp = [ctx](const Vec& q) { return Vec(ctx->T_fp * q); };

    sys.theta_hjb = [ctx](const Vec& m, const Vec& q) {
        const Vec m_nodes = ctx->m_values_A * m + ctx->m_values_b;
        return hjb_theta(*ctx, Vec(ctx->TQ * q), m_nodes);
    };
    sys.dtheta_hjb_dm = [ctx](const Vec& m) {
        const int M_ = ctx->Lh.M, d_ = ctx->Lh.d;
        const Vec m_nodes = ctx->m_values_A * m + ctx->m_values_b;
        Mat Z = Mat::Zero(M_ * (d_ + 2), m.size());
        for (int i = 0; i < M_; ++i)
            Z.row(M_ * d_ + M_ + i) = ctx->cfg.F.deriv(m_nodes[i]) * ctx->m_values_A.row(i);
        return Z;
    };
    sys.dtheta_hjb_dq = [ctx](const Vec& q) {
        const int M_ = ctx->Lh.M, d_ = ctx->Lh.d;
        const Vec q_flat = ctx->TQ * q;
        Mat Z = Mat::Zero(M_ * (d_ + 2), q.size());
        Z.topRows(M_ * d_) = ctx->TQ;
        for (int i = 0; i < M_; ++i) {
            const Vec gi = ctx->cfg.ham.running_cost_grad(Vec(q_flat.segment(i * d_, d_)));
            for (int b = 0; b < d_; ++b) Z.row(M_ * d_ + i) += gi[b] * ctx->TQ.row(i * d_ + b);
        }
        return Z;
    };

    sys.improve = [ctx](const Vec& u) {
        const int M_ = ctx->Lh.M, d_ = ctx->Lh.d;
        Mat P(M_, d_);
        for (int i = 0; i < M_; ++i)
            for (int a = 0; a < d_; ++a) P(i, a) = u[ctx->grad_col[(std::size_t)i * d_ + a]];
        const Mat Q = improve_pointwise(P, ctx->cfg.ham);
        Vec q(M_ * d_);
        for (int i = 0; i < M_; ++i)
            for (int a = 0; a < d_; ++a) q[i * d_ + a] = Q(i, a);
        return q;
    };
    sys.dimprove_du = [ctx](const Vec& u) {
        const int M_ = ctx->Lh.M, d_ = ctx->Lh.d;
        Mat Z = Mat::Zero(M_ * d_, u.size());
        for (int i = 0; i < M_; ++i) {
            Vec p(d_);
            for (int a = 0; a < d_; ++a) p[a] = u[ctx->grad_col[(std::size_t)i * d_ + a]];
            const Mat J = improve_jacobian(p, ctx->cfg.ham);
            for (int a = 0; a < d_; ++a)
                for (int b = 0; b < d_; ++b)
                    Z(i * d_ + a, ctx->grad_col[(std::size_t)i * d_ + b]) = J(a, b);
        }
        return Z;
    };

    return out;
}

StationaryFpSolution solve_fp_stationary(const StationaryConfig& config,
                                         const PolicyField& policy) {
    config.validate();
    const int M = config.node_count(), d = config.dim;
    StationaryLayoutFp Lf{M, d, config.alpha_mo > 0.0 ? config.obs_m.count() : 0};
    QpPart part = build_fp_part(config, Lf);

    Vec theta(M * (d + 1));
    for (int i = 0; i < M; ++i) {
        const Vec qi = eval_policy(policy, config.nodes.row(i));
        for (int a = 0; a < d; ++a) theta[i * d + a] = qi[a];
        theta[M * d + i] = div_policy(policy, config.nodes.row(i));
    }

    const auto a = part.qp.assemble(theta);
    StationaryFpSolution sol;
    sol.rho = a.expand(a.sol.w);
    sol.m_model = {config.kernel_m, part.functionals, SymSolver(part.gram).solve(sol.rho),
                   config.nugget};
    return sol;
}

StationaryHjbSolution solve_hjb_stationary(const StationaryConfig& config,
                                           const PolicyField& policy, const GPModel& m_model) {
    config.validate();
    const int M = config.node_count(), d = config.dim;
    StationaryLayoutHjb Lh{M, d,
                           config.infer_potential && config.alpha_vo > 0.0 ? config.obs_v.count()
                                                                           : 0,
                           config.infer_potential};
    HjbPart part = build_hjb_part(config, Lh);

    Vec theta(M * (d + 2));
    for (int i = 0; i < M; ++i) {
        const Vec qi = eval_policy(policy, config.nodes.row(i));
        for (int a = 0; a < d; ++a) theta[i * d + a] = qi[a];
        theta[M * d + i] = config.ham.running_cost(qi);
        theta[M * d + M + i] = config.F(m_model.eval(config.nodes.row(i)));
    }

    const auto a = part.qp.assemble(theta);
    StationaryHjbSolution sol;
    sol.z = a.expand(a.sol.w);
    sol.lambda = sol.z[Lh.lambda()];
    sol.u_model = {config.kernel_u, part.functionals,
                   SymSolver(part.gram).solve(Vec(sol.z.head(M * (2 + d)))), config.nugget};
    if (Lh.with_v)
        sol.v_model = {config.kernel_v, part.functionals_v,
                       SymSolver(part.gram_v)
                           .solve(Vec(sol.z.segment(Lh.v_value(0), M + Lh.n_obs_v))),
                       config.nugget};
    return sol;
}

CoupledRunResult gppi_stationary(const StationaryConfig& config) {
    const StationarySystem S = build_stationary_system(config);
    SolveOptions opts;
    opts.max_iters = config.max_iters;
    opts.tol = config.tol;
    opts.relaxation = config.relaxation;
    return gppi_solve(S.sys, opts);
}

CoupledRunResult as_stationary(const StationaryConfig& config, const SolveOptions& opts_in) {
    const StationarySystem S = build_stationary_system(config);
    SolveOptions opts = opts_in;
    if (opts.max_iters == SolveOptions{}.max_iters) opts.max_iters = config.max_iters;
    if (opts.tol == SolveOptions{}.tol) opts.tol = config.tol;
    return as_newton_solve(S.sys, opts);
}

}  // namespace mfgpi

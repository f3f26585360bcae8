/// @file mfg_timedep.cpp
/// @brief Time-dependent mean-field game solvers: QP assembly for the
/// density and joint value/cost sub-problems, the coupled-system builder,
/// and the GPPI / Schwarz-Newton entry points.

#include "mfgpi/mfg_timedep.hpp"

#include <cmath>
#include <memory>
#include <utility>

namespace mfgpi {

void TimeDepConfig::validate() const {
    if (interior_nodes.rows() < 1) throw ConfigError("need at least one interior node");
    if (initial_nodes.rows() < 1) throw ConfigError("need at least one initial-slice node");
    if (terminal_nodes.rows() < 1) throw ConfigError("need at least one terminal-slice node");
    if (T <= 0.0) throw ConfigError("horizon T must be positive");
    if (nu <= 0.0) throw ConfigError("viscosity nu must be positive");
    if ((int)interior_nodes.cols() != dim + 1 || (int)initial_nodes.cols() != dim + 1 ||
        (int)terminal_nodes.cols() != dim + 1)
        throw ConfigError("space-time nodes must have dim + 1 coordinates");
    for (int i = 0; i < interior_nodes.rows(); ++i) {
        const double t = interior_nodes(i, dim);
        if (!(t > 0.0 && t < T)) throw ConfigError("interior node times must lie in (0, T)");
    }
    for (int i = 0; i < initial_nodes.rows(); ++i)
        if (std::abs(initial_nodes(i, dim)) > 1e-12 * std::max(1.0, T))
            throw ConfigError("initial node times must equal 0");
    for (int i = 0; i < terminal_nodes.rows(); ++i)
        if (std::abs(terminal_nodes(i, dim) - T) > 1e-12 * std::max(1.0, T))
            throw ConfigError("terminal node times must equal T");
    if (!m0) throw ConfigError("initial density m0 is required");
    if (!U_T) throw ConfigError("terminal cost U_T is required");
    if (alpha_m <= 0.0 || alpha_u <= 0.0)
        throw ConfigError("Gram-norm weights alpha_m, alpha_u must be positive");
    if (kernel_m.point_dim() != dim + 1 || kernel_u.point_dim() != dim + 1)
        throw ConfigError("density/value kernels must be space-time kernels");
    if (kernel_q.scalar.point_dim() != dim + 1 || kernel_q.dims != dim)
        throw ConfigError("policy kernel dimension differs from problem dim");
    if (ham.family != HamiltonianFamily::QuadraticIsotropic)
        throw ConfigError("the time-dependent game uses the quadratic Hamiltonian family");
    if (!infer_potential && !V_true) throw ConfigError("forward mode requires a known cost V");
    if (infer_potential) {
        if (alpha_v <= 0.0) throw ConfigError("inverse mode requires alpha_v > 0");
        if (kernel_v.point_dim() != dim)
            throw ConfigError("spatial-cost kernel dimension differs from dim");
    }
    if (alpha_mo > 0.0 && obs_m.count() == 0)
        throw ConfigError("alpha_mo > 0 but no density observations were given");
    if (alpha_vo > 0.0 && obs_v.count() == 0)
        throw ConfigError("alpha_vo > 0 but no cost observations were given");
}

TdNodes td_grid_nodes(int nx, int dim, double x_origin, int nt, double T, int n_slice) {
    if (nx < 1 || dim < 1 || nt < 2 || n_slice < 1)
        throw ConfigError("grid needs nx >= 1, nt >= 2, n_slice >= 1");
    const Mat space = uniform_grid_nodes(nx, dim, x_origin);
    const Mat slice = uniform_grid_nodes(n_slice, dim, x_origin);
    const int nxd = (int)space.rows(), nsd = (int)slice.rows();
    TdNodes out;
    out.interior.resize((nt - 1) * nxd, dim + 1);
    for (int n = 1; n < nt; ++n)
        for (int f = 0; f < nxd; ++f) {
            out.interior.block((n - 1) * nxd + f, 0, 1, dim) = space.row(f);
            out.interior((n - 1) * nxd + f, dim) = T * n / nt;
        }
    out.initial.resize(nsd, dim + 1);
    out.terminal.resize(nsd, dim + 1);
    for (int f = 0; f < nsd; ++f) {
        out.initial.block(f, 0, 1, dim) = slice.row(f);
        out.initial(f, dim) = 0.0;
        out.terminal.block(f, 0, 1, dim) = slice.row(f);
        out.terminal(f, dim) = T;
    }
    return out;
}

namespace {

struct TdCtx {
    TimeDepConfig cfg;
    TdLayoutFp Lf;
    TdLayoutHjb Lh;
    Mat T_fp;  ///< theta_fp = T_fp * q  (policy values then divergences)
    Mat TQ;    ///< top rows of T_fp: interior policy values only
    Mat m_values_A;
    Vec m_values_b;
    std::vector<int> grad_col;  ///< free column of value-gradient latent (i*d + a)
};

struct QpPart {
    LatentQp qp;
    std::vector<LinearFunctional> functionals;
    Mat gram;  ///< regularized
};

struct HjbPart : QpPart {
    std::vector<LinearFunctional> functionals_v;
    Mat gram_v;
};

/// Space-time field reads in latent order: values on the interior nodes then
/// the slice nodes, time derivatives / gradients / Laplacians on interior.
std::vector<LinearFunctional> td_field_functionals(const Mat& interior, const Mat& slice,
                                                   int d) {
    const int Mi = (int)interior.rows(), Ms = (int)slice.rows();
    std::vector<LinearFunctional> fs;
    fs.reserve((std::size_t)Mi * (3 + d) + Ms);
    for (int i = 0; i < Mi; ++i) fs.push_back(LinearFunctional::dirac(interior.row(i)));
    for (int i = 0; i < Ms; ++i) fs.push_back(LinearFunctional::dirac(slice.row(i)));
    for (int i = 0; i < Mi; ++i)
        fs.push_back(LinearFunctional::of(DiffOp::dt(), interior.row(i)));
    for (int a = 0; a < d; ++a)
        for (int i = 0; i < Mi; ++i)
            fs.push_back(LinearFunctional::of(DiffOp::grad(a), interior.row(i)));
    for (int i = 0; i < Mi; ++i)
        fs.push_back(LinearFunctional::of(DiffOp::laplacian(), interior.row(i)));
    return fs;
}

/// For each interior node, the index of the first interior node sharing its
/// spatial location (itself when the location is new).
std::vector<int> spatial_representatives(const Mat& interior, int dim) {
    const int M = (int)interior.rows();
    std::vector<int> rep(M);
    for (int i = 0; i < M; ++i) {
        rep[i] = i;
        for (int r = 0; r < i; ++r) {
            if ((interior.block(i, 0, 1, dim) - interior.block(r, 0, 1, dim))
                    .cwiseAbs()
                    .maxCoeff() < 1e-12) {
                rep[i] = r;
                break;
            }
        }
    }
    return rep;
}

/// Density QP: transport rows solved for the time-derivative entries,
/// initial-slice rows pinned to m0.  theta packs the interior policy values
/// and divergences.
QpPart build_fp_part(const TimeDepConfig& cfg, const TdLayoutFp& Lf) {
    const int Mi = Lf.M_int, d = Lf.d;
    QpPart part;
    part.functionals = td_field_functionals(cfg.interior_nodes, cfg.initial_nodes, d);
    for (int j = 0; j < Lf.n_obs; ++j)
        part.functionals.push_back(LinearFunctional::dirac(cfg.obs_m.points.row(j)));
    part.gram = regularized(assemble_gram(cfg.kernel_m, part.functionals), cfg.nugget);

    part.qp.n_full = Lf.total();
    part.qp.n_theta = Mi * (d + 1);

    // Initial rows: m(x_i, 0) = m0(x_i), solved for the slice value entries.
    for (int i = 0; i < Lf.M_init; ++i) {
        ParamConstraint c;
        c.solved_index = Lf.value(Mi + i);
        c.rhs = ParamCoef(cfg.m0(cfg.initial_nodes.block(i, 0, 1, d).transpose()));
        part.qp.constraints.push_back(std::move(c));
    }

    // Transport rows, solved for the time-derivative entries:
    //   dtm_i = nu Lap(m)_i + grad(m)_i . Q_i + m_i div(Q)_i.
    for (int i = 0; i < Mi; ++i) {
        ParamConstraint c;
        c.solved_index = Lf.dt(i);
        c.terms.emplace_back(Lf.lap(i), ParamCoef(cfg.nu));
        for (int a = 0; a < d; ++a)
            c.terms.emplace_back(Lf.grad(a, i), ParamCoef::linear(i * d + a, 1.0));
        c.terms.emplace_back(Lf.value(i), ParamCoef::linear(Mi * d + i, 1.0));
        part.qp.constraints.push_back(std::move(c));
    }

    part.qp.blocks.push_back({0, Lf.total(), part.gram / cfg.alpha_m, Vec()});
    if (Lf.n_obs > 0)
        part.qp.blocks.push_back({Lf.obs(0), Lf.n_obs,
                                  Mat::Identity(Lf.n_obs, Lf.n_obs) / cfg.alpha_mo,
                                  cfg.obs_m.values});
    return part;
}

/// Joint value/cost QP: HJB rows solved for the time-derivative entries,
/// terminal rows pinned to U_T.  theta packs the interior policy values,
/// running costs, and coupling values.
HjbPart build_hjb_part(const TimeDepConfig& cfg, const TdLayoutHjb& Lh) {
    const int Mi = Lh.M_int, d = Lh.d;
    HjbPart part;
    part.functionals = td_field_functionals(cfg.interior_nodes, cfg.terminal_nodes, d);
    part.gram = regularized(assemble_gram(cfg.kernel_u, part.functionals), cfg.nugget);
    if (Lh.with_v) {
        for (int i = 0; i < Mi; ++i)
            part.functionals_v.push_back(
                LinearFunctional::dirac(cfg.interior_nodes.block(i, 0, 1, d).transpose()));
        for (int j = 0; j < Lh.n_obs_v; ++j)
            part.functionals_v.push_back(LinearFunctional::dirac(cfg.obs_v.points.row(j)));
        part.gram_v = regularized(assemble_gram(cfg.kernel_v, part.functionals_v), cfg.nugget);
    }

    part.qp.n_full = Lh.total();
    part.qp.n_theta = Mi * (d + 2);

    // Terminal rows: u(x_j, T) = U_T(x_j), solved for the slice value entries.
    for (int j = 0; j < Lh.M_term; ++j) {
        ParamConstraint c;
        c.solved_index = Lh.value(Mi + j);
        c.rhs = ParamCoef(cfg.U_T(cfg.terminal_nodes.block(j, 0, 1, d).transpose()));
        part.qp.constraints.push_back(std::move(c));
    }

    // HJB rows, solved for the time-derivative entries:
    //   dtu_j = -nu Lap(u)_j + Q_j . grad(u)_j - L(Q_j) - V(x_j) - F(m_j);
    // in forward mode V enters the constant part, in inverse mode it is the
    // latent cost value at the node.
    for (int j = 0; j < Mi; ++j) {
        ParamConstraint c;
        c.solved_index = Lh.dt(j);
        c.terms.emplace_back(Lh.lap(j), ParamCoef(-cfg.nu));
        for (int a = 0; a < d; ++a)
            c.terms.emplace_back(Lh.grad(a, j), ParamCoef::linear(j * d + a, 1.0));
        if (Lh.with_v) c.terms.emplace_back(Lh.v_value(j), ParamCoef(-1.0));
        ParamCoef rhs;
        rhs.c0 = Lh.with_v
                     ? 0.0
                     : -cfg.V_true(cfg.interior_nodes.block(j, 0, 1, d).transpose());
        rhs.dtheta.emplace_back(Mi * d + j, -1.0);       // running cost L
        rhs.dtheta.emplace_back(Mi * d + Mi + j, -1.0);  // coupling F
        c.rhs = std::move(rhs);
        part.qp.constraints.push_back(std::move(c));
    }

    // The spatial-cost kernel reads only x, so cost entries at nodes sharing
    // a spatial location are the same functional; tie them exactly rather
    // than leaning on the (nugget-regularized, near-singular) Gram.
    if (Lh.with_v) {
        const std::vector<int> rep = spatial_representatives(cfg.interior_nodes, d);
        for (int i = 0; i < Mi; ++i) {
            if (rep[i] == i) continue;
            ParamConstraint c;
            c.solved_index = Lh.v_value(i);
            c.terms.emplace_back(Lh.v_value(rep[i]), ParamCoef(1.0));
            part.qp.constraints.push_back(std::move(c));
        }
    }

    part.qp.blocks.push_back({0, Lh.z_total(), part.gram / cfg.alpha_u, Vec()});
    if (Lh.with_v) {
        part.qp.blocks.push_back(
            {Lh.v_value(0), Mi + Lh.n_obs_v, part.gram_v / cfg.alpha_v, Vec()});
        if (Lh.n_obs_v > 0)
            part.qp.blocks.push_back({Lh.v_obs(0), Lh.n_obs_v,
                                      Mat::Identity(Lh.n_obs_v, Lh.n_obs_v) / cfg.alpha_vo,
                                      cfg.obs_v.values});
    }
    return part;
}

/// theta of the value QP from interior policy values (stacked node-major
/// with axis fastest) and interior density values.
Vec td_hjb_theta(const TdCtx& ctx, const Vec& q_flat, const Vec& m_interior) {
    const int Mi = ctx.Lh.M_int, d = ctx.Lh.d;
    Vec theta(Mi * (d + 2));
    theta.head(Mi * d) = q_flat;
    for (int i = 0; i < Mi; ++i) {
        const Vec qi = q_flat.segment(i * d, d);
        theta[Mi * d + i] = ctx.cfg.ham.running_cost(qi);
        theta[Mi * d + Mi + i] = ctx.cfg.F(m_interior[i]);
    }
    return theta;
}

}  // namespace

TimeDepSystem build_timedep_system(const TimeDepConfig& config) {
    config.validate();
    const int Mi = config.interior_count(), d = config.dim;

    auto ctx = std::make_shared<TdCtx>();
    ctx->cfg = config;
    ctx->Lf = {Mi, (int)config.initial_nodes.rows(), d,
               config.alpha_mo > 0.0 ? config.obs_m.count() : 0};
    ctx->Lh = {Mi, (int)config.terminal_nodes.rows(), d,
               config.infer_potential && config.alpha_vo > 0.0 ? config.obs_v.count() : 0,
               config.infer_potential};

    TimeDepSystem out;
    out.fp_layout = ctx->Lf;
    out.hjb_layout = ctx->Lh;

    QpPart fp = build_fp_part(config, ctx->Lf);
    HjbPart hjb = build_hjb_part(config, ctx->Lh);
    out.functionals_m = fp.functionals;
    out.functionals_u = hjb.functionals;
    out.functionals_v = hjb.functionals_v;
    out.gram_m = fp.gram;
    out.gram_u = hjb.gram;
    out.gram_v = hjb.gram_v;

    // theta_fp = T_fp q: interior policy values, then the divergences.
    const PolicyNodeOps ops = policy_node_ops(config.kernel_q, config.interior_nodes,
                                              config.interior_nodes, config.nugget);
    ctx->T_fp = Mat::Zero(Mi * (d + 1), Mi * d);
    for (int a = 0; a < d; ++a)
        for (int i = 0; i < Mi; ++i)
            for (int j = 0; j < Mi; ++j) {
                ctx->T_fp(i * d + a, j * d + a) = ops.S(i, j);
                ctx->T_fp(Mi * d + i, j * d + a) += ops.D[a](i, j);
            }
    ctx->TQ = ctx->T_fp.topRows(Mi * d);

    CoupledSystem& sys = out.sys;
    sys.fp = std::move(fp.qp);
    sys.hjb = std::move(hjb.qp);
    sys.n_q = Mi * d;

    // Constant structural maps read off parameter-free assemblies: the value
    // rows of both eliminations do not depend on theta.
    {
        const auto a0 = sys.fp.assemble(Vec::Zero(sys.fp.n_theta));
        sys.n_m = (int)a0.elim.free_indices.size();
        const int M = ctx->Lf.M();
        ctx->m_values_A = a0.elim.A.topRows(M);
        ctx->m_values_b = a0.elim.b.head(M);
        sys.m_values_A = ctx->m_values_A;
        sys.m_values_b = ctx->m_values_b;
        // Initial density identically one: value and observation-read
        // latents start at 1, derivative reads at 0.
        sys.m_init = Vec::Zero(sys.n_m);
        for (int c = 0; c < sys.n_m; ++c) {
            const int idx = a0.elim.free_indices[c];
            if (idx < M || idx >= ctx->Lf.obs(0)) sys.m_init[c] = 1.0;
        }
    }
    {
        const auto a0 = sys.hjb.assemble(Vec::Zero(sys.hjb.n_theta));
        sys.n_u = (int)a0.elim.free_indices.size();
        const int M = ctx->Lh.M();
        sys.u_values_A = a0.elim.A.topRows(M);
        sys.u_values_b = a0.elim.b.head(M);
        ctx->grad_col.resize((std::size_t)Mi * d);
        for (int i = 0; i < Mi; ++i)
            for (int a = 0; a < d; ++a)
                ctx->grad_col[(std::size_t)i * d + a] = a0.elim.column_of[ctx->Lh.grad(a, i)];
        sys.u_init = Vec::Zero(sys.n_u);
    }
    sys.q_init = Vec::Zero(sys.n_q);
    sys.cell_volume = config.T / config.fp_node_count();

    sys.dtheta_fp_dq = ctx->T_fp;
    sys.theta_fp = [ctx](const Vec& q) { return Vec(ctx->T_fp * q); };

    sys.theta_hjb = [ctx](const Vec& m, const Vec& q) {
        const Vec m_nodes = ctx->m_values_A * m + ctx->m_values_b;
        return td_hjb_theta(*ctx, Vec(ctx->TQ * q), Vec(m_nodes.head(ctx->Lh.M_int)));
    };
    sys.dtheta_hjb_dm = [ctx](const Vec& m) {
        const int Mi_ = ctx->Lh.M_int, d_ = ctx->Lh.d;
        const Vec m_nodes = ctx->m_values_A * m + ctx->m_values_b;
        Mat Z = Mat::Zero(Mi_ * (d_ + 2), m.size());
        for (int i = 0; i < Mi_; ++i)
            Z.row(Mi_ * d_ + Mi_ + i) = ctx->cfg.F.deriv(m_nodes[i]) * ctx->m_values_A.row(i);
        return Z;
    };
    sys.dtheta_hjb_dq = [ctx](const Vec& q) {
        const int Mi_ = ctx->Lh.M_int, d_ = ctx->Lh.d;
        const Vec q_flat = ctx->TQ * q;
        Mat Z = Mat::Zero(Mi_ * (d_ + 2), q.size());
        Z.topRows(Mi_ * d_) = ctx->TQ;
        for (int i = 0; i < Mi_; ++i) {
            const Vec gi = ctx->cfg.ham.running_cost_grad(Vec(q_flat.segment(i * d_, d_)));
            for (int b = 0; b < d_; ++b) Z.row(Mi_ * d_ + i) += gi[b] * ctx->TQ.row(i * d_ + b);
        }
        return Z;
    };

    sys.improve = [ctx](const Vec& u) {
        const int Mi_ = ctx->Lh.M_int, d_ = ctx->Lh.d;
        Mat P(Mi_, d_);
        for (int i = 0; i < Mi_; ++i)
            for (int a = 0; a < d_; ++a) P(i, a) = u[ctx->grad_col[(std::size_t)i * d_ + a]];
        const Mat Q = improve_pointwise(P, ctx->cfg.ham);
        Vec q(Mi_ * d_);
        for (int i = 0; i < Mi_; ++i)
            for (int a = 0; a < d_; ++a) q[i * d_ + a] = Q(i, a);
        return q;
    };
    sys.dimprove_du = [ctx](const Vec& u) {
        const int Mi_ = ctx->Lh.M_int, d_ = ctx->Lh.d;
        Mat Z = Mat::Zero(Mi_ * d_, u.size());
        for (int i = 0; i < Mi_; ++i) {
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

TdFpSolution solve_fp_td(const TimeDepConfig& config, const PolicyField& policy) {
    config.validate();
    const int Mi = config.interior_count(), d = config.dim;
    TdLayoutFp Lf{Mi, (int)config.initial_nodes.rows(), d,
                  config.alpha_mo > 0.0 ? config.obs_m.count() : 0};
    QpPart part = build_fp_part(config, Lf);

    Vec theta(Mi * (d + 1));
    for (int i = 0; i < Mi; ++i) {
        const Vec qi = eval_policy(policy, config.interior_nodes.row(i));
        for (int a = 0; a < d; ++a) theta[i * d + a] = qi[a];
        theta[Mi * d + i] = div_policy(policy, config.interior_nodes.row(i));
    }

    const auto a = part.qp.assemble(theta);
    TdFpSolution sol;
    sol.rho = a.expand(a.sol.w);
    sol.m_model = {config.kernel_m, part.functionals, SymSolver(part.gram).solve(sol.rho),
                   config.nugget};
    return sol;
}

TdHjbSolution solve_hjb_td(const TimeDepConfig& config, const PolicyField& policy,
                           const GPModel& m_model) {
    config.validate();
    const int Mi = config.interior_count(), d = config.dim;
    TdLayoutHjb Lh{Mi, (int)config.terminal_nodes.rows(), d,
                   config.infer_potential && config.alpha_vo > 0.0 ? config.obs_v.count() : 0,
                   config.infer_potential};
    HjbPart part = build_hjb_part(config, Lh);

    Vec theta(Mi * (d + 2));
    for (int i = 0; i < Mi; ++i) {
        const Vec qi = eval_policy(policy, config.interior_nodes.row(i));
        for (int a = 0; a < d; ++a) theta[i * d + a] = qi[a];
        theta[Mi * d + i] = config.ham.running_cost(qi);
        theta[Mi * d + Mi + i] = config.F(m_model.eval(config.interior_nodes.row(i)));
    }

    const auto a = part.qp.assemble(theta);
    const Vec full = a.expand(a.sol.w);
    TdHjbSolution sol;
    sol.z = full.head(Lh.z_total());
    sol.u_model = {config.kernel_u, part.functionals, SymSolver(part.gram).solve(sol.z),
                   config.nugget};
    if (Lh.with_v) {
        sol.v = full.segment(Lh.v_value(0), Mi + Lh.n_obs_v);
        sol.v_model = {config.kernel_v, part.functionals_v, SymSolver(part.gram_v).solve(sol.v),
                       config.nugget};
    }
    return sol;
}

CoupledRunResult gppi_td(const TimeDepConfig& config) {
    const TimeDepSystem S = build_timedep_system(config);
    SolveOptions opts;
    opts.max_iters = config.max_iters;
    opts.tol = config.tol;
    opts.relaxation = config.relaxation;
    return gppi_solve(S.sys, opts);
}

CoupledRunResult as_td(const TimeDepConfig& config, const SolveOptions& opts_in) {
    const TimeDepSystem S = build_timedep_system(config);
    SolveOptions opts = opts_in;
    if (opts.max_iters == SolveOptions{}.max_iters) opts.max_iters = config.max_iters;
    if (opts.tol == SolveOptions{}.tol) opts.tol = config.tol;
    return as_newton_solve(S.sys, opts);
}

}  // namespace mfgpi

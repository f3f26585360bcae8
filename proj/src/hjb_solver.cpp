/// @file hjb_solver.cpp
/// @brief Time-dependent HJB solvers: joint value/potential QP assembly,
/// the coupled-system builder, and the GPPI / Schwarz-Newton entry points.

#include "mfgpi/hjb_solver.hpp"

#include <cmath>
#include <memory>
#include <utility>

namespace mfgpi {

void HjbConfig::validate() const {
    if (interior_nodes.rows() < 1) throw ConfigError("need at least one interior node");
    if (terminal_nodes.rows() < 1) throw ConfigError("need at least one terminal node");
    if (T <= 0.0) throw ConfigError("horizon T must be positive");
    if ((int)interior_nodes.cols() != dim + 1 || (int)terminal_nodes.cols() != dim + 1)
        throw ConfigError("space-time nodes must have dim + 1 coordinates");
    for (int i = 0; i < interior_nodes.rows(); ++i) {
        const double t = interior_nodes(i, dim);
        if (!(t > 0.0 && t < T)) throw ConfigError("interior node times must lie in (0, T)");
    }
    for (int i = 0; i < terminal_nodes.rows(); ++i)
        if (std::abs(terminal_nodes(i, dim) - T) > 1e-12 * std::max(1.0, T))
            throw ConfigError("terminal node times must equal T");
    if (!sigma_fn && sigma <= 0.0) throw ConfigError("diffusion sigma must be positive");
    if (!U_T) throw ConfigError("terminal cost U_T is required");
    if (alpha_u <= 0.0) throw ConfigError("Gram-norm weight alpha_u must be positive");
    if (kernel_u.point_dim() != dim + 1)
        throw ConfigError("value kernel must be a space-time kernel over dim + 1 coordinates");
    if (kernel_q.scalar.point_dim() != dim + 1 || kernel_q.dims != dim)
        throw ConfigError("policy kernel dimension differs from problem dim");
    if (!infer_potential && !V_true) throw ConfigError("forward mode requires a known cost V");
    if (infer_potential) {
        if (alpha_v <= 0.0) throw ConfigError("inverse mode requires alpha_v > 0");
        if (kernel_v.point_dim() != dim)
            throw ConfigError("spatial-cost kernel dimension differs from dim");
    }
    if (alpha_uo > 0.0 && obs_u.count() == 0)
        throw ConfigError("alpha_uo > 0 but no value observations were given");
    if (alpha_vo > 0.0 && obs_v.count() == 0)
        throw ConfigError("alpha_vo > 0 but no cost observations were given");
    if (ham.family == HamiltonianFamily::LQRPowerCost && dim != 1)
        throw ConfigError("the LQR control family is one-dimensional");
}

SpaceTimeNodes hjb_grid_nodes(int nx, int dim, double x_origin, int nt, double T) {
    if (nx < 1 || dim < 1 || nt < 2) throw ConfigError("grid needs nx >= 1 and nt >= 2");
    const Mat space = uniform_grid_nodes(nx, dim, x_origin);
    const int nxd = (int)space.rows();
    SpaceTimeNodes out;
    out.interior.resize((nt - 1) * nxd, dim + 1);
    out.terminal.resize(nxd, dim + 1);
    for (int n = 1; n < nt; ++n)
        for (int f = 0; f < nxd; ++f) {
            out.interior.block((n - 1) * nxd + f, 0, 1, dim) = space.row(f);
            out.interior((n - 1) * nxd + f, dim) = T * n / nt;
        }
    for (int f = 0; f < nxd; ++f) {
        out.terminal.block(f, 0, 1, dim) = space.row(f);
        out.terminal(f, dim) = T;
    }
    return out;
}

namespace {

/// Drift coefficients of f(x, t, q) = fA * x + fB * q: the LQR family
/// carries its own (A, B); the quadratic family has f = q.
double drift_A(const HamiltonianSpec& ham) {
    return ham.family == HamiltonianFamily::LQRPowerCost ? ham.A : 0.0;
}
double drift_B(const HamiltonianSpec& ham) {
    return ham.family == HamiltonianFamily::LQRPowerCost ? ham.B : 1.0;
}

/// Control cost G(q) in the running cost V(x) + G(q).
double policy_cost(const HamiltonianSpec& ham, const Vec& q) {
    return ham.family == HamiltonianFamily::LQRPowerCost ? ham.control_cost(q[0])
                                                         : ham.running_cost(q);
}
Vec policy_cost_grad(const HamiltonianSpec& ham, const Vec& q) {
    if (ham.family == HamiltonianFamily::LQRPowerCost)
        return Vec::Constant(1, ham.control_cost_grad(q[0]));
    return ham.running_cost_grad(q);
}

/// Pointwise argmax of -p.f(x,t,q) - G(q).  The LQR branch of
/// improve_pointwise already maximizes -p B q - G(q); the quadratic branch
/// maximizes q.p - |q|^2/2, so the drift f = q flips the gradient sign.
Mat improve_hjb(const Mat& grads, const HamiltonianSpec& ham) {
    if (ham.family == HamiltonianFamily::LQRPowerCost) return improve_pointwise(grads, ham);
    return improve_pointwise(Mat(-grads), ham);
}
Mat improve_hjb_jacobian(const Vec& p, const HamiltonianSpec& ham) {
    if (ham.family == HamiltonianFamily::LQRPowerCost) return improve_jacobian(p, ham);
    return -improve_jacobian(Vec(-p), ham);
}

struct HjbCtx {
    HjbConfig cfg;
    HjbLayout L;
    Mat TQ;  ///< policy values at the interior nodes from stacked controls
    std::vector<int> grad_col;
};

struct HjbPart {
    LatentQp qp;
    std::vector<LinearFunctional> functionals_u, functionals_v;
    Mat gram_u, gram_v;
};

/// For each interior node, the index of the first interior node sharing its
/// spatial location (itself when the location is new).
std::vector<int> spatial_representatives(const Mat& interior, int dim) {
    const int M = (int)interior.rows();
    std::vector<int> rep(M);
    for (int i = 0; i < M; ++i) {
        rep[i] = i;
        for (int r = 0; r < i; ++r) {
            if ((interior.block(i, 0, 1, dim) - interior.block(r, 0, 1, dim)).cwiseAbs().maxCoeff() <
                1e-12) {
                rep[i] = r;
                break;
            }
        }
    }
    return rep;
}

HjbPart build_hjb_part(const HjbConfig& cfg, const HjbLayout& L) {
    const int Mi = L.M_int, Mt = L.M_term, d = L.d;
    HjbPart part;

    // Value functionals in latent order: values (interior then terminal),
    // time derivatives, gradients (axis-major), Laplacians, observation reads.
    auto& fu = part.functionals_u;
    for (int i = 0; i < Mi; ++i) fu.push_back(LinearFunctional::dirac(cfg.interior_nodes.row(i)));
    for (int i = 0; i < Mt; ++i) fu.push_back(LinearFunctional::dirac(cfg.terminal_nodes.row(i)));
    for (int i = 0; i < Mi; ++i)
        fu.push_back(LinearFunctional::of(DiffOp::dt(), cfg.interior_nodes.row(i)));
    for (int a = 0; a < d; ++a)
        for (int i = 0; i < Mi; ++i)
            fu.push_back(LinearFunctional::of(DiffOp::grad(a), cfg.interior_nodes.row(i)));
    for (int i = 0; i < Mi; ++i)
        fu.push_back(LinearFunctional::of(DiffOp::laplacian(), cfg.interior_nodes.row(i)));
    for (int j = 0; j < L.n_obs_u; ++j)
        fu.push_back(LinearFunctional::dirac(cfg.obs_u.points.row(j)));
    part.gram_u = regularized(assemble_gram(cfg.kernel_u, fu), cfg.nugget);

    if (L.with_v) {
        auto& fv = part.functionals_v;
        for (int i = 0; i < Mi; ++i)
            fv.push_back(LinearFunctional::dirac(cfg.interior_nodes.block(i, 0, 1, d).transpose()));
        for (int j = 0; j < L.n_obs_v; ++j)
            fv.push_back(LinearFunctional::dirac(cfg.obs_v.points.row(j)));
        part.gram_v = regularized(assemble_gram(cfg.kernel_v, fv), cfg.nugget);
    }

    part.qp.n_full = L.total();
    part.qp.n_theta = Mi * (d + 1);
    const double fA = drift_A(cfg.ham), fB = drift_B(cfg.ham);

    // Terminal rows: U(x_i, T) = U_T(x_i), solved for the value entries.
    for (int i = 0; i < Mt; ++i) {
        ParamConstraint c;
        c.solved_index = L.value(Mi + i);
        c.rhs = ParamCoef(cfg.U_T(cfg.terminal_nodes.block(i, 0, 1, d).transpose()));
        part.qp.constraints.push_back(std::move(c));
    }

    // HJB collocation rows, solved for the time-derivative entries:
    //   dtU_i = -(sigma_i^2/2) LapU_i - gradU_i . (fA x_i + fB q_i)
    //           - V(x_i) - G(q_i).
    for (int i = 0; i < Mi; ++i) {
        const Vec xt = cfg.interior_nodes.row(i);
        const double half_s2 = 0.5 * cfg.sigma_at(xt) * cfg.sigma_at(xt);
        ParamConstraint c;
        c.solved_index = L.dt(i);
        c.terms.emplace_back(L.lap(i), ParamCoef(-half_s2));
        for (int a = 0; a < d; ++a)
            c.terms.emplace_back(L.grad(a, i), ParamCoef::linear(i * d + a, -fB, -fA * xt[a]));
        if (L.with_v) c.terms.emplace_back(L.v_value(i), ParamCoef(-1.0));
        ParamCoef rhs;
        rhs.c0 = L.with_v ? 0.0 : -cfg.V_true(xt.head(d));
        rhs.dtheta.emplace_back(Mi * d + i, -1.0);  // control cost G
        c.rhs = std::move(rhs);
        part.qp.constraints.push_back(std::move(c));
    }

    // The spatial-cost kernel reads only x, so potential entries at nodes
    // sharing a spatial location are the same functional; tie them exactly
    // rather than leaning on the (nugget-regularized, near-singular) Gram.
    if (L.with_v) {
        const std::vector<int> rep = spatial_representatives(cfg.interior_nodes, d);
        for (int i = 0; i < Mi; ++i) {
            if (rep[i] == i) continue;
            ParamConstraint c;
            c.solved_index = L.v_value(i);
            c.terms.emplace_back(L.v_value(rep[i]), ParamCoef(1.0));
            part.qp.constraints.push_back(std::move(c));
        }
    }

    part.qp.blocks.push_back({0, L.z_total(), part.gram_u / cfg.alpha_u, Vec()});
    if (L.n_obs_u > 0)
        part.qp.blocks.push_back({L.obs_u(0), L.n_obs_u,
                                  Mat::Identity(L.n_obs_u, L.n_obs_u) / cfg.alpha_uo,
                                  cfg.obs_u.values});
    if (L.with_v) {
        part.qp.blocks.push_back(
            {L.v_value(0), Mi + L.n_obs_v, part.gram_v / cfg.alpha_v, Vec()});
        if (L.n_obs_v > 0)
            part.qp.blocks.push_back({L.v_obs(0), L.n_obs_v,
                                      Mat::Identity(L.n_obs_v, L.n_obs_v) / cfg.alpha_vo,
                                      cfg.obs_v.values});
    }
    return part;
}

/// theta = [policy values at interior nodes | control costs].
Vec hjb_theta_from_flat(const HjbCtx& ctx, const Vec& q_flat) {
    const int Mi = ctx.L.M_int, d = ctx.L.d;
    Vec theta(Mi * (d + 1));
    theta.head(Mi * d) = q_flat;
    for (int i = 0; i < Mi; ++i)
        theta[Mi * d + i] = policy_cost(ctx.cfg.ham, Vec(q_flat.segment(i * d, d)));
    return theta;
}

}  // namespace

HjbSystem build_hjb_system(const HjbConfig& config) {
    config.validate();
    const int Mi = config.interior_count(), d = config.dim;

    auto ctx = std::make_shared<HjbCtx>();
    ctx->cfg = config;
    ctx->L = {Mi,
              (int)config.terminal_nodes.rows(),
              d,
              config.alpha_uo > 0.0 ? config.obs_u.count() : 0,
              config.infer_potential && config.alpha_vo > 0.0 ? config.obs_v.count() : 0,
              config.infer_potential};

    HjbSystem out;
    out.layout = ctx->L;
    HjbPart part = build_hjb_part(config, ctx->L);
    out.functionals_u = part.functionals_u;
    out.functionals_v = part.functionals_v;
    out.gram_u = part.gram_u;
    out.gram_v = part.gram_v;

    const PolicyNodeOps ops =
        policy_node_ops(config.kernel_q, config.interior_nodes, config.interior_nodes,
                        config.nugget);
    ctx->TQ = Mat::Zero(Mi * d, Mi * d);
    for (int a = 0; a < d; ++a)
        for (int i = 0; i < Mi; ++i)
            for (int j = 0; j < Mi; ++j) ctx->TQ(i * d + a, j * d + a) = ops.S(i, j);

    CoupledSystem& sys = out.sys;
    sys.hjb = std::move(part.qp);
    sys.n_m = 0;
    sys.n_q = Mi * d;

    {
        const auto a0 = sys.hjb.assemble(Vec::Zero(sys.hjb.n_theta));
        sys.n_u = (int)a0.elim.free_indices.size();
        const int M = ctx->L.M();
        sys.u_values_A = a0.elim.A.topRows(M);
        sys.u_values_b = a0.elim.b.head(M);
        ctx->grad_col.resize((std::size_t)Mi * d);
        for (int i = 0; i < Mi; ++i)
            for (int a = 0; a < d; ++a)
                ctx->grad_col[(std::size_t)i * d + a] = a0.elim.column_of[ctx->L.grad(a, i)];
        sys.u_init = Vec::Zero(sys.n_u);
    }
    sys.m_init = Vec();
    sys.q_init = Vec::Zero(sys.n_q);
    sys.cell_volume = config.T / config.node_count();

    sys.theta_hjb = [ctx](const Vec&, const Vec& q) {
        return hjb_theta_from_flat(*ctx, Vec(ctx->TQ * q));
    };
    sys.dtheta_hjb_dm = [ctx](const Vec& m) {
        return Mat::Zero(ctx->cfg.interior_count() * (ctx->L.d + 1), m.size());
    };
    sys.dtheta_hjb_dq = [ctx](const Vec& q) {
        const int Mi_ = ctx->L.M_int, d_ = ctx->L.d;
        const Vec q_flat = ctx->TQ * q;
        Mat Z = Mat::Zero(Mi_ * (d_ + 1), q.size());
        Z.topRows(Mi_ * d_) = ctx->TQ;
        for (int i = 0; i < Mi_; ++i) {
            const Vec gi = policy_cost_grad(ctx->cfg.ham, Vec(q_flat.segment(i * d_, d_)));
            for (int b = 0; b < d_; ++b) Z.row(Mi_ * d_ + i) += gi[b] * ctx->TQ.row(i * d_ + b);
        }
        return Z;
    };

    sys.improve = [ctx](const Vec& u) {
        const int Mi_ = ctx->L.M_int, d_ = ctx->L.d;
        Mat P(Mi_, d_);
        for (int i = 0; i < Mi_; ++i)
            for (int a = 0; a < d_; ++a) P(i, a) = u[ctx->grad_col[(std::size_t)i * d_ + a]];
        const Mat Q = improve_hjb(P, ctx->cfg.ham);
        Vec q(Mi_ * d_);
        for (int i = 0; i < Mi_; ++i)
            for (int a = 0; a < d_; ++a) q[i * d_ + a] = Q(i, a);
        return q;
    };
    sys.dimprove_du = [ctx](const Vec& u) {
        const int Mi_ = ctx->L.M_int, d_ = ctx->L.d;
        Mat Z = Mat::Zero(Mi_ * d_, u.size());
        for (int i = 0; i < Mi_; ++i) {
            Vec p(d_);
            for (int a = 0; a < d_; ++a) p[a] = u[ctx->grad_col[(std::size_t)i * d_ + a]];
            const Mat J = improve_hjb_jacobian(p, ctx->cfg.ham);
            for (int a = 0; a < d_; ++a)
                for (int b = 0; b < d_; ++b)
                    Z(i * d_ + a, ctx->grad_col[(std::size_t)i * d_ + b]) = J(a, b);
        }
        return Z;
    };

    return out;
}

HjbState evaluate_policy_hjb(const HjbConfig& config, const Mat& qvals) {
    config.validate();
    const int Mi = config.interior_count(), d = config.dim;
    if ((int)qvals.rows() != Mi || (int)qvals.cols() != d)
        throw DimensionError("qvals must hold one control row per interior node", (int)qvals.rows());

    HjbLayout L{Mi,
                (int)config.terminal_nodes.rows(),
                d,
                config.alpha_uo > 0.0 ? config.obs_u.count() : 0,
                config.infer_potential && config.alpha_vo > 0.0 ? config.obs_v.count() : 0,
                config.infer_potential};
    HjbPart part = build_hjb_part(config, L);

    // The constraints read the policy through the GP field fitted to the
    // node controls, exactly as the coupled driver's linear map does.
    const PolicyField field =
        fit_policy_field(config.interior_nodes, qvals, config.kernel_q, config.nugget);
    Vec q_flat(Mi * d);
    for (int i = 0; i < Mi; ++i) {
        const Vec qi = eval_policy(field, config.interior_nodes.row(i));
        for (int a = 0; a < d; ++a) q_flat[i * d + a] = qi[a];
    }

    HjbCtx ctx{config, L, Mat(), {}};
    const auto a = part.qp.assemble(hjb_theta_from_flat(ctx, q_flat));
    const Vec full = a.expand(a.sol.w);

    HjbState st;
    st.z = full.head(L.z_total());
    st.qvals = qvals;
    st.u_model = {config.kernel_u, part.functionals_u, SymSolver(part.gram_u).solve(st.z),
                  config.nugget};
    if (L.with_v) {
        st.v = full.segment(L.v_value(0), Mi + L.n_obs_v);
        st.v_model = {config.kernel_v, part.functionals_v, SymSolver(part.gram_v).solve(st.v),
                      config.nugget};
    }
    return st;
}

CoupledRunResult gppi_hjb(const HjbConfig& config) {
    const HjbSystem S = build_hjb_system(config);
    SolveOptions opts;
    opts.max_iters = config.max_iters;
    opts.tol = config.tol;
    opts.relaxation = config.relaxation;
    return gppi_solve(S.sys, opts);
}

CoupledRunResult as_hjb(const HjbConfig& config, const SolveOptions& opts_in) {
    const HjbSystem S = build_hjb_system(config);
    SolveOptions opts = opts_in;
    if (opts.max_iters == SolveOptions{}.max_iters) opts.max_iters = config.max_iters;
    if (opts.tol == SolveOptions{}.tol) opts.tol = config.tol;
    return as_newton_solve(S.sys, opts);
}

}  // namespace mfgpi

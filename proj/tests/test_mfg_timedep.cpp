/// @file test_mfg_timedep.cpp
/// @brief Time-dependent MFG solver tests: grid construction, trivial fixed
/// points, slice-constraint exactness, shared interior nodes between the two
/// blocks, residuals of the standalone solves, and inverse-mode pinning.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mfgpi/mfg_timedep.hpp"
#include "mfgpi/reference_oracles.hpp"

using namespace mfgpi;

namespace {

TimeDepConfig base_config(int nx, int nt, double s1 = 1.0, double s2 = 1.0) {
    TimeDepConfig cfg;
    cfg.dim = 1;
    cfg.x_origin = -0.5;
    cfg.T = 1.0;
    cfg.nu = 1.0 / 3.0;
    cfg.ham = HamiltonianSpec::quadratic();
    cfg.F = {1.0, 4.0};
    cfg.V_true = [](const Vec& x) {
        return 0.5 * (std::sin(2 * M_PI * x[0]) + 3 * std::cos(2 * M_PI * x[0]));
    };
    cfg.m0 = [](const Vec&) { return 1.0; };
    cfg.U_T = [](const Vec&) { return 0.0; };
    const TdNodes g = td_grid_nodes(nx, 1, -0.5, nt, 1.0, nx);
    cfg.interior_nodes = g.interior;
    cfg.initial_nodes = g.initial;
    cfg.terminal_nodes = g.terminal;
    cfg.kernel_m = KernelSpec::periodic_time(s1, s2, 1);
    cfg.kernel_u = KernelSpec::periodic_time(s1, s2, 1);
    cfg.kernel_q = {KernelSpec::periodic_time(s1, s2, 1), 1};
    cfg.kernel_v = KernelSpec::periodic(1.0);
    return cfg;
}

PolicyField zero_policy(const TimeDepConfig& cfg) {
    return fit_policy_field(cfg.interior_nodes, Mat::Zero(cfg.interior_count(), cfg.dim),
                            cfg.kernel_q, cfg.nugget);
}

}  // namespace

TEST_CASE("grid nodes: interior levels in (0,T), slices at 0 and T") {
    const TdNodes g = td_grid_nodes(5, 1, -0.5, 4, 2.0, 3);
    REQUIRE(g.interior.rows() == 15);
    REQUIRE(g.initial.rows() == 3);
    REQUIRE(g.terminal.rows() == 3);
    for (int i = 0; i < 15; ++i) {
        CHECK(g.interior(i, 1) > 0.0);
        CHECK(g.interior(i, 1) < 2.0);
    }
    for (int i = 0; i < 3; ++i) {
        CHECK(g.initial(i, 1) == 0.0);
        CHECK(g.terminal(i, 1) == 2.0);
        CHECK(g.initial(i, 0) == doctest::Approx(-0.5 + i / 3.0).epsilon(1e-14));
    }
}

TEST_CASE("density solve under the zero policy keeps the uniform density") {
    // Long lengthscales make constant fields cheap in the RKHS, so the
    // minimum-norm solution does not sag away from the initial slice.
    const TimeDepConfig cfg = base_config(8, 6, 5.0, 20.0);
    const TdFpSolution sol = solve_fp_td(cfg, zero_policy(cfg));
    const TdLayoutFp L{cfg.interior_count(), (int)cfg.initial_nodes.rows(), 1, 0};
    for (int i = 0; i < L.M(); ++i) CHECK(std::abs(sol.rho[L.value(i)] - 1.0) < 1e-6);
    // Derivative reads sit on the residual sag floor, slightly above the
    // value reads.
    for (int i = 0; i < L.M_int; ++i) {
        CHECK(std::abs(sol.rho[L.dt(i)]) < 5e-6);
        CHECK(std::abs(sol.rho[L.grad(0, i)]) < 5e-6);
    }
    // Off-node reads through the representer stay at one as well.
    for (double x = -0.47; x < 0.5; x += 0.21)
        for (double t = 0.1; t < 1.0; t += 0.35) {
            Vec z(2);
            z << x, t;
            CHECK(sol.m_model.eval(z) == doctest::Approx(1.0).epsilon(1e-4));
        }
}

TEST_CASE("value solve with zero data returns the zero field") {
    TimeDepConfig cfg = base_config(8, 6, 5.0, 20.0);
    cfg.V_true = [](const Vec&) { return 0.0; };
    cfg.F = {0.0, 1.0};
    const TdFpSolution fp = solve_fp_td(cfg, zero_policy(cfg));
    const TdHjbSolution hjb = solve_hjb_td(cfg, zero_policy(cfg), fp.m_model);
    CHECK(hjb.z.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("initial and terminal slice rows are exact at every iteration") {
    TimeDepConfig cfg = base_config(7, 5);
    cfg.m0 = [](const Vec& x) { return 1.0 + 0.2 * std::cos(2 * M_PI * x[0]); };
    cfg.U_T = [](const Vec& x) { return 0.1 * std::sin(2 * M_PI * x[0]); };
    const TimeDepSystem S = build_timedep_system(cfg);

    Vec m = S.sys.m_init, u = S.sys.u_init, q = S.sys.q_init;
    for (int k = 0; k < 4; ++k) {
        const Vec th1 = S.sys.theta_fp(q);
        const auto a1 = S.sys.fp.assemble(th1);
        m = a1.sol.w;
        CHECK(S.sys.fp.constraint_violation(a1.expand(m), th1) < 1e-8);
        const Vec rho = a1.expand(m);
        for (int i = 0; i < S.fp_layout.M_init; ++i) {
            const double want = cfg.m0(cfg.initial_nodes.block(i, 0, 1, 1).transpose());
            CHECK(std::abs(rho[S.fp_layout.value(S.fp_layout.M_int + i)] - want) < 1e-10);
        }

        const Vec th2 = S.sys.theta_hjb(m, q);
        const auto a2 = S.sys.hjb.assemble(th2);
        u = a2.sol.w;
        CHECK(S.sys.hjb.constraint_violation(a2.expand(u), th2) < 1e-8);
        const Vec z = a2.expand(u);
        for (int j = 0; j < S.hjb_layout.M_term; ++j) {
            const double want = cfg.U_T(cfg.terminal_nodes.block(j, 0, 1, 1).transpose());
            CHECK(std::abs(z[S.hjb_layout.value(S.hjb_layout.M_int + j)] - want) < 1e-10);
        }
        q = S.sys.improve(u);
    }
}

TEST_CASE("density and value blocks share the interior point list by value") {
    const TimeDepConfig cfg = base_config(6, 5);
    const TimeDepSystem S = build_timedep_system(cfg);
    // The first M_int functionals of both blocks are Diracs at the identical
    // interior points, in the identical order.
    REQUIRE(S.fp_layout.M_int == S.hjb_layout.M_int);
    for (int i = 0; i < S.fp_layout.M_int; ++i) {
        CHECK((S.functionals_m[i].point - S.functionals_u[i].point).norm() == 0.0);
        CHECK((S.functionals_m[i].point.transpose() - cfg.interior_nodes.row(i)).norm() ==
              0.0);
    }
}

TEST_CASE("trivial coupling-free problem reaches (m, u) = (1, 0) immediately") {
    TimeDepConfig cfg = base_config(8, 6, 5.0, 20.0);
    cfg.V_true = [](const Vec&) { return 0.0; };
    cfg.F = {0.0, 1.0};
    cfg.tol = 1e-8;
    const CoupledRunResult res = gppi_td(cfg);
    CHECK(res.converged);
    CHECK(res.iterations <= 2);
    CHECK((res.m_values.array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK(res.u_values.array().abs().maxCoeff() < 1e-6);
}

TEST_CASE("transport rows react to a nonuniform policy through the field") {
    // A deterministic nonzero policy: the standalone FP solve and the
    // coupled theta map must read the same field values and divergences.
    const TimeDepConfig cfg = base_config(6, 5);
    const int Mi = cfg.interior_count();
    Mat qvals(Mi, 1);
    for (int i = 0; i < Mi; ++i)
        qvals(i, 0) = 0.3 * std::sin(2 * M_PI * cfg.interior_nodes(i, 0));
    const PolicyField field =
        fit_policy_field(cfg.interior_nodes, qvals, cfg.kernel_q, cfg.nugget);
    const TdFpSolution sol = solve_fp_td(cfg, field);

    const TimeDepSystem S = build_timedep_system(cfg);
    Vec q(Mi);
    for (int i = 0; i < Mi; ++i) q[i] = qvals(i, 0);
    const auto a = S.sys.fp.assemble(S.sys.theta_fp(q));
    const Vec rho = a.expand(a.sol.w);
    CHECK((rho - sol.rho).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("inverse mode pins the cost observations under a dominant penalty") {
    TimeDepConfig cfg = base_config(7, 5);
    cfg.infer_potential = true;
    cfg.alpha_v = 0.5;
    cfg.alpha_vo = 1e6;
    cfg.obs_v.points.resize(3, 1);
    cfg.obs_v.points << -0.3, 0.0, 0.35;
    cfg.obs_v.values.resize(3);
    for (int j = 0; j < 3; ++j)
        cfg.obs_v.values[j] = cfg.V_true(cfg.obs_v.points.row(j).transpose());

    const TdFpSolution fp = solve_fp_td(cfg, zero_policy(cfg));
    const TdHjbSolution hjb = solve_hjb_td(cfg, zero_policy(cfg), fp.m_model);
    const int Mi = cfg.interior_count();
    for (int j = 0; j < 3; ++j) CHECK(std::abs(hjb.v[Mi + j] - cfg.obs_v.values[j]) < 1e-5);
    // Cost entries tied across time levels: one value per spatial location.
    for (int i = 0; i < Mi; ++i) CHECK(hjb.v[i] == doctest::Approx(hjb.v[i % 7]).epsilon(1e-12));
}

TEST_CASE("coupled residual Jacobian matches finite differences") {
    TimeDepConfig cfg = base_config(5, 4);
    const TimeDepSystem S = build_timedep_system(cfg);
    const CoupledSystem& sys = S.sys;

    Vec m = sys.m_init, u = sys.u_init, q = sys.q_init;
    for (int k = 0; k < 2; ++k) {
        m = sys.fp.assemble(sys.theta_fp(q)).sol.w;
        u = sys.hjb.assemble(sys.theta_hjb(m, q)).sol.w;
        q = sys.improve(u);
    }
    const SweepResult sw = sweep(sys, m, u, q);
    const JacobianParts jac = assemble_jacobian(sys, sw, m, u, q, /*mixed_args=*/false);

    const int n = sys.n_m + sys.n_u + sys.n_q;
    Vec w(n);
    w << m, u, q;
    auto stack_at = [&](const Vec& wv) {
        return residual_stack(sys, wv.head(sys.n_m), wv.segment(sys.n_m, sys.n_u),
                              wv.tail(sys.n_q));
    };
    const double eps = 1e-6;
    Mat fd(n, n);
    for (int j = 0; j < n; ++j) {
        Vec wp = w, wm = w;
        wp[j] += eps;
        wm[j] -= eps;
        fd.col(j) = (stack_at(wp) - stack_at(wm)) / (2 * eps);
    }
    const double scale = std::max(1.0, jac.dRdw.norm());
    CHECK((fd - jac.dRdw).norm() / scale < 1e-5);
}

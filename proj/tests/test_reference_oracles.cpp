/// @file test_reference_oracles.cpp
/// @brief Tests for the finite-difference reference solvers: analytic
/// special cases, conservation laws, and the published reference constants.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mfgpi/reference_oracles.hpp"

using namespace mfgpi;

TEST_CASE("l2_error definition") {
    Grid g;
    g.counts = {10, 10};
    g.spacings = {0.1, 0.1};
    g.origins = {0.0, 0.0};
    GridField u{g, Vec::Zero(100)}, v{g, Vec::Constant(100, 0.5)};
    CHECK(l2_error(u, u) == 0.0);
    // h^2 * n^2 = 1 so a constant difference is returned exactly.
    CHECK(l2_error(u, v) == doctest::Approx(0.5).epsilon(1e-14));

    std::mt19937_64 rng(8);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec a(100), b(100);
    for (int i = 0; i < 100; ++i) {
        a[i] = gauss(rng);
        b[i] = gauss(rng);
    }
    double naive = 0.0;
    for (int i = 0; i < 100; ++i) naive += (a[i] - b[i]) * (a[i] - b[i]);
    naive = std::sqrt(0.01 * naive);
    CHECK(l2_error(a, b, 0.01) == doctest::Approx(naive).epsilon(1e-12));

    GridField w{g, Vec::Zero(99)};
    CHECK_THROWS_AS(l2_error(u, GridField{Grid{{9, 11}, {0.1, 0.1}, {0, 0}}, Vec::Zero(99)}),
                    DimensionError);
}

TEST_CASE("stationary classical PI: trivial problem hits (1, 0, 0)") {
    StationaryMfgSetup setup;
    setup.dim = 1;
    setup.nu = 0.5;
    setup.V = [](const Vec&) { return 0.0; };
    setup.F = [](double) { return 0.0; };
    const auto res = classical_pi_stationary(setup, 40);
    CHECK(res.converged);
    CHECK((res.m - Vec::Ones(40)).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(res.u.lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(std::abs(res.lambda) < 1e-8);
}

TEST_CASE("stationary classical PI: mass conservation and zero mean") {
    StationaryMfgSetup setup;
    setup.dim = 1;
    setup.nu = 0.4;
    setup.V = [](const Vec& x) { return std::sin(2 * M_PI * x[0]); };
    setup.F = [](double m) { return m * m; };
    const auto res = classical_pi_stationary(setup, 50);
    CHECK(res.converged);
    CHECK(std::abs(res.m.sum() / 50.0 - 1.0) < 1e-10);
    CHECK(std::abs(res.u.sum()) < 1e-8);
}

TEST_CASE("stationary classical PI: forward reference constants") {
    SUBCASE("1D forward problem") {
        StationaryMfgSetup setup;
        setup.dim = 1;
        setup.nu = 0.5;
        setup.V = [](const Vec& x) {
            return 2.0 * (std::sin(M_PI * x[0]) + std::cos(5 * M_PI * x[0]));
        };
        setup.F = [](double m) { return m * m * m * m; };
        const auto res = classical_pi_stationary(setup, 100);
        CHECK(res.converged);
        CHECK(res.lambda == doctest::Approx(2.2531368).epsilon(0.02));
    }
    SUBCASE("1D inverse-problem potential (forward ground truth)") {
        StationaryMfgSetup setup;
        setup.dim = 1;
        setup.nu = 0.3;
        setup.V = [](const Vec& x) {
            return 0.5 * (std::sin(2 * M_PI * x[0]) + std::cos(4 * M_PI * x[0]));
        };
        setup.F = [](double m) { return m * m * m; };
        const auto res = classical_pi_stationary(setup, 100);
        CHECK(res.converged);
        CHECK(res.lambda == doctest::Approx(1.0072958).epsilon(0.01));
    }
}

TEST_CASE("stationary classical PI: grid refinement is second-order consistent") {
    StationaryMfgSetup setup;
    setup.dim = 1;
    setup.nu = 0.5;
    setup.V = [](const Vec& x) {
        return 2.0 * (std::sin(M_PI * x[0]) + std::cos(5 * M_PI * x[0]));
    };
    setup.F = [](double m) { return m * m * m * m; };
    const double l25 = classical_pi_stationary(setup, 25).lambda;
    const double l50 = classical_pi_stationary(setup, 50).lambda;
    const double l100 = classical_pi_stationary(setup, 100).lambda;
    CHECK(std::abs(l100 - l50) < std::abs(l50 - l25));
}

TEST_CASE("stationary classical PI: 2D reference constant") {
    StationaryMfgSetup setup;
    setup.dim = 2;
    setup.origin = -0.5;
    setup.nu = 0.3;
    setup.V = [](const Vec& x) {
        return -1.4 * (std::sin(2 * M_PI * x[0]) + std::cos(4 * M_PI * x[1]) +
                       std::sin(4 * M_PI * x[1]));
    };
    setup.F = [](double m) { return m * m; };
    const auto res = classical_pi_stationary(setup, 19);
    CHECK(res.converged);
    CHECK(res.lambda == doctest::Approx(0.8860352).epsilon(0.06));
}

TEST_CASE("fd_hjb_solve: constant and single-Fourier-mode analytic cases") {
    LqrHjbSetup setup;
    setup.A = 0.0;
    setup.B = 0.0;
    setup.sigma = 0.4;
    setup.V = [](double) { return 0.0; };

    SUBCASE("constant terminal data is preserved") {
        setup.U_T = [](double) { return 3.25; };
        const auto U = fd_hjb_solve(setup, 30, 30);
        CHECK((U.values.array() - 3.25).abs().maxCoeff() < 1e-10);
    }

    SUBCASE("heat-only decay of one Fourier mode") {
        setup.U_T = [](double x) { return std::cos(2 * M_PI * x); };
        const int Mx = 64, Nt = 512;
        const auto U = fd_hjb_solve(setup, Mx, Nt);
        // U(x,t) = exp(-2 pi^2 sigma^2 (T - t)) cos(2 pi x).
        double worst = 0.0;
        for (int n = 0; n <= Nt; n += 64) {
            const double t = (double)n / Nt;
            const double amp = std::exp(-2 * M_PI * M_PI * setup.sigma * setup.sigma * (1 - t));
            for (int i = 0; i < Mx; ++i) {
                const double x = -0.5 + (double)i / Mx;
                worst = std::max(worst,
                                 std::abs(U.values[n * Mx + i] - amp * std::cos(2 * M_PI * x)));
            }
        }
        CHECK(worst < 5e-3);  // O(hx^2 + ht) at this resolution
    }
}

TEST_CASE("fd_hjb_solve: LQR reference configuration runs and is smooth") {
    LqrHjbSetup setup;
    setup.A = 0.1;
    setup.B = 0.5;
    setup.R_cost = std::pow(0.4, 1.5);
    setup.sigma = std::sqrt(0.1);
    setup.V = [](double x) { return 1.5 * x * x; };
    setup.U_T = [](double x) { return 0.5 + x * x; };
    const auto coarse = fd_hjb_solve(setup, 22, 44);
    const auto fine = fd_hjb_solve(setup, 110, 440);
    CHECK(coarse.values.allFinite());
    CHECK(fine.values.allFinite());
    // Restriction of the fine solution to the coarse nodes agrees to the
    // scheme's order, so the coarse reference is trustworthy.
    double worst = 0.0;
    for (int n = 0; n <= 44; ++n)
        for (int i = 0; i < 22; ++i)
            worst = std::max(worst, std::abs(coarse.values[n * 22 + i] -
                                             fine.values[(n * 10) * 110 + i * 5]));
    CHECK(worst < 0.02);
}

TEST_CASE("fd_hjb_solve: CFL violation raises a structured error") {
    LqrHjbSetup setup;
    setup.A = 200.0;  // huge drift makes the explicit part unstable
    setup.B = 0.5;
    setup.R_cost = 1.0;
    setup.sigma = 0.1;
    setup.V = [](double) { return 0.0; };
    setup.U_T = [](double x) { return x * x; };
    CHECK_THROWS_AS(fd_hjb_solve(setup, 10, 5), Error);
}

TEST_CASE("time-dependent classical PI: trivial problem stays at (1, 0)") {
    TdMfgSetup setup;
    setup.nu = 0.3;
    setup.V = [](double) { return 0.0; };
    setup.F = [](double) { return 0.0; };
    setup.m0 = [](double) { return 1.0; };
    setup.U_T = [](double) { return 0.0; };
    const auto res = classical_pi_timedep(setup, 20, 20);
    CHECK(res.converged);
    CHECK((res.m.array() - 1.0).abs().maxCoeff() < 1e-8);
    CHECK(res.u.array().abs().maxCoeff() < 1e-8);
}

TEST_CASE("time-dependent classical PI: mass is conserved across time") {
    TdMfgSetup setup;
    setup.nu = 1.0 / 3.0;
    setup.V = [](double x) {
        return 0.5 * (std::sin(2 * M_PI * x) + 3 * std::cos(2 * M_PI * x));
    };
    setup.F = [](double m) { return m * m * m * m; };
    setup.m0 = [](double) { return 1.0; };
    setup.U_T = [](double) { return 0.0; };
    const auto res = classical_pi_timedep(setup, 22, 22);
    CHECK(res.converged);
    // Crank-Nicolson on the divergence form conserves the discrete mass.
    for (int n = 0; n <= 22; ++n)
        CHECK(res.m.row(n).sum() / 22.0 == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(res.m.allFinite());
    CHECK(res.u.allFinite());
}

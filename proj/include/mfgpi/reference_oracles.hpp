#pragma once

/// @file reference_oracles.hpp
/// @brief Grid-based reference solvers: finite-difference policy iteration
/// for mean-field games (stationary 1D/2D and time-dependent 1D), a
/// semi-implicit backward solver for the LQR-type HJB equation, and the
/// discretized L2 error metric.

#include <functional>
#include <vector>

#include "mfgpi/policy.hpp"

namespace mfgpi {

/// A uniform tensor grid; all axes are treated as periodic except where a
/// solver documents otherwise.
struct Grid {
    std::vector<int> counts;
    std::vector<double> spacings;
    std::vector<double> origins;

    int size() const {
        int n = 1;
        for (int c : counts) n *= c;
        return n;
    }
    double cell_volume() const {
        double v = 1.0;
        for (double h : spacings) v *= h;
        return v;
    }
    /// Flat index convention: axis 0 slowest, last axis fastest.
    Vec point(int flat) const;
};

struct GridField {
    Grid grid;
    Vec values;
};

/// sqrt(prod(h) * sum |u - v|^2); throws DimensionError on grid mismatch.
double l2_error(const GridField& u, const GridField& v);
double l2_error(const Vec& u, const Vec& v, double cell_volume);

/// Stationary MFG problem data for the finite-difference reference:
///   nu * Lap(u) - Q.grad(u) + |Q|^2/2 + V + F(m) = lambda,   Q = grad(u)
///   nu * Lap(m) + div(m Q) = 0,  integral m = 1, integral u = 0.
struct StationaryMfgSetup {
    int dim = 1;
    double origin = 0.0;  ///< domain [origin, origin+1)^dim
    double nu = 0.5;
    std::function<double(const Vec&)> V;
    std::function<double(double)> F;
    double bound_R = 50.0;
};

struct ClassicalPiStationaryResult {
    Grid grid;
    Vec m, u;
    double lambda = 0.0;
    Mat Q;  ///< nodes x dim
    int iterations = 0;
    bool converged = false;
};

/// Classical policy iteration with centered finite differences on a periodic
/// grid; the FP solve is the exact minimum-norm element of the (rank M-1)
/// divergence-form operator under the mass constraint, and the HJB solve
/// appends lambda and the zero-mean row to the singular linear system.
ClassicalPiStationaryResult classical_pi_stationary(const StationaryMfgSetup& setup,
                                                    int nodes_per_axis, double tol = 1e-8,
                                                    int max_iters = 500);

/// 1D LQR-type HJB problem on [x0, x0+1) x (0, T]:
///   dU/dt + (sigma^2/2) Lap(U) = H(x, dU/dx),
///   H(x,p) = -p A x - V(x) + 27 (p B)^4 / (256 R_cost^2),  U(., T) = U_T.
struct LqrHjbSetup {
    double A = 0.1, B = 0.5, R_cost = 0.253;  ///< R_cost = R in (q^T R q)^{2/3}
    double sigma = 0.3162277660168379;
    double x0 = -0.5;
    double T = 1.0;
    std::function<double(double)> V;
    std::function<double(double)> U_T;
};

/// Backward semi-implicit scheme (implicit diffusion, explicit Hamiltonian
/// with centered gradient).  Returns U on the (Nt+1) x Mx grid, time axis
/// slowest, row n at t = n T / Nt.  Throws a structured error with a
/// suggested step if the explicit part violates its CFL bound.
GridField fd_hjb_solve(const LqrHjbSetup& setup, int Mx, int Nt);

/// Time-dependent MFG on [x0, x0+1) x [0, T]:
///   dm/dt = nu Lap(m) + div(m Q),           m(., 0) = m0
///   du/dt = -nu Lap(u) + Q du/dx - (|Q|^2/2 + V + F(m)),  u(., T) = U_T
///   Q = du/dx.
struct TdMfgSetup {
    double nu = 1.0 / 3.0;
    double x0 = -0.5;
    double T = 1.0;
    std::function<double(double)> V;
    std::function<double(double)> F;
    std::function<double(double)> m0;
    std::function<double(double)> U_T;
    double bound_R = 50.0;
};

struct ClassicalPiTdResult {
    Grid grid;      ///< (Nt+1) x Mx, time axis slowest
    Mat m, u, Q;    ///< (Nt+1) x Mx each
    int iterations = 0;
    bool converged = false;
};

/// Classical policy iteration with Crank-Nicolson time stepping on both the
/// forward FP and backward HJB linear solves (second-order in time so the
/// reference does not floor convergence measurements).
ClassicalPiTdResult classical_pi_timedep(const TdMfgSetup& setup, int Mx, int Nt,
                                         double tol = 1e-8, int max_iters = 500);

}  // namespace mfgpi

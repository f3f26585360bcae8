/// @file reference_oracles.cpp
/// @brief Finite-difference reference solvers and the L2 error metric.

#include "mfgpi/reference_oracles.hpp"

#include <cmath>

#include "mfgpi/errors.hpp"

namespace mfgpi {

namespace {

/// Centered first-difference matrix on a periodic 1D grid.
Mat d1_periodic(int M, double h) {
    Mat D = Mat::Zero(M, M);
    for (int i = 0; i < M; ++i) {
        D(i, (i + 1) % M) = 1.0 / (2 * h);
        D(i, (i + M - 1) % M) = -1.0 / (2 * h);
    }
    return D;
}

/// Standard second-difference matrix on a periodic 1D grid.
Mat d2_periodic(int M, double h) {
    Mat D = Mat::Zero(M, M);
    for (int i = 0; i < M; ++i) {
        D(i, i) = -2.0 / (h * h);
        D(i, (i + 1) % M) = 1.0 / (h * h);
        D(i, (i + M - 1) % M) = 1.0 / (h * h);
    }
    return D;
}

Mat kron(const Mat& A, const Mat& B) {
    Mat K(A.rows() * B.rows(), A.cols() * B.cols());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

}  // namespace

Vec Grid::point(int flat) const {
    const int d = (int)counts.size();
    Vec p(d);
    for (int a = d - 1; a >= 0; --a) {
        p[a] = origins[a] + spacings[a] * (flat % counts[a]);
        flat /= counts[a];
    }
    return p;
}

double l2_error(const Vec& u, const Vec& v, double cell_volume) {
    if (u.size() != v.size())
        throw DimensionError("l2_error: field lengths differ", (int)v.size());
    return std::sqrt(cell_volume * (u - v).squaredNorm());
}

double l2_error(const GridField& u, const GridField& v) {
    if (u.grid.counts != v.grid.counts || u.grid.spacings != v.grid.spacings)
        throw DimensionError("l2_error: grids differ", u.grid.size());
    return l2_error(u.values, v.values, u.grid.cell_volume());
}

ClassicalPiStationaryResult classical_pi_stationary(const StationaryMfgSetup& setup,
                                                    int nodes_per_axis, double tol,
                                                    int max_iters) {
    const int d = setup.dim;
    if (d != 1 && d != 2) throw DimensionError("classical_pi_stationary supports 1D/2D", d);
    const int Ma = nodes_per_axis;
    const int M = (d == 1) ? Ma : Ma * Ma;
    const double h = 1.0 / Ma;
    const double vol = std::pow(h, d);

    ClassicalPiStationaryResult res;
    res.grid.counts.assign(d, Ma);
    res.grid.spacings.assign(d, h);
    res.grid.origins.assign(d, setup.origin);

    // Per-axis derivative matrices over the flat index (axis 0 slowest).
    const Mat D1a = d1_periodic(Ma, h);
    const Mat D2a = d2_periodic(Ma, h);
    const Mat I = Mat::Identity(Ma, Ma);
    std::vector<Mat> D1;
    Mat Lap;
    if (d == 1) {
        D1 = {D1a};
        Lap = D2a;
    } else {
        D1 = {kron(D1a, I), kron(I, D1a)};
        Lap = kron(D2a, I) + kron(I, D2a);
    }

    Vec Vvals(M);
    for (int i = 0; i < M; ++i) Vvals[i] = setup.V(res.grid.point(i));

    const HamiltonianSpec ham = HamiltonianSpec::quadratic(setup.bound_R);
    Mat Q = Mat::Zero(M, d);
    Vec m = Vec::Ones(M), u = Vec::Zero(M);
    double lambda = 0.0;

    res.converged = false;
    for (int it = 0; it < max_iters; ++it) {
        // FP: minimum-norm solve of the rank-deficient divergence-form
        // operator under the mass constraint (exact: the nullspace is 1D).
        Mat A = setup.nu * Lap;
        for (int a = 0; a < d; ++a) A += D1[a] * Q.col(a).asDiagonal();
        Mat kkt = Mat::Zero(M + 1, M + 1);
        kkt.topLeftCorner(M, M) = 2.0 * A.transpose() * A;
        kkt.topRightCorner(M, 1).setConstant(vol);
        kkt.bottomLeftCorner(1, M).setConstant(vol);
        Vec rhs = Vec::Zero(M + 1);
        rhs[M] = 1.0;
        const Vec m_new = kkt.partialPivLu().solve(rhs).head(M);

        // HJB with lambda appended and the zero-mean row closing the system:
        // nu Lap u - Q.grad u + (|Q|^2/2 + V + F(m)) = lambda.
        Mat B = setup.nu * Lap;
        for (int a = 0; a < d; ++a) B -= Mat(Q.col(a).asDiagonal()) * D1[a];
        Vec c = 0.5 * Q.rowwise().squaredNorm() + Vvals;
        for (int i = 0; i < M; ++i) c[i] += setup.F(m_new[i]);
        Mat sys = Mat::Zero(M + 1, M + 1);
        sys.topLeftCorner(M, M) = B;
        sys.topRightCorner(M, 1).setConstant(-1.0);
        sys.bottomLeftCorner(1, M).setConstant(1.0);
        Vec srhs(M + 1);
        srhs.head(M) = -c;
        srhs[M] = 0.0;
        const Vec sol = sys.partialPivLu().solve(srhs);
        u = sol.head(M);
        lambda = sol[M];

        // Policy improvement: Q = grad u (projected on the control ball).
        Mat P(M, d);
        for (int a = 0; a < d; ++a) P.col(a) = D1[a] * u;
        Q = improve_pointwise(P, ham);

        const double change = l2_error(m_new, m, vol);
        m = m_new;
        res.iterations = it + 1;
        // The first iteration starts from Q = 0, whose FP solve returns the
        // uniform density again; the change is only meaningful once the
        // updated policy has fed back into a density solve.
        if (it > 0 && change < tol) {
            res.converged = true;
            break;
        }
    }
    res.m = m;
    res.u = u;
    res.lambda = lambda;
    res.Q = Q;
    return res;
}

GridField fd_hjb_solve(const LqrHjbSetup& setup, int Mx, int Nt) {
    const double hx = 1.0 / Mx;
    const double ht = setup.T / Nt;
    const Mat D1 = d1_periodic(Mx, hx);
    const Mat D2 = d2_periodic(Mx, hx);

    GridField out;
    out.grid.counts = {Nt + 1, Mx};
    out.grid.spacings = {ht, hx};
    out.grid.origins = {0.0, setup.x0};
    out.values.resize((Nt + 1) * Mx);

    Vec x(Mx), Vv(Mx);
    for (int i = 0; i < Mx; ++i) {
        x[i] = setup.x0 + i * hx;
        Vv[i] = setup.V(x[i]);
    }
    const double R2 = setup.R_cost * setup.R_cost;
    auto H = [&](int i, double p) {
        const double s = p * setup.B;
        return -p * setup.A * x[i] - Vv[i] + 27.0 * s * s * s * s / (256.0 * R2);
    };
    auto dHdp = [&](int i, double p) {
        const double s = p * setup.B;
        return -setup.A * x[i] + 27.0 * 4.0 * s * s * s * setup.B / (256.0 * R2);
    };

    Vec U(Mx);
    for (int i = 0; i < Mx; ++i) U[i] = setup.U_T(x[i]);
    out.values.segment(Nt * Mx, Mx) = U;

    // Backward semi-implicit: implicit diffusion, explicit Hamiltonian.
    const Mat lhs = Mat::Identity(Mx, Mx) - ht * 0.5 * setup.sigma * setup.sigma * D2;
    Eigen::PartialPivLU<Mat> lu(lhs);
    for (int n = Nt - 1; n >= 0; --n) {
        const Vec p = D1 * U;
        double speed = 0.0;
        Vec rhs(Mx);
        for (int i = 0; i < Mx; ++i) {
            rhs[i] = U[i] - ht * H(i, p[i]);
            speed = std::max(speed, std::abs(dHdp(i, p[i])));
        }
        if (speed * ht / hx > 1.0)
            throw Error("fd_hjb_solve: explicit Hamiltonian violates its CFL bound; "
                        "reduce the time step below " +
                        std::to_string(hx / std::max(speed, 1e-300)));
        U = lu.solve(rhs);
        out.values.segment(n * Mx, Mx) = U;
    }
    return out;
}

ClassicalPiTdResult classical_pi_timedep(const TdMfgSetup& setup, int Mx, int Nt, double tol,
                                         int max_iters) {
    const double hx = 1.0 / Mx;
    const double ht = setup.T / Nt;
    const Mat D1 = d1_periodic(Mx, hx);
    const Mat D2 = d2_periodic(Mx, hx);
    const Mat I = Mat::Identity(Mx, Mx);

    ClassicalPiTdResult res;
    res.grid.counts = {Nt + 1, Mx};
    res.grid.spacings = {ht, hx};
    res.grid.origins = {0.0, setup.x0};

    Vec x(Mx), Vv(Mx), m0(Mx), uT(Mx);
    for (int i = 0; i < Mx; ++i) {
        x[i] = setup.x0 + i * hx;
        Vv[i] = setup.V(x[i]);
        m0[i] = setup.m0(x[i]);
        uT[i] = setup.U_T(x[i]);
    }

    const HamiltonianSpec ham = HamiltonianSpec::quadratic(setup.bound_R);
    res.Q = Mat::Zero(Nt + 1, Mx);
    res.m = Mat::Zero(Nt + 1, Mx);
    res.u = Mat::Zero(Nt + 1, Mx);
    Mat m_prev = Mat::Constant(Nt + 1, Mx, 1.0);

    auto drift_op = [&](int n) {
        // B_n m = nu Lap m + d/dx (m Q_n)  (divergence form)
        const Vec q = res.Q.row(n).transpose();
        return Mat(setup.nu * D2 + D1 * q.asDiagonal());
    };
    auto adv_op = [&](int n) {
        // A_n u = nu Lap u - Q_n du/dx
        const Vec q = res.Q.row(n).transpose();
        return Mat(setup.nu * D2 - Mat(q.asDiagonal()) * D1);
    };

    res.converged = false;
    for (int it = 0; it < max_iters; ++it) {
        // FP forward, Crank-Nicolson.
        res.m.row(0) = m0.transpose();
        for (int n = 0; n < Nt; ++n) {
            const Mat Bn = drift_op(n), Bn1 = drift_op(n + 1);
            const Vec rhs = (I + 0.5 * ht * Bn) * res.m.row(n).transpose();
            res.m.row(n + 1) =
                (I - 0.5 * ht * Bn1).partialPivLu().solve(rhs).transpose();
        }

        // HJB backward, Crank-Nicolson:
        // du/dt = -A_t u - c_t with c = |Q|^2/2 + V + F(m).
        auto cost = [&](int n) {
            Vec c = 0.5 * res.Q.row(n).transpose().array().square().matrix() + Vv;
            for (int i = 0; i < Mx; ++i) c[i] += setup.F(res.m(n, i));
            return c;
        };
        res.u.row(Nt) = uT.transpose();
        for (int n = Nt - 1; n >= 0; --n) {
            const Mat An = adv_op(n), An1 = adv_op(n + 1);
            const Vec rhs = (I + 0.5 * ht * An1) * res.u.row(n + 1).transpose() +
                            0.5 * ht * (cost(n) + cost(n + 1));
            res.u.row(n) = (I - 0.5 * ht * An).partialPivLu().solve(rhs).transpose();
        }

        // Policy improvement at every time level.
        for (int n = 0; n <= Nt; ++n) {
            Mat P(Mx, 1);
            P.col(0) = D1 * res.u.row(n).transpose();
            res.Q.row(n) = improve_pointwise(P, ham).col(0).transpose();
        }

        const double change =
            std::sqrt(hx * ht * (res.m - m_prev).squaredNorm());
        m_prev = res.m;
        res.iterations = it + 1;
        // As in the stationary solver: the density cannot react to the
        // policy until the second iteration, so the first change is void.
        if (it > 0 && change < tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace mfgpi

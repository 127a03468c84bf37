#pragma once

// Global assembly, hard simply-supported constraints and the free-vibration
// eigensolve K phi = omega^2 M phi. The generalized problem is reduced with a
// Cholesky factor of M and the lowest modes are extracted by a Lanczos
// iteration on the inverted operator.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <atomic>
#include <mutex>
#include <string>
#include <thread>

#include "vscl/element.hpp"
#include "vscl/math.hpp"

namespace vscl {

struct SingularMassError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonConvergenceError : std::runtime_error {
    int iterations = 0;
    NonConvergenceError(const std::string& msg, int it)
        : std::runtime_error(msg), iterations(it) {}
};

struct ModalResult {
    std::vector<double> frequencies;  ///< rad/s, ascending
    int converged_modes = 0;
    int mesh_nx = 0, mesh_ny = 0;
    int active_dofs = 0;
    int lanczos_iterations = 0;
};

using SpMat = Eigen::SparseMatrix<double>;

struct GlobalSystem {
    SpMat K, M;
    std::vector<int> kept;  // retained dof indices after constraints
};

namespace detail {

inline std::vector<ElementMatrices> all_element_matrices(const PlateModel& plate,
                                                         const Mesh& mesh,
                                                         int n_threads) {
    const int ne = mesh.n_elems();
    std::vector<ElementMatrices> ems(static_cast<size_t>(ne));
    n_threads = std::max(1, n_threads);
    if (n_threads == 1 || ne < 8) {
        for (int e = 0; e < ne; ++e) ems[static_cast<size_t>(e)] = element_matrices(plate, mesh, e);
        return ems;
    }
    std::exception_ptr err;
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    std::mutex err_mtx;
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back([&]() {
            try {
                for (;;) {
                    const int e = next.fetch_add(1);
                    if (e >= ne) break;
                    ems[static_cast<size_t>(e)] = element_matrices(plate, mesh, e);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mtx);
                if (!err) err = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
    return ems;
}

} // namespace detail

// Assembles K and M over all non-void elements and applies the SS-1 hard
// simply-supported constraints: v0, w0, by fixed on x = +-a/2 and u0, w0, bx
// fixed on y = +-b/2. Element matrices may be computed in parallel; triplet
// emission stays in element order so assembly is bit-stable across thread
// counts.
inline GlobalSystem assemble(const PlateModel& plate, const Mesh& mesh, int n_threads = 1) {
    const auto ems = detail::all_element_matrices(plate, mesh, n_threads);

    std::vector<Eigen::Triplet<double>> tk, tm;
    for (const auto& em : ems) {
        const int n = static_cast<int>(em.dofs.size());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                tk.emplace_back(em.dofs[i], em.dofs[j], em.Ke(i, j));
                tm.emplace_back(em.dofs[i], em.dofs[j], em.Me(i, j));
            }
    }
    SpMat K(mesh.n_dofs, mesh.n_dofs), M(mesh.n_dofs, mesh.n_dofs);
    K.setFromTriplets(tk.begin(), tk.end());
    M.setFromTriplets(tm.begin(), tm.end());

    // constrained dof mask
    std::vector<bool> fixed(static_cast<size_t>(mesh.n_dofs), false);
    const double tolx = 1e-9 * plate.a, toly = 1e-9 * plate.b;
    for (int i = 0; i < mesh.n_nodes(); ++i) {
        const int d = mesh.std_dof[i];
        if (d < 0) continue;
        const bool on_x_edge = std::abs(std::abs(mesh.xs[i]) - plate.a / 2) < tolx;
        const bool on_y_edge = std::abs(std::abs(mesh.ys[i]) - plate.b / 2) < toly;
        if (on_x_edge) fixed[d + 1] = fixed[d + 2] = fixed[d + 4] = true;
        if (on_y_edge) fixed[d + 0] = fixed[d + 2] = fixed[d + 3] = true;
    }

    GlobalSystem sys;
    std::vector<int> newid(static_cast<size_t>(mesh.n_dofs), -1);
    for (int i = 0; i < mesh.n_dofs; ++i)
        if (!fixed[static_cast<size_t>(i)]) {
            newid[static_cast<size_t>(i)] = static_cast<int>(sys.kept.size());
            sys.kept.push_back(i);
        }
    const int nk = static_cast<int>(sys.kept.size());

    std::vector<Eigen::Triplet<double>> rk, rm;
    for (int col = 0; col < K.outerSize(); ++col) {
        if (newid[static_cast<size_t>(col)] < 0) continue;
        for (SpMat::InnerIterator it(K, col); it; ++it)
            if (newid[static_cast<size_t>(it.row())] >= 0)
                rk.emplace_back(newid[static_cast<size_t>(it.row())],
                                newid[static_cast<size_t>(col)], it.value());
        for (SpMat::InnerIterator it(M, col); it; ++it)
            if (newid[static_cast<size_t>(it.row())] >= 0)
                rm.emplace_back(newid[static_cast<size_t>(it.row())],
                                newid[static_cast<size_t>(col)], it.value());
    }
    sys.K.resize(nk, nk);
    sys.M.resize(nk, nk);
    sys.K.setFromTriplets(rk.begin(), rk.end());
    sys.M.setFromTriplets(rm.begin(), rm.end());
    return sys;
}

// Lowest k eigenvalues of K phi = omega^2 M phi. Reduction M = Lt*Lt^T via a
// fill-reducing sparse Cholesky, then Lanczos with full reorthogonalization
// on C^-1 = Lt^T K^-1 Lt whose largest eigenvalues are 1/omega^2.
inline ModalResult solve_modes(const GlobalSystem& sys, int k, double tol = 1e-9,
                               int extra_iters = 0) {
    const int n = static_cast<int>(sys.K.rows());
    if (n == 0) throw std::invalid_argument("solve_modes: empty system");
    k = std::min(k, n);

    Eigen::SimplicialLLT<SpMat> mllt(sys.M);
    if (mllt.info() != Eigen::Success)
        throw SingularMassError("solve_modes: mass matrix is not positive definite");
    Eigen::SimplicialLDLT<SpMat> kldlt(sys.K);
    if (kldlt.info() != Eigen::Success)
        throw std::runtime_error("solve_modes: stiffness factorization failed");

    // M = (P^T L)(P^T L)^T with P the fill-reducing permutation
    const auto& P = mllt.permutationP();
    const auto Pinv = P.inverse();
    auto apply_Lt = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return Pinv * (mllt.matrixL() * v);
    };
    auto apply_LtT = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return mllt.matrixU() * (P * v);
    };
    auto op = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return apply_LtT(kldlt.solve(apply_Lt(v)));
    };

    const int m_max = std::min(n, std::max(80, 4 * k + 20) + extra_iters);
    Eigen::MatrixXd V(n, m_max + 1);
    std::vector<double> alpha, beta;

    Rng rng(0x5eed0fbeefull);  // fixed: solver must be deterministic
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
    v.normalize();
    V.col(0) = v;

    std::vector<double> prev_mu;
    int used = 0;
    bool converged = false;
    for (int j = 0; j < m_max; ++j) {
        Eigen::VectorXd w = op(V.col(j));
        const double a = V.col(j).dot(w);
        alpha.push_back(a);
        w -= a * V.col(j);
        if (j > 0) w -= beta.back() * V.col(j - 1);
        // full reorthogonalization, twice
        for (int pass = 0; pass < 2; ++pass)
            w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
        const double b = w.norm();
        used = j + 1;

        const bool exhausted = used == n || b < 1e-14;
        if (used >= k + 2 || exhausted) {
            Eigen::MatrixXd T = Eigen::MatrixXd::Zero(used, used);
            for (int i = 0; i < used; ++i) {
                T(i, i) = alpha[static_cast<size_t>(i)];
                if (i + 1 < used) {
                    T(i, i + 1) = beta[static_cast<size_t>(i)];
                    T(i + 1, i) = beta[static_cast<size_t>(i)];
                }
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
            const int k_eff = std::min(k, used);
            std::vector<double> mu(static_cast<size_t>(k_eff));
            for (int i = 0; i < k_eff; ++i)
                mu[static_cast<size_t>(i)] = es.eigenvalues()(used - 1 - i);
            bool ok = !prev_mu.empty() && prev_mu.size() == mu.size();
            if (ok)
                for (int i = 0; i < k_eff; ++i)
                    if (std::abs(mu[static_cast<size_t>(i)] - prev_mu[static_cast<size_t>(i)]) >
                        tol * std::abs(mu[static_cast<size_t>(i)]))
                        ok = false;
            prev_mu = mu;
            if (ok || exhausted) {
                converged = true;
                ModalResult res;
                res.lanczos_iterations = used;
                res.active_dofs = n;
                res.converged_modes = k_eff;
                for (int i = 0; i < k_eff; ++i) {
                    const double m_i = mu[static_cast<size_t>(i)];
                    if (!(m_i > 0))
                        throw std::runtime_error("solve_modes: non-positive eigenvalue of reduced operator");
                    res.frequencies.push_back(std::sqrt(1.0 / m_i));
                }
                std::sort(res.frequencies.begin(), res.frequencies.end());
                return res;
            }
        }
        if (b < 1e-14) break;
        beta.push_back(b);
        V.col(j + 1) = w / b;
    }
    if (!converged)
        throw NonConvergenceError("solve_modes: Lanczos did not converge", used);
    return {};
}

// Full pipeline: mesh, assemble, constrain, solve for the k lowest modes.
inline ModalResult assemble_and_solve(const PlateModel& plate, int k = 5, int n_threads = 1) {
    const Mesh mesh = build_mesh(plate);
    const GlobalSystem sys = assemble(plate, mesh, n_threads);
    ModalResult res = solve_modes(sys, k);
    res.mesh_nx = plate.mesh_nx;
    res.mesh_ny = plate.mesh_ny;
    return res;
}

inline double fundamental_frequency(const PlateModel& plate, int n_threads = 1) {
    return assemble_and_solve(plate, 1, n_threads).frequencies.front();
}

// Tabular serialization used by regression fixtures: one "mode omega" row
// per converged mode.
inline std::string modal_table(const ModalResult& r) {
    std::string out = "# mode omega_rad_per_s\n";
    for (size_t i = 0; i < r.frequencies.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu %.12g\n", i + 1, r.frequencies[i]);
        out += buf;
    }
    return out;
}

} // namespace vscl

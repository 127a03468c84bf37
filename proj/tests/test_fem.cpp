#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "vscl/modal.hpp"

using namespace vscl;

namespace {

Ply graphite_epoxy(double t, double th0, double th1) {
    Ply p;
    p.E1 = 173e9;
    p.E2 = 7.2e9;
    p.G12 = p.G13 = p.G23 = 3.76e9;
    p.nu12 = 0.29;
    p.rho = 1540;
    p.thickness = t;
    p.theta0 = th0;
    p.theta1 = th1;
    return p;
}

PlateModel vscl_3ply(int n) {
    PlateModel p;
    p.a = p.b = 1;
    Ply p1 = graphite_epoxy(0.01 / 3, 30, 0);
    Ply p2 = graphite_epoxy(0.01 / 3, 45, 90);
    p.plies = {p1, p2, p1};
    p.mesh_nx = p.mesh_ny = n;
    return p;
}

PlateModel isotropic_plate(int n, double h = 0.01) {
    PlateModel p;
    p.a = p.b = 1;
    Ply ip;
    ip.E1 = ip.E2 = 70e9;
    ip.nu12 = 0.3;
    ip.G12 = ip.G13 = ip.G23 = 70e9 / 2.6;
    ip.rho = 2700;
    ip.thickness = h;
    p.plies = {ip};
    p.mesh_nx = p.mesh_ny = n;
    return p;
}

Eigen::MatrixXd dense(const SpMat& s) { return Eigen::MatrixXd(s); }

} // namespace

TEST_CASE("element stiffness matches an independent plain-shear oracle") {
    PlateModel plate = isotropic_plate(2, 0.02);
    plate.assumed_shear = false;  // oracle integrates plain bilinear shear
    const Mesh mesh = build_mesh(plate);

    const auto em = element_matrices(plate, mesh, 0);
    const auto& conn = mesh.elems[0];
    std::array<double, 4> xs{}, ys{};
    for (int k = 0; k < 4; ++k) {
        xs[k] = mesh.xs[conn[k]];
        ys[k] = mesh.ys[conn[k]];
    }
    const auto sec = abd_matrices(plate.plies, 0.25 * (xs[0] + xs[1] + xs[2] + xs[3]), plate.a,
                                  plate.shear_correction);
    const Eigen::MatrixXd ref = oracle::fsdt_quad4_stiffness(xs, ys, sec.A, sec.B, sec.D, sec.Es);
    CHECK((em.Ke - ref).cwiseAbs().maxCoeff() <= 1e-10 * ref.cwiseAbs().maxCoeff());
}

TEST_CASE("rigid translations carry no strain energy") {
    for (bool assumed : {true, false}) {
        PlateModel plate = vscl_3ply(3);
        plate.assumed_shear = assumed;
        const Mesh mesh = build_mesh(plate);
        const auto em = element_matrices(plate, mesh, 4);
        const double knorm = em.Ke.cwiseAbs().maxCoeff();
        for (int dof : {0, 1, 2}) {  // u0, v0, w0 translations
            Eigen::VectorXd v = Eigen::VectorXd::Zero(em.Ke.rows());
            for (int k = 0; k < 4; ++k) v(5 * k + dof) = 1.0;
            CHECK((em.Ke * v).cwiseAbs().maxCoeff() <= 1e-9 * knorm);
        }
    }
}

TEST_CASE("rigid translations carry no strain energy on split elements") {
    PlateModel plate = vscl_3ply(8);
    plate.cutout = Cutout{0, 0, 0.4, 1.0};
    const Mesh mesh = build_mesh(plate);
    int tested = 0;
    for (int e = 0; e < mesh.n_elems(); ++e) {
        if (mesh.eclass[e] != ElementClass::Split) continue;
        const auto em = element_matrices(plate, mesh, e);
        const int nblk = static_cast<int>(em.Ke.rows()) / 5;
        const double knorm = em.Ke.cwiseAbs().maxCoeff();
        for (int dof : {0, 1, 2}) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(em.Ke.rows());
            for (int kb = 0; kb < nblk; ++kb) v(5 * kb + dof) = 1.0;
            CHECK((em.Ke * v).cwiseAbs().maxCoeff() <= 1e-9 * knorm);
        }
        ++tested;
    }
    CHECK(tested > 0);
}

TEST_CASE("consistent mass reproduces the element mass") {
    PlateModel plate = isotropic_plate(4);
    const Mesh mesh = build_mesh(plate);
    const auto em = element_matrices(plate, mesh, 5);
    // sum over the w0 block equals rho*h*area
    double s = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) s += em.Me(5 * i + 2, 5 * j + 2);
    const double area = (1.0 / 4) * (1.0 / 4);
    CHECK(s == doctest::Approx(2700 * 0.01 * area).epsilon(1e-10));
}

TEST_CASE("assumed shear interpolation relieves locking on coarse thin meshes") {
    PlateModel thin = isotropic_plate(8, 0.002);  // a/h = 500
    const double ref = oracle::navier_isotropic_w11(1, 1, 70e9, 0.3, 2700, 0.002);
    thin.assumed_shear = true;
    const double w_mitc = fundamental_frequency(thin);
    thin.assumed_shear = false;
    const double w_plain = fundamental_frequency(thin);
    CHECK(std::abs(w_mitc - ref) / ref < 0.02);
    CHECK(std::abs(w_plain - ref) > 5 * std::abs(w_mitc - ref));
}

TEST_CASE("global matrices are symmetric, K is PSD and M is SPD") {
    PlateModel plate = vscl_3ply(6);
    plate.cutout = Cutout{0.1, -0.05, 0.3, 0.8};
    const Mesh mesh = build_mesh(plate);
    const GlobalSystem sys = assemble(plate, mesh);

    const Eigen::MatrixXd K = dense(sys.K), M = dense(sys.M);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * K.cwiseAbs().maxCoeff());
    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * M.cwiseAbs().maxCoeff());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ek(K);
    CHECK(ek.eigenvalues().minCoeff() >= -1e-8 * ek.eigenvalues().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(M);
    CHECK(em.eigenvalues().minCoeff() > 0);
}

TEST_CASE("lanczos frequencies match a dense generalized eigensolve") {
    PlateModel plate = vscl_3ply(5);
    const Mesh mesh = build_mesh(plate);
    const GlobalSystem sys = assemble(plate, mesh);
    const ModalResult r = solve_modes(sys, 5);

    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ge(dense(sys.K), dense(sys.M));
    for (int i = 0; i < 5; ++i) {
        const double wref = std::sqrt(ge.eigenvalues()(i));
        CHECK(r.frequencies[static_cast<size_t>(i)] == doctest::Approx(wref).epsilon(1e-8));
    }
}

TEST_CASE("frequencies converge to the literature values for the 3-ply layup") {
    std::vector<double> ref = {309.1, 505.9, 854.3, 1134.3, 1296.2};
    const auto r = assemble_and_solve(vscl_3ply(30), 5, 2);
    for (int i = 0; i < 5; ++i)
        CHECK(std::abs(r.frequencies[static_cast<size_t>(i)] - ref[static_cast<size_t>(i)]) /
                  ref[static_cast<size_t>(i)] <
              0.01);

    // monotone mesh convergence of every mode
    const auto r10 = assemble_and_solve(vscl_3ply(10), 5, 2);
    const auto r20 = assemble_and_solve(vscl_3ply(20), 5, 2);
    for (int i = 0; i < 5; ++i) {
        CHECK(r10.frequencies[static_cast<size_t>(i)] >= r20.frequencies[static_cast<size_t>(i)]);
        CHECK(r20.frequencies[static_cast<size_t>(i)] >= r.frequencies[static_cast<size_t>(i)]);
    }
}

TEST_CASE("isotropic plate agrees with the Navier solution") {
    const double ref = oracle::navier_isotropic_w11(1, 1, 70e9, 0.3, 2700, 0.01);
    const auto r = assemble_and_solve(isotropic_plate(30), 1, 2);
    CHECK(std::abs(r.frequencies[0] - ref) / ref < 0.02);
}

TEST_CASE("vanishing cutout leaves the spectrum unchanged") {
    PlateModel cut = vscl_3ply(20);
    cut.cutout = Cutout{0, 0, 0.02, 1.0};  // r = 0.01 a
    const double w_cut = fundamental_frequency(cut, 2);
    const double w_ref = fundamental_frequency(vscl_3ply(20), 2);
    CHECK(std::abs(w_cut - w_ref) / w_ref < 0.01);
}

TEST_CASE("enrichment machinery leaves an uncut plate bitwise unchanged") {
    PlateModel a = vscl_3ply(7);
    a.enrichment_enabled = true;
    PlateModel b = a;
    b.enrichment_enabled = false;
    const GlobalSystem sa = assemble(a, build_mesh(a));
    const GlobalSystem sb = assemble(b, build_mesh(b));
    CHECK(dense(sa.K) == dense(sb.K));
    CHECK(dense(sa.M) == dense(sb.M));
}

TEST_CASE("cut plate mass equals plate minus cutout mass") {
    PlateModel plate = vscl_3ply(24);
    plate.cutout = Cutout{0, 0, 0.4, 1.0};
    const Mesh mesh = build_mesh(plate);

    // w0-block total mass over all active dofs, unconstrained assembly
    double mass = 0;
    for (int e = 0; e < mesh.n_elems(); ++e) {
        const auto em = element_matrices(plate, mesh, e);
        const int nblk = static_cast<int>(em.Me.rows()) / 5;
        for (int i = 0; i < nblk; ++i)
            for (int j = 0; j < nblk; ++j) mass += em.Me(5 * i + 2, 5 * j + 2);
    }
    const double h = plate.thickness();
    const double expected = 1540 * h * (1.0 - kPi * 0.2 * 0.2);
    CHECK(std::abs(mass - expected) / expected < 0.005);
}

TEST_CASE("void nodes carry no dofs") {
    PlateModel plate = vscl_3ply(16);
    plate.cutout = Cutout{0, 0, 0.4, 1.0};
    const Mesh mesh = build_mesh(plate);
    int removed = 0;
    for (int i = 0; i < mesh.n_nodes(); ++i) {
        if (mesh.phi[i] < 0) {
            CHECK(mesh.std_dof[i] == -1);
            ++removed;
        }
        if (mesh.enr_dof[i] >= 0) CHECK(mesh.phi[i] < 0);
    }
    CHECK(removed > 0);
}

TEST_CASE("frequencies are invariant under node renumbering") {
    PlateModel plate = vscl_3ply(8);
    plate.cutout = Cutout{0, 0, 0.35, 1.0};
    Mesh mesh = build_mesh(plate);
    const GlobalSystem sys0 = assemble(plate, mesh);
    const ModalResult r0 = solve_modes(sys0, 3);

    // reverse the node order and rebuild the dof layout
    const int nn = mesh.n_nodes();
    std::vector<int> perm(static_cast<size_t>(nn));
    for (int i = 0; i < nn; ++i) perm[static_cast<size_t>(i)] = nn - 1 - i;
    Mesh pm = mesh;
    for (int i = 0; i < nn; ++i) {
        pm.xs[perm[static_cast<size_t>(i)]] = mesh.xs[i];
        pm.ys[perm[static_cast<size_t>(i)]] = mesh.ys[i];
        pm.phi[perm[static_cast<size_t>(i)]] = mesh.phi[i];
    }
    for (auto& e : pm.elems)
        for (int& n : e) n = perm[static_cast<size_t>(n)];
    classify_and_number(pm);

    const GlobalSystem sys1 = assemble(plate, pm);
    const ModalResult r1 = solve_modes(sys1, 3);
    for (int i = 0; i < 3; ++i)
        CHECK(r1.frequencies[static_cast<size_t>(i)] ==
              doctest::Approx(r0.frequencies[static_cast<size_t>(i)]).epsilon(1e-9));
}

TEST_CASE("assembly is bit-stable across thread counts") {
    PlateModel plate = vscl_3ply(10);
    plate.cutout = Cutout{0, 0, 0.3, 0.9};
    const Mesh mesh = build_mesh(plate);
    const GlobalSystem s1 = assemble(plate, mesh, 1);
    const GlobalSystem s2 = assemble(plate, mesh, 2);
    CHECK(dense(s1.K) == dense(s2.K));
    CHECK(dense(s1.M) == dense(s2.M));
}

TEST_CASE("fiber angle per gauss point vs per element centroid") {
    PlateModel pg = vscl_3ply(12);
    PlateModel pc = pg;
    pc.fiber_angle_per_gauss = false;
    const double wg = fundamental_frequency(pg);
    const double wc = fundamental_frequency(pc);
    CHECK(wg != wc);
    CHECK(std::abs(wg - wc) / wg < 0.02);  // both discretize the same plate
}

TEST_CASE("plate validation rejects bad models") {
    PlateModel p = vscl_3ply(4);
    p.cutout = Cutout{0.45, 0, 0.4, 1.0};  // pokes through the edge
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = vscl_3ply(4);
    p.mesh_nx = 1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = vscl_3ply(4);
    p.plies[0].theta0 = -90;
    p.plies[0].theta1 = 90;
    p.a = 0.5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);  // curvature limit
}

TEST_CASE("eigensolver error paths") {
    PlateModel plate = vscl_3ply(6);  // enough dofs that the Krylov budget binds
    const Mesh mesh = build_mesh(plate);
    GlobalSystem sys = assemble(plate, mesh);

    SUBCASE("a massless dof is reported as a singular mass matrix") {
        for (int j = 0; j < sys.M.outerSize(); ++j)
            for (SpMat::InnerIterator it(sys.M, j); it; ++it)
                if (it.row() == 0 || it.col() == 0) it.valueRef() = 0.0;
        CHECK_THROWS_AS(solve_modes(sys, 2), SingularMassError);
    }
    SUBCASE("an unreachable tolerance is reported with the iteration count") {
        try {
            solve_modes(sys, 2, -1.0);  // no eigenvalue change can satisfy this
            CHECK(false);
        } catch (const NonConvergenceError& e) {
            CHECK(e.iterations > 0);
        }
    }
}

TEST_CASE("modal table serialization") {
    ModalResult r;
    r.frequencies = {309.1, 505.9};
    const std::string t = modal_table(r);
    CHECK(t.find("1 309.1") != std::string::npos);
    CHECK(t.find("2 505.9") != std::string::npos);
}

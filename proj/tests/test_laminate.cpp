#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "vscl/laminate.hpp"

using namespace vscl;

namespace {

Ply graphite_epoxy(double t = 0.01 / 3, double th0 = 0, double th1 = 0) {
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

Ply isotropic(double E, double nu, double rho, double t) {
    Ply p;
    p.E1 = p.E2 = E;
    p.G12 = p.G13 = p.G23 = E / (2 * (1 + nu));
    p.nu12 = nu;
    p.rho = rho;
    p.thickness = t;
    return p;
}

} // namespace

TEST_CASE("fiber angle follows the linear shift law") {
    CHECK(fiber_angle(0.0, 30, 0, 1.0) == doctest::Approx(30.0));
    CHECK(fiber_angle(0.5, 30, 0, 1.0) == doctest::Approx(0.0));
    CHECK(fiber_angle(-0.5, 30, 0, 1.0) == doctest::Approx(0.0));
    // quarter-span value for a 0->45 shift: 2*(45-0)/1*0.25 = +22.5 deg
    CHECK(fiber_angle(0.25, 0, 45, 1.0) == doctest::Approx(22.5));
    CHECK(fiber_angle(-0.25, 0, 45, 1.0) == doctest::Approx(22.5));
    CHECK_THROWS_AS(fiber_angle(0.6, 0, 45, 1.0), std::invalid_argument);
}

TEST_CASE("tow curvature feasibility") {
    SUBCASE("straight fiber has zero curvature") {
        const auto r = check_curvature(30, 30, 1.0);
        CHECK(r.max_curvature == doctest::Approx(0.0));
        CHECK(r.feasible);
    }
    SUBCASE("grid maximum matches the analytic critical point") {
        // theta 0->45 over a=1: |kappa| = (pi/2) |cos(u)| with u in [0, pi/4],
        // maximal at u=0
        const auto r = check_curvature(0, 45, 1.0, 4096);
        CHECK(r.max_curvature == doctest::Approx(kPi / 2).epsilon(1e-6));
        CHECK(r.feasible);
    }
    SUBCASE("fast angle sweep over a short span is infeasible") {
        const auto r = check_curvature(-90, 90, 0.5);
        CHECK(r.max_curvature > 3.28);
        CHECK_FALSE(r.feasible);
    }
}

TEST_CASE("ply validation rejects degenerate data") {
    Ply p = graphite_epoxy();
    CHECK_NOTHROW(p.validate());
    p.E2 = -1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = graphite_epoxy();
    p.nu12 = 5.0;  // nu12*nu21 = nu12^2 E2/E1 ~ 1.04 > 1
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = graphite_epoxy();
    p.thickness = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("section stiffness of a single isotropic ply") {
    const double E = 70e9, nu = 0.3, h = 0.01;
    const auto s = abd_matrices({isotropic(E, nu, 2700, h)}, 0.13, 1.0, 5.0 / 6.0);

    CHECK(s.B.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));

    const double Dref = E * h * h * h / (12 * (1 - nu * nu));
    CHECK(s.D(0, 0) == doctest::Approx(Dref).epsilon(1e-12));
    CHECK(s.D(0, 1) == doctest::Approx(nu * Dref).epsilon(1e-12));
    CHECK(s.D(2, 2) == doctest::Approx(Dref * (1 - nu) / 2).epsilon(1e-12));
    CHECK(s.D(0, 2) == doctest::Approx(0.0));

    // shear block: Ks * G * h on the diagonal
    CHECK(s.Es(0, 0) == doctest::Approx(5.0 / 6.0 * E / (2 * (1 + nu)) * h).epsilon(1e-12));
    CHECK(s.Es(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("mid-plane symmetric stack has zero coupling everywhere") {
    Ply a = graphite_epoxy(0.0033, 0, 45);
    Ply b = graphite_epoxy(0.0033, -45, -60);
    const std::vector<Ply> stack = {a, b, b, a};
    for (double x : {-0.5, -0.21, 0.0, 0.37, 0.5}) {
        const auto s = abd_matrices(stack, x, 1.0, 5.0 / 6.0);
        CHECK(s.B.cwiseAbs().maxCoeff() <= 1e-10 * s.A.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("variable-stiffness section matches straight-fiber lamination theory at x=0") {
    Ply p1 = graphite_epoxy(0.01 / 3, 30, 0);
    Ply p2 = graphite_epoxy(0.01 / 3, 45, 90);
    const std::vector<Ply> stack = {p1, p2, p1};

    const auto s = abd_matrices(stack, 0.0, 1.0, 5.0 / 6.0);
    // at the plate center each ply sits at its theta0
    const auto ref = oracle::clt_laminate(stack, {30, 45, 30});

    CHECK((s.A - ref.A).cwiseAbs().maxCoeff() <= 1e-9 * ref.A.cwiseAbs().maxCoeff());
    CHECK((s.B - ref.B).cwiseAbs().maxCoeff() <= 1e-9 * ref.A.cwiseAbs().maxCoeff());
    CHECK((s.D - ref.D).cwiseAbs().maxCoeff() <= 1e-9 * ref.D.cwiseAbs().maxCoeff());

    // off-center the angles differ and so must the section
    const auto s2 = abd_matrices(stack, 0.4, 1.0, 5.0 / 6.0);
    CHECK((s2.A - s.A).cwiseAbs().maxCoeff() > 1e-4 * s.A.cwiseAbs().maxCoeff());

    // all blocks symmetric
    CHECK((s.A - s.A.transpose()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK((s.D - s.D.transpose()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK((s.Es - s.Es.transpose()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("section inertia integrates density moments") {
    const auto m = section_inertia({isotropic(70e9, 0.3, 2700, 0.01)});
    CHECK(m.I0 == doctest::Approx(27.0).epsilon(1e-12));
    CHECK(m.I1 == doctest::Approx(2700 * 0.01 * 0.01 * 0.01 / 12).epsilon(1e-12));
}

#pragma once

// Laminate mechanics for plates with curvilinear (variable stiffness) fiber
// paths: ply data, the linear fiber-angle law theta(x), the tow curvature
// feasibility check, transformed ply stiffness, and through-thickness
// integration into the A/B/D and transverse-shear stiffness blocks.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "vscl/math.hpp"

namespace vscl {

// Maximum fiber curvature a tow-placement head can lay down, 1/m.
inline constexpr double kMaxFiberCurvature = 3.28;

struct Ply {
    double E1 = 0;         ///< longitudinal modulus, Pa
    double E2 = 0;         ///< transverse modulus, Pa
    double G12 = 0;        ///< in-plane shear modulus, Pa
    double G13 = 0;        ///< transverse shear modulus, Pa
    double G23 = 0;        ///< transverse shear modulus, Pa
    double nu12 = 0;       ///< major Poisson ratio
    double rho = 0;        ///< density, kg/m^3
    double thickness = 0;  ///< ply thickness, m
    double theta0 = 0;     ///< fiber angle at x=0, degrees
    double theta1 = 0;     ///< fiber angle at x=+-a/2, degrees

    double nu21() const { return nu12 * E2 / E1; }

    void validate() const {
        if (!(E1 > 0 && E2 > 0 && G12 > 0 && G13 > 0 && G23 > 0))
            throw std::invalid_argument("Ply: moduli must be positive");
        if (!(rho > 0 && thickness > 0))
            throw std::invalid_argument("Ply: rho and thickness must be positive");
        double p = nu12 * nu21();
        if (!(p > 0.0 && p < 1.0))
            throw std::invalid_argument("Ply: nu12*nu21 must lie in (0,1)");
    }
};

// Fiber orientation at position x for a linear shift from theta0 at the plate
// center to theta1 at the panel ends x=+-a/2. All angles in degrees.
inline double fiber_angle(double x, double theta0, double theta1, double a) {
    if (std::abs(x) > a / 2 + 1e-12 * a)
        throw std::invalid_argument("fiber_angle: |x| exceeds a/2");
    double xa = std::min(std::abs(x), a / 2);
    return 2.0 * (theta1 - theta0) / a * xa + theta0;
}

struct CurvatureReport {
    double max_curvature = 0;  ///< max |kappa(x)| over the span, 1/m
    bool feasible = true;      ///< max below the tow-placement limit
};

// Tow curvature kappa(x) = theta'(x) * cos(theta(x)) for the linear angle
// law, sampled on a dense grid over [-a/2, a/2]. Angles enter in radians.
inline CurvatureReport check_curvature(double theta0_deg, double theta1_deg,
                                       double a, int grid = 1024) {
    if (!(a > 0)) throw std::invalid_argument("check_curvature: a must be positive");
    const double t0 = deg2rad(theta0_deg), t1 = deg2rad(theta1_deg);
    const double slope = 2.0 * (t1 - t0) / a;
    double kmax = 0;
    for (int i = 0; i <= grid; ++i) {
        double x = -a / 2 + a * static_cast<double>(i) / grid;
        double kappa = slope * std::cos(slope * std::abs(x) + t0);
        kmax = std::max(kmax, std::abs(kappa));
    }
    return {kmax, kmax < kMaxFiberCurvature};
}

// Transformed (global-axis) plane-stress stiffness of one ply at fiber angle
// theta (radians). Order: [11 12 22 16 26 66] plus the transverse block
// [44 45 55] with 44 along yz and 55 along xz.
struct QBar {
    double q11, q12, q22, q16, q26, q66;
    double q44, q45, q55;
};

inline QBar transformed_stiffness(const Ply& p, double theta_rad) {
    const double den = 1.0 - p.nu12 * p.nu21();
    const double Q11 = p.E1 / den;
    const double Q22 = p.E2 / den;
    const double Q12 = p.nu12 * p.E2 / den;
    const double Q66 = p.G12;
    const double Q44 = p.G23;
    const double Q55 = p.G13;

    const double c = std::cos(theta_rad), s = std::sin(theta_rad);
    const double c2 = c * c, s2 = s * s, c4 = c2 * c2, s4 = s2 * s2, cs = c * s;

    QBar q;
    q.q11 = Q11 * c4 + 2.0 * (Q12 + 2.0 * Q66) * c2 * s2 + Q22 * s4;
    q.q12 = (Q11 + Q22 - 4.0 * Q66) * c2 * s2 + Q12 * (c4 + s4);
    q.q22 = Q11 * s4 + 2.0 * (Q12 + 2.0 * Q66) * c2 * s2 + Q22 * c4;
    q.q16 = (Q11 - Q12 - 2.0 * Q66) * c2 * cs + (Q12 - Q22 + 2.0 * Q66) * s2 * cs;
    q.q26 = (Q11 - Q12 - 2.0 * Q66) * s2 * cs + (Q12 - Q22 + 2.0 * Q66) * c2 * cs;
    q.q66 = (Q11 + Q22 - 2.0 * Q12 - 2.0 * Q66) * c2 * s2 + Q66 * (c4 + s4);
    q.q44 = Q44 * c2 + Q55 * s2;
    q.q45 = (Q55 - Q44) * cs;
    q.q55 = Q55 * c2 + Q44 * s2;
    return q;
}

// Laminate section stiffness at one in-plane location: extension A, coupling
// B, bending D (3x3 each) and the shear-corrected transverse block Es (2x2,
// ordered [xz, yz]).
struct SectionStiffness {
    Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d B = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d D = Eigen::Matrix3d::Zero();
    Eigen::Matrix2d Es = Eigen::Matrix2d::Zero();
};

// Through-thickness integration of the transformed stiffness with ply
// interfaces stacked symmetrically about the mid-plane. The fiber angle of
// each ply is evaluated at position x, so the section stiffness of a
// variable-stiffness laminate is itself a function of x.
inline SectionStiffness abd_matrices(const std::vector<Ply>& plies, double x,
                                     double a, double shear_correction) {
    if (plies.empty()) throw std::invalid_argument("abd_matrices: no plies");
    double h = 0;
    for (const auto& p : plies) {
        p.validate();
        h += p.thickness;
    }
    SectionStiffness s;
    double z = -h / 2;
    for (const auto& p : plies) {
        const double z0 = z, z1 = z + p.thickness;
        z = z1;
        const double theta = deg2rad(fiber_angle(x, p.theta0, p.theta1, a));
        const QBar q = transformed_stiffness(p, theta);
        const double d1 = z1 - z0;
        const double d2 = (z1 * z1 - z0 * z0) / 2.0;
        const double d3 = (z1 * z1 * z1 - z0 * z0 * z0) / 3.0;

        Eigen::Matrix3d Q;
        Q << q.q11, q.q12, q.q16,
             q.q12, q.q22, q.q26,
             q.q16, q.q26, q.q66;
        s.A += Q * d1;
        s.B += Q * d2;
        s.D += Q * d3;

        Eigen::Matrix2d Qs;
        Qs << q.q55, q.q45,
              q.q45, q.q44;
        s.Es += shear_correction * Qs * d1;
    }
    return s;
}

// Translational and rotary inertia per unit area: I0 = integral of rho dz,
// I1 = integral of rho z^2 dz.
struct SectionInertia {
    double I0 = 0;
    double I1 = 0;
};

inline SectionInertia section_inertia(const std::vector<Ply>& plies) {
    double h = 0;
    for (const auto& p : plies) h += p.thickness;
    SectionInertia m;
    double z = -h / 2;
    for (const auto& p : plies) {
        const double z0 = z, z1 = z + p.thickness;
        z = z1;
        m.I0 += p.rho * (z1 - z0);
        m.I1 += p.rho * (z1 * z1 * z1 - z0 * z0 * z0) / 3.0;
    }
    return m;
}

inline double total_thickness(const std::vector<Ply>& plies) {
    double h = 0;
    for (const auto& p : plies) h += p.thickness;
    return h;
}

} // namespace vscl

#pragma once

// QUAD-4 shear-flexible plate element with five dofs per node, assumed
// natural transverse shear interpolation against locking, and subcell
// quadrature on elements cut by the cutout level set. Enriched columns carry
// the shifted Heaviside factor H(x) - H(x_j); only the material side of a cut
// element is integrated.

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <vector>

#include "vscl/mesh.hpp"

namespace vscl {

struct QuadratureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ElementMatrices {
    std::vector<int> dofs;  // global dof indices for the element columns
    Eigen::MatrixXd Ke;
    Eigen::MatrixXd Me;
};

namespace detail {

inline void shape_q4(double xi, double eta, std::array<double, 4>& N,
                     std::array<double, 4>& dNxi, std::array<double, 4>& dNeta) {
    const double xm = 1 - xi, xp = 1 + xi, em = 1 - eta, ep = 1 + eta;
    N = {0.25 * xm * em, 0.25 * xp * em, 0.25 * xp * ep, 0.25 * xm * ep};
    dNxi = {-0.25 * em, 0.25 * em, 0.25 * ep, -0.25 * ep};
    dNeta = {-0.25 * xm, -0.25 * xp, 0.25 * xp, 0.25 * xm};
}

struct QuadPoint {
    double xi, eta, w;  // reference-domain weight
};

// 2x2 Gauss rule on the reference square.
inline const std::vector<QuadPoint>& gauss_2x2() {
    static const double g = 1.0 / std::sqrt(3.0);
    static const std::vector<QuadPoint> pts = {
        {-g, -g, 1.0}, {g, -g, 1.0}, {g, g, 1.0}, {-g, g, 1.0}};
    return pts;
}

// Degree-2 rule with three interior points per triangle.
inline void append_tri_points(const RefTri& t, std::vector<QuadPoint>& out) {
    static const double bc[3][3] = {
        {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
        {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
        {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0}};
    const double area = tri_area(t);
    for (int q = 0; q < 3; ++q) {
        const double xi = bc[q][0] * t.v0[0] + bc[q][1] * t.v1[0] + bc[q][2] * t.v2[0];
        const double eta = bc[q][0] * t.v0[1] + bc[q][1] * t.v1[1] + bc[q][2] * t.v2[1];
        out.push_back({xi, eta, area / 3.0});
    }
}

} // namespace detail

// Element stiffness and mass. Void elements return empty matrices. Throws
// QuadratureError when the material subtriangulation of a split element
// collapses.
inline ElementMatrices element_matrices(const PlateModel& plate, const Mesh& mesh, int e) {
    using namespace detail;

    const auto& conn = mesh.elems[e];
    const ElementClass cls = mesh.eclass[e];
    ElementMatrices out;
    if (cls == ElementClass::Void) return out;

    std::array<double, 4> ex, ey, ephi;
    for (int k = 0; k < 4; ++k) {
        ex[k] = mesh.xs[conn[k]];
        ey[k] = mesh.ys[conn[k]];
        ephi[k] = mesh.phi[conn[k]];
    }

    // Column layout: standard blocks first, then enriched blocks, each of
    // five dofs in node order.
    std::vector<int> col_node;
    std::vector<bool> col_enriched;
    for (int k = 0; k < 4; ++k)
        if (mesh.std_dof[conn[k]] >= 0) {
            for (int d = 0; d < kDofPerNode; ++d) out.dofs.push_back(mesh.std_dof[conn[k]] + d);
            col_node.push_back(k);
            col_enriched.push_back(false);
        }
    for (int k = 0; k < 4; ++k)
        if (mesh.enr_dof[conn[k]] >= 0) {
            for (int d = 0; d < kDofPerNode; ++d) out.dofs.push_back(mesh.enr_dof[conn[k]] + d);
            col_node.push_back(k);
            col_enriched.push_back(true);
        }
    const int nblk = static_cast<int>(col_node.size());
    const int ncols = nblk * kDofPerNode;
    out.Ke = Eigen::MatrixXd::Zero(ncols, ncols);
    out.Me = Eigen::MatrixXd::Zero(ncols, ncols);

    // Quadrature set: full 2x2 for uncut elements, three points per material
    // subtriangle for split elements.
    std::vector<QuadPoint> qpts;
    if (cls == ElementClass::Split) {
        const double area_ref = 4.0;
        auto tris = material_subtriangles(ephi);
        double covered = 0;
        for (const auto& t : tris) {
            const double at = tri_area(t);
            if (at < 0) throw QuadratureError("element_matrices: negative subtriangle area");
            if (at < 1e-12 * area_ref) continue;  // collapsed sliver
            covered += at;
            append_tri_points(t, qpts);
        }
        if (qpts.empty() || covered < 1e-12 * area_ref)
            throw QuadratureError("element_matrices: subtriangulation degenerated");
    } else {
        qpts = gauss_2x2();
    }

    // Assumed-shear sampling at the four edge midpoints (covariant strains
    // interpolated linearly across the element).
    struct ShearSample {
        Eigen::RowVectorXd row;  // covariant shear over element columns
    };
    ShearSample sampA, sampB, sampC, sampD;  // A(0,1) C(0,-1): xi-strain, D(1,0) B(-1,0): eta-strain
    auto covariant_row = [&](double xi, double eta, bool xi_direction) {
        std::array<double, 4> N, dNxi, dNeta;
        shape_q4(xi, eta, N, dNxi, dNeta);
        double xd = 0, yd = 0;
        for (int k = 0; k < 4; ++k) {
            const double dk = xi_direction ? dNxi[k] : dNeta[k];
            xd += dk * ex[k];
            yd += dk * ey[k];
        }
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(ncols);
        for (int cb = 0; cb < nblk; ++cb) {
            const int k = col_node[cb];
            const int c0 = cb * kDofPerNode;
            const double dk = xi_direction ? dNxi[k] : dNeta[k];
            row(c0 + 2) = dk;           // w
            row(c0 + 3) = xd * N[k];    // bx
            row(c0 + 4) = yd * N[k];    // by
        }
        return row;
    };
    if (plate.assumed_shear) {
        sampA.row = covariant_row(0, 1, true);
        sampC.row = covariant_row(0, -1, true);
        sampD.row = covariant_row(1, 0, false);
        sampB.row = covariant_row(-1, 0, false);
    }

    const SectionInertia inertia = section_inertia(plate.plies);
    const double x_centroid = 0.25 * (ex[0] + ex[1] + ex[2] + ex[3]);

    Eigen::MatrixXd Bp(3, ncols), Bb(3, ncols), Bs(2, ncols), Nm(kDofPerNode, ncols);
    for (const auto& qp : qpts) {
        std::array<double, 4> N, dNxi, dNeta;
        shape_q4(qp.xi, qp.eta, N, dNxi, dNeta);

        Eigen::Matrix2d J;
        J << 0, 0, 0, 0;
        for (int k = 0; k < 4; ++k) {
            J(0, 0) += dNxi[k] * ex[k];
            J(0, 1) += dNxi[k] * ey[k];
            J(1, 0) += dNeta[k] * ex[k];
            J(1, 1) += dNeta[k] * ey[k];
        }
        const double detJ = J.determinant();
        if (detJ <= 0) throw QuadratureError("element_matrices: non-positive Jacobian");
        const Eigen::Matrix2d Jinv = J.inverse();

        std::array<double, 4> dNx, dNy;
        for (int k = 0; k < 4; ++k) {
            dNx[k] = Jinv(0, 0) * dNxi[k] + Jinv(0, 1) * dNeta[k];
            dNy[k] = Jinv(1, 0) * dNxi[k] + Jinv(1, 1) * dNeta[k];
        }

        double xg = 0;
        for (int k = 0; k < 4; ++k) xg += N[k] * ex[k];
        const double x_section = plate.fiber_angle_per_gauss ? xg : x_centroid;
        const SectionStiffness sec =
            abd_matrices(plate.plies, x_section, plate.a, plate.shear_correction);

        Bp.setZero();
        Bb.setZero();
        Bs.setZero();
        Nm.setZero();
        for (int cb = 0; cb < nblk; ++cb) {
            const int k = col_node[cb];
            const int c0 = cb * kDofPerNode;

            Bp(0, c0 + 0) = dNx[k];
            Bp(1, c0 + 1) = dNy[k];
            Bp(2, c0 + 0) = dNy[k];
            Bp(2, c0 + 1) = dNx[k];

            Bb(0, c0 + 3) = dNx[k];
            Bb(1, c0 + 4) = dNy[k];
            Bb(2, c0 + 3) = dNy[k];
            Bb(2, c0 + 4) = dNx[k];

            if (!plate.assumed_shear) {
                Bs(0, c0 + 2) = dNx[k];
                Bs(0, c0 + 3) = N[k];
                Bs(1, c0 + 2) = dNy[k];
                Bs(1, c0 + 4) = N[k];
            }

            for (int d = 0; d < kDofPerNode; ++d) Nm(d, c0 + d) = N[k];
        }
        if (plate.assumed_shear) {
            const Eigen::RowVectorXd gxi =
                0.5 * (1 + qp.eta) * sampA.row + 0.5 * (1 - qp.eta) * sampC.row;
            const Eigen::RowVectorXd geta =
                0.5 * (1 + qp.xi) * sampD.row + 0.5 * (1 - qp.xi) * sampB.row;
            Bs.row(0) = Jinv(0, 0) * gxi + Jinv(0, 1) * geta;
            Bs.row(1) = Jinv(1, 0) * gxi + Jinv(1, 1) * geta;
        }
        // Shifted Heaviside H(x) - H(x_j) scales enriched columns: quadrature
        // runs on the material side where H(x) = 1, so columns of cutout-side
        // nodes keep factor 1 and material-side enrichments would vanish.
        for (int cb = 0; cb < nblk; ++cb) {
            if (!col_enriched[cb]) continue;
            const double f = 1.0 - (ephi[col_node[cb]] > 0 ? 1.0 : 0.0);
            const int c0 = cb * kDofPerNode;
            Bp.middleCols(c0, kDofPerNode) *= f;
            Bb.middleCols(c0, kDofPerNode) *= f;
            Bs.middleCols(c0, kDofPerNode) *= f;
            Nm.middleCols(c0, kDofPerNode) *= f;
        }

        const double wdet = qp.w * detJ;
        out.Ke.noalias() += wdet * (Bp.transpose() * (sec.A * Bp) +
                                    Bp.transpose() * (sec.B * Bb) +
                                    Bb.transpose() * (sec.B * Bp) +
                                    Bb.transpose() * (sec.D * Bb) +
                                    Bs.transpose() * (sec.Es * Bs));

        Eigen::Matrix<double, 5, 5> rhoM = Eigen::Matrix<double, 5, 5>::Zero();
        rhoM(0, 0) = rhoM(1, 1) = rhoM(2, 2) = inertia.I0;
        rhoM(3, 3) = rhoM(4, 4) = inertia.I1;
        out.Me.noalias() += wdet * (Nm.transpose() * (rhoM * Nm));
    }

    // exact symmetry for the eigensolver
    out.Ke = 0.5 * (out.Ke + out.Ke.transpose()).eval();
    out.Me = 0.5 * (out.Me + out.Me.transpose()).eval();
    return out;
}

} // namespace vscl

#pragma once

// Structured QUAD-4 mesh with a nodal level set describing the cutout.
// Elements are classified against the zero level curve; nodes inside the
// cutout lose their standard dofs and nodes of cut elements on the void side
// carry Heaviside-enriched dofs instead.

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "vscl/plate.hpp"

namespace vscl {

enum class ElementClass { Standard, Split, Blending, Void };

inline constexpr int kDofPerNode = 5;  // u0 v0 w0 bx by

namespace detail {

struct RefTri {
    std::array<double, 2> v0, v1, v2;
};

inline double tri_area(const RefTri& t) {
    return 0.5 * ((t.v1[0] - t.v0[0]) * (t.v2[1] - t.v0[1]) -
                  (t.v2[0] - t.v0[0]) * (t.v1[1] - t.v0[1]));
}

// Material-side subtriangulation of a cut element in reference coordinates.
// The quad is fanned into four triangles about its center; each mixed-sign
// triangle is cut along the linearly interpolated zero level line.
inline std::vector<RefTri> material_subtriangles(const std::array<double, 4>& phi_n) {
    const std::array<std::array<double, 2>, 4> corner = {
        {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
    const double phic = 0.25 * (phi_n[0] + phi_n[1] + phi_n[2] + phi_n[3]);

    std::vector<RefTri> material;
    auto emit = [&](const RefTri& t) {
        if (tri_area(t) >= 0) material.push_back(t);
        else material.push_back({t.v0, t.v2, t.v1});
    };

    for (int k = 0; k < 4; ++k) {
        RefTri tri{corner[k], corner[(k + 1) % 4], {0, 0}};
        std::array<double, 3> p = {phi_n[k], phi_n[(k + 1) % 4], phic};

        const bool pos0 = p[0] >= 0, pos1 = p[1] >= 0, pos2 = p[2] >= 0;
        const int npos = int(pos0) + int(pos1) + int(pos2);
        if (npos == 3) { emit(tri); continue; }
        if (npos == 0) continue;

        std::array<std::array<double, 2>, 3> v = {tri.v0, tri.v1, tri.v2};
        // rotate so vertex 0 is the lone-signed one
        int lone;
        if (npos == 1) lone = pos0 ? 0 : (pos1 ? 1 : 2);
        else lone = !pos0 ? 0 : (!pos1 ? 1 : 2);
        std::array<int, 3> idx = {lone, (lone + 1) % 3, (lone + 2) % 3};

        auto cut = [&](int i, int j) {
            const double t = p[i] / (p[i] - p[j]);
            return std::array<double, 2>{v[i][0] + t * (v[j][0] - v[i][0]),
                                         v[i][1] + t * (v[j][1] - v[i][1])};
        };
        const auto q01 = cut(idx[0], idx[1]);
        const auto q02 = cut(idx[0], idx[2]);
        if (npos == 1) {
            emit({v[idx[0]], q01, q02});
        } else {
            emit({q01, v[idx[1]], v[idx[2]]});
            emit({q01, v[idx[2]], q02});
        }
    }
    return material;
}

inline double material_area_fraction(const std::array<double, 4>& phi_n) {
    double area = 0;
    for (const auto& t : material_subtriangles(phi_n)) area += std::abs(tri_area(t));
    return area / 4.0;
}

} // namespace detail

struct Mesh {
    std::vector<double> xs, ys;              // node coordinates
    std::vector<std::array<int, 4>> elems;   // CCW connectivity
    std::vector<double> phi;                 // nodal level set, negative inside cutout
    std::vector<ElementClass> eclass;
    std::vector<bool> node_enriched;         // member of the enriched node set
    std::vector<int> std_dof;                // first of 5 standard dofs, -1 if removed
    std::vector<int> enr_dof;                // first of 5 enriched dofs, -1 if none
    int n_dofs = 0;

    int n_nodes() const { return static_cast<int>(xs.size()); }
    int n_elems() const { return static_cast<int>(elems.size()); }
};

inline void classify_and_number(Mesh& m);

// Builds the structured mesh for a plate centered at the origin and derives
// the dof layout. With enrichment disabled the level-set machinery is
// bypassed entirely so an uncut plate assembles through the plain FEM path.
inline Mesh build_mesh(const PlateModel& plate) {
    plate.validate();
    if (plate.cutout && !plate.enrichment_enabled)
        throw std::invalid_argument("build_mesh: cutout requires enrichment_enabled");

    const int nx = plate.mesh_nx, ny = plate.mesh_ny;
    Mesh m;
    m.xs.resize(static_cast<size_t>((nx + 1) * (ny + 1)));
    m.ys.resize(m.xs.size());
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            const int id = j * (nx + 1) + i;
            m.xs[id] = -plate.a / 2 + plate.a * static_cast<double>(i) / nx;
            m.ys[id] = -plate.b / 2 + plate.b * static_cast<double>(j) / ny;
        }
    m.elems.reserve(static_cast<size_t>(nx * ny));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int n0 = j * (nx + 1) + i;
            m.elems.push_back({n0, n0 + 1, n0 + nx + 2, n0 + nx + 1});
        }

    m.phi.assign(m.xs.size(), std::numeric_limits<double>::max());
    if (plate.cutout) {
        // Snap near-zero nodal values to the material side so the cut never
        // degenerates through a node.
        const double snap = 1e-9 * std::min(plate.a, plate.b);
        for (int i = 0; i < m.n_nodes(); ++i) {
            double v = plate.cutout->level_set(m.xs[i], m.ys[i]);
            if (std::abs(v) < snap) v = snap;
            m.phi[i] = v;
        }
    }
    classify_and_number(m);
    return m;
}

// Classification and dof numbering; separated so tests can renumber nodes and
// rebuild the layout.
inline void classify_and_number(Mesh& m) {
    const int nn = m.n_nodes(), ne = m.n_elems();
    m.eclass.assign(static_cast<size_t>(ne), ElementClass::Standard);
    m.node_enriched.assign(static_cast<size_t>(nn), false);

    for (int e = 0; e < ne; ++e) {
        std::array<double, 4> p;
        double pmin = std::numeric_limits<double>::max();
        double pmax = -std::numeric_limits<double>::max();
        for (int k = 0; k < 4; ++k) {
            p[k] = m.phi[m.elems[e][k]];
            pmin = std::min(pmin, p[k]);
            pmax = std::max(pmax, p[k]);
        }
        if (pmin > 0) {
            m.eclass[e] = ElementClass::Standard;
        } else if (pmax < 0) {
            m.eclass[e] = ElementClass::Void;
        } else if (detail::material_area_fraction(p) < 1e-12) {
            // cut grazes the element: no resolvable material left
            m.eclass[e] = ElementClass::Void;
        } else {
            m.eclass[e] = ElementClass::Split;
            for (int k = 0; k < 4; ++k) m.node_enriched[m.elems[e][k]] = true;
        }
    }
    // Material elements sharing an enriched node are blending elements. With
    // the shifted Heaviside their enriched contributions vanish identically,
    // so they integrate like standard elements.
    for (int e = 0; e < ne; ++e) {
        if (m.eclass[e] != ElementClass::Standard) continue;
        for (int k = 0; k < 4; ++k)
            if (m.node_enriched[m.elems[e][k]]) {
                m.eclass[e] = ElementClass::Blending;
                break;
            }
    }

    // nodes supported by at least one non-void element
    std::vector<bool> supported(static_cast<size_t>(nn), false);
    for (int e = 0; e < ne; ++e) {
        if (m.eclass[e] == ElementClass::Void) continue;
        for (int k = 0; k < 4; ++k) supported[m.elems[e][k]] = true;
    }

    m.std_dof.assign(static_cast<size_t>(nn), -1);
    m.enr_dof.assign(static_cast<size_t>(nn), -1);
    int next = 0;
    for (int i = 0; i < nn; ++i) {
        if (m.phi[i] > 0 && supported[static_cast<size_t>(i)]) {
            m.std_dof[i] = next;
            next += kDofPerNode;
        }
        // Enriched dofs substitute the removed standard dofs of cutout-side
        // nodes on the material part of split elements. Enriched nodes on the
        // material side would carry an identically zero shifted Heaviside, so
        // no dofs are allocated for them.
        if (m.node_enriched[i] && m.phi[i] < 0) {
            m.enr_dof[i] = next;
            next += kDofPerNode;
        }
    }
    m.n_dofs = next;
}

} // namespace vscl

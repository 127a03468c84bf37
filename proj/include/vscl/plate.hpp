#pragma once

// Deterministic problem definition: plate geometry, layup, optional cutout,
// boundary conditions and mesh density.

#include <optional>
#include <stdexcept>
#include <vector>

#include "vscl/laminate.hpp"

namespace vscl {

// Elliptical/circular cutout. d_major is the full major axis (so a circle of
// radius r has d_major = 2r), ellipticity = c/d with c the full minor axis.
struct Cutout {
    double xc = 0;
    double yc = 0;
    double d_major = 0;
    double ellipticity = 1.0;

    double rx() const { return d_major / 2.0; }
    double ry() const { return ellipticity * d_major / 2.0; }

    // The nominal geometry keeps c as the minor axis (ellipticity <= 1);
    // sampled perturbations of a circular cutout cross 1 by a hair, so the
    // runtime check only guards against a mislabeled axis pair.
    void validate() const {
        if (!(d_major > 0)) throw std::invalid_argument("Cutout: d_major must be positive");
        if (!(ellipticity > 0 && ellipticity <= 1.25))
            throw std::invalid_argument("Cutout: ellipticity must lie in (0, 1]");
    }

    // Approximate signed distance: negative inside the cutout. The normalized
    // ellipse function is rescaled by its gradient so nodal values carry a
    // metric length; for a circle this reduces to |x-xc| - r exactly.
    double level_set(double x, double y) const {
        const double dx = x - xc, dy = y - yc;
        const double ax = rx(), ay = ry();
        const double rho = std::sqrt(dx * dx / (ax * ax) + dy * dy / (ay * ay));
        if (rho == 0.0) return -std::min(ax, ay);
        const double gnorm =
            std::sqrt(dx * dx / (ax * ax * ax * ax) + dy * dy / (ay * ay * ay * ay)) / rho;
        return (rho - 1.0) / gnorm;
    }
};

enum class BoundaryCondition { SSSS };

struct PlateModel {
    double a = 1.0;  ///< length along x, m
    double b = 1.0;  ///< width along y, m
    std::vector<Ply> plies;
    std::optional<Cutout> cutout;
    BoundaryCondition bc = BoundaryCondition::SSSS;
    int mesh_nx = 10;
    int mesh_ny = 10;
    double shear_correction = 5.0 / 6.0;

    bool enforce_curvature_limit = true;
    bool fiber_angle_per_gauss = true;   ///< false: evaluate theta at element centroid
    bool assumed_shear = true;           ///< false: plain bilinear shear (diagnostics)
    bool enrichment_enabled = true;      ///< false: plain FEM path, cutouts rejected

    double thickness() const { return total_thickness(plies); }

    void validate() const {
        if (!(a > 0 && b > 0)) throw std::invalid_argument("PlateModel: a,b must be positive");
        if (plies.empty()) throw std::invalid_argument("PlateModel: no plies");
        if (mesh_nx < 2 || mesh_ny < 2)
            throw std::invalid_argument("PlateModel: mesh_nx, mesh_ny must be >= 2");
        for (const auto& p : plies) {
            p.validate();
            if (enforce_curvature_limit) {
                auto cr = check_curvature(p.theta0, p.theta1, a);
                if (!cr.feasible)
                    throw std::invalid_argument("PlateModel: fiber curvature exceeds limit");
            }
        }
        if (cutout) {
            cutout->validate();
            const double margin_x = cutout->rx(), margin_y = cutout->ry();
            if (cutout->xc - margin_x <= -a / 2 || cutout->xc + margin_x >= a / 2 ||
                cutout->yc - margin_y <= -b / 2 || cutout->yc + margin_y >= b / 2)
                throw std::invalid_argument("PlateModel: cutout must lie strictly inside the plate");
        }
    }
};

} // namespace vscl

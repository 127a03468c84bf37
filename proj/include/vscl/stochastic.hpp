#pragma once

// Random-variable catalog, normal/lognormal transforms, Latin Hypercube
// sampling and the frequency-based limit state. Variables are independent;
// the standard-normal image of the catalog is the working space for FORM,
// SORM and the samplers.

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vscl/math.hpp"
#include "vscl/plate.hpp"

namespace vscl {

enum class Family { Normal, LogNormal };
enum class DispersionKind { CoV, AbsoluteStd };

// Model parameter a random variable binds to. Material targets apply to all
// plies; ply-indexed targets carry the ply number.
enum class Target {
    E1, E2, G12, G13, G23, Nu12, Rho,
    CutoutDMajor, CutoutEllipticity, CutoutXc, CutoutYc,
    PlyThickness, PlyAngleDelta
};

inline bool target_is_ply_indexed(Target t) {
    return t == Target::PlyThickness || t == Target::PlyAngleDelta;
}

struct RandomVariable {
    std::string name;
    Target target = Target::E1;
    int ply = -1;  ///< ply index for ply-indexed targets
    Family family = Family::Normal;
    double mean = 0;
    double dispersion = 0;  ///< CoV or absolute std depending on kind
    DispersionKind kind = DispersionKind::CoV;

    double stddev() const {
        return kind == DispersionKind::CoV ? dispersion * std::abs(mean) : dispersion;
    }
};

// Moments of the underlying normal for a lognormal with the given mean and
// standard deviation.
inline std::pair<double, double> lognormal_to_normal(double mean_y, double std_y) {
    if (!(mean_y > 0 && std_y > 0))
        throw std::invalid_argument("lognormal_to_normal: mean and std must be positive");
    const double mu = 2.0 * std::log(mean_y) - 0.5 * std::log(std_y * std_y + mean_y * mean_y);
    const double s2 = -2.0 * std::log(mean_y) + std::log(std_y * std_y + mean_y * mean_y);
    return {mu, std::sqrt(s2)};
}

// Per-variable parameters of the underlying normal space.
struct GaussianSpace {
    struct Var {
        std::string name;
        Family family = Family::Normal;
        double mu = 0;     ///< normal mean, or mean of ln X
        double sigma = 0;  ///< normal std, or std of ln X
        double mean_physical = 0;
        double std_physical = 0;
    };
    std::vector<Var> vars;

    int dim() const { return static_cast<int>(vars.size()); }

    static GaussianSpace from_catalog(const std::vector<RandomVariable>& catalog) {
        GaussianSpace s;
        for (const auto& rv : catalog) {
            Var v;
            v.name = rv.name;
            v.family = rv.family;
            v.mean_physical = rv.mean;
            v.std_physical = rv.stddev();
            if (!(v.std_physical > 0))
                throw std::invalid_argument("GaussianSpace: variable '" + rv.name +
                                            "' has non-positive std");
            if (rv.family == Family::LogNormal) {
                auto [mu, sig] = lognormal_to_normal(rv.mean, v.std_physical);
                v.mu = mu;
                v.sigma = sig;
            } else {
                v.mu = rv.mean;
                v.sigma = v.std_physical;
            }
            s.vars.push_back(v);
        }
        return s;
    }

    double to_z(double x, int i) const {
        const auto& v = vars[static_cast<size_t>(i)];
        if (v.family == Family::LogNormal) {
            if (!(x > 0))
                throw std::domain_error("to_z: lognormal variable '" + v.name + "' requires x > 0");
            return (std::log(x) - v.mu) / v.sigma;
        }
        return (x - v.mu) / v.sigma;
    }

    double from_z(double z, int i) const {
        const auto& v = vars[static_cast<size_t>(i)];
        if (v.family == Family::LogNormal) return std::exp(v.mu + v.sigma * z);
        return v.mu + v.sigma * z;
    }

    // dx/dz and d2x/dz2, the chain-rule factors that carry physical-space
    // derivatives into standard normal space.
    double dxdz(double z, int i) const {
        const auto& v = vars[static_cast<size_t>(i)];
        if (v.family == Family::LogNormal) return v.sigma * from_z(z, i);
        return v.sigma;
    }
    double d2xdz2(double z, int i) const {
        const auto& v = vars[static_cast<size_t>(i)];
        if (v.family == Family::LogNormal) return v.sigma * v.sigma * from_z(z, i);
        return 0.0;
    }

    Eigen::VectorXd to_z(const Eigen::VectorXd& x) const {
        Eigen::VectorXd z(dim());
        for (int i = 0; i < dim(); ++i) z(i) = to_z(x(i), i);
        return z;
    }
    Eigen::VectorXd from_z(const Eigen::VectorXd& z) const {
        Eigen::VectorXd x(dim());
        for (int i = 0; i < dim(); ++i) x(i) = from_z(z(i), i);
        return x;
    }
    Eigen::VectorXd mean_point() const {
        Eigen::VectorXd x(dim());
        for (int i = 0; i < dim(); ++i) x(i) = vars[static_cast<size_t>(i)].mean_physical;
        return x;
    }
};

enum class SampleProvenance { LhsGlobal, LhsAroundMpp, MonteCarlo, ImportanceSampling };

struct SampleSet {
    Eigen::MatrixXd x;  ///< n_samples x n_vars, physical space
    Eigen::VectorXd g;  ///< limit-state values, empty until evaluated
    SampleProvenance provenance = SampleProvenance::LhsGlobal;
    std::uint64_t seed = 0;

    int n() const { return static_cast<int>(x.rows()); }
    int dim() const { return static_cast<int>(x.cols()); }

    void check() const {
        if (!x.allFinite()) throw std::runtime_error("SampleSet: NaN entries");
        if (g.size() != 0 && g.size() != x.rows())
            throw std::runtime_error("SampleSet: g length mismatch");
    }
};

// Latin Hypercube sample with one sample per marginal stratum. Without a
// center the strata partition the central probability mass (+-4 sigma in z);
// with a center they partition the hypercube center +- halfwidth, the window
// used when retraining around an MPP.
inline SampleSet lhs_sample(int n, const GaussianSpace& space, std::uint64_t seed,
                            const std::optional<Eigen::VectorXd>& center = std::nullopt,
                            double halfwidth = 1.0) {
    if (n < 2) throw std::invalid_argument("lhs_sample: n must be >= 2");
    const int d = space.dim();
    Rng rng(seed);
    Eigen::MatrixXd z(n, d);
    for (int j = 0; j < d; ++j) {
        auto perm = rng.permutation(n);
        for (int i = 0; i < n; ++i) {
            const double u = (perm[static_cast<size_t>(i)] + rng.uniform()) / n;
            if (center) {
                const double c = (*center)(j);
                z(i, j) = c - halfwidth + 2.0 * halfwidth * u;
            } else {
                const double lo = norm_cdf(-4.0), hi = norm_cdf(4.0);
                z(i, j) = norm_quantile(lo + (hi - lo) * u);
            }
        }
    }
    SampleSet out;
    out.x.resize(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.x(i, j) = space.from_z(z(i, j), j);
    out.provenance = center ? SampleProvenance::LhsAroundMpp : SampleProvenance::LhsGlobal;
    out.seed = seed;
    return out;
}

// g < 0 is failure: the realized fundamental frequency fell below the
// reference value lambda_r.
inline double limit_state(double lambda_p, double lambda_r) {
    if (!(lambda_r > 0)) throw std::invalid_argument("limit_state: lambda_r must be positive");
    return lambda_p / lambda_r - 1.0;
}

// Applies a physical-space sample to the base plate. Material targets set
// every ply; ply-indexed targets address one ply; the angle perturbation is
// added to both ends of the fiber path.
inline PlateModel apply_sample(const PlateModel& base, const std::vector<RandomVariable>& catalog,
                               const Eigen::VectorXd& x) {
    if (x.size() != static_cast<Eigen::Index>(catalog.size()))
        throw std::invalid_argument("apply_sample: dimension mismatch");
    PlateModel p = base;
    for (size_t k = 0; k < catalog.size(); ++k) {
        const auto& rv = catalog[k];
        const double v = x(static_cast<Eigen::Index>(k));
        auto for_each_ply = [&](auto&& f) {
            if (target_is_ply_indexed(rv.target)) {
                if (rv.ply < 0 || rv.ply >= static_cast<int>(p.plies.size()))
                    throw std::invalid_argument("apply_sample: ply index out of range for '" +
                                                rv.name + "'");
                f(p.plies[static_cast<size_t>(rv.ply)]);
            } else {
                for (auto& ply : p.plies) f(ply);
            }
        };
        switch (rv.target) {
            case Target::E1: for_each_ply([&](Ply& q) { q.E1 = v; }); break;
            case Target::E2: for_each_ply([&](Ply& q) { q.E2 = v; }); break;
            case Target::G12: for_each_ply([&](Ply& q) { q.G12 = v; }); break;
            case Target::G13: for_each_ply([&](Ply& q) { q.G13 = v; }); break;
            case Target::G23: for_each_ply([&](Ply& q) { q.G23 = v; }); break;
            case Target::Nu12: for_each_ply([&](Ply& q) { q.nu12 = v; }); break;
            case Target::Rho: for_each_ply([&](Ply& q) { q.rho = v; }); break;
            case Target::PlyThickness: for_each_ply([&](Ply& q) { q.thickness = v; }); break;
            case Target::PlyAngleDelta:
                for_each_ply([&](Ply& q) {
                    q.theta0 += v;
                    q.theta1 += v;
                });
                break;
            case Target::CutoutDMajor:
                if (!p.cutout) throw std::invalid_argument("apply_sample: no cutout to bind d");
                p.cutout->d_major = v;
                break;
            case Target::CutoutEllipticity:
                if (!p.cutout) throw std::invalid_argument("apply_sample: no cutout to bind c/d");
                p.cutout->ellipticity = v;
                break;
            case Target::CutoutXc:
                if (!p.cutout) throw std::invalid_argument("apply_sample: no cutout to bind xc");
                p.cutout->xc = v;
                break;
            case Target::CutoutYc:
                if (!p.cutout) throw std::invalid_argument("apply_sample: no cutout to bind yc");
                p.cutout->yc = v;
                break;
        }
    }
    return p;
}

} // namespace vscl

#pragma once

// Reliability sensitivity: connection-weight (Garson) indices read off the
// trained network, and variance-based total-effect indices of the failure
// indicator computed with a pick-freeze double-matrix estimator, optionally
// reweighted with importance samples.

#include <Eigen/Dense>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "vscl/math.hpp"
#include "vscl/reliability.hpp"
#include "vscl/stochastic.hpp"
#include "vscl/surrogate.hpp"

namespace vscl {

struct VariableGroup {
    std::string name;
    std::vector<int> members;  ///< variable indices pooled into this group
};

inline std::vector<VariableGroup> ungrouped(const GaussianSpace& space) {
    std::vector<VariableGroup> gs;
    for (int i = 0; i < space.dim(); ++i)
        gs.push_back({space.vars[static_cast<size_t>(i)].name, {i}});
    return gs;
}

enum class SensitivityMethod { Garson, TotalEffectMcs, TotalEffectIs };

struct SensitivityReport {
    SensitivityMethod method = SensitivityMethod::Garson;
    std::vector<std::string> names;
    std::vector<double> index;
    bool degenerate_statistics = false;  ///< too few failures for a stable estimate

    int top_rank() const {
        int best = 0;
        for (size_t i = 1; i < index.size(); ++i)
            if (index[i] > index[static_cast<size_t>(best)]) best = static_cast<int>(i);
        return best;
    }
};

// Garson weight partition: P_ij = |w_out,i| |w_i,j| over hidden nodes i and
// inputs j, row-normalized, column-summed and normalized to unit total.
// Hidden nodes with all-zero input weights drop out of the partition.
inline SensitivityReport garson_si(const SurrogateNet& net,
                                   const std::vector<VariableGroup>& groups) {
    const int J = net.hidden(), I = net.inputs();
    Eigen::VectorXd S = Eigen::VectorXd::Zero(I);
    for (int i = 0; i < J; ++i) {
        Eigen::VectorXd P = (net.w1.row(i).cwiseAbs() * std::abs(net.w2(i))).transpose();
        const double rowsum = P.sum();
        if (rowsum <= 0) continue;  // degenerate hidden node
        S += P / rowsum;
    }
    const double total = S.sum();
    SensitivityReport rep;
    rep.method = SensitivityMethod::Garson;
    for (const auto& grp : groups) {
        double v = 0;
        for (int m : grp.members) v += S(m);
        rep.names.push_back(grp.name);
        rep.index.push_back(total > 0 ? v / total : 0.0);
    }
    return rep;
}

// Optional reuse of importance samples: z-space rows with their f/h weights.
struct IsReuse {
    Eigen::MatrixXd z;
    Eigen::VectorXd weights;
};

// Total-effect index of each group on the failure indicator I(g<0), Jansen
// pick-freeze form: T = E[(Y_A - Y_AB)^2] / (2 Var Y) with the group columns
// of A replaced by the second matrix. With reused importance samples the A
// rows carry their density-ratio weights.
inline SensitivityReport total_effect_indices(
    const std::function<double(const Eigen::VectorXd&)>& g, const GaussianSpace& space, long N,
    std::uint64_t seed, const std::vector<VariableGroup>& groups,
    const std::optional<IsReuse>& reuse = std::nullopt) {
    const int d = space.dim();
    Rng rng(seed);

    Eigen::MatrixXd A, B;
    Eigen::VectorXd w;
    if (reuse) {
        if (reuse->z.cols() != d || reuse->z.rows() != reuse->weights.size())
            throw std::invalid_argument("total_effect_indices: malformed importance-sample reuse");
        N = reuse->z.rows();
        A = reuse->z;
        w = reuse->weights;
    } else {
        A.resize(N, d);
        for (long i = 0; i < N; ++i)
            for (int j = 0; j < d; ++j) A(i, j) = rng.normal();
        w = Eigen::VectorXd::Ones(N);
    }
    B.resize(N, d);
    for (long i = 0; i < N; ++i)
        for (int j = 0; j < d; ++j) B(i, j) = rng.normal();

    Eigen::VectorXd yA(N);
    for (long i = 0; i < N; ++i)
        yA(i) = g(space.from_z(A.row(i).transpose())) < 0 ? 1.0 : 0.0;

    const double Nd = static_cast<double>(N);
    const double pf = (w.array() * yA.array()).sum() / Nd;
    const double var_y = pf * (1.0 - pf);

    SensitivityReport rep;
    rep.method = reuse ? SensitivityMethod::TotalEffectIs : SensitivityMethod::TotalEffectMcs;
    rep.degenerate_statistics = pf * Nd < 50;

    Eigen::VectorXd zrow(d);
    for (const auto& grp : groups) {
        double acc = 0;
        for (long i = 0; i < N; ++i) {
            zrow = A.row(i).transpose();
            for (int m : grp.members) zrow(m) = B(i, m);
            const double yAB = g(space.from_z(zrow)) < 0 ? 1.0 : 0.0;
            const double dyn = yA(i) - yAB;
            acc += w(i) * dyn * dyn;
        }
        rep.names.push_back(grp.name);
        rep.index.push_back(var_y > 0 ? acc / (2.0 * Nd * var_y) : 0.0);
    }
    return rep;
}

} // namespace vscl

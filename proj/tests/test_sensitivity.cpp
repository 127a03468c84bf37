#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <numeric>

#include "vscl/sensitivity.hpp"

using namespace vscl;

namespace {

GaussianSpace unit_space(int d) {
    std::vector<RandomVariable> cat;
    for (int i = 0; i < d; ++i) {
        RandomVariable v;
        v.name = "z" + std::to_string(i + 1);
        v.family = Family::Normal;
        v.mean = 0;
        v.dispersion = 1;
        v.kind = DispersionKind::AbsoluteStd;
        cat.push_back(v);
    }
    return GaussianSpace::from_catalog(cat);
}

SurrogateNet filled_net(const Eigen::MatrixXd& w1, const Eigen::RowVectorXd& w2) {
    SurrogateNet net;
    net.w1 = w1;
    net.b1 = Eigen::VectorXd::Zero(w1.rows());
    net.w2 = w2;
    net.b2 = 0;
    net.xmin = Eigen::VectorXd::Constant(w1.cols(), -1);
    net.xmax = Eigen::VectorXd::Constant(w1.cols(), 1);
    return net;
}

// independent route: classic pick-freeze total index T_i = 1 - S_~i with the
// Kucherenko mean-product centering
double bruteforce_total_index(const std::function<double(const Eigen::VectorXd&)>& g, int d,
                              int idx, long N, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd A(N, d), B(N, d);
    for (long i = 0; i < N; ++i)
        for (int j = 0; j < d; ++j) {
            A(i, j) = rng.normal();
            B(i, j) = rng.normal();
        }
    double mA = 0, mB = 0;
    Eigen::VectorXd yA(N), yB(N);
    for (long i = 0; i < N; ++i) {
        yA(i) = g(A.row(i).transpose()) < 0 ? 1 : 0;
        yB(i) = g(B.row(i).transpose()) < 0 ? 1 : 0;
        mA += yA(i);
        mB += yB(i);
    }
    mA /= N;
    mB /= N;
    double cross = 0;
    Eigen::VectorXd row(d);
    for (long i = 0; i < N; ++i) {
        row = A.row(i).transpose();
        row(idx) = B(i, idx);  // only column idx refreshed: estimates S_~idx via complement
        // freeze everything except idx: swap all OTHER columns from B
        for (int j = 0; j < d; ++j) row(j) = (j == idx) ? A(i, idx) : B(i, j);
        cross += yA(i) * (g(row) < 0 ? 1 : 0);
    }
    cross /= N;
    const double var = mA * (1 - mA);
    const double s_complement = (cross - mA * mB) / var;
    return 1.0 - s_complement;
}

} // namespace

TEST_CASE("garson partition basics") {
    SUBCASE("single active input takes the whole index") {
        Eigen::MatrixXd w1(3, 2);
        w1 << 0.5, 0, -1.2, 0, 0.3, 0;
        Eigen::RowVectorXd w2(3);
        w2 << 1, -2, 0.7;
        const auto rep = garson_si(filled_net(w1, w2), ungrouped(unit_space(2)));
        CHECK(rep.index[0] == doctest::Approx(1.0));
        CHECK(rep.index[1] == doctest::Approx(0.0));
    }
    SUBCASE("mirrored weight magnitudes split evenly") {
        Eigen::MatrixXd w1(2, 2);
        w1 << 0.8, -0.8, -0.3, 0.3;
        Eigen::RowVectorXd w2(2);
        w2 << 1.0, 2.0;
        const auto rep = garson_si(filled_net(w1, w2), ungrouped(unit_space(2)));
        CHECK(rep.index[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(rep.index[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("degenerate hidden rows are dropped, sum stays one") {
        Eigen::MatrixXd w1(3, 2);
        w1 << 0.5, 0.25, 0, 0, 1.0, -1.0;
        Eigen::RowVectorXd w2(3);
        w2 << 1, 5, 1;
        const auto rep = garson_si(filled_net(w1, w2), ungrouped(unit_space(2)));
        CHECK(rep.index[0] + rep.index[1] == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("garson index sums to one and is permutation equivariant") {
    Rng rng(5);
    Eigen::MatrixXd w1(7, 4);
    Eigen::RowVectorXd w2(7);
    for (int i = 0; i < 7; ++i) {
        w2(i) = rng.normal();
        for (int j = 0; j < 4; ++j) w1(i, j) = rng.normal();
    }
    const auto rep = garson_si(filled_net(w1, w2), ungrouped(unit_space(4)));
    CHECK(std::accumulate(rep.index.begin(), rep.index.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-10));

    // permute input columns 0<->2
    Eigen::MatrixXd w1p = w1;
    w1p.col(0) = w1.col(2);
    w1p.col(2) = w1.col(0);
    const auto repp = garson_si(filled_net(w1p, w2), ungrouped(unit_space(4)));
    CHECK(repp.index[0] == doctest::Approx(rep.index[2]).epsilon(1e-12));
    CHECK(repp.index[2] == doctest::Approx(rep.index[0]).epsilon(1e-12));
    CHECK(repp.index[1] == doctest::Approx(rep.index[1]).epsilon(1e-12));
}

TEST_CASE("garson ranks a trained dominant input first") {
    // g(x1,x2) = 5 x1 + x2 on equal input scales
    Rng rng(9);
    SampleSet s;
    s.x.resize(300, 2);
    s.g.resize(300);
    for (int i = 0; i < 300; ++i) {
        s.x(i, 0) = 2 * rng.uniform() - 1;
        s.x(i, 1) = 2 * rng.uniform() - 1;
        s.g(i) = 5 * s.x(i, 0) + s.x(i, 1);
    }
    TrainConfig tc;
    tc.hidden = 6;
    tc.seed = 3;
    tc.learning_rate = 0.1;
    tc.max_epochs = 10000;
    auto [net, rep] = train(s, tc);

    const auto si = garson_si(net, ungrouped(unit_space(2)));
    CHECK(si.index[0] > si.index[1]);

    // hand-computed partition of the final weights must agree exactly
    Eigen::VectorXd S = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < net.hidden(); ++i) {
        const double p0 = std::abs(net.w2(i)) * std::abs(net.w1(i, 0));
        const double p1 = std::abs(net.w2(i)) * std::abs(net.w1(i, 1));
        if (p0 + p1 > 0) {
            S(0) += p0 / (p0 + p1);
            S(1) += p1 / (p0 + p1);
        }
    }
    CHECK(si.index[0] == doctest::Approx(S(0) / (S(0) + S(1))).epsilon(1e-12));
}

TEST_CASE("total effect of a single active variable is one") {
    const GaussianSpace space = unit_space(3);
    auto g = [](const Eigen::VectorXd& x) { return 1.0 - x(0); };
    const auto rep = total_effect_indices(g, space, 100000, 11, ungrouped(space));
    CHECK(rep.index[0] == doctest::Approx(1.0).epsilon(0.02));
    CHECK(rep.index[1] == doctest::Approx(0.0).epsilon(0.02));
    CHECK(rep.index[2] == doctest::Approx(0.0).epsilon(0.02));
    CHECK_FALSE(rep.degenerate_statistics);
}

TEST_CASE("additive symmetric variables share the total effect") {
    const GaussianSpace space = unit_space(2);
    auto g = [](const Eigen::VectorXd& x) { return 3.0 - x(0) - x(1); };
    const long N = 200000;
    const auto rep = total_effect_indices(g, space, N, 21, ungrouped(space));

    // statistical sigma from a small seed ensemble
    std::vector<double> t1s, t2s;
    for (int s = 0; s < 8; ++s) {
        const auto r = total_effect_indices(g, space, 20000, 500 + s, ungrouped(space));
        t1s.push_back(r.index[0]);
        t2s.push_back(r.index[1]);
    }
    double m1 = 0, m2 = 0, v1 = 0, v2 = 0;
    for (size_t i = 0; i < t1s.size(); ++i) {
        m1 += t1s[i];
        m2 += t2s[i];
    }
    m1 /= t1s.size();
    m2 /= t2s.size();
    for (size_t i = 0; i < t1s.size(); ++i) {
        v1 += (t1s[i] - m1) * (t1s[i] - m1);
        v2 += (t2s[i] - m2) * (t2s[i] - m2);
    }
    const double sigma = std::sqrt((v1 + v2) / (2 * (t1s.size() - 1)) / (N / 20000.0));
    CHECK(std::abs(rep.index[0] - rep.index[1]) < 3 * std::sqrt(2.0) * sigma);

    // independent estimator route
    const double t1_brute = bruteforce_total_index(g, 2, 0, 200000, 77);
    CHECK(std::abs(rep.index[0] - t1_brute) < 0.03);
}

TEST_CASE("importance-reweighted total effect agrees with the plain estimator") {
    const GaussianSpace space = unit_space(2);
    auto g = [](const Eigen::VectorXd& x) { return 2.0 - x(0) - 0.5 * x(1); };

    const auto plain = total_effect_indices(g, space, 100000, 31, ungrouped(space));

    // importance stream centered at the MPP of the linear state
    const double beta = 2.0 / std::sqrt(1.25);
    Eigen::VectorXd mpp(2);
    mpp << beta / std::sqrt(1.25), 0.5 * beta / std::sqrt(1.25);
    Rng rng(32);
    const long N = 100000;
    IsReuse reuse;
    reuse.z.resize(N, 2);
    reuse.weights.resize(N);
    for (long i = 0; i < N; ++i) {
        double logw = 0;
        for (int j = 0; j < 2; ++j) {
            const double xi = rng.normal();
            const double zj = mpp(j) + xi;
            reuse.z(i, j) = zj;
            logw += -0.5 * zj * zj + 0.5 * xi * xi;
        }
        reuse.weights(i) = std::exp(logw);
    }
    const auto isr = total_effect_indices(g, space, N, 33, ungrouped(space), reuse);
    CHECK(isr.method == SensitivityMethod::TotalEffectIs);
    for (int j = 0; j < 2; ++j)
        CHECK(std::abs(isr.index[static_cast<size_t>(j)] - plain.index[static_cast<size_t>(j)]) <
              0.05);
}

TEST_CASE("grouped freezing pools variables") {
    const GaussianSpace space = unit_space(4);
    // x3 and x4 only matter jointly
    auto g = [](const Eigen::VectorXd& x) { return 1.0 - x(2) * x(3) - 0.2 * x(0); };
    std::vector<VariableGroup> groups = {{"first", {0}}, {"pair", {2, 3}}, {"inert", {1}}};
    const auto rep = total_effect_indices(g, space, 100000, 41, groups);
    CHECK(rep.names[1] == "pair");
    CHECK(rep.index[1] > rep.index[0]);
    CHECK(rep.index[2] == doctest::Approx(0.0).epsilon(0.02));
}

TEST_CASE("degenerate statistics are flagged for rare failures") {
    const GaussianSpace space = unit_space(2);
    auto g = [](const Eigen::VectorXd& x) { return 4.5 - x(0); };
    const auto rep = total_effect_indices(g, space, 1000, 51, ungrouped(space));
    CHECK(rep.degenerate_statistics);
}

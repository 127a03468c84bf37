#pragma once

// Shallow feed-forward network (one tanh hidden layer, linear output) that
// stands in for the limit-state function. Besides the forward map it exposes
// exact first and second derivatives with respect to its inputs, which is
// what makes gradient-based reliability on top of it cheap.

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vscl/math.hpp"
#include "vscl/stochastic.hpp"

namespace vscl {

struct SurrogateFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SurrogateBindingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SurrogateNet {
    Eigen::MatrixXd w1;   ///< hidden x inputs
    Eigen::VectorXd b1;   ///< hidden
    Eigen::RowVectorXd w2;  ///< 1 x hidden
    double b2 = 0;

    // Min-Max bounds mapping physical coordinates onto [-1,1]
    Eigen::VectorXd xmin, xmax;
    double ymin = -1, ymax = 1;

    std::uint64_t seed = 0;
    std::uint64_t data_digest = 0;

    int inputs() const { return static_cast<int>(w1.cols()); }
    int hidden() const { return static_cast<int>(w1.rows()); }

    Eigen::VectorXd normalize(const Eigen::VectorXd& x) const {
        Eigen::VectorXd t(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i)
            t(i) = 2.0 * (x(i) - xmin(i)) / (xmax(i) - xmin(i)) - 1.0;
        return t;
    }
    double denormalize_y(double t) const { return 0.5 * (t + 1.0) * (ymax - ymin) + ymin; }
    double normalize_y(double y) const { return 2.0 * (y - ymin) / (ymax - ymin) - 1.0; }

    double forward_normalized(const Eigen::VectorXd& xt) const {
        const Eigen::VectorXd z = (w1 * xt + b1).array().tanh();
        return w2.dot(z) + b2;
    }

    double forward(const Eigen::VectorXd& x) const {
        return denormalize_y(forward_normalized(normalize(x)));
    }

    // dy/dx_i = sum_j w2_j w1_ji (1 - z_j^2), rescaled to physical units.
    Eigen::VectorXd grad_input(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd xt = normalize(x);
        const Eigen::VectorXd z = (w1 * xt + b1).array().tanh();
        const Eigen::VectorXd dact = (1.0 - z.array().square()).matrix();
        Eigen::VectorXd gt = w1.transpose() * (w2.transpose().array() * dact.array()).matrix();
        const double yscale = 0.5 * (ymax - ymin);
        Eigen::VectorXd g(inputs());
        for (int i = 0; i < inputs(); ++i)
            g(i) = gt(i) * yscale * 2.0 / (xmax(i) - xmin(i));
        return g;
    }

    // d2y/dx_i dx_i' = sum_j w2_j w1_ji w1_ji' (-2 z_j)(1 - z_j^2); symmetric
    // in the two input indices by construction, and the normalization rescale
    // is ordered so the symmetry survives bit for bit.
    Eigen::MatrixXd hessian_input(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd xt = normalize(x);
        const Eigen::VectorXd z = (w1 * xt + b1).array().tanh();
        const int I = inputs(), J = hidden();
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(I, I);
        for (int j = 0; j < J; ++j) {
            const double c = w2(j) * (-2.0 * z(j)) * (1.0 - z(j) * z(j));
            for (int i = 0; i < I; ++i)
                for (int k = 0; k < I; ++k) H(i, k) += c * (w1(j, i) * w1(j, k));
        }
        const double yscale = 0.5 * (ymax - ymin);
        Eigen::VectorXd s(I);
        for (int i = 0; i < I; ++i) s(i) = 2.0 / (xmax(i) - xmin(i));
        for (int i = 0; i < I; ++i)
            for (int k = 0; k < I; ++k) H(i, k) *= yscale * (s(i) * s(k));
        return H;
    }
};

struct TrainConfig {
    int hidden = 10;
    std::uint64_t seed = 1;
    int batch = 32;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double lr_decay = 0.9995;  ///< per-epoch geometric decay
    int max_epochs = 50000;
    int patience = 500;        ///< epochs without validation improvement
    double test_fraction = 0.2;
    double validation_fraction_of_train = 0.25;
};

struct TrainReport {
    double mse_train = 0, mse_validation = 0, mse_test = 0;  // normalized units
    int epochs = 0;
    double lr_initial = 0, lr_final = 0;
    double train_fraction = 0, validation_fraction = 0, test_fraction = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline double mse_on(const SurrogateNet& net, const Eigen::MatrixXd& xt,
                     const Eigen::VectorXd& yt, const std::vector<int>& idx) {
    if (idx.empty()) return 0;
    double s = 0;
    for (int i : idx) {
        const double e = net.forward_normalized(xt.row(i).transpose()) - yt(i);
        s += e * e;
    }
    return s / static_cast<double>(idx.size());
}

} // namespace detail

// Stochastic gradient descent with momentum on the normalized data, early
// stopping on validation stagnation. Deterministic for fixed data, seed and
// hyperparameters.
inline std::pair<SurrogateNet, TrainReport> train(const SampleSet& samples,
                                                  const TrainConfig& cfg) {
    samples.check();
    const int n = samples.n(), I = samples.dim();
    if (samples.g.size() != n)
        throw InsufficientDataError("train: samples carry no evaluated limit-state values");
    if (n < I + 2)
        throw InsufficientDataError("train: need at least inputs+2 samples");

    TrainReport rep;
    if (n < 10 * cfg.hidden)
        rep.warnings.push_back("training set smaller than 10x hidden width");

    SurrogateNet net;
    net.seed = cfg.seed;
    {
        Fnv1a h;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < I; ++j) h.update(samples.x(i, j));
            h.update(samples.g(i));
        }
        net.data_digest = h.digest();
    }

    // Min-Max bounds frozen from the training data; constant columns get a
    // unit window so normalization stays invertible.
    net.xmin = samples.x.colwise().minCoeff();
    net.xmax = samples.x.colwise().maxCoeff();
    for (int j = 0; j < I; ++j)
        if (!(net.xmax(j) > net.xmin(j))) {
            net.xmin(j) -= 0.5;
            net.xmax(j) += 0.5;
        }
    net.ymin = samples.g.minCoeff();
    net.ymax = samples.g.maxCoeff();
    if (!(net.ymax > net.ymin)) {
        net.ymin -= 0.5;
        net.ymax += 0.5;
    }

    Eigen::MatrixXd xt(n, I);
    Eigen::VectorXd yt(n);
    for (int i = 0; i < n; ++i) {
        xt.row(i) = net.normalize(samples.x.row(i).transpose()).transpose();
        yt(i) = net.normalize_y(samples.g(i));
    }

    // 80/20 train/test split, a quarter of the training block held out for
    // early stopping
    Rng rng(cfg.seed);
    const auto shuffled = rng.permutation(n);
    const int n_test = std::max(1, static_cast<int>(cfg.test_fraction * n));
    const int n_pool = n - n_test;
    const int n_val = std::max(1, static_cast<int>(cfg.validation_fraction_of_train * n_pool));
    const int n_train = n_pool - n_val;
    if (n_train < 1) throw InsufficientDataError("train: split leaves no training rows");
    std::vector<int> itrain(shuffled.begin(), shuffled.begin() + n_train);
    std::vector<int> ival(shuffled.begin() + n_train, shuffled.begin() + n_pool);
    std::vector<int> itest(shuffled.begin() + n_pool, shuffled.end());
    rep.train_fraction = static_cast<double>(n_train) / n;
    rep.validation_fraction = static_cast<double>(n_val) / n;
    rep.test_fraction = static_cast<double>(n_test) / n;

    const int J = cfg.hidden;
    // symmetric uniform init scaled by fan-in
    auto uinit = [&](double scale) { return (2.0 * rng.uniform() - 1.0) * scale; };
    net.w1.resize(J, I);
    net.b1 = Eigen::VectorXd::Zero(J);
    net.w2.resize(J);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(I));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(J));
    for (int j = 0; j < J; ++j) {
        for (int i = 0; i < I; ++i) net.w1(j, i) = uinit(s1);
        net.w2(j) = uinit(s2);
    }
    net.b2 = 0;

    Eigen::MatrixXd vw1 = Eigen::MatrixXd::Zero(J, I);
    Eigen::VectorXd vb1 = Eigen::VectorXd::Zero(J);
    Eigen::RowVectorXd vw2 = Eigen::RowVectorXd::Zero(J);
    double vb2 = 0;

    double lr = cfg.learning_rate;
    rep.lr_initial = lr;
    double best_val = std::numeric_limits<double>::max();
    SurrogateNet best = net;
    int best_epoch = 0;

    std::vector<int> order = itrain;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // fresh pass order each epoch, drawn from the training stream
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.raw() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
            const double bs = static_cast<double>(stop - start);
            Eigen::MatrixXd gw1 = Eigen::MatrixXd::Zero(J, I);
            Eigen::VectorXd gb1 = Eigen::VectorXd::Zero(J);
            Eigen::RowVectorXd gw2 = Eigen::RowVectorXd::Zero(J);
            double gb2 = 0;
            for (size_t s = start; s < stop; ++s) {
                const int row = order[s];
                const Eigen::VectorXd xrow = xt.row(row).transpose();
                const Eigen::VectorXd z = (net.w1 * xrow + net.b1).array().tanh();
                const double y = net.w2.dot(z) + net.b2;
                const double e = y - yt(row);  // d(0.5 e^2)/dy
                gw2.noalias() += e * z.transpose();
                gb2 += e;
                const Eigen::VectorXd dz =
                    (net.w2.transpose() * e).array() * (1.0 - z.array().square());
                gw1.noalias() += dz * xrow.transpose();
                gb1 += dz;
            }
            vw1 = cfg.momentum * vw1 - (lr / bs) * gw1;
            vb1 = cfg.momentum * vb1 - (lr / bs) * gb1;
            vw2 = cfg.momentum * vw2 - (lr / bs) * gw2;
            vb2 = cfg.momentum * vb2 - (lr / bs) * gb2;
            net.w1 += vw1;
            net.b1 += vb1;
            net.w2 += vw2;
            net.b2 += vb2;
        }
        lr *= cfg.lr_decay;
        rep.epochs = epoch + 1;

        const double val = detail::mse_on(net, xt, yt, ival);
        if (val < best_val * (1.0 - 1e-12)) {
            best_val = val;
            best = net;
            best_epoch = epoch;
        }
        if (epoch - best_epoch >= cfg.patience) break;
    }
    rep.lr_final = lr;

    net = best;
    rep.mse_train = detail::mse_on(net, xt, yt, itrain);
    rep.mse_validation = detail::mse_on(net, xt, yt, ival);
    rep.mse_test = detail::mse_on(net, xt, yt, itest);
    return {net, rep};
}

// Text persistence with hexfloat payload: a save/load round trip reproduces
// the net bit for bit.
inline void save(const SurrogateNet& net, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save: cannot open " + path);
    f << "VSCLNET 1\n";
    f << "inputs " << net.inputs() << " hidden " << net.hidden() << "\n";
    f << "seed " << net.seed << " digest " << hex64(net.data_digest) << "\n";
    auto row = [&](const char* tag, const double* p, int m) {
        f << tag;
        for (int i = 0; i < m; ++i) f << ' ' << hexfloat(p[i]);
        f << "\n";
    };
    row("xmin", net.xmin.data(), net.inputs());
    row("xmax", net.xmax.data(), net.inputs());
    const double yb[2] = {net.ymin, net.ymax};
    row("ybounds", yb, 2);
    for (int j = 0; j < net.hidden(); ++j) {
        Eigen::RowVectorXd r = net.w1.row(j);
        row("w1", r.data(), net.inputs());
    }
    row("b1", net.b1.data(), net.hidden());
    row("w2", net.w2.data(), net.hidden());
    const double b2v[1] = {net.b2};
    row("b2", b2v, 1);
}

inline SurrogateNet load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SurrogateFormatError("load: cannot open " + path);
    std::string magic;
    int version = 0;
    f >> magic >> version;
    if (magic != "VSCLNET" || version != 1)
        throw SurrogateFormatError("load: bad magic header in " + path);
    std::string tag;
    int I = 0, J = 0;
    f >> tag >> I;
    if (tag != "inputs") throw SurrogateFormatError("load: malformed net file");
    f >> tag >> J;
    if (tag != "hidden" || I <= 0 || J <= 0)
        throw SurrogateFormatError("load: malformed net file");

    SurrogateNet net;
    std::string dg;
    f >> tag >> net.seed >> tag >> dg;
    net.data_digest = std::stoull(dg, nullptr, 16);

    auto read_row = [&](const char* want, double* p, int m) {
        std::string t;
        f >> t;
        if (t != want) throw SurrogateFormatError(std::string("load: expected ") + want);
        for (int i = 0; i < m; ++i) {
            std::string s;
            f >> s;
            p[i] = std::strtod(s.c_str(), nullptr);
        }
        if (!f) throw SurrogateFormatError("load: truncated net file");
    };
    net.xmin.resize(I);
    net.xmax.resize(I);
    read_row("xmin", net.xmin.data(), I);
    read_row("xmax", net.xmax.data(), I);
    double yb[2];
    read_row("ybounds", yb, 2);
    net.ymin = yb[0];
    net.ymax = yb[1];
    net.w1.resize(J, I);
    for (int j = 0; j < J; ++j) {
        Eigen::RowVectorXd r(I);
        read_row("w1", r.data(), I);
        net.w1.row(j) = r;
    }
    net.b1.resize(J);
    read_row("b1", net.b1.data(), J);
    net.w2.resize(J);
    read_row("w2", net.w2.data(), J);
    double b2v[1];
    read_row("b2", b2v, 1);
    net.b2 = b2v[0];
    return net;
}

} // namespace vscl

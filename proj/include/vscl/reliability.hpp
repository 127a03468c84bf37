#pragma once

// FORM most-probable-point search, Breitung curvature correction, Monte
// Carlo and importance-sampling failure estimators, and the adaptive loop
// that alternates surrogate retraining around the current MPP with a final
// MPP-centered importance-sampling estimate.

#include <Eigen/Dense>
#include <chrono>
#include <functional>
#include <optional>
#include <thread>

#include "vscl/math.hpp"
#include "vscl/stochastic.hpp"
#include "vscl/surrogate.hpp"

namespace vscl {

struct ZeroGradientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Limit-state value and gradient in standard normal space.
struct ZFunction {
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian;  // optional
};

// Surrogate-backed limit state carried into z-space through the per-variable
// chain rule: affine for normal variables, through the exp map for lognormal
// ones.
inline ZFunction surrogate_zfun(const SurrogateNet& net, const GaussianSpace& space) {
    if (net.inputs() != space.dim())
        throw SurrogateBindingError("surrogate_zfun: net inputs do not match the variable space");
    ZFunction f;
    f.value = [&net, &space](const Eigen::VectorXd& z) {
        return net.forward(space.from_z(z));
    };
    f.gradient = [&net, &space](const Eigen::VectorXd& z) {
        const Eigen::VectorXd x = space.from_z(z);
        Eigen::VectorXd g = net.grad_input(x);
        for (int i = 0; i < space.dim(); ++i) g(i) *= space.dxdz(z(i), i);
        return g;
    };
    f.hessian = [&net, &space](const Eigen::VectorXd& z) {
        const Eigen::VectorXd x = space.from_z(z);
        const Eigen::VectorXd g = net.grad_input(x);
        Eigen::MatrixXd H = net.hessian_input(x);
        const int d = space.dim();
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                H(i, j) *= space.dxdz(z(i), i) * space.dxdz(z(j), j);
        for (int i = 0; i < d; ++i) H(i, i) += g(i) * space.d2xdz2(z(i), i);
        return H;
    };
    return f;
}

struct MppIterate {
    Eigen::VectorXd z;
    double g = 0;
    double grad_norm = 0;
};

struct MppResult {
    Eigen::VectorXd z_star;
    Eigen::VectorXd x_star;       ///< physical coordinates, filled when a space is supplied
    double beta = 0;              ///< ||z*||, signed by the safe/failed state of the origin
    Eigen::VectorXd alpha;        ///< unit gradient direction at the MPP
    double grad_norm = 0;
    double g_value = 0;
    bool converged = false;
    std::vector<MppIterate> trace;
};

// Recursive MPP search z_{k+1} = -a_k (beta_k + g_k/||grad g_k||) started at
// the origin, stopping on the absolute change in the iterate position.
inline MppResult form_search(const ZFunction& fun, int dim, double epsilon = 1e-3,
                             int max_iter = 50) {
    MppResult res;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
    const double g0 = fun.value(z);
    for (int it = 0; it < max_iter; ++it) {
        const double g = fun.value(z);
        const Eigen::VectorXd grad = fun.gradient(z);
        const double gn = grad.norm();
        if (gn < 1e-12)
            throw ZeroGradientError("form_search: vanishing gradient at iterate");
        const Eigen::VectorXd a = grad / gn;
        res.trace.push_back({z, g, gn});

        const double beta_k = -a.dot(z);
        const Eigen::VectorXd z_next = -a * (beta_k + g / gn);
        const double step = (z_next - z).norm();
        z = z_next;
        if (step <= epsilon) {
            res.converged = true;
            break;
        }
    }
    res.z_star = z;
    res.g_value = fun.value(z);
    const Eigen::VectorXd grad = fun.gradient(z);
    res.grad_norm = grad.norm();
    res.alpha = res.grad_norm > 0 ? Eigen::VectorXd(grad / res.grad_norm)
                                  : Eigen::VectorXd::Zero(dim);
    res.beta = z.norm() * (g0 >= 0 ? 1.0 : -1.0);
    return res;
}

inline double form_pf(double beta) { return norm_cdf(-beta); }

struct SormResult {
    double pf = 0;
    double beta_equivalent = 0;       ///< -Phi^-1(pf)
    Eigen::VectorXd curvatures;       ///< principal curvatures at the MPP
    bool curvature_singular = false;  ///< fell back to the FORM value
};

// Breitung correction Pf = Phi(-beta) * prod (1 + beta kappa_i)^(-1/2). The
// curvatures are the eigenvalues of the z-space Hessian rotated into the
// tangent plane of the limit surface and scaled by the gradient norm.
inline SormResult sorm_pf(const MppResult& mpp, const Eigen::MatrixXd& hessian_z) {
    const int n = static_cast<int>(mpp.z_star.size());
    if (!(mpp.beta > 0))
        throw std::invalid_argument("sorm_pf: requires a converged MPP with beta > 0");
    if ((hessian_z - hessian_z.transpose()).cwiseAbs().maxCoeff() >
        1e-8 * (1.0 + hessian_z.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("sorm_pf: Hessian must be symmetric");

    SormResult out;
    const double pf_form = form_pf(mpp.beta);
    if (n == 1) {
        out.pf = pf_form;
        out.beta_equivalent = mpp.beta;
        return out;
    }

    // orthonormal tangent basis against the MPP direction
    const Eigen::VectorXd u = mpp.z_star / mpp.z_star.norm();
    Eigen::MatrixXd T(n, n - 1);
    {
        // Householder reflection mapping e_n -> u, first n-1 columns span the tangent space
        Eigen::VectorXd v = u;
        v(n - 1) += (u(n - 1) >= 0 ? 1.0 : -1.0);
        v.normalize();
        Eigen::MatrixXd Hh = Eigen::MatrixXd::Identity(n, n) - 2.0 * v * v.transpose();
        T = Hh.leftCols(n - 1);
    }
    const Eigen::MatrixXd At = (T.transpose() * hessian_z * T) / mpp.grad_norm;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (At + At.transpose()));
    out.curvatures = es.eigenvalues();

    double prod = 1.0;
    for (int i = 0; i < n - 1; ++i) {
        const double f = 1.0 + mpp.beta * out.curvatures(i);
        if (f <= 1e-12) {
            out.curvature_singular = true;
            out.pf = pf_form;
            out.beta_equivalent = mpp.beta;
            return out;
        }
        prod *= 1.0 / std::sqrt(f);
    }
    out.pf = pf_form * prod;
    out.beta_equivalent = -norm_quantile(std::min(1.0 - 1e-16, std::max(1e-300, out.pf)));
    return out;
}

enum class Method { FORM, SORM, MCS, MCIS, AnnMcs, AnnMcis };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::FORM: return "FORM";
        case Method::SORM: return "SORM";
        case Method::MCS: return "MCS";
        case Method::MCIS: return "MCIS";
        case Method::AnnMcs: return "ANN-MCS";
        case Method::AnnMcis: return "ANN-MCIS";
    }
    return "?";
}

struct ReliabilityResult {
    Method method = Method::MCS;
    double pf = 0;
    double beta = std::numeric_limits<double>::quiet_NaN();
    double estimator_std = 0;
    double cov = 0;         ///< exact form sqrt((1-pf)/(N pf))
    double cov_approx = 0;  ///< 1/sqrt(N pf)
    bool zero_failures = false;
    bool degenerate_weights = false;
    long n_samples = 0;
    long n_limit_state_evals = 0;
    double wall_seconds = 0;
    std::uint64_t seed = 0;
};

// Plain Monte Carlo indicator average over the physical-space image of a
// standard normal stream.
inline ReliabilityResult mcs_pf(const std::function<double(const Eigen::VectorXd&)>& g,
                                const GaussianSpace& space, long N, std::uint64_t seed) {
    if (N < 100) throw std::invalid_argument("mcs_pf: N must be >= 100");
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(seed);
    const int d = space.dim();
    long fail = 0;
    Eigen::VectorXd z(d);
    for (long i = 0; i < N; ++i) {
        for (int j = 0; j < d; ++j) z(j) = rng.normal();
        if (g(space.from_z(z)) < 0) ++fail;
    }
    ReliabilityResult r;
    r.method = Method::MCS;
    r.seed = seed;
    r.n_samples = N;
    r.n_limit_state_evals = N;
    r.pf = static_cast<double>(fail) / static_cast<double>(N);
    if (fail == 0) {
        r.zero_failures = true;
        r.cov = r.cov_approx = std::numeric_limits<double>::infinity();
        r.estimator_std = 0;
    } else {
        r.cov = std::sqrt((1.0 - r.pf) / (static_cast<double>(N) * r.pf));
        r.cov_approx = 1.0 / std::sqrt(static_cast<double>(N) * r.pf);
        r.estimator_std = r.cov * r.pf;
    }
    r.beta = (r.pf > 0 && r.pf < 1) ? -norm_quantile(r.pf) : std::numeric_limits<double>::quiet_NaN();
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// Gaussian instrumental density in z-space centered at the MPP.
struct InstrumentalDensity {
    Eigen::VectorXd center;
    Eigen::VectorXd sigma;  ///< per-variable width multipliers

    static InstrumentalDensity at(const Eigen::VectorXd& c, double width = 1.0) {
        InstrumentalDensity h;
        h.center = c;
        h.sigma = Eigen::VectorXd::Constant(c.size(), width);
        return h;
    }
    void validate() const {
        if (sigma.size() != center.size() || (sigma.array() <= 0).any())
            throw std::invalid_argument("InstrumentalDensity: widths must be positive");
    }
};

// Importance-sampling estimator: draws from the instrumental density and
// reweights by the standard-normal/instrumental density ratio. Uses the same
// underlying normal stream as mcs_pf, so h = f reproduces it sample for
// sample.
inline ReliabilityResult is_pf(const std::function<double(const Eigen::VectorXd&)>& g,
                               const GaussianSpace& space, const InstrumentalDensity& h,
                               long N, std::uint64_t seed) {
    h.validate();
    if (h.center.size() != space.dim())
        throw std::invalid_argument("is_pf: instrumental density dimension mismatch");
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(seed);
    const int d = space.dim();
    double sum_iw = 0, sum_iw2 = 0;
    Eigen::VectorXd z(d);
    for (long i = 0; i < N; ++i) {
        double logw = 0;
        for (int j = 0; j < d; ++j) {
            const double xi = rng.normal();
            z(j) = h.center(j) + h.sigma(j) * xi;
            logw += -0.5 * z(j) * z(j) + 0.5 * xi * xi + std::log(h.sigma(j));
        }
        const double w = std::exp(logw);
        if (g(space.from_z(z)) < 0) {
            sum_iw += w;
            sum_iw2 += w * w;
        }
    }
    ReliabilityResult r;
    r.method = Method::MCIS;
    r.seed = seed;
    r.n_samples = N;
    r.n_limit_state_evals = N;
    r.pf = sum_iw / static_cast<double>(N);
    const double Nd = static_cast<double>(N);
    const double var = N > 1 ? (sum_iw2 / Nd - r.pf * r.pf) / (Nd - 1.0) : 0.0;
    r.estimator_std = std::sqrt(std::max(0.0, var));
    r.cov = r.pf > 0 ? r.estimator_std / r.pf : std::numeric_limits<double>::infinity();
    r.cov_approx = r.cov;
    r.zero_failures = sum_iw == 0;
    // effective sample size of the weights that actually enter the estimate
    const double ess = sum_iw2 > 0 ? sum_iw * sum_iw / sum_iw2 : 0;
    r.degenerate_weights = ess < 0.01 * Nd;
    r.beta = (r.pf > 0 && r.pf < 1) ? -norm_quantile(r.pf) : std::numeric_limits<double>::quiet_NaN();
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------------------
// adaptive surrogate + MCIS loop

struct AdaptiveConfig {
    int n_per_stage = 200;
    int max_stages = 10;
    double form_epsilon = 1e-3;
    int form_max_iter = 50;
    long mcis_samples = 10000;
    double is_sigma = 1.0;        ///< instrumental density width
    double lhs_halfwidth = 1.0;   ///< retraining window around the MPP, in sigma
    double term_halfwidth = 0.5;  ///< termination hypercube of width one sigma
    TrainConfig train;
    std::uint64_t sample_seed = 101;
    std::uint64_t mcis_seed = 909;
    int n_threads = 1;
    double max_skip_fraction = 0.01;
};

struct StageRecord {
    int stage = 0;
    int n_new = 0;
    int n_cumulative = 0;
    double pf_form = 0;
    double pf_sorm = 0;
    double beta = 0;
    bool sorm_singular = false;
    bool form_converged = false;
    Eigen::VectorXd mpp_z;
    Eigen::VectorXd mpp_x;
    double train_mse_test = 0;
    std::uint64_t train_seed = 0;
    double seconds = 0;
};

struct AdaptiveResult {
    ReliabilityResult mcis;
    SurrogateNet net;
    std::vector<StageRecord> stages;
    SampleSet training_data;
    long n_evaluator_calls = 0;
    long n_skipped = 0;
    double wall_seconds = 0;
    bool terminated_by_hypercube = false;
    bool aborted = false;  ///< FORM failed to converge at some stage
};

namespace detail {

// Evaluates g over the sample rows in parallel with results bound to fixed
// row slots, so the outcome is identical for any thread count. A failing row
// is redrawn once from the same window; a second failure marks it skipped.
struct StageEvaluation {
    Eigen::MatrixXd x;
    Eigen::VectorXd g;
    std::vector<char> valid;
    long calls = 0;
    long skipped = 0;
};

inline StageEvaluation evaluate_stage(const std::function<double(const Eigen::VectorXd&)>& g_true,
                                      const GaussianSpace& space, const SampleSet& draw,
                                      const std::optional<Eigen::VectorXd>& center,
                                      double halfwidth, std::uint64_t resample_seed,
                                      int n_threads) {
    const int n = draw.n(), d = draw.dim();
    StageEvaluation ev;
    ev.x = draw.x;
    ev.g.resize(n);
    ev.valid.assign(static_cast<size_t>(n), 0);
    std::atomic<long> calls{0};

    auto run_row = [&](int i) {
        Eigen::VectorXd xi = ev.x.row(i).transpose();
        try {
            calls.fetch_add(1);
            ev.g(i) = g_true(xi);
            ev.valid[static_cast<size_t>(i)] = 1;
            return;
        } catch (const std::exception&) {
        }
        // one redraw from the same window
        Rng rr(resample_seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(i + 1)));
        Eigen::VectorXd z(d);
        for (int j = 0; j < d; ++j) {
            if (center)
                z(j) = (*center)(j) - halfwidth + 2.0 * halfwidth * rr.uniform();
            else
                z(j) = rr.normal();
        }
        xi = space.from_z(z);
        try {
            calls.fetch_add(1);
            const double gv = g_true(xi);
            ev.x.row(i) = xi.transpose();
            ev.g(i) = gv;
            ev.valid[static_cast<size_t>(i)] = 1;
        } catch (const std::exception&) {
        }
    };

    if (n_threads <= 1) {
        for (int i = 0; i < n; ++i) run_row(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back([&]() {
                for (;;) {
                    const int i = next.fetch_add(1);
                    if (i >= n) break;
                    run_row(i);
                }
            });
        for (auto& th : pool) th.join();
    }
    ev.calls = calls.load();
    for (int i = 0; i < n; ++i)
        if (!ev.valid[static_cast<size_t>(i)]) ++ev.skipped;
    return ev;
}

} // namespace detail

// Stage 1 trains on a global LHS draw; stage k >= 2 adds samples from a
// one-sigma window around the previous MPP and retrains on the cumulative
// set. The loop stops once consecutive MPPs fall inside a hypercube of one
// standard-normal unit width, then estimates the failure probability by
// importance sampling centered at the final MPP.
inline AdaptiveResult adaptive_ann_mcis(
    const std::function<double(const Eigen::VectorXd&)>& g_true, const GaussianSpace& space,
    const AdaptiveConfig& cfg) {
    const auto t_all = std::chrono::steady_clock::now();
    const int d = space.dim();
    AdaptiveResult out;
    out.training_data.x.resize(0, d);
    out.training_data.g.resize(0);

    std::optional<Eigen::VectorXd> mpp_prev;
    for (int s = 1; s <= cfg.max_stages; ++s) {
        const auto t_stage = std::chrono::steady_clock::now();
        const std::uint64_t stage_seed = cfg.sample_seed + static_cast<std::uint64_t>(s);
        std::optional<Eigen::VectorXd> center =
            (s == 1) ? std::nullopt : std::optional<Eigen::VectorXd>(*mpp_prev);
        SampleSet draw = lhs_sample(cfg.n_per_stage, space, stage_seed, center, cfg.lhs_halfwidth);

        auto ev = detail::evaluate_stage(g_true, space, draw, center, cfg.lhs_halfwidth,
                                         stage_seed ^ 0xabcdefull, cfg.n_threads);
        out.n_evaluator_calls += ev.calls;
        out.n_skipped += ev.skipped;
        if (ev.skipped > cfg.max_skip_fraction * cfg.n_per_stage)
            throw std::runtime_error("adaptive_ann_mcis: too many evaluator failures in a stage");

        int kept = 0;
        for (int i = 0; i < draw.n(); ++i)
            if (ev.valid[static_cast<size_t>(i)]) ++kept;
        const Eigen::Index base = out.training_data.x.rows();
        out.training_data.x.conservativeResize(base + kept, d);
        out.training_data.g.conservativeResize(base + kept);
        for (int i = 0, r = 0; i < draw.n(); ++i)
            if (ev.valid[static_cast<size_t>(i)]) {
                out.training_data.x.row(base + r) = ev.x.row(i);
                out.training_data.g(base + r) = ev.g(i);
                ++r;
            }
        out.training_data.provenance =
            s == 1 ? SampleProvenance::LhsGlobal : SampleProvenance::LhsAroundMpp;

        TrainConfig tc = cfg.train;
        tc.seed = cfg.train.seed + static_cast<std::uint64_t>(s);
        auto [net, rep] = train(out.training_data, tc);
        out.net = net;

        const ZFunction zf = surrogate_zfun(out.net, space);
        MppResult mpp = form_search(zf, d, cfg.form_epsilon, cfg.form_max_iter);
        mpp.x_star = space.from_z(mpp.z_star);

        StageRecord rec;
        rec.stage = s;
        rec.n_new = kept;
        rec.n_cumulative = static_cast<int>(out.training_data.x.rows());
        rec.form_converged = mpp.converged;
        rec.beta = mpp.beta;
        rec.pf_form = form_pf(mpp.beta);
        rec.mpp_z = mpp.z_star;
        rec.mpp_x = mpp.x_star;
        rec.train_mse_test = rep.mse_test;
        rec.train_seed = tc.seed;
        if (mpp.converged && mpp.beta > 0) {
            const SormResult sr = sorm_pf(mpp, zf.hessian(mpp.z_star));
            rec.pf_sorm = sr.pf;
            rec.sorm_singular = sr.curvature_singular;
        } else {
            rec.pf_sorm = rec.pf_form;
        }
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_stage).count();
        out.stages.push_back(rec);

        if (!mpp.converged) {
            out.aborted = true;
            out.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t_all).count();
            return out;
        }
        if (mpp_prev) {
            const double dist = (mpp.z_star - *mpp_prev).cwiseAbs().maxCoeff();
            if (dist <= cfg.term_halfwidth) {
                mpp_prev = mpp.z_star;
                out.terminated_by_hypercube = true;
                break;
            }
        }
        mpp_prev = mpp.z_star;
    }

    InstrumentalDensity h = InstrumentalDensity::at(*mpp_prev, cfg.is_sigma);
    auto g_net = [&](const Eigen::VectorXd& x) { return out.net.forward(x); };
    out.mcis = is_pf(g_net, space, h, cfg.mcis_samples, cfg.mcis_seed);
    out.mcis.method = Method::AnnMcis;
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_all).count();
    return out;
}

} // namespace vscl

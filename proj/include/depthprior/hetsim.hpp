#pragma once

// Desk-scale simulation of depth-dependent loss noise: Var[L | d] = sigma0^2 d^2 + sigma_eps^2
// with sigma0^2 = alpha^2 / kappa, and a tiny SGD learner showing how that noise biases fitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "depthprior/errors.hpp"

namespace depthprior::hetsim {

struct SimConfig {
    double kappa = 1.0;
    double alpha_signal = 1.0;
    double sigma_eps = 0.1;
    std::size_t n_samples = 100000;
    double d_min = 0.05;
    double d_max = 0.5;
    std::uint64_t seed = 0;

    [[nodiscard]] double sigma0_sq() const { return alpha_signal * alpha_signal / kappa; }
    [[nodiscard]] double variance_at(double d) const { return sigma0_sq() * d * d + sigma_eps * sigma_eps; }

    void validate() const {
        if (!(kappa > 0.0) || !(alpha_signal > 0.0)) throw ConfigError("kappa and alpha_signal must be positive");
        if (!(sigma_eps >= 0.0)) throw ConfigError("sigma_eps must be >= 0");
        if (!(d_min > 0.0 && d_min < d_max)) throw ConfigError("depth range requires 0 < d_min < d_max");
    }
};

struct LossSample {
    double depth;
    double noise;
};

/// Uniform depths over the configured range with zero-mean Gaussian loss noise of variance
/// sigma0^2 d^2 + sigma_eps^2.
inline std::vector<LossSample> sample_losses(const SimConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> depth(cfg.d_min, cfg.d_max);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<LossSample> out(cfg.n_samples);
    for (auto& s : out) {
        s.depth = depth(rng);
        s.noise = gauss(rng) * std::sqrt(cfg.variance_at(s.depth));
    }
    return out;
}

inline std::size_t depth_bin(double d, double lo, double hi, std::size_t bins) {
    const double t = (d - lo) / (hi - lo);
    if (!(t > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(t * static_cast<double>(bins)), bins - 1);
}

struct VarianceBin {
    double mean_d2 = 0;
    double variance = 0;
    std::size_t count = 0;
};

/// Sample variance of the noise within equal-width depth bins.
inline std::vector<VarianceBin> variance_by_bin(std::span<const LossSample> samples, double lo, double hi, std::size_t bins) {
    std::vector<double> sum(bins, 0.0), sum_sq(bins, 0.0), d2(bins, 0.0);
    std::vector<std::size_t> n(bins, 0);
    for (const auto& s : samples) {
        const auto b = depth_bin(s.depth, lo, hi, bins);
        sum[b] += s.noise;
        sum_sq[b] += s.noise * s.noise;
        d2[b] += s.depth * s.depth;
        ++n[b];
    }
    std::vector<VarianceBin> out(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].count = n[b];
        if (n[b] < 2) continue;
        const double cnt = static_cast<double>(n[b]);
        const double mean = sum[b] / cnt;
        out[b].mean_d2 = d2[b] / cnt;
        out[b].variance = (sum_sq[b] - cnt * mean * mean) / (cnt - 1.0);
    }
    return out;
}

struct LineFit {
    double slope = 0;
    double intercept = 0;
};

/// Ordinary least squares of bin variance on mean d^2 (bins with < 2 samples skipped).
inline LineFit fit_variance_law(std::span<const VarianceBin> bins) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (const auto& b : bins) {
        if (b.count < 2) continue;
        sx += b.mean_d2;
        sy += b.variance;
        sxx += b.mean_d2 * b.mean_d2;
        sxy += b.mean_d2 * b.variance;
        n += 1;
    }
    if (n < 2) throw DomainError("need at least two populated bins");
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {slope, (sy - slope * sx) / n};
}

// ---------------------------------------------------------------------------
// Training-bias experiment

enum class Weighting { Uniform, Compensating, DlwExponential };

inline std::string_view to_string(Weighting w) {
    switch (w) {
        case Weighting::Uniform: return "uniform";
        case Weighting::Compensating: return "compensating";
        case Weighting::DlwExponential: return "dlw-exponential";
    }
    return "uniform";
}

inline Weighting parse_weighting(std::string_view s) {
    if (s == "uniform") return Weighting::Uniform;
    if (s == "compensating") return Weighting::Compensating;
    if (s == "dlw-exponential") return Weighting::DlwExponential;
    throw ConfigError("unknown weighting: " + std::string(s));
}

struct BiasConfig {
    SimConfig sim{.n_samples = 2000};
    std::size_t bins = 10;
    std::size_t epochs = 4;
    double learning_rate = 0.02;
    /// Mean loss target; constant across depth.
    double target_mean = 1.0;
    /// alpha of the DLW-style exponential weighting.
    double dlw_alpha = 1.0;
};

/// Per-sample weights normalized to mean 1. Constant raw weights collapse to exactly 1.
inline std::vector<double> sample_weights(std::span<const LossSample> samples, const BiasConfig& cfg, Weighting mode) {
    std::vector<double> w(samples.size(), 1.0);
    if (mode == Weighting::Uniform || samples.empty()) return w;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double d = samples[i].depth;
        if (mode == Weighting::Compensating) {
            w[i] = cfg.sim.variance_at(d);
        } else {
            const double d_norm = (d - cfg.sim.d_min) / (cfg.sim.d_max - cfg.sim.d_min);
            w[i] = 1.0 + cfg.dlw_alpha * std::exp(std::clamp(d_norm, 0.0, 1.0));
        }
    }
    const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    if (*lo == *hi) return std::vector<double>(samples.size(), 1.0);
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    for (double& x : w) x /= mean;
    return w;
}

struct TrajectoryPoint {
    std::size_t epoch = 0;
    std::size_t bin = 0;
    double error = 0;
};

struct Trajectory {
    std::size_t bins = 0;
    std::size_t epochs = 0;
    /// error[(epoch - 1) * bins + bin]: squared deviation of the bin's estimate from the target,
    /// averaged over every update step of that epoch.
    std::vector<double> error;

    [[nodiscard]] double at(std::size_t epoch, std::size_t bin) const { return error[(epoch - 1) * bins + bin]; }
    [[nodiscard]] double final_near() const { return at(epochs, 0); }
    [[nodiscard]] double final_far() const { return at(epochs, bins - 1); }
    [[nodiscard]] double final_gap() const { return final_far() - final_near(); }
};

/// Piecewise-constant regressor (one parameter per depth bin, initialized at 0) fitted to
/// target_mean + heteroscedastic noise by weighted per-sample SGD.
inline Trajectory bias_experiment(const BiasConfig& cfg, Weighting mode) {
    cfg.sim.validate();
    if (cfg.bins < 1 || cfg.epochs < 1) throw ConfigError("bins and epochs must be >= 1");
    const auto samples = sample_losses(cfg.sim);
    const auto weights = sample_weights(samples, cfg, mode);
    std::vector<std::size_t> bin_of(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        bin_of[i] = depth_bin(samples[i].depth, cfg.sim.d_min, cfg.sim.d_max, cfg.bins);

    // Shuffle stream is separate from the data stream so every weighting sees the same data and order.
    std::mt19937_64 order_rng(cfg.sim.seed ^ 0x5DEECE66Dull);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> theta(cfg.bins, 0.0);

    Trajectory traj{cfg.bins, cfg.epochs, std::vector<double>(cfg.bins * cfg.epochs, 0.0)};
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double* acc = &traj.error[(epoch - 1) * cfg.bins];
        for (auto i : order) {
            const auto b = bin_of[i];
            const double y = cfg.target_mean + samples[i].noise;
            theta[b] -= cfg.learning_rate * weights[i] * (theta[b] - y);
            for (std::size_t k = 0; k < cfg.bins; ++k) {
                const double e = theta[k] - cfg.target_mean;
                acc[k] += e * e;
            }
        }
        for (std::size_t k = 0; k < cfg.bins; ++k) acc[k] /= static_cast<double>(std::max<std::size_t>(order.size(), 1));
    }
    return traj;
}

/// Two-sided paired t-test p-value; identical samples give p = 1.
inline double paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw DomainError("paired test needs two equal-length samples of size >= 2");
    const double n = static_cast<double>(a.size());
    double mean = 0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
    mean /= n;
    double ss = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
    const double sd = std::sqrt(ss / (n - 1));
    if (sd == 0.0) return mean == 0.0 ? 1.0 : 0.0;
    const double t = mean / (sd / std::sqrt(n));
    const boost::math::students_t dist(n - 1);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace depthprior::hetsim

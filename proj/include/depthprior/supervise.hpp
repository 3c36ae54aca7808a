#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "depthprior/core.hpp"
#include "depthprior/depthnorm.hpp"

namespace depthprior::supervise {

// ---------------------------------------------------------------------------
// Per-object loss weighting

enum class WeightTag { DLW, RAW_D, INV_ONLY, EXP_NOINV, LINEAR, QUADRATIC, BW, IW };

struct WeightingMode {
    WeightTag tag = WeightTag::DLW;
    double alpha = 1.0;

    WeightingMode() = default;
    WeightingMode(WeightTag t, double a = 1.0) : tag(t), alpha(a) {
        if (uses_alpha() && !(alpha > 0.0)) throw ConfigError("alpha must be positive");
    }

    [[nodiscard]] bool uses_alpha() const { return tag == WeightTag::DLW || tag == WeightTag::BW || tag == WeightTag::IW; }
    /// BW and IW assign one weight per batch / image rather than per object.
    [[nodiscard]] bool is_group_mode() const { return tag == WeightTag::BW || tag == WeightTag::IW; }
};

inline WeightTag parse_weight_tag(std::string_view name) {
    static const std::pair<std::string_view, WeightTag> table[] = {
        {"dlw", WeightTag::DLW},         {"raw_d", WeightTag::RAW_D},   {"inv_only", WeightTag::INV_ONLY},
        {"exp_noinv", WeightTag::EXP_NOINV}, {"linear", WeightTag::LINEAR}, {"quadratic", WeightTag::QUADRATIC},
        {"bw", WeightTag::BW},           {"iw", WeightTag::IW}};
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto [key, tag] : table)
        if (key == lower) return tag;
    throw ConfigError("unknown weighting mode: " + std::string(name));
}

inline double dlw_weight(double d_norm, double alpha) { return 1.0 + alpha * std::exp(d_norm); }

/// Per-object weight for the ablation modes. `value` is the raw box depth for RAW_D and the
/// normalized distance d_norm for the others. Group modes need a group mean; see group_weight.
inline double ablation_weight(double value, const WeightingMode& mode) {
    if (mode.is_group_mode()) throw DomainError("BW/IW weights are defined per batch/image; use group_weight");
    if (mode.tag == WeightTag::RAW_D) {
        if (!(value >= 0.0) || !std::isfinite(value)) throw DomainError("raw depth must be finite and >= 0");
        return value;
    }
    if (!(value >= 0.0 && value <= 1.0)) throw DomainError("normalized depth outside [0,1]");
    switch (mode.tag) {
        case WeightTag::DLW: return dlw_weight(value, mode.alpha);
        case WeightTag::INV_ONLY: return 1.0 - value;
        case WeightTag::EXP_NOINV: return std::exp(1.0 - value);
        case WeightTag::LINEAR: return value;
        case WeightTag::QUADRATIC: return value * value;
        default: break;
    }
    throw DomainError("unhandled weighting mode");
}

/// BW / IW: the DLW formula applied to the mean normalized depth of the group.
inline double group_weight(std::span<const double> d_norms, double alpha) {
    if (d_norms.empty()) throw DomainError("group weight needs at least one object");
    const double mean = std::accumulate(d_norms.begin(), d_norms.end(), 0.0) / static_cast<double>(d_norms.size());
    return dlw_weight(mean, alpha);
}

struct ObjectLoss {
    std::string image_id;
    std::size_t object_index = 0;
    double cls_loss = 0;
    double box_loss = 0;
    double depth_norm = 0;
    /// Raw mean box depth, read only by RAW_D.
    double depth_raw = 0;
};

/// Weights for every object of one batch under `mode` (BW: one batch value, IW: one per image).
inline std::vector<double> object_weights(std::span<const ObjectLoss> objects, const WeightingMode& mode) {
    std::vector<double> weights(objects.size());
    if (mode.tag == WeightTag::BW) {
        std::vector<double> depths;
        for (const auto& o : objects) depths.push_back(o.depth_norm);
        std::fill(weights.begin(), weights.end(), group_weight(depths, mode.alpha));
    } else if (mode.tag == WeightTag::IW) {
        std::map<std::string, std::vector<double>> per_image;
        for (const auto& o : objects) per_image[o.image_id].push_back(o.depth_norm);
        std::map<std::string, double> w;
        for (const auto& [id, depths] : per_image) w[id] = group_weight(depths, mode.alpha);
        for (std::size_t i = 0; i < objects.size(); ++i) weights[i] = w[objects[i].image_id];
    } else {
        for (std::size_t i = 0; i < objects.size(); ++i)
            weights[i] = ablation_weight(mode.tag == WeightTag::RAW_D ? objects[i].depth_raw : objects[i].depth_norm, mode);
    }
    return weights;
}

/// (1/N_b) * sum_i w_i (cls_i + box_i).
inline double weighted_total_loss(std::span<const ObjectLoss> objects, const WeightingMode& mode) {
    if (objects.empty()) throw DomainError("weighted loss needs at least one object");
    const auto weights = object_weights(objects, mode);
    double total = 0.0;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const auto& o = objects[i];
        if (!(o.cls_loss >= 0.0) || !(o.box_loss >= 0.0) || !std::isfinite(o.cls_loss + o.box_loss))
            throw DomainError("object losses must be finite and non-negative");
        total += weights[i] * (o.cls_loss + o.box_loss);
    }
    return total / static_cast<double>(objects.size());
}

// ---------------------------------------------------------------------------
// Depth stratification

enum class CutMode { Absolute, Quantile };

struct StratConfig {
    CutMode mode = CutMode::Quantile;
    /// K-1 strictly increasing cut values in (0,1); interpreted as quantile levels in Quantile mode.
    std::vector<double> cuts{0.5};
    /// K positive stratum weights, close to distant.
    std::vector<double> lambdas{1.0, 2.0};

    static StratConfig binary(double beta, CutMode mode = CutMode::Quantile, double lambda_close = 1.0,
                              double lambda_distant = 2.0) {
        StratConfig cfg{mode, {beta}, {lambda_close, lambda_distant}};
        cfg.validate();
        return cfg;
    }

    [[nodiscard]] std::size_t strata() const { return cuts.size() + 1; }
    [[nodiscard]] double beta() const { return cuts.front(); }

    void validate() const {
        if (cuts.empty()) throw ConfigError("stratification needs at least one cut (K >= 2)");
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            if (!(cuts[i] > 0.0 && cuts[i] < 1.0)) throw ConfigError("cuts must lie in (0,1)");
            if (i > 0 && !(cuts[i] > cuts[i - 1])) throw ConfigError("cuts must be strictly increasing");
        }
        if (lambdas.size() != strata()) throw ConfigError("need exactly one lambda per stratum");
        for (double l : lambdas)
            if (!(l > 0.0)) throw ConfigError("lambdas must be positive");
    }
};

/// Linear-interpolation quantile of sorted values at level q in [0,1].
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DomainError("quantile of empty set");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Cut values in normalized-depth units for one image.
inline std::vector<double> resolve_cuts(const NormalizedDepthMap& map, const StratConfig& cfg) {
    if (cfg.mode == CutMode::Absolute) return cfg.cuts;
    std::vector<double> values(map.values().begin(), map.values().end());
    std::sort(values.begin(), values.end());
    std::vector<double> out;
    for (double q : cfg.cuts) out.push_back(quantile_sorted(values, q));
    return out;
}

/// Stratum of a normalized depth: the number of cuts it reaches (ties go to the farther stratum).
inline std::size_t stratum_of(double d, std::span<const double> cuts) {
    return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), d) - cuts.begin());
}

struct Level {
    std::size_t height = 0;
    std::size_t width = 0;
};

using Mask = std::vector<std::uint8_t>;

/// masks[l][k] is the H_l x W_l row-major binary mask of stratum k at level l.
struct StratMasks {
    std::vector<Level> levels;
    std::vector<std::vector<Mask>> masks;
    std::vector<double> cuts;

    [[nodiscard]] std::size_t strata() const { return masks.empty() ? 0 : masks.front().size(); }
};

inline StratMasks build_strat_masks(const NormalizedDepthMap& map, const StratConfig& cfg, std::span<const Level> levels) {
    cfg.validate();
    if (levels.empty()) throw DomainError("at least one feature level required");
    StratMasks out;
    out.cuts = resolve_cuts(map, cfg);
    out.levels.assign(levels.begin(), levels.end());
    const std::size_t K = cfg.strata();
    for (const auto& level : levels) {
        const auto scaled = depthnorm::downsample_to_level(map, level.height, level.width);
        std::vector<Mask> per_stratum(K, Mask(level.height * level.width, 0));
        for (std::size_t i = 0; i < scaled.values().size(); ++i) per_stratum[stratum_of(scaled.values()[i], out.cuts)][i] = 1;
        out.masks.push_back(std::move(per_stratum));
    }
    return out;
}

/// Per-cell losses of one image at one level, row-major H_l x W_l.
struct CellLosses {
    std::vector<double> cls;
    std::vector<double> box;
};

enum class StratNorm {
    /// Masked per-cell sums averaged over levels and images (the deployed form).
    MaskedSum,
    /// Each stratum's summed loss divided by its cell count (the per-stratum mean form).
    StratumMean,
};

/// Per-stratum loss terms. `losses[n][l]` and `masks[n]` describe image n.
inline std::vector<double> stratum_losses(std::span<const std::vector<CellLosses>> losses, std::span<const StratMasks> masks,
                                          StratNorm norm = StratNorm::MaskedSum) {
    if (losses.empty() || losses.size() != masks.size()) throw DomainError("need one mask set per image");
    const std::size_t N = losses.size();
    const std::size_t L = masks.front().levels.size();
    const std::size_t K = masks.front().strata();
    std::vector<double> sums(K, 0.0);
    std::vector<double> counts(K, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        if (losses[n].size() != L || masks[n].levels.size() != L || masks[n].strata() != K)
            throw DomainError("level/stratum count mismatch between losses and masks");
        for (std::size_t l = 0; l < L; ++l) {
            const auto& cell = losses[n][l];
            const std::size_t cells = masks[n].levels[l].height * masks[n].levels[l].width;
            if (cell.cls.size() != cells || cell.box.size() != cells) throw DomainError("loss grid shape does not match mask");
            for (std::size_t k = 0; k < K; ++k) {
                const auto& m = masks[n].masks[l][k];
                double s = 0.0;
                std::size_t c = 0;
                for (std::size_t i = 0; i < cells; ++i)
                    if (m[i]) {
                        s += cell.cls[i] + cell.box[i];
                        ++c;
                    }
                sums[k] += s;
                counts[k] += static_cast<double>(c);
            }
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (norm == StratNorm::MaskedSum)
            sums[k] /= static_cast<double>(L) * static_cast<double>(N);
        else
            sums[k] = counts[k] > 0 ? sums[k] / counts[k] : 0.0;
    }
    return sums;
}

/// sum_k lambda_k L_k.
inline double stratified_loss(std::span<const std::vector<CellLosses>> losses, std::span<const StratMasks> masks,
                              std::span<const double> lambdas, StratNorm norm = StratNorm::MaskedSum) {
    const auto terms = stratum_losses(losses, masks, norm);
    if (lambdas.size() != terms.size()) throw DomainError("need one lambda per stratum");
    double total = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) total += lambdas[k] * terms[k];
    return total;
}

// ---------------------------------------------------------------------------
// Gradient decomposition check on a toy least-squares model

/// Samples with features x_i, targets y_i and depths d_i; L_i(theta) = 0.5 (theta . x_i - y_i)^2.
struct ToyQuadratic {
    std::size_t dim = 0;
    std::vector<double> features;  // n x dim, row-major
    std::vector<double> targets;
    std::vector<double> depths;

    [[nodiscard]] std::size_t samples() const { return targets.size(); }

    [[nodiscard]] double residual(std::span<const double> theta, std::size_t i) const {
        double r = -targets[i];
        for (std::size_t j = 0; j < dim; ++j) r += theta[j] * features[i * dim + j];
        return r;
    }
    [[nodiscard]] double loss(std::span<const double> theta, std::size_t i) const {
        const double r = residual(theta, i);
        return 0.5 * r * r;
    }
};

/// Stratum index of every sample under absolute cuts.
inline std::vector<std::size_t> sample_strata(const ToyQuadratic& toy, const StratConfig& cfg) {
    std::vector<std::size_t> out(toy.samples());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stratum_of(toy.depths[i], cfg.cuts);
    return out;
}

/// Per-stratum effective step scale lambda_k / |S_k| (0 for an empty stratum).
inline std::vector<double> effective_rates(const ToyQuadratic& toy, const StratConfig& cfg) {
    cfg.validate();
    std::vector<double> counts(cfg.strata(), 0.0);
    for (auto k : sample_strata(toy, cfg)) counts[k] += 1.0;
    std::vector<double> out(cfg.strata(), 0.0);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = counts[k] > 0 ? cfg.lambdas[k] / counts[k] : 0.0;
    return out;
}

/// sum_k lambda_k * mean_{i in S_k} L_i(theta).
inline double strat_mean_loss(const ToyQuadratic& toy, const StratConfig& cfg, std::span<const double> theta) {
    const auto strata = sample_strata(toy, cfg);
    std::vector<double> sums(cfg.strata(), 0.0), counts(cfg.strata(), 0.0);
    for (std::size_t i = 0; i < toy.samples(); ++i) {
        sums[strata[i]] += toy.loss(theta, i);
        counts[strata[i]] += 1.0;
    }
    double total = 0.0;
    for (std::size_t k = 0; k < sums.size(); ++k)
        if (counts[k] > 0) total += cfg.lambdas[k] * sums[k] / counts[k];
    return total;
}

/// sum_k (lambda_k / |S_k|) sum_{i in S_k} grad L_i(theta).
inline std::vector<double> strat_gradient(const ToyQuadratic& toy, const StratConfig& cfg, std::span<const double> theta) {
    const auto rates = effective_rates(toy, cfg);
    const auto strata = sample_strata(toy, cfg);
    std::vector<double> grad(toy.dim, 0.0);
    for (std::size_t i = 0; i < toy.samples(); ++i) {
        const double scale = rates[strata[i]] * toy.residual(theta, i);
        for (std::size_t j = 0; j < toy.dim; ++j) grad[j] += scale * toy.features[i * toy.dim + j];
    }
    return grad;
}

/// Max |analytic - central finite difference| over the parameter vector.
inline double strat_gradient_check(const ToyQuadratic& toy, std::span<const double> theta, const StratConfig& cfg,
                                   double step = 1e-5) {
    const auto analytic = strat_gradient(toy, cfg, theta);
    std::vector<double> probe(theta.begin(), theta.end());
    double worst = 0.0;
    for (std::size_t j = 0; j < toy.dim; ++j) {
        probe[j] = theta[j] + step;
        const double up = strat_mean_loss(toy, cfg, probe);
        probe[j] = theta[j] - step;
        const double down = strat_mean_loss(toy, cfg, probe);
        probe[j] = theta[j];
        worst = std::max(worst, std::abs((up - down) / (2 * step) - analytic[j]));
    }
    return worst;
}

}  // namespace depthprior::supervise

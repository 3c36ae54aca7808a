#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "depthprior/core.hpp"
#include "depthprior/depthnorm.hpp"
#include "depthprior/spline.hpp"

namespace depthprior::matching {

using DepthMaps = std::map<std::string, DepthMap, std::less<>>;

struct MatchConfig {
    double iou_threshold = 0.5;
    bool class_aware = true;
    /// A ground-truth box is missed when no raw detection scoring at least this much matches it.
    double md_score_floor = 0.1;

    void validate() const {
        if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("iou threshold must lie in (0,1]");
    }
};

struct CostModel {
    double c_fn = 1.0;
    double c_fp = 1.0;
};

inline double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

/// Greedy one-to-one assignment result. Indices refer to the inputs of the call.
struct ImageMatch {
    std::vector<int> det_to_gt;  // -1: extra detection
    std::vector<int> gt_to_det;  // -1: missed

    [[nodiscard]] std::size_t matched() const {
        return static_cast<std::size_t>(std::count_if(det_to_gt.begin(), det_to_gt.end(), [](int g) { return g >= 0; }));
    }
};

namespace detail {

// Score-descending greedy matching (ties keep input order); each detection claims the
// unclaimed, class-compatible ground truth of highest IoU >= threshold, lowest index on ties.
inline ImageMatch greedy(std::span<const Detection* const> dets, std::span<const GroundTruthBox* const> gts,
                         const MatchConfig& cfg) {
    ImageMatch out{std::vector<int>(dets.size(), -1), std::vector<int>(gts.size(), -1)};
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return dets[a]->score > dets[b]->score; });
    for (auto di : order) {
        const Detection& d = *dets[di];
        int best = -1;
        double best_iou = cfg.iou_threshold;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (out.gt_to_det[g] >= 0) continue;
            if (cfg.class_aware && gts[g]->class_id != d.class_id) continue;
            const double v = iou(d.box, gts[g]->box);
            if (v >= cfg.iou_threshold && (best < 0 || v > best_iou)) {
                best = static_cast<int>(g);
                best_iou = v;
            }
        }
        if (best >= 0) {
            out.det_to_gt[di] = best;
            out.gt_to_det[static_cast<std::size_t>(best)] = static_cast<int>(di);
        }
    }
    return out;
}

template <typename T>
std::vector<const T*> pointers(std::span<const T> items) {
    std::vector<const T*> out;
    out.reserve(items.size());
    for (const auto& x : items) out.push_back(&x);
    return out;
}

}  // namespace detail

inline ImageMatch match_image(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                              const MatchConfig& cfg = {}) {
    cfg.validate();
    const std::string* id = nullptr;
    auto check = [&](const std::string& s) {
        if (!id) id = &s;
        else if (*id != s) throw DomainError("match_image: records from more than one image");
    };
    for (const auto& d : dets) check(d.image_id);
    for (const auto& g : gts) check(g.image_id);
    const auto dp = detail::pointers(dets);
    const auto gp = detail::pointers(gts);
    return detail::greedy(dp, gp, cfg);
}

/// Original-index lists of the detections and ground truth of each image, in image-id order.
struct ImageGroup {
    std::vector<std::size_t> dets;
    std::vector<std::size_t> gts;
};

inline std::map<std::string, ImageGroup, std::less<>> group_by_image(std::span<const Detection> dets,
                                                                     std::span<const GroundTruthBox> gts) {
    std::map<std::string, ImageGroup, std::less<>> out;
    for (std::size_t i = 0; i < dets.size(); ++i) out[dets[i].image_id].dets.push_back(i);
    for (std::size_t i = 0; i < gts.size(); ++i) out[gts[i].image_id].gts.push_back(i);
    return out;
}

inline const DepthMap& depth_for(const DepthMaps& maps, const std::string& image_id) {
    auto it = maps.find(image_id);
    if (it == maps.end()) throw LookupError("no depth map for image \"" + image_id + "\"");
    return it->second;
}

/// Either a constant reference threshold or a depth-dependent curve.
class ThresholdSource {
public:
    ThresholdSource(double tau0) : tau0_(tau0) {}
    ThresholdSource(ThresholdCurve curve) : tau0_(curve.tau0), curve_(std::move(curve)), basis_(spline::BasisSpec(*curve_)) {}

    [[nodiscard]] bool needs_depth() const { return curve_.has_value(); }
    [[nodiscard]] double tau0() const { return tau0_; }
    [[nodiscard]] double threshold(double depth) const {
        return curve_ ? spline::threshold_at(*basis_, *curve_, depth) : tau0_;
    }
    [[nodiscard]] bool keeps(double score, double depth) const { return score >= threshold(depth); }

private:
    double tau0_;
    std::optional<ThresholdCurve> curve_;
    std::optional<spline::BasisSpec> basis_;
};

inline std::size_t bin_index(double value, std::size_t bins) {
    if (!(value > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(value * static_cast<double>(bins)), bins - 1);
}

struct DepthBin {
    std::size_t gt = 0, td = 0, ed = 0, md = 0;
    friend bool operator==(const DepthBin&, const DepthBin&) = default;
};

/// Match rate per (score bin, depth bin); `value` is empty when the cell holds no detection.
struct MatchGrid {
    std::size_t score_bins = 10;
    std::size_t depth_bins = 10;
    std::vector<std::size_t> matched;
    std::vector<std::size_t> total;

    [[nodiscard]] std::optional<double> value(std::size_t s, std::size_t d) const {
        const auto n = total[s * depth_bins + d];
        if (n == 0) return std::nullopt;
        return static_cast<double>(matched[s * depth_bins + d]) / static_cast<double>(n);
    }
    friend bool operator==(const MatchGrid&, const MatchGrid&) = default;
};

struct MatchReport {
    std::size_t td = 0;
    std::size_t ed = 0;
    std::size_t md = 0;
    std::size_t gt_total = 0;
    /// Ground truth matched under the md_score_floor pool; gt_total == gt_floor_matched + md.
    std::size_t gt_floor_matched = 0;
    std::size_t retained = 0;
    std::vector<DepthBin> per_depth_bins;
    /// Records on images without a depth map are counted but not binned.
    std::size_t unbinned = 0;
    MatchGrid grid;
    /// (detection index, ground-truth index) of every true detection, in input indexing.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

struct ReportOptions {
    std::size_t depth_bins = 10;
    std::size_t score_bins = 10;
};

/// Filters detections by the threshold source, matches the retained set, and bins everything by
/// normalized box depth. Missed ground truth is judged against the raw pool above md_score_floor.
inline MatchReport count_report(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                                const DepthMaps& depth_maps, const MatchConfig& cfg, const ThresholdSource& source,
                                const ReportOptions& opts = {}) {
    cfg.validate();
    MatchReport rep;
    rep.per_depth_bins.assign(opts.depth_bins, {});
    rep.grid = {opts.score_bins, opts.depth_bins, std::vector<std::size_t>(opts.score_bins * opts.depth_bins, 0),
                std::vector<std::size_t>(opts.score_bins * opts.depth_bins, 0)};
    rep.gt_total = gts.size();

    for (const auto& [image_id, group] : group_by_image(dets, gts)) {
        std::optional<depthnorm::ImageDepth> depth;
        if (auto it = depth_maps.find(image_id); it != depth_maps.end()) depth.emplace(it->second);
        else if (source.needs_depth() && !group.dets.empty())
            throw LookupError("no depth map for image \"" + image_id + "\"");

        std::vector<double> det_depth(group.dets.size(), 0.0);
        if (depth)
            for (std::size_t i = 0; i < group.dets.size(); ++i) det_depth[i] = depth->box_depth(dets[group.dets[i]].box);

        std::vector<const Detection*> kept, floor_pool;
        std::vector<std::size_t> kept_local;
        for (std::size_t i = 0; i < group.dets.size(); ++i) {
            const Detection& d = dets[group.dets[i]];
            if (source.keeps(d.score, det_depth[i])) {
                kept.push_back(&d);
                kept_local.push_back(i);
            }
            if (d.score >= cfg.md_score_floor) floor_pool.push_back(&d);
        }
        std::vector<const GroundTruthBox*> gp;
        for (auto g : group.gts) gp.push_back(&gts[g]);

        const auto post = detail::greedy(kept, gp, cfg);
        const auto floor = detail::greedy(floor_pool, gp, cfg);

        rep.retained += kept.size();
        for (std::size_t k = 0; k < kept.size(); ++k) {
            const bool hit = post.det_to_gt[k] >= 0;
            if (hit) {
                ++rep.td;
                rep.pairs.emplace_back(group.dets[kept_local[k]], group.gts[static_cast<std::size_t>(post.det_to_gt[k])]);
            } else {
                ++rep.ed;
            }
            if (depth) {
                const double dd = det_depth[kept_local[k]];
                auto& bin = rep.per_depth_bins[bin_index(dd, opts.depth_bins)];
                (hit ? bin.td : bin.ed)++;
                const auto cell = bin_index(kept[k]->score, opts.score_bins) * opts.depth_bins + bin_index(dd, opts.depth_bins);
                rep.grid.total[cell]++;
                if (hit) rep.grid.matched[cell]++;
            } else {
                ++rep.unbinned;
            }
        }
        for (std::size_t g = 0; g < gp.size(); ++g) {
            const bool missed = floor.gt_to_det[g] < 0;
            if (missed) ++rep.md;
            else ++rep.gt_floor_matched;
            if (depth) {
                auto& bin = rep.per_depth_bins[bin_index(depth->box_depth(gp[g]->box), opts.depth_bins)];
                ++bin.gt;
                if (missed) ++bin.md;
            } else {
                ++rep.unbinned;
            }
        }
    }
    std::sort(rep.pairs.begin(), rep.pairs.end());
    return rep;
}

/// Fraction of detections matched per (score, depth) cell over the full detection pool.
inline MatchGrid match_rate_grid(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                                 const DepthMaps& depth_maps, std::size_t score_bins, std::size_t depth_bins,
                                 const MatchConfig& cfg = {}) {
    if (score_bins < 1 || depth_bins < 1) throw DomainError("bin counts must be >= 1");
    MatchConfig all = cfg;
    all.md_score_floor = 0.0;
    return count_report(dets, gts, depth_maps, all, ThresholdSource(0.0), {depth_bins, score_bins}).grid;
}

struct ParetoRow {
    double tau0 = 0;
    std::size_t td = 0, ed = 0;
    std::optional<std::size_t> td_star, ed_star;
};

inline std::vector<ParetoRow> pareto_sweep(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                                           const DepthMaps& depth_maps, std::span<const double> taus,
                                           const LookupTable* lut = nullptr, const MatchConfig& cfg = {}) {
    if (taus.empty()) throw DomainError("pareto sweep needs at least one reference threshold");
    if (!std::is_sorted(taus.begin(), taus.end())) throw DomainError("reference thresholds must be sorted");
    std::vector<ParetoRow> rows;
    for (double tau : taus) {
        ParetoRow row;
        row.tau0 = tau;
        const auto stat = count_report(dets, gts, depth_maps, cfg, ThresholdSource(tau));
        row.td = stat.td;
        row.ed = stat.ed;
        if (lut) {
            const auto adapt = count_report(dets, gts, depth_maps, cfg, ThresholdSource(lut->at(tau)));
            row.td_star = adapt.td;
            row.ed_star = adapt.ed;
        }
        rows.push_back(row);
    }
    return rows;
}

struct BinThreshold {
    /// NaN when the bin holds no detection.
    double tau = std::numeric_limits<double>::quiet_NaN();
    std::size_t detections = 0;
    [[nodiscard]] bool empty() const { return detections == 0; }
};

/// Smallest score s in each depth bin where P_TP/(1 - P_TP) >= c_fp/c_fn, with P_TP(s) the matched
/// fraction of that bin's detections scoring >= s. Bins where no score qualifies return 1.0.
inline std::vector<BinThreshold> empirical_optimal_threshold(std::span<const Detection> dets,
                                                             std::span<const GroundTruthBox> gts,
                                                             const DepthMaps& depth_maps, const CostModel& cost,
                                                             std::size_t bins, const MatchConfig& cfg = {}) {
    if (!(cost.c_fn > 0.0 && cost.c_fp > 0.0)) throw ConfigError("costs must be positive");
    if (bins < 1) throw DomainError("bin count must be >= 1");
    std::vector<std::vector<std::pair<double, bool>>> per_bin(bins);
    for (const auto& [image_id, group] : group_by_image(dets, gts)) {
        if (group.dets.empty()) continue;
        const depthnorm::ImageDepth depth(depth_for(depth_maps, image_id));
        std::vector<const Detection*> dp;
        std::vector<const GroundTruthBox*> gp;
        for (auto i : group.dets) dp.push_back(&dets[i]);
        for (auto i : group.gts) gp.push_back(&gts[i]);
        const auto m = detail::greedy(dp, gp, cfg);
        for (std::size_t i = 0; i < dp.size(); ++i)
            per_bin[bin_index(depth.box_depth(dp[i]->box), bins)].emplace_back(dp[i]->score, m.det_to_gt[i] >= 0);
    }

    std::vector<BinThreshold> out(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        auto& entries = per_bin[b];
        out[b].detections = entries.size();
        if (entries.empty()) continue;
        std::sort(entries.begin(), entries.end(), [](auto& x, auto& y) { return x.first > y.first; });
        // Walk scores high to low; cumulative counts give P_TP for "score >= s".
        double best = 1.0;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            hits += entries[i].second ? 1 : 0;
            if (i + 1 < entries.size() && entries[i + 1].first == entries[i].first) continue;
            const double n = static_cast<double>(i + 1);
            const double p = static_cast<double>(hits) / n;
            if (cost.c_fn * p >= cost.c_fp * (1.0 - p)) best = entries[i].first;
        }
        out[b].tau = best;
    }
    return out;
}

}  // namespace depthprior::matching

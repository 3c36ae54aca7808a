#pragma once

// COCO-style box AP/AR: 10 IoU thresholds 0.50:0.05:0.95, 101-point interpolated precision,
// size bins on ground-truth pixel area (small < 32^2 <= medium < 96^2 <= large), 100 detections
// per image. Metrics that have no ground truth to score are reported as -1.

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "depthprior/core.hpp"
#include "depthprior/matching.hpp"

namespace depthprior::coco {

struct CocoMetrics {
    double map = -1, map50 = -1, map_s = -1, map_m = -1, map_l = -1;
    double mar = -1, mar_s = -1, mar_m = -1, mar_l = -1;
};

struct CocoParams {
    std::size_t max_dets = 100;
};

namespace detail {

inline constexpr std::size_t kIouCount = 10;
inline constexpr std::size_t kRecallPoints = 101;
inline constexpr std::size_t kAreaCount = 4;  // all, small, medium, large

inline std::array<double, kIouCount> iou_thresholds() {
    std::array<double, kIouCount> t{};
    const double step = (0.95 - 0.5) / 9.0;
    for (std::size_t i = 0; i < kIouCount; ++i) t[i] = static_cast<double>(i) * step + 0.5;
    t[kIouCount - 1] = 0.95;
    return t;
}

inline std::array<double, kRecallPoints> recall_points() {
    std::array<double, kRecallPoints> r{};
    const double step = 1.0 / 100.0;
    for (std::size_t i = 0; i < kRecallPoints; ++i) r[i] = static_cast<double>(i) * step;
    r[kRecallPoints - 1] = 1.0;
    return r;
}

inline constexpr std::array<std::array<double, 2>, kAreaCount> kAreaRanges{
    {{0.0, 1e10}, {0.0, 32.0 * 32.0}, {32.0 * 32.0, 96.0 * 96.0}, {96.0 * 96.0, 1e10}}};

inline bool outside(double area, std::size_t a) { return area < kAreaRanges[a][0] || area > kAreaRanges[a][1]; }

// Per (image, category, area range): kept detections with their match / ignore flags per IoU.
struct ImageEval {
    std::vector<double> scores;
    std::vector<std::array<bool, kIouCount>> matched;
    std::vector<std::array<bool, kIouCount>> ignored;
    std::size_t gt_counted = 0;
};

inline ImageEval evaluate_image(std::vector<const Detection*> dts, std::vector<const GroundTruthBox*> gts,
                                std::size_t area, std::size_t max_dets) {
    const auto thresholds = iou_thresholds();
    ImageEval ev;
    std::vector<bool> gt_ignore(gts.size());
    for (std::size_t g = 0; g < gts.size(); ++g) gt_ignore[g] = outside(gts[g]->box.area(), area);
    // Non-ignored ground truth first.
    std::vector<std::size_t> gorder(gts.size());
    std::iota(gorder.begin(), gorder.end(), 0);
    std::stable_sort(gorder.begin(), gorder.end(), [&](auto a, auto b) { return gt_ignore[a] < gt_ignore[b]; });
    std::stable_sort(dts.begin(), dts.end(), [](auto a, auto b) { return a->score > b->score; });
    if (dts.size() > max_dets) dts.resize(max_dets);

    for (auto g : gorder) ev.gt_counted += gt_ignore[g] ? 0 : 1;
    ev.scores.resize(dts.size());
    ev.matched.assign(dts.size(), {});
    ev.ignored.assign(dts.size(), {});

    for (std::size_t t = 0; t < kIouCount; ++t) {
        std::vector<bool> gt_taken(gts.size(), false);
        for (std::size_t d = 0; d < dts.size(); ++d) {
            double best = std::min(thresholds[t], 1.0 - 1e-10);
            int m = -1;
            for (std::size_t gi = 0; gi < gorder.size(); ++gi) {
                const auto g = gorder[gi];
                if (gt_taken[g]) continue;
                if (m > -1 && !gt_ignore[static_cast<std::size_t>(m)] && gt_ignore[g]) break;
                const double v = matching::iou(dts[d]->box, gts[g]->box);
                if (v < best) continue;
                best = v;
                m = static_cast<int>(g);
            }
            if (m == -1) {
                ev.ignored[d][t] = outside(dts[d]->box.area(), area);
                continue;
            }
            gt_taken[static_cast<std::size_t>(m)] = true;
            ev.matched[d][t] = true;
            ev.ignored[d][t] = gt_ignore[static_cast<std::size_t>(m)];
        }
    }
    for (std::size_t d = 0; d < dts.size(); ++d) ev.scores[d] = dts[d]->score;
    return ev;
}

struct Accumulated {
    double precision = -1;  // mean over recall points
    double recall = -1;
};

inline Accumulated accumulate(const std::vector<ImageEval>& evals, std::size_t t) {
    std::size_t npig = 0;
    struct Row {
        double score;
        bool matched, ignored;
    };
    std::vector<Row> rows;
    for (const auto& ev : evals) {
        npig += ev.gt_counted;
        for (std::size_t d = 0; d < ev.scores.size(); ++d) rows.push_back({ev.scores[d], ev.matched[d][t], ev.ignored[d][t]});
    }
    if (npig == 0) return {};
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.score > b.score; });

    const std::size_t nd = rows.size();
    std::vector<double> rc(nd), pr(nd);
    double tp = 0, fp = 0;
    constexpr double eps = 2.220446049250313e-16;
    for (std::size_t i = 0; i < nd; ++i) {
        if (!rows[i].ignored) (rows[i].matched ? tp : fp) += 1.0;
        rc[i] = tp / static_cast<double>(npig);
        pr[i] = tp / (fp + tp + eps);
    }
    Accumulated out;
    out.recall = nd ? rc.back() : 0.0;
    for (std::size_t i = nd; i-- > 1;)
        if (pr[i] > pr[i - 1]) pr[i - 1] = pr[i];
    const auto points = recall_points();
    double sum = 0.0;
    for (double r : points) {
        const auto pos = static_cast<std::size_t>(std::lower_bound(rc.begin(), rc.end(), r) - rc.begin());
        sum += pos < nd ? pr[pos] : 0.0;
    }
    out.precision = sum / static_cast<double>(kRecallPoints);
    return out;
}

inline double mean_valid(const std::vector<double>& xs) {
    double s = 0;
    std::size_t n = 0;
    for (double x : xs)
        if (x > -1) {
            s += x;
            ++n;
        }
    return n ? s / static_cast<double>(n) : -1.0;
}

}  // namespace detail

inline CocoMetrics coco_map(std::span<const Detection> dets, std::span<const GroundTruthBox> gts, const CocoParams& params = {}) {
    using namespace detail;
    std::set<std::uint32_t> categories;
    for (const auto& g : gts) categories.insert(g.class_id);
    const auto groups = matching::group_by_image(dets, gts);

    // precision/recall[area][t] collected over categories
    std::array<std::array<std::vector<double>, kIouCount>, kAreaCount> prec, rec;
    for (auto cat : categories) {
        for (std::size_t a = 0; a < kAreaCount; ++a) {
            std::vector<ImageEval> evals;
            for (const auto& [id, group] : groups) {
                std::vector<const Detection*> dp;
                std::vector<const GroundTruthBox*> gp;
                for (auto i : group.dets)
                    if (dets[i].class_id == cat) dp.push_back(&dets[i]);
                for (auto i : group.gts)
                    if (gts[i].class_id == cat) gp.push_back(&gts[i]);
                if (dp.empty() && gp.empty()) continue;
                evals.push_back(evaluate_image(std::move(dp), std::move(gp), a, params.max_dets));
            }
            for (std::size_t t = 0; t < kIouCount; ++t) {
                const auto acc = accumulate(evals, t);
                prec[a][t].push_back(acc.precision);
                rec[a][t].push_back(acc.recall);
            }
        }
    }
    auto pool = [&](const auto& table, std::size_t a, bool only50) {
        std::vector<double> xs;
        for (std::size_t t = 0; t < (only50 ? 1 : kIouCount); ++t) xs.insert(xs.end(), table[a][t].begin(), table[a][t].end());
        return mean_valid(xs);
    };
    CocoMetrics m;
    m.map = pool(prec, 0, false);
    m.map50 = pool(prec, 0, true);
    m.map_s = pool(prec, 1, false);
    m.map_m = pool(prec, 2, false);
    m.map_l = pool(prec, 3, false);
    m.mar = pool(rec, 0, false);
    m.mar_s = pool(rec, 1, false);
    m.mar_m = pool(rec, 2, false);
    m.mar_l = pool(rec, 3, false);
    return m;
}

}  // namespace depthprior::coco

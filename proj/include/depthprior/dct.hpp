#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "depthprior/core.hpp"
#include "depthprior/depthnorm.hpp"
#include "depthprior/matching.hpp"
#include "depthprior/optimizer.hpp"
#include "depthprior/spline.hpp"

namespace depthprior::dct {

using matching::DepthMaps;

enum class ObjectiveVariant { Base, AbsRatio, RelRatio };
enum class CoeffBounds { Safe, Literal };

inline std::string_view to_string(ObjectiveVariant v) {
    switch (v) {
        case ObjectiveVariant::Base: return "base";
        case ObjectiveVariant::AbsRatio: return "abs_ratio";
        case ObjectiveVariant::RelRatio: return "rel_ratio";
    }
    return "base";
}

inline ObjectiveVariant parse_objective(std::string_view s) {
    if (s == "base") return ObjectiveVariant::Base;
    if (s == "abs_ratio") return ObjectiveVariant::AbsRatio;
    if (s == "rel_ratio") return ObjectiveVariant::RelRatio;
    throw ConfigError("unknown objective variant: " + std::string(s));
}

inline std::string_view to_string(CoeffBounds b) { return b == CoeffBounds::Safe ? "safe" : "literal"; }

inline CoeffBounds parse_bounds(std::string_view s) {
    if (s == "safe") return CoeffBounds::Safe;
    if (s == "literal") return CoeffBounds::Literal;
    throw ConfigError("unknown coefficient bounds mode: " + std::string(s));
}

inline std::vector<double> default_taus() {
    std::vector<double> t;
    for (int i = 1; i <= 9; ++i) t.push_back(i / 10.0);
    return t;
}

struct FitConfig {
    std::vector<double> taus = default_taus();
    std::size_t knots = 10;
    double d_lo = 0.0;
    double d_hi = 0.9;
    double epsilon = 0.1;
    double gamma = 1000.0;
    double rho = 0.1;
    ObjectiveVariant objective = ObjectiveVariant::Base;
    CoeffBounds bounds = CoeffBounds::Safe;
    matching::MatchConfig match;
    opt::DEParams optimizer;

    void validate() const {
        if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
        if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
        if (knots < 4) throw ConfigError("at least 4 spline coefficients required");
        if (!(d_lo >= 0.0 && d_lo < d_hi && d_hi <= 1.0)) throw ConfigError("knot domain must satisfy 0 <= lo < hi <= 1");
        if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0,1)");
        for (double t : taus) {
            if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("reference thresholds must lie in [0,1]");
            if (bounds == CoeffBounds::Safe && t < rho) throw ConfigError("reference thresholds must be >= rho");
        }
        match.validate();
    }

    [[nodiscard]] LutFitConfig record() const {
        LutFitConfig r;
        r.epsilon = epsilon;
        r.gamma = gamma;
        r.rho = rho;
        r.knots = knots;
        r.objective = std::string(to_string(objective));
        r.coeff_bounds = std::string(to_string(bounds));
        r.iou_threshold = match.iou_threshold;
        r.class_aware = match.class_aware;
        r.seed = optimizer.seed;
        r.population = optimizer.population;
        r.generations = optimizer.generations;
        r.stagnation = optimizer.stagnation;
        r.budget = optimizer.budget;
        return r;
    }

    [[nodiscard]] opt::Bounds coefficient_bounds(double tau0) const {
        if (bounds == CoeffBounds::Safe)
            return {std::vector<double>(knots, 0.0), std::vector<double>(knots, std::max(0.0, tau0 - rho))};
        return {std::vector<double>(knots, rho), std::vector<double>(knots, 1.0)};
    }
};

struct Counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    friend bool operator==(const Counts&, const Counts&) = default;
};

/// Validation corpus with everything that does not depend on the coefficients precomputed:
/// box depths, their local basis values, and each detection's IoU-ranked candidate ground truth.
class FitProblem {
public:
    FitProblem(std::span<const Detection> dets, std::span<const GroundTruthBox> gts, const DepthMaps& depth_maps,
               std::size_t knots, double d_lo, double d_hi, const matching::MatchConfig& match = {})
        : basis_(knots, d_lo, d_hi) {
        match.validate();
        if (dets.empty() && gts.empty()) throw DomainError("validation corpus is empty");
        for (const auto& [image_id, group] : matching::group_by_image(dets, gts)) {
            Image img;
            img.gt_count = group.gts.size();
            if (!group.dets.empty()) {
                const depthnorm::ImageDepth depth(matching::depth_for(depth_maps, image_id));
                std::vector<std::size_t> order(group.dets.size());
                std::iota(order.begin(), order.end(), 0);
                std::stable_sort(order.begin(), order.end(),
                                 [&](auto a, auto b) { return dets[group.dets[a]].score > dets[group.dets[b]].score; });
                for (auto local : order) {
                    const Detection& d = dets[group.dets[local]];
                    Entry e;
                    e.score = d.score;
                    e.depth = depth.box_depth(d.box);
                    e.first = basis_.eval_local(e.depth, e.basis);
                    std::vector<std::pair<double, std::uint32_t>> cands;
                    for (std::size_t g = 0; g < group.gts.size(); ++g) {
                        const auto& gt = gts[group.gts[g]];
                        if (match.class_aware && gt.class_id != d.class_id) continue;
                        const double v = matching::iou(d.box, gt.box);
                        if (v >= match.iou_threshold) cands.emplace_back(v, static_cast<std::uint32_t>(g));
                    }
                    std::stable_sort(cands.begin(), cands.end(), [](auto& a, auto& b) { return a.first > b.first; });
                    e.cand_begin = candidates_.size();
                    for (auto& c : cands) candidates_.push_back(c.second);
                    e.cand_end = candidates_.size();
                    img.entries.push_back(e);
                }
            }
            detections_ += group.dets.size();
            images_.push_back(std::move(img));
        }
    }

    [[nodiscard]] const spline::BasisSpec& basis() const { return basis_; }
    [[nodiscard]] std::size_t detections() const { return detections_; }

    /// TP/FP after keeping detections with score >= clip(tau0 - g(depth)).
    [[nodiscard]] Counts count(double tau0, std::span<const double> psi) const {
        Counts c;
        std::vector<std::uint8_t> taken;
        for (const auto& img : images_) {
            taken.assign(img.gt_count, 0);
            for (const auto& e : img.entries) {
                double g = 0.0;
                for (int i = 0; i <= spline::kDegree; ++i) g += psi[e.first + i] * e.basis[i];
                if (!(e.score >= spline::clip_threshold(tau0 - g))) continue;
                bool hit = false;
                for (std::size_t k = e.cand_begin; k < e.cand_end; ++k)
                    if (!taken[candidates_[k]]) {
                        taken[candidates_[k]] = 1;
                        hit = true;
                        break;
                    }
                (hit ? c.tp : c.fp)++;
            }
        }
        return c;
    }

    [[nodiscard]] Counts count_static(double tau0) const {
        const std::vector<double> zero(basis_.count(), 0.0);
        return count(tau0, zero);
    }

private:
    struct Entry {
        double score = 0;
        double depth = 0;
        std::size_t first = 0;
        double basis[spline::kDegree + 1]{};
        std::size_t cand_begin = 0, cand_end = 0;
    };
    struct Image {
        std::size_t gt_count = 0;
        std::vector<Entry> entries;  // score-descending
    };

    spline::BasisSpec basis_;
    std::vector<Image> images_;
    std::vector<std::uint32_t> candidates_;
    std::size_t detections_ = 0;
};

struct ObjectiveValue {
    double m = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    bool feasible = true;
};

namespace detail {

inline double ratio(std::size_t td, std::size_t ed) {
    return static_cast<double>(td) / static_cast<double>(ed == 0 ? 1 : ed);
}

}  // namespace detail

/// Scores a TP/FP pair against the static baseline. Every variant carries the FP penalty
/// gamma * max(0, FP - FP_static (1 + epsilon)).
inline ObjectiveValue score_counts(const Counts& star, const Counts& stat, const FitConfig& cfg) {
    const double allowed = static_cast<double>(stat.fp) * (1.0 + cfg.epsilon);
    const double penalty = cfg.gamma * std::max(0.0, static_cast<double>(star.fp) - allowed);
    const double d_td = static_cast<double>(star.tp) - static_cast<double>(stat.tp);
    const double d_ed = static_cast<double>(star.fp) - static_cast<double>(stat.fp);
    double m = 0.0;
    switch (cfg.objective) {
        case ObjectiveVariant::Base: m = static_cast<double>(star.tp); break;
        case ObjectiveVariant::AbsRatio: m = d_td - d_ed + detail::ratio(star.tp, star.fp); break;
        case ObjectiveVariant::RelRatio:
            m = d_td - d_ed + (detail::ratio(star.tp, star.fp) - detail::ratio(stat.tp, stat.fp));
            break;
    }
    return {m - penalty, star.tp, star.fp, static_cast<double>(star.fp) <= allowed};
}

inline ObjectiveValue evaluate(const FitProblem& problem, double tau0, std::span<const double> psi, const Counts& stat,
                               const FitConfig& cfg) {
    return score_counts(problem.count(tau0, psi), stat, cfg);
}

/// Objective at coefficients psi for reference threshold tau0 on a validation corpus.
inline ObjectiveValue objective(std::span<const double> psi, std::span<const Detection> dets,
                                std::span<const GroundTruthBox> gts, const DepthMaps& depth_maps, double tau0,
                                const FitConfig& cfg) {
    const FitProblem problem(dets, gts, depth_maps, cfg.knots, cfg.d_lo, cfg.d_hi, cfg.match);
    if (psi.size() != cfg.knots) throw ConfigError("coefficient count does not match knots");
    return evaluate(problem, tau0, psi, problem.count_static(tau0), cfg);
}

struct FitLogEntry {
    double tau0 = 0;
    std::size_t generation = 0;
    std::size_t evaluations = 0;
    double best_m = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
};

using FitLogger = std::function<void(const FitLogEntry&)>;

struct FitOutcome {
    ThresholdCurve curve;
    std::size_t tp_static = 0, fp_static = 0;
    std::size_t tp_star = 0, fp_star = 0;
    double objective_value = 0;
    double objective_at_zero = 0;
    std::size_t evaluations_used = 0;
    std::size_t generations = 0;
    bool feasible = true;
    bool repaired = false;
};

/// Derives a per-threshold optimizer seed from the run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::size_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline FitOutcome fit_curve(const FitProblem& problem, double tau0, const FitConfig& cfg, std::uint64_t seed,
                            const FitLogger& log = {}) {
    cfg.validate();
    if (problem.detections() == 0) throw DomainError("validation corpus has no detections");
    const Counts stat = problem.count_static(tau0);
    const auto bounds = cfg.coefficient_bounds(tau0);
    const bool safe = cfg.bounds == CoeffBounds::Safe;
    const std::vector<std::vector<double>> initial{safe ? std::vector<double>(cfg.knots, 0.0) : bounds.lower};

    auto f = [&](std::span<const double> psi) {
        const auto v = evaluate(problem, tau0, psi, stat, cfg);
        return opt::Evaluation{v.m, v.feasible};
    };
    opt::DEParams params = cfg.optimizer;
    params.seed = seed;
    const opt::DifferentialEvolution de(params);
    opt::GenerationCallback on_gen;
    if (log)
        on_gen = [&](const opt::GenerationStats& s) {
            const auto c = problem.count(tau0, s.best);
            log({tau0, s.generation, s.evaluations, s.best_eval.value, c.tp, c.fp});
        };
    const auto res = de.maximize(f, bounds, initial, on_gen);

    FitOutcome out;
    out.tp_static = stat.tp;
    out.fp_static = stat.fp;
    out.evaluations_used = res.evaluations;
    out.generations = res.generations;
    out.objective_at_zero = score_counts(stat, stat, cfg).m;

    std::vector<double> chosen = res.best_feasible.empty() ? res.best : res.best_feasible;
    if (safe && !res.best_eval.feasible) {
        // Shrink the best infeasible candidate toward psi = 0 until it satisfies the FP bound.
        for (int k = 1; k <= 20; ++k) {
            std::vector<double> scaled(res.best);
            for (double& x : scaled) x *= 1.0 - k / 20.0;
            const auto v = evaluate(problem, tau0, scaled, stat, cfg);
            if (!v.feasible) continue;
            if (v.m > res.best_feasible_eval.value) {
                chosen = std::move(scaled);
                out.repaired = true;
            }
            break;
        }
    }

    const auto final_value = evaluate(problem, tau0, chosen, stat, cfg);
    out.curve = ThresholdCurve{tau0, cfg.d_lo, cfg.d_hi, std::move(chosen), cfg.rho};
    out.tp_star = final_value.tp;
    out.fp_star = final_value.fp;
    out.objective_value = final_value.m;
    out.feasible = final_value.feasible;
    if (safe && (!out.feasible || out.objective_value < out.objective_at_zero))
        throw std::logic_error("fit returned a curve that is infeasible or worse than the static threshold");
    return out;
}

inline FitOutcome fit_curve(std::span<const Detection> dets, std::span<const GroundTruthBox> gts, const DepthMaps& depth_maps,
                            double tau0, const FitConfig& cfg, const FitLogger& log = {}) {
    if (dets.empty()) throw DomainError("validation corpus has no detections");
    const FitProblem problem(dets, gts, depth_maps, cfg.knots, cfg.d_lo, cfg.d_hi, cfg.match);
    return fit_curve(problem, tau0, cfg, cfg.optimizer.seed, log);
}

struct LutBuild {
    LookupTable table;
    std::vector<FitOutcome> outcomes;  // aligned with table.entries()
};

/// One independent fit per reference threshold (run concurrently); the result depends only on
/// the inputs and the configured seed.
inline LutBuild build_lut(std::span<const Detection> dets, std::span<const GroundTruthBox> gts, const DepthMaps& depth_maps,
                          const FitConfig& cfg, const FitLogger& log = {}) {
    cfg.validate();
    if (cfg.taus.empty()) throw DomainError("at least one reference threshold required");
    if (dets.empty()) throw DomainError("validation corpus has no detections");
    std::vector<double> taus = cfg.taus;
    std::sort(taus.begin(), taus.end());
    const FitProblem problem(dets, gts, depth_maps, cfg.knots, cfg.d_lo, cfg.d_hi, cfg.match);

    std::vector<std::vector<FitLogEntry>> logs(taus.size());
    std::vector<std::future<FitOutcome>> jobs;
    for (std::size_t r = 0; r < taus.size(); ++r) {
        FitLogger collect;
        if (log) collect = [&logs, r](const FitLogEntry& e) { logs[r].push_back(e); };
        jobs.push_back(std::async(std::launch::async, [&, r, collect] {
            return fit_curve(problem, taus[r], cfg, derive_seed(cfg.optimizer.seed, r), collect);
        }));
    }
    LutBuild out;
    std::vector<ThresholdCurve> entries;
    for (auto& j : jobs) {
        out.outcomes.push_back(j.get());
        entries.push_back(out.outcomes.back().curve);
    }
    if (log)
        for (const auto& l : logs)
            for (const auto& e : l) log(e);
    out.table = LookupTable(std::move(entries), cfg.record());
    return out;
}

/// Keeps detection i iff score_i >= tau(box depth_i) for the entry keyed exactly by tau0.
inline std::vector<Detection> apply_lut(std::span<const Detection> dets, const DepthMaps& depth_maps, double tau0,
                                        const LookupTable& lut) {
    const matching::ThresholdSource source(lut.at(tau0));
    std::vector<Detection> out;
    std::map<std::string, depthnorm::ImageDepth, std::less<>> cache;
    for (const auto& d : dets) {
        auto it = cache.find(d.image_id);
        if (it == cache.end()) it = cache.emplace(d.image_id, depthnorm::ImageDepth(matching::depth_for(depth_maps, d.image_id))).first;
        if (source.keeps(d.score, it->second.box_depth(d.box))) out.push_back(d);
    }
    return out;
}

/// Constant-threshold filtering, order preserved.
inline std::vector<Detection> static_filter(std::span<const Detection> dets, double tau0) {
    std::vector<Detection> out;
    for (const auto& d : dets)
        if (d.score >= tau0) out.push_back(d);
    return out;
}

}  // namespace depthprior::dct

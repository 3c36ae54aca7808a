#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "depthprior/matching.hpp"
#include "support/synthetic.hpp"

using namespace depthprior;
using namespace depthprior::matching;

namespace {

// Independent recount: per image, filter with the given predicate, greedy-match in score order.
struct Recount {
    std::size_t td = 0, ed = 0, md = 0, retained = 0;
    std::set<std::pair<std::size_t, std::size_t>> pairs;
};

template <typename Keep>
Recount recount(const test::Corpus& c, const MatchConfig& cfg, Keep keep) {
    Recount r;
    std::set<std::string> ids;
    for (const auto& d : c.dets) ids.insert(d.image_id);
    for (const auto& g : c.gts) ids.insert(g.image_id);
    for (const auto& id : ids) {
        auto greedy = [&](std::vector<std::size_t> ds) {
            std::stable_sort(ds.begin(), ds.end(), [&](auto a, auto b) { return c.dets[a].score > c.dets[b].score; });
            std::map<std::size_t, std::size_t> taken;  // gt -> det
            std::vector<std::pair<std::size_t, std::size_t>> out;
            for (auto di : ds) {
                double best = -1;
                std::size_t arg = 0;
                for (std::size_t g = 0; g < c.gts.size(); ++g) {
                    if (c.gts[g].image_id != id || taken.count(g)) continue;
                    if (cfg.class_aware && c.gts[g].class_id != c.dets[di].class_id) continue;
                    const double v = iou(c.dets[di].box, c.gts[g].box);
                    if (v >= cfg.iou_threshold && v > best) {
                        best = v;
                        arg = g;
                    }
                }
                if (best >= 0) {
                    taken[arg] = di;
                    out.emplace_back(di, arg);
                }
            }
            return std::pair{out, taken};
        };
        std::vector<std::size_t> kept, pool;
        for (std::size_t i = 0; i < c.dets.size(); ++i) {
            if (c.dets[i].image_id != id) continue;
            if (keep(i)) kept.push_back(i);
            if (c.dets[i].score >= cfg.md_score_floor) pool.push_back(i);
        }
        const auto [pairs, taken] = greedy(kept);
        r.retained += kept.size();
        r.td += pairs.size();
        r.ed += kept.size() - pairs.size();
        r.pairs.insert(pairs.begin(), pairs.end());
        const auto floor_taken = greedy(pool).second;
        for (std::size_t g = 0; g < c.gts.size(); ++g)
            if (c.gts[g].image_id == id && !floor_taken.count(g)) ++r.md;
    }
    return r;
}

}  // namespace

TEST(Iou, Basics) {
    EXPECT_EQ(iou({0, 0, 2, 2}, {0, 0, 2, 2}), 1.0);
    EXPECT_EQ(iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
    EXPECT_NEAR(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0, 1e-12);
}

TEST(MatchImage, SingleExactHit) {
    const std::vector<Detection> d{{"a", {0, 0, 10, 10}, 0.9, 1}};
    const std::vector<GroundTruthBox> g{{"a", {0, 0, 10, 10}, 1}};
    const auto m = match_image(d, g);
    EXPECT_EQ(m.det_to_gt, std::vector<int>{0});
    EXPECT_EQ(m.gt_to_det, std::vector<int>{0});
}

TEST(MatchImage, DetectionWithoutGroundTruthIsExtra) {
    const std::vector<Detection> d{{"a", {0, 0, 10, 10}, 0.9, 1}};
    const auto m = match_image(d, {});
    EXPECT_EQ(m.det_to_gt, std::vector<int>{-1});
}

TEST(MatchImage, ClassMismatchIsNotMatchedUnlessAgnostic) {
    const std::vector<Detection> d{{"a", {0, 0, 10, 10}, 0.9, 1}};
    const std::vector<GroundTruthBox> g{{"a", {0, 0, 10, 10}, 2}};
    EXPECT_EQ(match_image(d, g).matched(), 0u);
    EXPECT_EQ(match_image(d, g, {0.5, false}).matched(), 1u);
}

TEST(MatchImage, MixedImagesRejected) {
    const std::vector<Detection> d{{"a", {0, 0, 10, 10}, 0.9, 1}};
    const std::vector<GroundTruthBox> g{{"b", {0, 0, 10, 10}, 1}};
    EXPECT_THROW(match_image(d, g), DomainError);
}

TEST(MatchImage, HigherScoreClaimsFirst) {
    const std::vector<Detection> d{{"a", {0, 0, 10, 10}, 0.3, 0}, {"a", {1, 0, 11, 10}, 0.8, 0}};
    const std::vector<GroundTruthBox> g{{"a", {0, 0, 10, 10}, 0}};
    const auto m = match_image(d, g);
    EXPECT_EQ(m.det_to_gt, (std::vector<int>{-1, 0}));
}

TEST(MatchImage, EqualsExhaustiveAssignmentOnNonAdversarialInstances) {
    std::mt19937_64 rng(99);
    const MatchConfig cfg;
    int checked = 0;
    while (checked < 500) {
        auto [dets, gts] = test::small_instance(rng, 6);
        if (!test::non_adversarial(dets, gts, cfg)) continue;
        const auto m = match_image(dets, gts, cfg);
        const auto best = test::max_matching(dets, gts, cfg);
        ASSERT_EQ(m.matched(), best);
        ++checked;
    }
}

TEST(MatchImage, GreedyCanBeSuboptimalWhenOneDetectionOverlapsTwoGroundTruths) {
    // A overlaps G1 and G2 equally and takes G1 (lower index); B only overlaps G1 and is left over.
    // A maximum matching would pair A-G2 and B-G1.
    const std::vector<GroundTruthBox> g{{"a", {0, 0, 10, 10}, 0}, {"a", {4, 0, 14, 10}, 0}};
    const std::vector<Detection> d{{"a", {2, 0, 12, 10}, 0.9, 0}, {"a", {-2, 0, 8, 10}, 0.8, 0}};
    EXPECT_FALSE(test::non_adversarial(d, g, {}));
    EXPECT_EQ(match_image(d, g).matched(), 1u);
    EXPECT_EQ(test::max_matching(d, g, {}), 2u);
}

TEST(CountReport, ZeroCurveEqualsConstantThreshold) {
    const auto c = test::random_corpus(5, 50);
    for (double tau : {0.2, 0.5, 0.8}) {
        const auto a = count_report(c.dets, c.gts, c.maps, {}, ThresholdSource(tau));
        const auto b = count_report(c.dets, c.gts, c.maps, {}, ThresholdSource(ThresholdCurve::flat(tau, 10)));
        EXPECT_EQ(a.td, b.td);
        EXPECT_EQ(a.ed, b.ed);
        EXPECT_EQ(a.md, b.md);
        EXPECT_EQ(a.pairs, b.pairs);
        EXPECT_EQ(a.per_depth_bins, b.per_depth_bins);
        EXPECT_EQ(a.grid, b.grid);
    }
}

TEST(CountReport, ThresholdOneKeepsNothing) {
    const auto c = test::random_corpus(6, 20);
    MatchConfig cfg;
    cfg.md_score_floor = 1.0;
    const auto r = count_report(c.dets, c.gts, c.maps, cfg, ThresholdSource(1.0));
    EXPECT_EQ(r.td, 0u);
    EXPECT_EQ(r.ed, 0u);
    EXPECT_EQ(r.md, c.gts.size());
}

TEST(CountReport, MatchesNaiveRecountAndConserves) {
    const auto c = test::random_corpus(7, 50);
    const MatchConfig cfg;
    for (double tau : {0.0, 0.1, 0.3, 0.6, 0.9}) {
        const auto r = count_report(c.dets, c.gts, c.maps, cfg, ThresholdSource(tau));
        const auto o = recount(c, cfg, [&](std::size_t i) { return c.dets[i].score >= tau; });
        EXPECT_EQ(r.td, o.td);
        EXPECT_EQ(r.ed, o.ed);
        EXPECT_EQ(r.md, o.md);
        EXPECT_EQ(r.retained, o.retained);
        EXPECT_EQ(std::set(r.pairs.begin(), r.pairs.end()), o.pairs);
        EXPECT_EQ(r.td + r.ed, r.retained);
        EXPECT_EQ(r.gt_floor_matched + r.md, c.gts.size());
        // Above the floor the retained set is a score prefix of the floor pool, so its matches are
        // never counted as missed; at the floor both pools coincide and cover every GT.
        if (tau >= cfg.md_score_floor) {
            EXPECT_LE(r.td + r.md, c.gts.size());
        }
        if (tau == cfg.md_score_floor) {
            EXPECT_EQ(r.td + r.md, c.gts.size());
        }
        std::size_t binned_gt = 0, binned_td = 0, binned_md = 0;
        for (const auto& b : r.per_depth_bins) {
            binned_gt += b.gt;
            binned_td += b.td;
            binned_md += b.md;
        }
        EXPECT_EQ(binned_gt, c.gts.size());
        EXPECT_EQ(binned_td, r.td);
        EXPECT_EQ(binned_md, r.md);
    }
}

TEST(CountReport, CurveFilteringMatchesRecount) {
    const auto c = test::random_corpus(8, 50);
    ThresholdCurve curve = ThresholdCurve::flat(0.6, 10);
    for (std::size_t m = 0; m < 10; ++m) curve.psi[m] = 0.04 * static_cast<double>(m);
    const spline::BasisSpec spec(curve);
    const auto r = count_report(c.dets, c.gts, c.maps, {}, ThresholdSource(curve));
    const auto o = recount(c, {}, [&](std::size_t i) {
        const double d = depthnorm::box_depth(c.maps.at(c.dets[i].image_id), c.dets[i].box);
        return c.dets[i].score >= spline::threshold_at(spec, curve, d);
    });
    EXPECT_EQ(r.td, o.td);
    EXPECT_EQ(r.ed, o.ed);
    EXPECT_EQ(std::set(r.pairs.begin(), r.pairs.end()), o.pairs);
}

TEST(CountReport, RaisingThresholdNeverIncreasesCounts) {
    const auto c = test::random_corpus(9, 40);
    std::size_t td = SIZE_MAX, ed = SIZE_MAX;
    for (int i = 0; i <= 20; ++i) {
        const auto r = count_report(c.dets, c.gts, c.maps, {}, ThresholdSource(i / 20.0));
        EXPECT_LE(r.td, td);
        EXPECT_LE(r.ed, ed);
        td = r.td;
        ed = r.ed;
    }
}

TEST(CountReport, MissingDepthMapForCurveNamesImage) {
    auto c = test::random_corpus(10, 3);
    c.maps.erase(test::image_name(1));
    try {
        count_report(c.dets, c.gts, c.maps, {}, ThresholdSource(ThresholdCurve::flat(0.5, 10)));
        FAIL() << "expected lookup error";
    } catch (const LookupError& e) {
        EXPECT_NE(std::string(e.what()).find(test::image_name(1)), std::string::npos);
    }
}

TEST(MatchRateGrid, AllMatchedIsOne) {
    test::Corpus c;
    c.maps.emplace("a", test::gradient_map());
    for (int k = 0; k < 8; ++k) {
        const Box b = test::box_at_depth(5 + 22 * k, k / 8.0, 10);
        c.gts.push_back({"a", b, 0});
        c.dets.push_back({"a", b, 0.1 + 0.1 * k, 0});
    }
    const auto g = match_rate_grid(c.dets, c.gts, c.maps, 10, 10);
    std::size_t occupied = 0;
    for (std::size_t s = 0; s < 10; ++s)
        for (std::size_t d = 0; d < 10; ++d)
            if (auto v = g.value(s, d)) {
                EXPECT_EQ(*v, 1.0);
                ++occupied;
            }
    EXPECT_GT(occupied, 0u);
}

TEST(MatchRateGrid, NoGroundTruthIsZero) {
    auto c = test::random_corpus(11, 10);
    c.gts.clear();
    const auto g = match_rate_grid(c.dets, c.gts, c.maps, 5, 4);
    std::size_t total = 0;
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t d = 0; d < 4; ++d)
            if (auto v = g.value(s, d)) {
                EXPECT_EQ(*v, 0.0);
                total += g.total[s * 4 + d];
            }
    EXPECT_EQ(total, c.dets.size());
}

TEST(MatchRateGrid, EqualsPerCellOracle) {
    const auto c = test::random_corpus(12, 40);
    const auto g = match_rate_grid(c.dets, c.gts, c.maps, 7, 5);
    MatchConfig all;
    all.md_score_floor = 0.0;
    const auto o = recount(c, all, [](std::size_t) { return true; });
    std::set<std::size_t> matched;
    for (auto [d, _] : o.pairs) matched.insert(d);
    std::vector<std::size_t> hit(35, 0), n(35, 0);
    for (std::size_t i = 0; i < c.dets.size(); ++i) {
        const double depth = depthnorm::box_depth(c.maps.at(c.dets[i].image_id), c.dets[i].box);
        const auto s = std::min<std::size_t>(static_cast<std::size_t>(c.dets[i].score * 7), 6);
        const auto d = std::min<std::size_t>(static_cast<std::size_t>(depth * 5), 4);
        ++n[s * 5 + d];
        hit[s * 5 + d] += matched.count(i);
    }
    EXPECT_EQ(g.total, n);
    EXPECT_EQ(g.matched, hit);
    EXPECT_THROW(match_rate_grid(c.dets, c.gts, c.maps, 0, 5), DomainError);
}

TEST(ParetoSweep, SingleThresholdMatchesReport) {
    const auto c = test::random_corpus(13, 20);
    const std::vector<double> taus{0.4};
    const auto rows = pareto_sweep(c.dets, c.gts, c.maps, taus);
    ASSERT_EQ(rows.size(), 1u);
    const auto r = count_report(c.dets, c.gts, c.maps, {}, ThresholdSource(0.4));
    EXPECT_EQ(rows[0].td, r.td);
    EXPECT_EQ(rows[0].ed, r.ed);
    EXPECT_FALSE(rows[0].td_star.has_value());
}

TEST(ParetoSweep, MonotoneAndZeroLutIsIdentity) {
    const auto c = test::random_corpus(14, 50);
    std::vector<double> taus;
    std::vector<ThresholdCurve> entries;
    for (int i = 1; i <= 9; ++i) {
        taus.push_back(i / 10.0);
        entries.push_back(ThresholdCurve::flat(i / 10.0, 10));
    }
    const LookupTable lut(entries, {});
    const auto rows = pareto_sweep(c.dets, c.gts, c.maps, taus, &lut);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].td_star, rows[i].td);
        EXPECT_EQ(rows[i].ed_star, rows[i].ed);
        if (i > 0) {
            EXPECT_LE(rows[i].td, rows[i - 1].td);
            EXPECT_LE(rows[i].ed, rows[i - 1].ed);
        }
    }
    const std::vector<double> missing{0.55};
    EXPECT_THROW(pareto_sweep(c.dets, c.gts, c.maps, missing, &lut), LookupError);
    const std::vector<double> unsorted{0.5, 0.4};
    EXPECT_THROW(pareto_sweep(c.dets, c.gts, c.maps, unsorted), DomainError);
}

namespace {

test::Corpus single_bin_corpus(const std::vector<std::pair<double, bool>>& scored) {
    test::Corpus c;
    c.maps.emplace("a", test::gradient_map());
    double x = 1;
    for (auto [score, hit] : scored) {
        const Box b = test::box_at_depth(x, 0.5, 4);
        if (hit) c.gts.push_back({"a", b, 0});
        c.dets.push_back({"a", b, score, 0});
        x += 6;
    }
    return c;
}

}  // namespace

TEST(EmpiricalThreshold, AllMatchedGivesMinimumScore) {
    const auto c = single_bin_corpus({{0.9, true}, {0.35, true}, {0.6, true}});
    const auto t = empirical_optimal_threshold(c.dets, c.gts, c.maps, {1.0, 5.0}, 1);
    EXPECT_EQ(t[0].tau, 0.35);
    EXPECT_EQ(t[0].detections, 3u);
}

TEST(EmpiricalThreshold, ProhibitiveFalsePositiveCostGivesOne) {
    const auto c = single_bin_corpus({{0.95, false}, {0.8, true}, {0.5, true}, {0.2, false}});
    const auto t = empirical_optimal_threshold(c.dets, c.gts, c.maps, {1.0, 1e12}, 1);
    EXPECT_EQ(t[0].tau, 1.0);
}

TEST(EmpiricalThreshold, EmptyBinIsFlagged) {
    const auto c = single_bin_corpus({{0.9, true}});
    const auto t = empirical_optimal_threshold(c.dets, c.gts, c.maps, {1.0, 1.0}, 4);
    EXPECT_FALSE(t[2].empty());
    EXPECT_TRUE(t[0].empty());
    EXPECT_TRUE(std::isnan(t[0].tau));
}

TEST(EmpiricalThreshold, EqualsExhaustiveScan) {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        // Above 0.6 half the detections match; below, matches are rare.
        std::vector<std::pair<double, bool>> scored;
        for (int i = 0; i < 30; ++i) {
            const double s = std::round(u(rng) * 1000) / 1000;
            scored.emplace_back(s, s > 0.6 ? i % 2 == 0 : u(rng) < 0.2);
        }
        const auto c = single_bin_corpus(scored);
        const CostModel cost{1.0, 1.0};
        const auto t = empirical_optimal_threshold(c.dets, c.gts, c.maps, cost, 1);
        double expect = 1.0;
        for (auto [s, _] : scored) {
            std::size_t n = 0, k = 0;
            for (auto [s2, hit] : scored)
                if (s2 >= s) {
                    ++n;
                    k += hit;
                }
            const double p = static_cast<double>(k) / n;
            if (p >= 0.5 && s < expect) expect = s;
        }
        EXPECT_EQ(t[0].tau, expect) << "trial " << trial;
    }
}

#pragma once

// Command implementations of the depthprior executable. Kept in a header so tests can drive
// them in-process through `run`.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "depthprior/depthprior.hpp"

namespace depthprior::cli {

namespace fs = std::filesystem;
using io::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitFormat = 2;

// ---------------------------------------------------------------------------
// Helpers

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Version, command, seed and a hash of the canonical flag set.
inline ordered_json provenance(std::string_view command, std::uint64_t seed, const ordered_json& flags) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(flags.dump())));
    return ordered_json{{"tool", "depthprior"}, {"version", DEPTHPRIOR_VERSION}, {"command", command},
                        {"seed", seed},          {"config_hash", hash},          {"flags", flags}};
}

inline void write_sidecar(const fs::path& data_path, const ordered_json& prov) {
    io::detail::write_file(fs::path(data_path.string() + ".meta.json"), prov.dump(2) + "\n");
}

inline std::string num(double v) { return ordered_json(v).dump(); }

inline void require_distinct(const fs::path& out, std::initializer_list<fs::path> inputs) {
    const auto o = fs::weakly_canonical(out);
    for (const auto& in : inputs)
        if (!in.empty() && fs::weakly_canonical(in) == o)
            throw ConfigError("output path " + out.string() + " would overwrite input " + in.string());
}

inline fs::path depth_path(const fs::path& dir, const std::string& image_id) { return dir / (image_id + ".dpm"); }

/// Loads the depth map of every listed image that has one in `dir`; missing maps are reported
/// later by whichever operation needs them.
inline matching::DepthMaps load_depth_maps(const fs::path& dir, const std::set<std::string>& ids) {
    matching::DepthMaps maps;
    if (dir.empty()) return maps;
    if (!fs::is_directory(dir)) throw ConfigError("depth directory " + dir.string() + " does not exist");
    for (const auto& id : ids) {
        const auto p = depth_path(dir, id);
        if (fs::exists(p)) maps.emplace(id, io::read_depth_map(p));
    }
    return maps;
}

template <typename... Ranges>
std::set<std::string> image_ids(const Ranges&... ranges) {
    std::set<std::string> ids;
    (
        [&] {
            for (const auto& r : ranges) ids.insert(r.image_id);
        }(),
        ...);
    return ids;
}

inline std::vector<std::vector<std::string>> read_batch_manifest(const fs::path& path) {
    const auto bytes = io::detail::read_file_bytes(path);
    try {
        const auto doc = io::json::parse(bytes.begin(), bytes.end());
        if (!doc.is_array()) throw FormatError("batch manifest must be a JSON array of arrays of image ids");
        std::vector<std::vector<std::string>> batches;
        for (const auto& b : doc) batches.push_back(b.get<std::vector<std::string>>());
        return batches;
    } catch (const io::json::exception& e) {
        throw FormatError("batch manifest: " + std::string(e.what()));
    }
}

inline std::vector<supervise::Level> parse_levels(const std::vector<std::string>& specs) {
    std::vector<supervise::Level> levels;
    for (const auto& s : specs) {
        const auto x = s.find('x');
        std::size_t h = 0, w = 0;
        try {
            if (x == std::string::npos) throw std::invalid_argument(s);
            h = std::stoul(s.substr(0, x));
            w = std::stoul(s.substr(x + 1));
        } catch (const std::exception&) {
            throw ConfigError("level \"" + s + "\" is not of the form HxW");
        }
        levels.push_back({h, w});
    }
    return levels;
}

inline ordered_json coco_json(const coco::CocoMetrics& m) {
    return ordered_json{{"map", m.map},     {"map50", m.map50}, {"map_s", m.map_s}, {"map_m", m.map_m}, {"map_l", m.map_l},
                        {"mar", m.mar},     {"mar_s", m.mar_s}, {"mar_m", m.mar_m}, {"mar_l", m.mar_l}};
}

inline ordered_json bins_json(const std::vector<matching::DepthBin>& bins) {
    ordered_json a = ordered_json::array();
    for (std::size_t b = 0; b < bins.size(); ++b)
        a.push_back({{"bin", b}, {"gt", bins[b].gt}, {"td", bins[b].td}, {"ed", bins[b].ed}, {"md", bins[b].md}});
    return a;
}

inline std::string bins_csv(const std::vector<matching::DepthBin>& bins) {
    std::ostringstream s;
    s << "depth_bin,gt,td,ed,md\n";
    for (std::size_t b = 0; b < bins.size(); ++b)
        s << b << ',' << bins[b].gt << ',' << bins[b].td << ',' << bins[b].ed << ',' << bins[b].md << '\n';
    return s.str();
}

inline std::string grid_csv(const matching::MatchGrid& g) {
    std::ostringstream s;
    s << "score_bin,depth_bin,value,count\n";
    for (std::size_t i = 0; i < g.score_bins; ++i)
        for (std::size_t j = 0; j < g.depth_bins; ++j) {
            const auto v = g.value(i, j);
            s << i << ',' << j << ',' << (v ? num(*v) : "") << ',' << g.total[i * g.depth_bins + j] << '\n';
        }
    return s.str();
}

// ---------------------------------------------------------------------------
// Commands. Each options struct mirrors the flags of one subcommand.

struct DlwOptions {
    fs::path depth_dir, groundtruth, batch_manifest, out;
    double alpha = 1.0;
    std::string mode = "dlw";
    std::uint64_t seed = 0;
};

inline int cmd_dlw(const DlwOptions& o, std::ostream& log) {
    require_distinct(o.out, {o.groundtruth, o.batch_manifest});
    const supervise::WeightingMode mode(supervise::parse_weight_tag(o.mode), o.alpha);
    const auto gts = io::read_groundtruth(o.groundtruth);
    const auto ids = image_ids(gts);

    std::vector<std::vector<std::string>> batches;
    if (o.batch_manifest.empty()) batches.emplace_back(ids.begin(), ids.end());
    else batches = read_batch_manifest(o.batch_manifest);
    std::map<std::string, std::size_t> batch_of;
    for (std::size_t b = 0; b < batches.size(); ++b)
        for (const auto& id : batches[b])
            if (!batch_of.emplace(id, b).second) throw ConfigError("image \"" + id + "\" appears in more than one batch");
    for (const auto& id : ids)
        if (!batch_of.count(id)) throw LookupError("image \"" + id + "\" is not in any batch of the manifest");

    std::map<std::string, DepthMap> maps;
    for (const auto& id : ids) {
        const auto p = depth_path(o.depth_dir, id);
        if (!fs::exists(p)) throw LookupError("no depth map for image \"" + id + "\"");
        maps.emplace(id, io::read_depth_map(p));
    }

    // Objects of each batch, remembering their position in the ground-truth file.
    std::vector<std::vector<supervise::ObjectLoss>> objects(batches.size());
    std::vector<std::vector<std::size_t>> positions(batches.size());
    std::map<std::string, std::size_t> next_index;
    std::vector<std::pair<double, double>> batch_range(batches.size());
    for (std::size_t b = 0; b < batches.size(); ++b) {
        std::vector<DepthMap> members;
        for (const auto& id : batches[b])
            if (auto it = maps.find(id); it != maps.end()) members.push_back(it->second);
        if (members.empty()) continue;
        const depthnorm::BatchDepth batch(std::move(members));
        batch_range[b] = {batch.d_min(), batch.d_max()};
    }
    for (std::size_t i = 0; i < gts.size(); ++i) {
        const auto& g = gts[i];
        const auto b = batch_of.at(g.image_id);
        const double raw = depthnorm::box_mean_raw(maps.at(g.image_id), g.box);
        supervise::ObjectLoss obj;
        obj.image_id = g.image_id;
        obj.object_index = next_index[g.image_id]++;
        obj.depth_norm = depthnorm::BatchDepth::invert_normalize(raw, batch_range[b].first, batch_range[b].second);
        obj.depth_raw = raw;
        objects[b].push_back(obj);
        positions[b].push_back(i);
    }
    std::vector<WeightRecord> records(gts.size());
    for (std::size_t b = 0; b < batches.size(); ++b) {
        if (objects[b].empty()) continue;
        const auto w = supervise::object_weights(objects[b], mode);
        for (std::size_t k = 0; k < objects[b].size(); ++k) {
            const auto& obj = objects[b][k];
            records[positions[b][k]] = {obj.image_id, obj.object_index, obj.depth_norm, w[k]};
        }
    }
    io::write_weight_records(records, o.out);
    const ordered_json flags{{"alpha", o.alpha}, {"batch_manifest", o.batch_manifest.string()},
                             {"mode", o.mode},   {"seed", o.seed}};
    write_sidecar(o.out, provenance("dlw", o.seed, flags));
    log << "wrote " << records.size() << " weight records to " << o.out.string() << '\n';
    return kExitOk;
}

struct DlsOptions {
    fs::path depth_dir, out;
    double beta = 0.5;
    std::vector<double> cuts;
    std::vector<double> lambdas;
    std::string strat_mode = "quantile";
    std::vector<std::string> levels;
    std::uint64_t seed = 0;
};

inline int cmd_dls(const DlsOptions& o, std::ostream& log) {
    if (!fs::is_directory(o.depth_dir)) throw ConfigError("depth directory " + o.depth_dir.string() + " does not exist");
    require_distinct(o.out, {o.depth_dir});
    supervise::StratConfig cfg;
    if (o.strat_mode == "quantile") cfg.mode = supervise::CutMode::Quantile;
    else if (o.strat_mode == "absolute") cfg.mode = supervise::CutMode::Absolute;
    else throw ConfigError("--strat-mode must be quantile or absolute");
    cfg.cuts = o.cuts.empty() ? std::vector<double>{o.beta} : o.cuts;
    if (!o.lambdas.empty()) cfg.lambdas = o.lambdas;
    else if (cfg.cuts.size() != 1) cfg.lambdas.assign(cfg.cuts.size() + 1, 1.0);
    cfg.validate();
    const auto level_specs = parse_levels(o.levels);

    std::vector<fs::path> inputs;
    for (const auto& e : fs::directory_iterator(o.depth_dir))
        if (e.is_regular_file() && e.path().extension() == ".dpm") inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());
    fs::create_directories(o.out);

    ordered_json images = ordered_json::array();
    std::size_t files = 0;
    for (const auto& p : inputs) {
        const auto id = p.stem().string();
        const auto map = io::read_depth_map(p);
        const auto norm = depthnorm::normalize_image(map);
        auto levels = level_specs;
        if (levels.empty()) levels.push_back({norm.height(), norm.width()});
        const auto masks = supervise::build_strat_masks(norm, cfg, levels);
        for (std::size_t l = 0; l < levels.size(); ++l)
            for (std::size_t k = 0; k < cfg.strata(); ++k) {
                const auto& m = masks.masks[l][k];
                std::vector<float> v(m.begin(), m.end());
                const DepthMap out(static_cast<std::uint32_t>(levels[l].width), static_cast<std::uint32_t>(levels[l].height),
                                   std::move(v));
                io::write_depth_map(out, o.out / (id + ".L" + std::to_string(l + 1) + ".K" + std::to_string(k + 1) + ".dpm"));
                ++files;
            }
        images.push_back({{"image", id}, {"cuts", masks.cuts}});
    }
    ordered_json level_json = ordered_json::array();
    for (const auto& s : o.levels) level_json.push_back(s);
    const ordered_json flags{{"beta", o.beta},       {"cuts", cfg.cuts},      {"lambdas", cfg.lambdas},
                             {"levels", level_json}, {"seed", o.seed},        {"strat_mode", o.strat_mode}};
    ordered_json manifest{{"provenance", provenance("dls", o.seed, flags)}, {"strata", cfg.strata()}, {"images", images}};
    io::detail::write_file(o.out / "masks.meta.json", manifest.dump(2) + "\n");
    log << "wrote " << files << " mask files to " << o.out.string() << '\n';
    return kExitOk;
}

struct FitOptions {
    fs::path detections, groundtruth, depth_dir, out, fit_log;
    dct::FitConfig cfg;
    std::string objective = "base";
    std::string coeff_bounds = "safe";
    bool class_agnostic = false;
};

inline ordered_json fit_flags(const FitOptions& o) {
    const auto& c = o.cfg;
    return ordered_json{{"class_agnostic", o.class_agnostic}, {"coeff_bounds", o.coeff_bounds},
                        {"epsilon", c.epsilon},               {"gamma", c.gamma},
                        {"generations", c.optimizer.generations}, {"iou", c.match.iou_threshold},
                        {"knots", c.knots},                   {"objective", o.objective},
                        {"population", c.optimizer.population}, {"rho", c.rho},
                        {"seed", c.optimizer.seed},           {"stagnation", c.optimizer.stagnation},
                        {"budget", c.optimizer.budget},       {"taus", c.taus}};
}

inline int cmd_dct_fit(FitOptions o, std::ostream& log) {
    require_distinct(o.out, {o.detections, o.groundtruth, o.fit_log});
    o.cfg.objective = dct::parse_objective(o.objective);
    o.cfg.bounds = dct::parse_bounds(o.coeff_bounds);
    o.cfg.match.class_aware = !o.class_agnostic;
    o.cfg.validate();
    const auto dets = io::read_detections(o.detections);
    const auto gts = io::read_groundtruth(o.groundtruth);
    const auto maps = load_depth_maps(o.depth_dir, image_ids(dets));

    std::ostringstream fit_log;
    dct::FitLogger logger;
    if (!o.fit_log.empty())
        logger = [&](const dct::FitLogEntry& e) {
            fit_log << ordered_json{{"tau0", e.tau0},       {"generation", e.generation}, {"evaluations", e.evaluations},
                                    {"best_m", e.best_m},   {"tp", e.tp},                 {"fp", e.fp}}
                           .dump()
                    << '\n';
        };
    const auto build = dct::build_lut(dets, gts, maps, o.cfg, logger);
    io::write_lookup_table(build.table, o.out, provenance("dct-fit", o.cfg.optimizer.seed, fit_flags(o)));
    if (!o.fit_log.empty()) io::detail::write_file(o.fit_log, fit_log.str());
    log << "tau0,tp_static,fp_static,tp_star,fp_star\n";
    for (const auto& r : build.outcomes)
        log << num(r.curve.tau0) << ',' << r.tp_static << ',' << r.fp_static << ',' << r.tp_star << ',' << r.fp_star << '\n';
    return kExitOk;
}

struct ApplyOptions {
    fs::path detections, depth_dir, lut, out;
    double tau0 = 0.5;
    bool static_only = false;
    std::uint64_t seed = 0;
};

inline int cmd_dct_apply(const ApplyOptions& o, std::ostream& log) {
    require_distinct(o.out, {o.detections, o.lut});
    const auto dets = io::read_detections(o.detections);
    std::vector<Detection> kept;
    if (o.static_only) {
        kept = dct::static_filter(dets, o.tau0);
    } else {
        if (o.lut.empty()) throw ConfigError("--lut is required unless --static is given");
        const auto table = io::read_lookup_table(o.lut);
        kept = dct::apply_lut(dets, load_depth_maps(o.depth_dir, image_ids(dets)), o.tau0, table);
    }
    io::write_detections(kept, o.out);
    const ordered_json flags{{"lut", o.lut.string()}, {"seed", o.seed}, {"static", o.static_only}, {"tau0", o.tau0}};
    write_sidecar(o.out, provenance("dct-apply", o.seed, flags));
    log << "kept " << kept.size() << " of " << dets.size() << " detections\n";
    return kExitOk;
}

struct EvalOptions {
    fs::path detections, groundtruth, depth_dir, lut, out;
    double tau0 = 0.0;
    double iou = 0.5;
    bool class_agnostic = false;
    std::uint64_t seed = 0;
};

inline int cmd_eval(const EvalOptions& o, std::ostream& log) {
    require_distinct(o.out, {o.detections, o.groundtruth, o.lut});
    const auto dets = io::read_detections(o.detections);
    const auto gts = io::read_groundtruth(o.groundtruth);
    const auto metrics = coco::coco_map(dets, gts);
    ordered_json report{{"coco", coco_json(metrics)}};
    if (!o.depth_dir.empty()) {
        const auto maps = load_depth_maps(o.depth_dir, image_ids(dets, gts));
        matching::MatchConfig match;
        match.iou_threshold = o.iou;
        match.class_aware = !o.class_agnostic;
        const auto source = o.lut.empty() ? matching::ThresholdSource(o.tau0)
                                          : matching::ThresholdSource(io::read_lookup_table(o.lut).at(o.tau0));
        const auto r = matching::count_report(dets, gts, maps, match, source);
        report["counts"] = {{"td", r.td}, {"ed", r.ed}, {"md", r.md}, {"gt", r.gt_total}, {"retained", r.retained}};
        report["depth_bins"] = bins_json(r.per_depth_bins);
        io::detail::write_file(fs::path(o.out.string() + ".depth_bins.csv"), bins_csv(r.per_depth_bins));
    }
    const ordered_json flags{{"class_agnostic", o.class_agnostic}, {"iou", o.iou},  {"lut", o.lut.string()},
                             {"seed", o.seed},                     {"tau0", o.tau0}};
    report["provenance"] = provenance("eval", o.seed, flags);
    io::detail::write_file(o.out, report.dump(2) + "\n");
    log << "mAP " << num(metrics.map) << "  mAP50 " << num(metrics.map50) << "  mAR " << num(metrics.mar) << '\n';
    return kExitOk;
}

struct AnalyzeOptions {
    fs::path detections, groundtruth, depth_dir, lut, out;
    std::vector<double> taus = dct::default_taus();
    std::size_t score_bins = 10, depth_bins = 10;
    double c_fn = 1.0, c_fp = 1.0;
    double iou = 0.5;
    bool class_agnostic = false;
    std::uint64_t seed = 0;
};

inline int cmd_analyze(const AnalyzeOptions& o, std::ostream& log) {
    require_distinct(o.out, {o.detections, o.groundtruth, o.lut, o.depth_dir});
    const auto dets = io::read_detections(o.detections);
    const auto gts = io::read_groundtruth(o.groundtruth);
    const auto maps = load_depth_maps(o.depth_dir, image_ids(dets, gts));
    matching::MatchConfig match;
    match.iou_threshold = o.iou;
    match.class_aware = !o.class_agnostic;
    std::optional<LookupTable> lut;
    if (!o.lut.empty()) lut = io::read_lookup_table(o.lut);

    const auto grid = matching::match_rate_grid(dets, gts, maps, o.score_bins, o.depth_bins, match);
    const auto all = matching::count_report(dets, gts, maps, match, matching::ThresholdSource(0.0), {o.depth_bins, o.score_bins});
    const auto rows = matching::pareto_sweep(dets, gts, maps, o.taus, lut ? &*lut : nullptr, match);
    const auto optimal = matching::empirical_optimal_threshold(dets, gts, maps, {o.c_fn, o.c_fp}, o.depth_bins, match);

    fs::create_directories(o.out);
    io::detail::write_file(o.out / "match_rate.csv", grid_csv(grid));
    io::detail::write_file(o.out / "depth_bins.csv", bins_csv(all.per_depth_bins));
    std::ostringstream pareto, opt;
    pareto << "tau0,td,ed,td_star,ed_star\n";
    ordered_json pareto_json = ordered_json::array();
    for (const auto& r : rows) {
        pareto << num(r.tau0) << ',' << r.td << ',' << r.ed << ',' << (r.td_star ? std::to_string(*r.td_star) : "") << ','
               << (r.ed_star ? std::to_string(*r.ed_star) : "") << '\n';
        ordered_json row{{"tau0", r.tau0}, {"td", r.td}, {"ed", r.ed}};
        if (r.td_star) {
            row["td_star"] = *r.td_star;
            row["ed_star"] = *r.ed_star;
        }
        pareto_json.push_back(row);
    }
    opt << "depth_bin,tau,detections\n";
    ordered_json opt_json = ordered_json::array();
    for (std::size_t b = 0; b < optimal.size(); ++b) {
        opt << b << ',' << (optimal[b].empty() ? "" : num(optimal[b].tau)) << ',' << optimal[b].detections << '\n';
        opt_json.push_back({{"bin", b},
                            {"tau", optimal[b].empty() ? ordered_json(nullptr) : ordered_json(optimal[b].tau)},
                            {"detections", optimal[b].detections}});
    }
    io::detail::write_file(o.out / "pareto.csv", pareto.str());
    io::detail::write_file(o.out / "optimal_threshold.csv", opt.str());

    const ordered_json flags{{"c_fn", o.c_fn},           {"c_fp", o.c_fp},       {"class_agnostic", o.class_agnostic},
                             {"depth_bins", o.depth_bins}, {"iou", o.iou},       {"lut", o.lut.string()},
                             {"score_bins", o.score_bins}, {"seed", o.seed},     {"taus", o.taus}};
    const ordered_json report{{"provenance", provenance("analyze", o.seed, flags)},
                              {"counts", {{"td", all.td}, {"ed", all.ed}, {"md", all.md}, {"gt", all.gt_total}}},
                              {"depth_bins", bins_json(all.per_depth_bins)},
                              {"pareto", pareto_json},
                              {"optimal_threshold", opt_json}};
    io::detail::write_file(o.out / "report.json", report.dump(2) + "\n");
    log << "wrote analysis to " << o.out.string() << '\n';
    return kExitOk;
}

struct SimulateOptions {
    fs::path out;
    hetsim::SimConfig sim;
    std::size_t bins = 10, epochs = 4, bias_samples = 2000, replicas = 20;
    double learning_rate = 0.02, dlw_alpha = 1.0;
};

inline int cmd_simulate(const SimulateOptions& o, std::ostream& log) {
    o.sim.validate();
    if (o.replicas < 1) throw ConfigError("--replicas must be >= 1");
    fs::create_directories(o.out);

    const auto samples = hetsim::sample_losses(o.sim);
    const auto vbins = hetsim::variance_by_bin(samples, o.sim.d_min, o.sim.d_max, o.bins);
    const auto fit = hetsim::fit_variance_law(vbins);
    std::ostringstream var;
    var << "bin,mean_d2,variance,count\n";
    for (std::size_t b = 0; b < vbins.size(); ++b)
        var << b << ',' << num(vbins[b].mean_d2) << ',' << num(vbins[b].variance) << ',' << vbins[b].count << '\n';
    io::detail::write_file(o.out / "variance.csv", var.str());

    std::ostringstream traj;
    traj << "seed,weighting,epoch,bin,error\n";
    std::size_t far_worse = 0, shrunk = 0;
    std::vector<double> gaps_uniform, gaps_comp;
    for (std::size_t r = 0; r < o.replicas; ++r) {
        hetsim::BiasConfig cfg;
        cfg.sim = o.sim;
        cfg.sim.n_samples = o.bias_samples;
        cfg.sim.seed = o.sim.seed + r;
        cfg.bins = o.bins;
        cfg.epochs = o.epochs;
        cfg.learning_rate = o.learning_rate;
        cfg.dlw_alpha = o.dlw_alpha;
        hetsim::Trajectory uni;
        for (auto w : {hetsim::Weighting::Uniform, hetsim::Weighting::Compensating, hetsim::Weighting::DlwExponential}) {
            const auto t = hetsim::bias_experiment(cfg, w);
            for (std::size_t e = 1; e <= t.epochs; ++e)
                for (std::size_t b = 0; b < t.bins; ++b)
                    traj << cfg.sim.seed << ',' << hetsim::to_string(w) << ',' << e << ',' << b << ',' << num(t.at(e, b)) << '\n';
            if (w == hetsim::Weighting::Uniform) {
                uni = t;
                far_worse += t.final_far() > t.final_near();
                gaps_uniform.push_back(t.final_gap());
            } else if (w == hetsim::Weighting::Compensating) {
                shrunk += t.final_gap() < uni.final_gap();
                gaps_comp.push_back(t.final_gap());
            }
        }
    }
    io::detail::write_file(o.out / "trajectory.csv", traj.str());

    const ordered_json flags{{"alpha_signal", o.sim.alpha_signal}, {"bias_samples", o.bias_samples}, {"bins", o.bins},
                             {"d_max", o.sim.d_max},               {"d_min", o.sim.d_min},           {"dlw_alpha", o.dlw_alpha},
                             {"epochs", o.epochs},                 {"kappa", o.sim.kappa},           {"lr", o.learning_rate},
                             {"replicas", o.replicas},             {"samples", o.sim.n_samples},     {"seed", o.sim.seed},
                             {"sigma_eps", o.sim.sigma_eps}};
    ordered_json summary{{"provenance", provenance("simulate", o.sim.seed, flags)},
                         {"variance_law",
                          {{"slope", fit.slope},
                           {"intercept", fit.intercept},
                           {"expected_slope", o.sim.sigma0_sq()},
                           {"expected_intercept", o.sim.sigma_eps * o.sim.sigma_eps}}},
                         {"bias",
                          {{"replicas", o.replicas},
                           {"uniform_far_worse", far_worse},
                           {"compensating_gap_smaller", shrunk},
                           {"paired_p_value", o.replicas >= 2 ? hetsim::paired_t_test(gaps_uniform, gaps_comp) : 1.0}}}};
    io::detail::write_file(o.out / "summary.json", summary.dump(2) + "\n");
    log << "variance slope " << num(fit.slope) << " (expected " << num(o.sim.sigma0_sq()) << "), intercept "
        << num(fit.intercept) << "; uniform far>near in " << far_worse << '/' << o.replicas << ", compensating gap smaller in "
        << shrunk << '/' << o.replicas << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Argument parsing

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Depth-aware supervision and confidence thresholding toolkit", "depthprior"};
    app.set_version_flag("--version", std::string(DEPTHPRIOR_VERSION));
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    DlwOptions dlw;
    auto* c_dlw = app.add_subcommand("dlw", "Per-object depth loss weights as JSONL weight records");
    c_dlw->add_option("--depth-dir", dlw.depth_dir, "Directory of <image>.dpm depth maps")->required();
    c_dlw->add_option("--groundtruth", dlw.groundtruth, "Ground-truth JSONL")->required();
    c_dlw->add_option("--alpha", dlw.alpha, "Weight scale alpha");
    c_dlw->add_option("--mode", dlw.mode, "dlw, raw_d, inv_only, exp_noinv, linear, quadratic, bw, iw");
    c_dlw->add_option("--batch-manifest", dlw.batch_manifest, "JSON array of arrays of image ids (default: one batch)");
    c_dlw->add_option("--seed", dlw.seed, "Seed recorded in the output metadata");
    c_dlw->add_option("--out", dlw.out, "Output JSONL path")->required();

    DlsOptions dls;
    auto* c_dls = app.add_subcommand("dls", "Per-level depth stratification masks");
    c_dls->add_option("--depth-dir", dls.depth_dir, "Directory of <image>.dpm depth maps")->required();
    c_dls->add_option("--beta", dls.beta, "Single cut between close and distant strata");
    c_dls->add_option("--cuts", dls.cuts, "Comma-separated increasing cuts (K-1 values); overrides --beta")->delimiter(',');
    c_dls->add_option("--strat-mode", dls.strat_mode, "quantile or absolute");
    c_dls->add_option("--lambdas", dls.lambdas, "Comma-separated stratum weights, recorded in the metadata")->delimiter(',');
    c_dls->add_option("--levels", dls.levels, "Comma-separated HxW feature levels (default: native size)")->delimiter(',');
    c_dls->add_option("--seed", dls.seed, "Seed recorded in the output metadata");
    c_dls->add_option("--out", dls.out, "Output directory")->required();

    FitOptions fit;
    auto* c_fit = app.add_subcommand("dct-fit", "Fit depth-conditioned threshold curves into a lookup table");
    c_fit->add_option("--detections", fit.detections, "Validation detections JSONL")->required();
    c_fit->add_option("--groundtruth", fit.groundtruth, "Validation ground-truth JSONL")->required();
    c_fit->add_option("--depth-dir", fit.depth_dir, "Directory of <image>.dpm depth maps")->required();
    c_fit->add_option("--taus", fit.cfg.taus, "Comma-separated reference thresholds")->delimiter(',');
    c_fit->add_option("--knots", fit.cfg.knots, "Spline coefficient count");
    c_fit->add_option("--epsilon", fit.cfg.epsilon, "Allowed relative FP increase");
    c_fit->add_option("--gamma", fit.cfg.gamma, "FP penalty weight");
    c_fit->add_option("--rho", fit.cfg.rho, "Minimum threshold");
    c_fit->add_option("--objective", fit.objective, "base, abs_ratio or rel_ratio");
    c_fit->add_option("--coeff-bounds", fit.coeff_bounds, "safe ([0, tau0-rho]) or literal ([rho, 1])");
    c_fit->add_option("--iou", fit.cfg.match.iou_threshold, "IoU threshold for matching");
    c_fit->add_flag("--class-agnostic", fit.class_agnostic, "Match regardless of class");
    c_fit->add_option("--population", fit.cfg.optimizer.population, "Optimizer population size");
    c_fit->add_option("--generations", fit.cfg.optimizer.generations, "Optimizer generations");
    c_fit->add_option("--stagnation", fit.cfg.optimizer.stagnation, "Stop after this many generations without improvement");
    c_fit->add_option("--budget", fit.cfg.optimizer.budget, "Maximum objective evaluations per threshold (0: none)");
    c_fit->add_option("--seed", fit.cfg.optimizer.seed, "Random seed");
    c_fit->add_option("--fit-log", fit.fit_log, "Optional JSONL log of per-generation progress");
    c_fit->add_option("--out", fit.out, "Output lookup-table JSON")->required();

    ApplyOptions apply;
    auto* c_apply = app.add_subcommand("dct-apply", "Filter detections with a lookup-table curve (or statically)");
    c_apply->add_option("--detections", apply.detections, "Detections JSONL")->required();
    c_apply->add_option("--depth-dir", apply.depth_dir, "Directory of <image>.dpm depth maps");
    c_apply->add_option("--lut", apply.lut, "Lookup-table JSON");
    c_apply->add_option("--tau0", apply.tau0, "Reference threshold (exact lookup-table key)");
    c_apply->add_flag("--static", apply.static_only, "Constant threshold tau0, no lookup table");
    c_apply->add_option("--seed", apply.seed, "Seed recorded in the output metadata");
    c_apply->add_option("--out", apply.out, "Output detections JSONL")->required();

    EvalOptions ev;
    auto* c_eval = app.add_subcommand("eval", "COCO metrics and depth-binned TD/ED/MD counts");
    c_eval->add_option("--detections", ev.detections, "Detections JSONL")->required();
    c_eval->add_option("--groundtruth", ev.groundtruth, "Ground-truth JSONL")->required();
    c_eval->add_option("--depth-dir", ev.depth_dir, "Directory of <image>.dpm depth maps (enables depth counts)");
    c_eval->add_option("--tau0", ev.tau0, "Threshold applied before counting");
    c_eval->add_option("--lut", ev.lut, "Lookup table: count with the curve for --tau0 instead");
    c_eval->add_option("--iou", ev.iou, "IoU threshold for counting");
    c_eval->add_flag("--class-agnostic", ev.class_agnostic, "Match regardless of class");
    c_eval->add_option("--seed", ev.seed, "Seed recorded in the report");
    c_eval->add_option("--out", ev.out, "Output report JSON")->required();

    AnalyzeOptions an;
    auto* c_an = app.add_subcommand("analyze", "Match-rate grid, depth histograms, Pareto sweep, cost-optimal thresholds");
    c_an->add_option("--detections", an.detections, "Detections JSONL")->required();
    c_an->add_option("--groundtruth", an.groundtruth, "Ground-truth JSONL")->required();
    c_an->add_option("--depth-dir", an.depth_dir, "Directory of <image>.dpm depth maps")->required();
    c_an->add_option("--taus", an.taus, "Comma-separated reference thresholds for the sweep")->delimiter(',');
    c_an->add_option("--lut", an.lut, "Lookup table for the starred sweep columns");
    c_an->add_option("--score-bins", an.score_bins, "Score bins of the match-rate grid");
    c_an->add_option("--depth-bins", an.depth_bins, "Depth bins");
    c_an->add_option("--c-fn", an.c_fn, "Cost of rejecting a true detection");
    c_an->add_option("--c-fp", an.c_fp, "Cost of accepting an extra detection");
    c_an->add_option("--iou", an.iou, "IoU threshold for matching");
    c_an->add_flag("--class-agnostic", an.class_agnostic, "Match regardless of class");
    c_an->add_option("--seed", an.seed, "Seed recorded in the report");
    c_an->add_option("--out", an.out, "Output directory")->required();

    SimulateOptions sim;
    auto* c_sim = app.add_subcommand("simulate", "Heteroscedastic loss simulation and training-bias experiment");
    c_sim->add_option("--kappa", sim.sim.kappa, "Signal constant");
    c_sim->add_option("--alpha-signal", sim.sim.alpha_signal, "Variance scaling");
    c_sim->add_option("--sigma-eps", sim.sim.sigma_eps, "Depth-independent noise standard deviation");
    c_sim->add_option("--samples", sim.sim.n_samples, "Samples for the variance law");
    c_sim->add_option("--d-min", sim.sim.d_min, "Smallest depth");
    c_sim->add_option("--d-max", sim.sim.d_max, "Largest depth");
    c_sim->add_option("--bins", sim.bins, "Depth bins");
    c_sim->add_option("--epochs", sim.epochs, "SGD epochs of the bias experiment");
    c_sim->add_option("--lr", sim.learning_rate, "SGD learning rate");
    c_sim->add_option("--bias-samples", sim.bias_samples, "Training samples per bias replica");
    c_sim->add_option("--replicas", sim.replicas, "Seeds of the bias experiment");
    c_sim->add_option("--dlw-alpha", sim.dlw_alpha, "alpha of the exponential weighting");
    c_sim->add_option("--seed", sim.sim.seed, "Random seed");
    c_sim->add_option("--out", sim.out, "Output directory")->required();

    std::vector<const char*> argv{"depthprior"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << DEPTHPRIOR_VERSION << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        // --help on a subcommand reports the subcommand's help.
        if (e.get_name() == "CallForHelp") {
            out << app.help();
            return kExitOk;
        }
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    }

    try {
        if (*c_dlw) return cmd_dlw(dlw, out);
        if (*c_dls) return cmd_dls(dls, out);
        if (*c_fit) return cmd_dct_fit(fit, out);
        if (*c_apply) return cmd_dct_apply(apply, out);
        if (*c_eval) return cmd_eval(ev, out);
        if (*c_an) return cmd_analyze(an, out);
        if (*c_sim) return cmd_simulate(sim, out);
    } catch (const FormatError& e) {
        err << "format error: " << e.what() << '\n';
        return kExitFormat;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    }
    return kExitDomain;
}

}  // namespace depthprior::cli

#pragma once

// File formats:
//   DPM1     "DPM1" | u32le width | u32le height | width*height f32le, row-major, top-left origin
//   JSONL    one detection / ground-truth / weight record per line
//   LUT JSON {"format":"depthprior-lut-v1","fit_config":{...},"entries":[...]}

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "depthprior/core.hpp"

namespace depthprior::io {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline constexpr std::string_view kDpmMagic = "DPM1";
inline constexpr std::string_view kLutFormat = "depthprior-lut-v1";

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw FormatError("failed reading " + path.string());
    return bytes;
}

inline void write_file(const std::filesystem::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw FormatError("failed writing " + path.string());
}

inline double number_field(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number())
        throw FormatError::at_line(line, std::string("missing or non-numeric field \"") + key + "\"");
    return it->get<double>();
}

inline std::string string_field(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        throw FormatError::at_line(line, std::string("missing or non-string field \"") + key + "\"");
    return it->get<std::string>();
}

inline std::uint64_t unsigned_field(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || !(it->is_number_unsigned() || (it->is_number_integer() && it->get<std::int64_t>() >= 0)))
        throw FormatError::at_line(line, std::string("missing or non-integer field \"") + key + "\"");
    return it->get<std::uint64_t>();
}

inline Box box_fields(const json& obj, std::size_t line) {
    Box b{number_field(obj, "x1", line), number_field(obj, "y1", line), number_field(obj, "x2", line),
          number_field(obj, "y2", line)};
    if (!b.valid()) throw DomainError("line " + std::to_string(line) + ": box requires x1 < x2 and y1 < y2");
    return b;
}

/// Calls fn(parsed_object, line_number) for every non-blank line.
template <typename Fn>
void for_each_jsonl(std::istream& in, Fn&& fn) {
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(text);
        } catch (const json::parse_error& e) {
            throw FormatError::at_line(line, e.what());
        }
        if (!obj.is_object()) throw FormatError::at_line(line, "record is not a JSON object");
        fn(obj, line);
    }
}

inline std::ifstream open_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// DPM1 depth maps

inline std::vector<std::uint8_t> encode_depth_map(const DepthMap& map) {
    std::vector<std::uint8_t> out;
    out.reserve(12 + map.values().size() * 4);
    out.insert(out.end(), kDpmMagic.begin(), kDpmMagic.end());
    detail::put_u32(out, map.width());
    detail::put_u32(out, map.height());
    for (float v : map.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

inline DepthMap decode_depth_map(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12) throw FormatError::at_byte(bytes.size(), "truncated header");
    if (std::memcmp(bytes.data(), kDpmMagic.data(), 4) != 0) throw FormatError::at_byte(0, "bad magic, expected DPM1");
    const std::uint32_t width = detail::get_u32(bytes.data() + 4);
    const std::uint32_t height = detail::get_u32(bytes.data() + 8);
    if (width == 0 || height == 0) throw FormatError::at_byte(4, "zero width or height");
    const std::size_t count = std::size_t{width} * height;
    const std::size_t expected = 12 + count * 4;
    if (bytes.size() < expected) throw FormatError::at_byte(bytes.size(), "truncated payload");
    if (bytes.size() > expected) throw FormatError::at_byte(expected, "trailing bytes after payload");

    std::vector<float> values(count);
    const std::uint8_t* p = bytes.data() + 12;
    for (std::size_t i = 0; i < count; ++i, p += 4) {
        const float v = std::bit_cast<float>(detail::get_u32(p));
        if (!std::isfinite(v)) throw FormatError::at_byte(12 + 4 * i, "non-finite depth value");
        if (v < 0.0f) throw FormatError::at_byte(12 + 4 * i, "negative depth value");
        values[i] = v;
    }
    return {width, height, std::move(values)};
}

inline DepthMap read_depth_map(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    try {
        return decode_depth_map(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void write_depth_map(const DepthMap& map, const std::filesystem::path& path) {
    const auto bytes = encode_depth_map(map);
    detail::write_file(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

// ---------------------------------------------------------------------------
// Detections and ground truth (JSONL)

inline Detection parse_detection(const json& obj, std::size_t line) {
    Detection d;
    d.image_id = detail::string_field(obj, "image", line);
    d.box = detail::box_fields(obj, line);
    d.score = detail::number_field(obj, "score", line);
    if (!(d.score >= 0.0 && d.score <= 1.0))
        throw DomainError("line " + std::to_string(line) + ": score outside [0,1]");
    d.class_id = static_cast<std::uint32_t>(detail::unsigned_field(obj, "class", line));
    return d;
}

inline GroundTruthBox parse_groundtruth(const json& obj, std::size_t line) {
    GroundTruthBox g;
    g.image_id = detail::string_field(obj, "image", line);
    g.box = detail::box_fields(obj, line);
    g.class_id = static_cast<std::uint32_t>(detail::unsigned_field(obj, "class", line));
    return g;
}

inline std::vector<Detection> read_detections(std::istream& in) {
    std::vector<Detection> out;
    detail::for_each_jsonl(in, [&](const json& obj, std::size_t line) { out.push_back(parse_detection(obj, line)); });
    return out;
}

inline std::vector<GroundTruthBox> read_groundtruth(std::istream& in) {
    std::vector<GroundTruthBox> out;
    detail::for_each_jsonl(in, [&](const json& obj, std::size_t line) { out.push_back(parse_groundtruth(obj, line)); });
    return out;
}

inline std::vector<Detection> read_detections(const std::filesystem::path& path) {
    auto in = detail::open_text(path);
    return read_detections(in);
}

inline std::vector<GroundTruthBox> read_groundtruth(const std::filesystem::path& path) {
    auto in = detail::open_text(path);
    return read_groundtruth(in);
}

inline std::string to_jsonl(std::span<const Detection> dets) {
    std::string out;
    for (const auto& d : dets) {
        ordered_json obj{{"image", d.image_id}, {"x1", d.box.x1},  {"y1", d.box.y1},      {"x2", d.box.x2},
                         {"y2", d.box.y2},      {"score", d.score}, {"class", d.class_id}};
        out += obj.dump();
        out += '\n';
    }
    return out;
}

inline std::string to_jsonl(std::span<const GroundTruthBox> gts) {
    std::string out;
    for (const auto& g : gts) {
        ordered_json obj{{"image", g.image_id}, {"x1", g.box.x1}, {"y1", g.box.y1},
                         {"x2", g.box.x2},      {"y2", g.box.y2}, {"class", g.class_id}};
        out += obj.dump();
        out += '\n';
    }
    return out;
}

inline void write_detections(std::span<const Detection> dets, const std::filesystem::path& path) {
    detail::write_file(path, to_jsonl(dets));
}

inline void write_groundtruth(std::span<const GroundTruthBox> gts, const std::filesystem::path& path) {
    detail::write_file(path, to_jsonl(gts));
}

// ---------------------------------------------------------------------------
// Weight records (JSONL)

inline std::string to_jsonl(std::span<const WeightRecord> records) {
    std::string out;
    for (const auto& r : records) {
        ordered_json obj{{"image", r.image_id},
                         {"object_index", r.object_index},
                         {"depth_norm", r.depth_norm},
                         {"weight", r.weight}};
        out += obj.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<WeightRecord> read_weight_records(std::istream& in) {
    std::vector<WeightRecord> out;
    detail::for_each_jsonl(in, [&](const json& obj, std::size_t line) {
        out.push_back({detail::string_field(obj, "image", line), detail::unsigned_field(obj, "object_index", line),
                       detail::number_field(obj, "depth_norm", line), detail::number_field(obj, "weight", line)});
    });
    return out;
}

inline void write_weight_records(std::span<const WeightRecord> records, const std::filesystem::path& path) {
    detail::write_file(path, to_jsonl(records));
}

inline std::vector<WeightRecord> read_weight_records(const std::filesystem::path& path) {
    auto in = detail::open_text(path);
    return read_weight_records(in);
}

// ---------------------------------------------------------------------------
// Lookup tables (JSON)

inline ordered_json to_json(const LutFitConfig& c) {
    return ordered_json{{"epsilon", c.epsilon},
                        {"gamma", c.gamma},
                        {"rho", c.rho},
                        {"knots", c.knots},
                        {"objective", c.objective},
                        {"coeff_bounds", c.coeff_bounds},
                        {"iou_threshold", c.iou_threshold},
                        {"class_aware", c.class_aware},
                        {"seed", c.seed},
                        {"population", c.population},
                        {"generations", c.generations},
                        {"stagnation", c.stagnation},
                        {"budget", c.budget}};
}

/// Serialized LUT text. `provenance`, when given, is stored under its own key and ignored on read.
inline std::string lookup_table_to_string(const LookupTable& table, const std::optional<ordered_json>& provenance = {}) {
    ordered_json doc;
    doc["format"] = kLutFormat;
    doc["fit_config"] = to_json(table.fit_config());
    ordered_json entries = ordered_json::array();
    for (const auto& e : table.entries()) {
        entries.push_back(ordered_json{
            {"tau0", e.tau0}, {"knot_domain", {e.d_lo, e.d_hi}}, {"psi", e.psi}, {"rho", e.rho}});
    }
    doc["entries"] = std::move(entries);
    if (provenance) doc["provenance"] = *provenance;
    return doc.dump(2) + "\n";
}

inline LookupTable lookup_table_from_string(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("lookup table: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kLutFormat)
        throw FormatError("lookup table: missing or unknown format tag");
    try {
        LutFitConfig cfg;
        if (auto it = doc.find("fit_config"); it != doc.end()) {
            const auto& c = *it;
            cfg.epsilon = c.value("epsilon", cfg.epsilon);
            cfg.gamma = c.value("gamma", cfg.gamma);
            cfg.rho = c.value("rho", cfg.rho);
            cfg.knots = c.value("knots", cfg.knots);
            cfg.objective = c.value("objective", cfg.objective);
            cfg.coeff_bounds = c.value("coeff_bounds", cfg.coeff_bounds);
            cfg.iou_threshold = c.value("iou_threshold", cfg.iou_threshold);
            cfg.class_aware = c.value("class_aware", cfg.class_aware);
            cfg.seed = c.value("seed", cfg.seed);
            cfg.population = c.value("population", cfg.population);
            cfg.generations = c.value("generations", cfg.generations);
            cfg.stagnation = c.value("stagnation", cfg.stagnation);
            cfg.budget = c.value("budget", cfg.budget);
        }
        std::vector<ThresholdCurve> entries;
        for (const auto& e : doc.at("entries")) {
            ThresholdCurve curve;
            curve.tau0 = e.at("tau0").get<double>();
            const auto& dom = e.at("knot_domain");
            if (!dom.is_array() || dom.size() != 2) throw FormatError("lookup table: knot_domain must be [lo, hi]");
            curve.d_lo = dom[0].get<double>();
            curve.d_hi = dom[1].get<double>();
            curve.psi = e.at("psi").get<std::vector<double>>();
            curve.rho = e.at("rho").get<double>();
            if (!(curve.d_lo >= 0.0 && curve.d_lo < curve.d_hi && curve.d_hi <= 1.0))
                throw FormatError("lookup table: knot_domain must satisfy 0 <= lo < hi <= 1");
            if (curve.psi.size() < 4) throw FormatError("lookup table: at least 4 coefficients required");
            entries.push_back(std::move(curve));
        }
        return LookupTable(std::move(entries), std::move(cfg));
    } catch (const json::exception& e) {
        throw FormatError(std::string("lookup table: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("lookup table: ") + e.what());
    }
}

inline void write_lookup_table(const LookupTable& table, const std::filesystem::path& path,
                               const std::optional<ordered_json>& provenance = {}) {
    detail::write_file(path, lookup_table_to_string(table, provenance));
}

inline LookupTable read_lookup_table(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    return lookup_table_from_string({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

}  // namespace depthprior::io

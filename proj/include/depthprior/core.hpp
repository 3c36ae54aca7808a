#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "depthprior/errors.hpp"

namespace depthprior {

/// Axis-aligned pixel box, (x1, y1) top-left and (x2, y2) bottom-right.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    [[nodiscard]] bool valid() const { return x1 < x2 && y1 < y2; }
    [[nodiscard]] double width() const { return x2 - x1; }
    [[nodiscard]] double height() const { return y2 - y1; }
    [[nodiscard]] double area() const { return width() * height(); }

    friend bool operator==(const Box&, const Box&) = default;
};

/// Raw estimator output. Inverse depth: larger values are closer to the camera.
class DepthMap {
public:
    DepthMap() = default;

    DepthMap(std::uint32_t width, std::uint32_t height, std::vector<float> values)
        : width_(width), height_(height), values_(std::move(values)) {
        if (width_ == 0 || height_ == 0) throw DomainError("depth map must be at least 1x1");
        if (values_.size() != std::size_t{width_} * height_)
            throw DomainError("depth map value count does not match width*height");
        for (float v : values_)
            if (!std::isfinite(v) || v < 0.0f) throw DomainError("depth map values must be finite and >= 0");
    }

    static DepthMap constant(std::uint32_t width, std::uint32_t height, float value) {
        return {width, height, std::vector<float>(std::size_t{width} * height, value)};
    }

    [[nodiscard]] std::uint32_t width() const { return width_; }
    [[nodiscard]] std::uint32_t height() const { return height_; }
    [[nodiscard]] std::span<const float> values() const { return values_; }
    [[nodiscard]] float at(std::size_t h, std::size_t w) const { return values_[h * width_ + w]; }

    [[nodiscard]] std::pair<double, double> range() const {
        auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
        return {*lo, *hi};
    }

    friend bool operator==(const DepthMap&, const DepthMap&) = default;

private:
    std::uint32_t width_ = 0;
    std::uint32_t height_ = 0;
    std::vector<float> values_;
};

/// Distance-proportional depth in [0,1]; 1 is the most distant point.
class NormalizedDepthMap {
public:
    NormalizedDepthMap() = default;

    NormalizedDepthMap(std::size_t width, std::size_t height, std::vector<double> values)
        : width_(width), height_(height), values_(std::move(values)) {
        if (width_ == 0 || height_ == 0) throw DomainError("normalized map must be at least 1x1");
        if (values_.size() != width_ * height_)
            throw DomainError("normalized map value count does not match width*height");
        for (double v : values_)
            if (!(v >= 0.0 && v <= 1.0)) throw DomainError("normalized depth outside [0,1]");
    }

    [[nodiscard]] std::size_t width() const { return width_; }
    [[nodiscard]] std::size_t height() const { return height_; }
    [[nodiscard]] std::span<const double> values() const { return values_; }
    [[nodiscard]] double at(std::size_t h, std::size_t w) const { return values_[h * width_ + w]; }

    friend bool operator==(const NormalizedDepthMap&, const NormalizedDepthMap&) = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> values_;
};

struct Detection {
    std::string image_id;
    Box box;
    double score = 0;
    std::uint32_t class_id = 0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruthBox {
    std::string image_id;
    Box box;
    std::uint32_t class_id = 0;

    friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

/// tau(d) = clip(tau0 - sum_m psi_m B_m(d), 0, 1) over a clamped cubic basis on [d_lo, d_hi].
struct ThresholdCurve {
    double tau0 = 0.5;
    double d_lo = 0.0;
    double d_hi = 0.9;
    std::vector<double> psi;
    double rho = 0.1;

    [[nodiscard]] std::size_t knots() const { return psi.size(); }

    static ThresholdCurve flat(double tau0, std::size_t knots, double d_lo = 0.0, double d_hi = 0.9,
                               double rho = 0.1) {
        return {tau0, d_lo, d_hi, std::vector<double>(knots, 0.0), rho};
    }

    friend bool operator==(const ThresholdCurve&, const ThresholdCurve&) = default;
};

/// Settings a lookup table was fitted with, recorded alongside its entries.
struct LutFitConfig {
    double epsilon = 0.1;
    double gamma = 1000.0;
    double rho = 0.1;
    std::size_t knots = 10;
    std::string objective = "base";
    std::string coeff_bounds = "safe";
    double iou_threshold = 0.5;
    bool class_aware = true;
    std::uint64_t seed = 0;
    std::size_t population = 32;
    std::size_t generations = 200;
    std::size_t stagnation = 40;
    std::size_t budget = 0;

    friend bool operator==(const LutFitConfig&, const LutFitConfig&) = default;
};

class LookupTable {
public:
    LookupTable() = default;

    LookupTable(std::vector<ThresholdCurve> entries, LutFitConfig config)
        : entries_(std::move(entries)), config_(std::move(config)) {
        validate();
    }

    [[nodiscard]] const std::vector<ThresholdCurve>& entries() const { return entries_; }
    [[nodiscard]] const LutFitConfig& fit_config() const { return config_; }

    /// Exact key match; there is no interpolation between entries.
    [[nodiscard]] const ThresholdCurve& at(double tau0) const {
        for (const auto& e : entries_)
            if (e.tau0 == tau0) return e;
        std::ostringstream msg;
        msg << "reference threshold " << tau0 << " not in lookup table; available:";
        for (const auto& e : entries_) msg << ' ' << e.tau0;
        throw LookupError(msg.str());
    }

    [[nodiscard]] bool contains(double tau0) const {
        return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.tau0 == tau0; });
    }

    friend bool operator==(const LookupTable&, const LookupTable&) = default;

private:
    void validate() const {
        if (entries_.empty()) throw DomainError("lookup table has no entries");
        for (std::size_t i = 1; i < entries_.size(); ++i) {
            if (entries_[i].tau0 == entries_[i - 1].tau0)
                throw FormatError("duplicate reference threshold " + std::to_string(entries_[i].tau0));
            if (entries_[i].tau0 < entries_[i - 1].tau0)
                throw FormatError("lookup table reference thresholds must be strictly increasing");
        }
    }

    std::vector<ThresholdCurve> entries_;
    LutFitConfig config_;
};

struct WeightRecord {
    std::string image_id;
    std::size_t object_index = 0;
    double depth_norm = 0;
    double weight = 0;

    friend bool operator==(const WeightRecord&, const WeightRecord&) = default;
};

}  // namespace depthprior

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "depthprior/core.hpp"

namespace depthprior::depthnorm {

/// Depth maps of one training batch with their global raw-value range.
class BatchDepth {
public:
    explicit BatchDepth(std::vector<DepthMap> maps) : maps_(std::move(maps)) {
        if (maps_.empty()) throw DomainError("batch must contain at least one depth map");
        min_ = std::numeric_limits<double>::infinity();
        max_ = -std::numeric_limits<double>::infinity();
        for (const auto& m : maps_) {
            auto [lo, hi] = m.range();
            min_ = std::min(min_, lo);
            max_ = std::max(max_, hi);
        }
    }

    [[nodiscard]] const std::vector<DepthMap>& maps() const { return maps_; }
    [[nodiscard]] double d_min() const { return min_; }
    [[nodiscard]] double d_max() const { return max_; }

    /// Inverted min-max value of a raw depth under the batch range; 0 when the range is degenerate.
    [[nodiscard]] double normalize(double raw) const { return invert_normalize(raw, min_, max_); }

    static double invert_normalize(double raw, double lo, double hi) {
        if (!(hi > lo)) return 0.0;
        return std::clamp(1.0 - (raw - lo) / (hi - lo), 0.0, 1.0);
    }

private:
    std::vector<DepthMap> maps_;
    double min_ = 0;
    double max_ = 0;
};

namespace detail {

inline NormalizedDepthMap normalize_with(const DepthMap& map, double lo, double hi) {
    std::vector<double> out(map.values().size());
    std::transform(map.values().begin(), map.values().end(), out.begin(),
                   [&](float v) { return BatchDepth::invert_normalize(v, lo, hi); });
    return {map.width(), map.height(), std::move(out)};
}

}  // namespace detail

/// Batch-level min-max normalization followed by inversion (1 = most distant).
inline std::vector<NormalizedDepthMap> normalize_batch(const BatchDepth& batch) {
    std::vector<NormalizedDepthMap> out;
    out.reserve(batch.maps().size());
    for (const auto& m : batch.maps()) out.push_back(detail::normalize_with(m, batch.d_min(), batch.d_max()));
    return out;
}

/// Per-image min-max normalization followed by inversion.
inline NormalizedDepthMap normalize_image(const DepthMap& map) {
    auto [lo, hi] = map.range();
    return detail::normalize_with(map, lo, hi);
}

/// Inclusive integer pixel window covered by a box, clamped to the image.
struct PixelWindow {
    std::size_t w_lo, w_hi, h_lo, h_hi;

    [[nodiscard]] std::size_t count() const { return (w_hi - w_lo + 1) * (h_hi - h_lo + 1); }
};

namespace detail {

// Integer indices i with lo <= i <= hi; a span that contains no integer collapses to the
// index under its midpoint. Returns false when the span misses [0, extent-1] entirely.
inline bool axis_window(double lo, double hi, std::size_t extent, std::size_t& first, std::size_t& last) {
    double a = std::ceil(lo);
    double b = std::floor(hi);
    if (a > b) a = b = std::floor(0.5 * (lo + hi));
    const double max_index = static_cast<double>(extent) - 1.0;
    if (b < 0.0 || a > max_index) return false;
    first = static_cast<std::size_t>(std::max(a, 0.0));
    last = static_cast<std::size_t>(std::min(b, max_index));
    return true;
}

}  // namespace detail

inline PixelWindow pixel_window(const Box& box, std::size_t width, std::size_t height) {
    PixelWindow win{};
    if (!detail::axis_window(box.x1, box.x2, width, win.w_lo, win.w_hi) ||
        !detail::axis_window(box.y1, box.y2, height, win.h_lo, win.h_hi))
        throw DomainError("box lies entirely outside the image");
    return win;
}

/// Mean raw depth over the box window.
inline double box_mean_raw(const DepthMap& map, const Box& box) {
    const auto win = pixel_window(box, map.width(), map.height());
    double sum = 0.0;
    for (std::size_t h = win.h_lo; h <= win.h_hi; ++h)
        for (std::size_t w = win.w_lo; w <= win.w_hi; ++w) sum += map.at(h, w);
    return sum / static_cast<double>(win.count());
}

/// A depth map with its per-image range cached, for repeated box queries on one image.
class ImageDepth {
public:
    explicit ImageDepth(const DepthMap& map) : map_(&map) {
        auto [lo, hi] = map.range();
        min_ = lo;
        max_ = hi;
    }

    [[nodiscard]] double box_depth(const Box& box) const {
        return BatchDepth::invert_normalize(box_mean_raw(*map_, box), min_, max_);
    }

    [[nodiscard]] const DepthMap& map() const { return *map_; }

private:
    const DepthMap* map_;
    double min_ = 0, max_ = 0;
};

/// Per-image normalized, inverted mean depth over the pixels of a box, in [0,1].
inline double box_depth(const DepthMap& map, const Box& box) { return ImageDepth(map).box_depth(box); }

namespace detail {

// overlap[t * src + s] = length of source cell s inside target cell t, in source units.
inline std::vector<double> overlap_weights(std::size_t src, std::size_t dst) {
    std::vector<double> weights(src * dst, 0.0);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t t = 0; t < dst; ++t) {
        const double lo = t * scale;
        const double hi = (t + 1) * scale;
        const auto first = static_cast<std::size_t>(std::floor(lo));
        const auto last = std::min(src, static_cast<std::size_t>(std::ceil(hi)));
        for (std::size_t s = first; s < last; ++s) {
            const double ov = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
            if (ov > 0) weights[t * src + s] = ov;
        }
    }
    return weights;
}

}  // namespace detail

/// Area-average resampling onto an h_l x w_l grid (fractional source cells weighted by overlap).
inline NormalizedDepthMap downsample_to_level(const NormalizedDepthMap& map, std::size_t h_l, std::size_t w_l) {
    const std::size_t H = map.height(), W = map.width();
    if (h_l < 1 || h_l > H || w_l < 1 || w_l > W) throw DomainError("target level size must be within 1..source size");
    if (h_l == H && w_l == W) return map;

    const auto row_w = detail::overlap_weights(H, h_l);
    const auto col_w = detail::overlap_weights(W, w_l);
    const double cell_area = (static_cast<double>(H) / h_l) * (static_cast<double>(W) / w_l);

    // Columns first, then rows.
    std::vector<double> tmp(H * w_l, 0.0);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t t = 0; t < w_l; ++t) {
            double acc = 0.0;
            for (std::size_t s = 0; s < W; ++s) {
                const double wt = col_w[t * W + s];
                if (wt != 0.0) acc += wt * map.at(h, s);
            }
            tmp[h * w_l + t] = acc;
        }

    std::vector<double> out(h_l * w_l, 0.0);
    for (std::size_t t = 0; t < h_l; ++t)
        for (std::size_t c = 0; c < w_l; ++c) {
            double acc = 0.0;
            for (std::size_t s = 0; s < H; ++s) {
                const double wt = row_w[t * H + s];
                if (wt != 0.0) acc += wt * tmp[s * w_l + c];
            }
            out[t * w_l + c] = std::clamp(acc / cell_area, 0.0, 1.0);
        }
    return {w_l, h_l, std::move(out)};
}

}  // namespace depthprior::depthnorm

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "depthprior/core.hpp"

namespace depthprior::spline {

inline constexpr int kDegree = 3;

/// Clamped uniform cubic B-spline basis with `count` functions over [d_lo, d_hi].
class BasisSpec {
public:
    BasisSpec(std::size_t count, double d_lo, double d_hi) : count_(count), lo_(d_lo), hi_(d_hi) {
        if (count_ < 4) throw ConfigError("cubic basis needs at least 4 coefficients");
        if (!(d_lo < d_hi)) throw ConfigError("basis domain requires d_lo < d_hi");
        // count + degree + 1 knots: 4 copies of each end, count - 4 uniform interior knots.
        const std::size_t spans = count_ - kDegree;
        knots_.reserve(count_ + kDegree + 1);
        for (int i = 0; i < kDegree; ++i) knots_.push_back(lo_);
        for (std::size_t i = 0; i <= spans; ++i)
            knots_.push_back(i == spans ? hi_ : lo_ + (hi_ - lo_) * static_cast<double>(i) / spans);
        for (int i = 0; i < kDegree; ++i) knots_.push_back(hi_);
    }

    explicit BasisSpec(const ThresholdCurve& curve) : BasisSpec(curve.knots(), curve.d_lo, curve.d_hi) {}

    [[nodiscard]] std::size_t count() const { return count_; }
    [[nodiscard]] double d_lo() const { return lo_; }
    [[nodiscard]] double d_hi() const { return hi_; }
    [[nodiscard]] std::span<const double> knots() const { return knots_; }

    /// Index of the knot span [t_i, t_{i+1}) holding d; the last non-empty span includes d_hi.
    [[nodiscard]] std::size_t find_span(double d) const {
        if (d >= hi_) return count_ - 1;
        auto it = std::upper_bound(knots_.begin() + kDegree, knots_.begin() + static_cast<std::ptrdiff_t>(count_) + 1, d);
        return static_cast<std::size_t>(it - knots_.begin()) - 1;
    }

    /// Evaluates the 4 non-zero basis functions at d (clamped to the domain) into `local`;
    /// returns the index of the first of them.
    std::size_t eval_local(double d, double (&local)[kDegree + 1]) const {
        d = std::clamp(d, lo_, hi_);
        const std::size_t span = find_span(d);
        double left[kDegree + 1], right[kDegree + 1];
        local[0] = 1.0;
        // Cox-de Boor recursion, triangular form.
        for (int j = 1; j <= kDegree; ++j) {
            left[j] = d - knots_[span + 1 - j];
            right[j] = knots_[span + j] - d;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double tmp = local[r] / (right[r + 1] + left[j - r]);
                local[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            local[j] = saved;
        }
        return span - kDegree;
    }

private:
    std::size_t count_;
    double lo_, hi_;
    std::vector<double> knots_;
};

/// All `count` basis values at d; at most 4 are non-zero.
inline std::vector<double> basis_eval(const BasisSpec& spec, double d) {
    std::vector<double> out(spec.count(), 0.0);
    double local[kDegree + 1];
    const std::size_t first = spec.eval_local(d, local);
    for (int i = 0; i <= kDegree; ++i) out[first + i] = local[i];
    return out;
}

/// sum_m psi_m B_m(d).
inline double adjustment(const BasisSpec& spec, std::span<const double> psi, double d) {
    double local[kDegree + 1];
    const std::size_t first = spec.eval_local(d, local);
    double g = 0.0;
    for (int i = 0; i <= kDegree; ++i) g += psi[first + i] * local[i];
    return g;
}

inline double clip_threshold(double tau) { return std::clamp(tau, 0.0, 1.0); }

inline double threshold_at(const BasisSpec& spec, const ThresholdCurve& curve, double d) {
    return clip_threshold(curve.tau0 - adjustment(spec, curve.psi, d));
}

inline double threshold_at(const ThresholdCurve& curve, double d) {
    return threshold_at(BasisSpec(curve), curve, d);
}

/// Threshold before clipping; used to check that bounded coefficients never need the clip.
inline double raw_threshold_at(const ThresholdCurve& curve, double d) {
    return curve.tau0 - adjustment(BasisSpec(curve), curve.psi, d);
}

}  // namespace depthprior::spline

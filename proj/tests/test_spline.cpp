#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "depthprior/spline.hpp"

using namespace depthprior;
using namespace depthprior::spline;

namespace {

// Textbook recursive definition, 0/0 := 0, right-closed on the last non-empty span.
double naive_basis(std::span<const double> t, std::size_t i, int p, double d, double hi) {
    if (p == 0) {
        if (t[i] < t[i + 1] && ((d >= t[i] && d < t[i + 1]) || (d == hi && t[i + 1] == hi))) return 1.0;
        return 0.0;
    }
    double v = 0.0;
    const double a = t[i + p] - t[i];
    const double b = t[i + p + 1] - t[i + 1];
    if (a > 0) v += (d - t[i]) / a * naive_basis(t, i, p - 1, d, hi);
    if (b > 0) v += (t[i + p + 1] - d) / b * naive_basis(t, i + 1, p - 1, d, hi);
    return v;
}

}  // namespace

TEST(BasisSpec, KnotVectorShape) {
    const BasisSpec spec(10, 0.0, 0.9);
    const auto k = spec.knots();
    ASSERT_EQ(k.size(), 14u);
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(k[i], 0.0);
        EXPECT_EQ(k[13 - i], 0.9);
    }
    EXPECT_TRUE(std::is_sorted(k.begin(), k.end()));
    for (std::size_t i = 4; i < 10; ++i) EXPECT_NEAR(k[i] - k[i - 1], 0.9 / 7, 1e-15);
}

TEST(BasisSpec, TooFewCoefficients) {
    EXPECT_THROW(BasisSpec(3, 0.0, 1.0), ConfigError);
    EXPECT_THROW(BasisSpec(4, 1.0, 1.0), ConfigError);
}

TEST(BasisEval, ClampedEndpoints) {
    for (std::size_t j : {4u, 7u, 10u}) {
        const BasisSpec spec(j, 0.0, 0.9);
        auto lo = basis_eval(spec, 0.0), hi = basis_eval(spec, 0.9);
        std::vector<double> e0(j, 0.0), e1(j, 0.0);
        e0.front() = 1.0;
        e1.back() = 1.0;
        EXPECT_EQ(lo, e0);
        EXPECT_EQ(hi, e1);
        EXPECT_EQ(basis_eval(spec, -3.0), e0);
        EXPECT_EQ(basis_eval(spec, 1.7), e1);
    }
}

TEST(BasisEval, SingleSegmentIsBernstein) {
    const BasisSpec spec(4, 0.0, 1.0);
    for (double d : {0.0, 0.1, 0.25, 0.5, 0.77, 1.0}) {
        const auto b = basis_eval(spec, d);
        const double u = 1.0 - d;
        EXPECT_NEAR(b[0], u * u * u, 1e-12);
        EXPECT_NEAR(b[1], 3 * d * u * u, 1e-12);
        EXPECT_NEAR(b[2], 3 * d * d * u, 1e-12);
        EXPECT_NEAR(b[3], d * d * d, 1e-12);
    }
    const auto half = basis_eval(spec, 0.5);
    EXPECT_NEAR(half[0], 0.125, 1e-12);
    EXPECT_NEAR(half[1], 0.375, 1e-12);
    EXPECT_NEAR(half[2], 0.375, 1e-12);
    EXPECT_NEAR(half[3], 0.125, 1e-12);
}

TEST(BasisEval, MatchesRecursiveDefinition) {
    std::mt19937 rng(2);
    for (std::size_t j : {4u, 5u, 10u, 16u}) {
        const BasisSpec spec(j, 0.0, 0.9);
        std::uniform_real_distribution<double> u(0.0, 0.9);
        for (int s = 0; s < 200; ++s) {
            const double d = s == 0 ? 0.9 : u(rng);
            const auto b = basis_eval(spec, d);
            for (std::size_t m = 0; m < j; ++m) EXPECT_NEAR(b[m], naive_basis(spec.knots(), m, 3, d, 0.9), 1e-12);
        }
    }
}

TEST(BasisEval, PartitionOfUnityNonNegativeLocal) {
    std::mt19937 rng(1);
    for (std::size_t j : {4u, 10u, 16u}) {
        const BasisSpec spec(j, 0.0, 0.9);
        std::uniform_real_distribution<double> u(0.0, 0.9);
        for (int s = 0; s < 1000; ++s) {
            const auto b = basis_eval(spec, u(rng));
            double sum = 0;
            int nonzero = 0;
            for (double x : b) {
                EXPECT_GE(x, 0.0);
                sum += x;
                nonzero += x != 0.0;
            }
            EXPECT_LE(std::abs(sum - 1.0), 1e-12);
            EXPECT_LE(nonzero, 4);
        }
    }
}

TEST(ThresholdAt, ZeroCoefficientsGiveReference) {
    const auto curve = ThresholdCurve::flat(0.6, 10);
    for (int i = 0; i <= 20; ++i) EXPECT_EQ(threshold_at(curve, i / 20.0), 0.6);
}

TEST(ThresholdAt, EqualCoefficientsCollapse) {
    auto curve = ThresholdCurve::flat(0.6, 10);
    std::fill(curve.psi.begin(), curve.psi.end(), 0.15);
    for (int i = 0; i <= 100; ++i) EXPECT_NEAR(threshold_at(curve, i / 100.0), 0.45, 1e-12);
}

TEST(ThresholdAt, FarEndpointControlledByLastCoefficient) {
    ThresholdCurve curve{0.7, 0.0, 0.9, {0, 0, 0, 0.2}, 0.1};
    EXPECT_NEAR(threshold_at(curve, 0.9), 0.5, 1e-12);
    EXPECT_NEAR(threshold_at(curve, 0.0), 0.7, 1e-12);
}

TEST(ThresholdAt, ClipsToUnitInterval) {
    ThresholdCurve curve{0.2, 0.0, 0.9, {0.5, 0.5, 0.5, 0.5}, 0.1};
    EXPECT_EQ(threshold_at(curve, 0.3), 0.0);
    EXPECT_NEAR(raw_threshold_at(curve, 0.3), -0.3, 1e-12);
}

TEST(ThresholdAt, RaisingOneCoefficientNeverRaisesThreshold) {
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> u(0.0, 0.1);
    for (int trial = 0; trial < 30; ++trial) {
        auto curve = ThresholdCurve::flat(0.8, 10);
        for (auto& p : curve.psi) p = u(rng);
        auto bumped = curve;
        bumped.psi[trial % 10] += 0.05;
        for (int i = 0; i <= 90; ++i) EXPECT_LE(threshold_at(bumped, i / 100.0), threshold_at(curve, i / 100.0));
    }
}

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "depthprior/errors.hpp"

namespace depthprior::opt {

/// Axis-aligned box [lower_i, upper_i].
struct Bounds {
    std::vector<double> lower;
    std::vector<double> upper;

    [[nodiscard]] std::size_t dim() const { return lower.size(); }
    [[nodiscard]] bool contains(std::span<const double> x) const {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] < lower[i] || x[i] > upper[i]) return false;
        return true;
    }
    void validate() const {
        if (lower.size() != upper.size() || lower.empty()) throw ConfigError("bounds dimension mismatch");
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (!(lower[i] <= upper[i])) throw ConfigError("lower bound exceeds upper bound");
    }
};

/// Fitness of one candidate. `feasible` marks candidates that satisfy the hard constraint.
struct Evaluation {
    double value = -std::numeric_limits<double>::infinity();
    bool feasible = true;
};

using Objective = std::function<Evaluation(std::span<const double>)>;

struct GenerationStats {
    std::size_t generation = 0;
    std::size_t evaluations = 0;
    std::vector<double> best;
    Evaluation best_eval;
};

using GenerationCallback = std::function<void(const GenerationStats&)>;

struct OptimizeResult {
    /// Highest-valued candidate seen.
    std::vector<double> best;
    Evaluation best_eval;
    /// Highest-valued feasible candidate seen; empty if none was feasible.
    std::vector<double> best_feasible;
    Evaluation best_feasible_eval;
    std::size_t evaluations = 0;
    std::size_t generations = 0;
};

/// Seeded, budgeted maximizer over a box. `initial` candidates are evaluated first.
class BlackBoxOptimizer {
public:
    virtual ~BlackBoxOptimizer() = default;
    virtual OptimizeResult maximize(const Objective& f, const Bounds& bounds, std::span<const std::vector<double>> initial,
                                    const GenerationCallback& on_generation = {}) const = 0;
};

struct DEParams {
    std::uint64_t seed = 0;
    std::size_t population = 32;
    std::size_t generations = 200;
    /// Stop after this many generations without improving the best value.
    std::size_t stagnation = 40;
    /// Maximum objective evaluations, 0 for no limit.
    std::size_t budget = 0;
    double weight = 0.6;     // differential weight F
    double crossover = 0.9;  // CR
};

/// DE/rand/1/bin with bounce-back bound handling. Trials replace their parent on ties so the
/// population can drift across the plateaus of step-valued objectives.
class DifferentialEvolution final : public BlackBoxOptimizer {
public:
    explicit DifferentialEvolution(DEParams params = {}) : params_(params) {
        if (params_.population < 4) throw ConfigError("differential evolution needs a population of at least 4");
    }

    [[nodiscard]] const DEParams& params() const { return params_; }

    OptimizeResult maximize(const Objective& f, const Bounds& bounds, std::span<const std::vector<double>> initial,
                            const GenerationCallback& on_generation = {}) const override {
        bounds.validate();
        const std::size_t dim = bounds.dim();
        const std::size_t np = params_.population;
        std::mt19937_64 rng(params_.seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> pick(0, np - 1);
        std::uniform_int_distribution<std::size_t> pick_dim(0, dim - 1);

        OptimizeResult res;
        auto budget_left = [&] { return params_.budget == 0 || res.evaluations < params_.budget; };
        auto record = [&](const std::vector<double>& x, const Evaluation& e) {
            ++res.evaluations;
            if (res.best.empty() || e.value > res.best_eval.value) {
                res.best = x;
                res.best_eval = e;
            }
            if (e.feasible && (res.best_feasible.empty() || e.value > res.best_feasible_eval.value)) {
                res.best_feasible = x;
                res.best_feasible_eval = e;
            }
        };

        std::vector<std::vector<double>> pop;
        std::vector<Evaluation> fit;
        for (const auto& x : initial) {
            if (pop.size() == np) break;
            if (x.size() != dim) throw ConfigError("initial candidate has wrong dimension");
            pop.push_back(clamp(x, bounds));
        }
        while (pop.size() < np) {
            std::vector<double> x(dim);
            for (std::size_t j = 0; j < dim; ++j) x[j] = bounds.lower[j] + unit(rng) * (bounds.upper[j] - bounds.lower[j]);
            pop.push_back(std::move(x));
        }
        for (const auto& x : pop) {
            if (!budget_left()) break;
            fit.push_back(f(x));
            record(x, fit.back());
        }
        pop.resize(fit.size());
        if (pop.size() < 4) return res;

        std::size_t stale = 0;
        for (std::size_t gen = 1; gen <= params_.generations && budget_left(); ++gen) {
            // Draw every trial before evaluating any, so evaluation order cannot affect the stream.
            std::vector<std::vector<double>> trials(pop.size());
            for (std::size_t i = 0; i < pop.size(); ++i) {
                std::size_t a, b, c;
                do a = pick(rng) % pop.size(); while (a == i);
                do b = pick(rng) % pop.size(); while (b == i || b == a);
                do c = pick(rng) % pop.size(); while (c == i || c == a || c == b);
                const std::size_t forced = pick_dim(rng);
                auto& trial = trials[i];
                trial = pop[i];
                for (std::size_t j = 0; j < dim; ++j) {
                    if (j != forced && unit(rng) >= params_.crossover) continue;
                    double v = pop[a][j] + params_.weight * (pop[b][j] - pop[c][j]);
                    if (v < bounds.lower[j]) v = bounds.lower[j] + unit(rng) * (pop[a][j] - bounds.lower[j]);
                    if (v > bounds.upper[j]) v = bounds.upper[j] - unit(rng) * (bounds.upper[j] - pop[a][j]);
                    trial[j] = std::clamp(v, bounds.lower[j], bounds.upper[j]);
                }
            }
            const double before = res.best_eval.value;
            for (std::size_t i = 0; i < pop.size() && budget_left(); ++i) {
                const auto e = f(trials[i]);
                record(trials[i], e);
                if (e.value >= fit[i].value) {
                    pop[i] = std::move(trials[i]);
                    fit[i] = e;
                }
            }
            res.generations = gen;
            if (on_generation) on_generation({gen, res.evaluations, res.best, res.best_eval});
            stale = res.best_eval.value > before ? 0 : stale + 1;
            if (params_.stagnation > 0 && stale >= params_.stagnation) break;
        }
        return res;
    }

private:
    static std::vector<double> clamp(std::vector<double> x, const Bounds& b) {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j], b.lower[j], b.upper[j]);
        return x;
    }

    DEParams params_;
};

}  // namespace depthprior::opt

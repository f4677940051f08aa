#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tagsr/estimation.hpp"
#include "tagsr/grammar.hpp"
#include "tagsr/interpreter.hpp"
#include "tagsr/simulation.hpp"

namespace tagsr {

/// Objective vector, minimized componentwise. Here (E_s, E_p).
struct ObjectivePoint {
    std::vector<double> values;

    bool operator==(const ObjectivePoint&) const = default;
};

/// Sentinel for failed individuals; sorts into the last front.
ObjectivePoint sentinel_fitness();

/// a <= b everywhere and a < b somewhere. Throws on dimension mismatch.
bool dominates(const ObjectivePoint& a, const ObjectivePoint& b);

/// Crowding distance of each member of `front` (same order as `front`).
std::vector<double> crowding_distance(std::span<const ObjectivePoint> points, std::span<const int> front);

/// Fronts of indices, best first; each front ordered by descending crowding
/// distance with ties broken by index.
std::vector<std::vector<int>> nondominated_sort(std::span<const ObjectivePoint> points);

/// All indices of `points` in sorted order (front by front).
std::vector<int> ranked_order(std::span<const ObjectivePoint> points);

struct Individual {
    DerivationTree genotype;
    PolynomialModel phenotype;
    std::optional<ObjectivePoint> fitness;
    std::uint64_t id = 0;
};

struct GpConfig {
    int pop_size = 30;
    int generations = 60;
    int complexity = 20;
    double mu = 50.0; // percent of the sorted population eligible as first parent
    std::uint64_t seed = 0;
    bool dedup = false;
    int workers = 0; // 0: OpenMP default
    EstimatorConfig estimator;

    /// Throws ConfigError.
    void check() const;
};

using DerivationPair = std::pair<DerivationTree, DerivationTree>;

/// Exchanges the subtree rooted at op i of a with the one rooted at op j of b.
/// Returns nothing when the roots do not share a label or either offspring
/// is invalid under g.
std::optional<DerivationPair> crossover_at(const DerivationTree& a,
                                           const DerivationTree& b,
                                           const Grammar& g,
                                           int i,
                                           int j);

/// Stem/tail crossover at a random compatible split point; after a bounded
/// number of rejected draws the parents are returned unchanged.
DerivationPair crossover(const DerivationTree& a, const DerivationTree& b, const Grammar& g, Rng& rng);

/// Adds or deletes one auxiliary tree with equal probability, switching
/// direction when the chosen one is impossible.
DerivationTree mutate(const DerivationTree& dt, const Grammar& g, Rng& rng);

/// Shared inputs of fitness evaluation.
struct EvaluationContext {
    const Grammar& grammar;
    std::span<const DataSet> estimation;
    std::span<const DataSet> test;
    const EstimatorConfig& estimator;
};

/// Interprets, estimates and scores one individual. `stream_key` seeds any
/// stochastic estimator so results do not depend on scheduling. Estimation or
/// scoring failures yield the sentinel fitness.
void evaluate_individual(Individual& ind, const EvaluationContext& ctx, std::uint64_t stream_key);

/// Reference implementation: one individual after another.
void evaluate_population_serial(std::span<Individual> pop, const EvaluationContext& ctx, std::uint64_t generation);

/// OpenMP implementation over individuals; identical results for any worker count.
void evaluate_population(std::span<Individual> pop,
                         const EvaluationContext& ctx,
                         std::uint64_t generation,
                         int workers = 0);

struct ProgressRecord {
    int gen = 0;
    double best_es = 0.0;
    double best_ep = 0.0;
    int front1_size = 0;
    double elapsed_s = 0.0;

    nlohmann::json to_json() const;
};

using ProgressSink = std::function<void(const ProgressRecord&)>;

struct EvolutionResult {
    std::vector<Individual> front;      // first front of the final population
    std::vector<Individual> population; // final population, sorted
};

/// The generational loop. Fitness is the mean (E_s, E_p) over `test`;
/// coefficients are estimated on `estimation`.
EvolutionResult evolve(const Grammar& g,
                       std::span<const DataSet> estimation,
                       std::span<const DataSet> test,
                       const GpConfig& cfg,
                       const ProgressSink& progress = {});

} // namespace tagsr

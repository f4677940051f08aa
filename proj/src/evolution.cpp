#include "tagsr/evolution.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <omp.h>

#include "tagsr/error.hpp"

namespace tagsr {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr int crossover_attempts = 16;

// Substream purposes.
enum Purpose : std::uint64_t { Init = 1, Cross = 2, Mutate = 3, Estimate = 4 };

bool is_leaf_adjunction(const DerivationTree& dt, int k)
{
    if (dt.ops[k].kind != OperationKind::Adjoin) {
        return false;
    }
    for (std::size_t i = static_cast<std::size_t>(k) + 1; i < dt.ops.size(); ++i) {
        if (dt.ops[i].parent == k && dt.ops[i].kind != OperationKind::Substitute) {
            return false;
        }
    }
    return true;
}

std::vector<ObjectivePoint> fitness_of(std::span<const Individual> pop)
{
    std::vector<ObjectivePoint> pts;
    pts.reserve(pop.size());
    for (const auto& ind : pop) {
        pts.push_back(ind.fitness.value_or(sentinel_fitness()));
    }
    return pts;
}

ProgressRecord summarize(std::span<const Individual> pop, int gen, double elapsed)
{
    ProgressRecord r;
    r.gen = gen;
    r.best_es = inf;
    r.best_ep = inf;
    for (const auto& ind : pop) {
        const auto& v = ind.fitness.value_or(sentinel_fitness()).values;
        r.best_es = std::min(r.best_es, v[0]);
        r.best_ep = std::min(r.best_ep, v[1]);
    }
    r.front1_size = static_cast<int>(nondominated_sort(fitness_of(pop)).front().size());
    r.elapsed_s = elapsed;
    return r;
}

// Survivors of the union: sorted order, optionally preferring one
// representative per phenotype signature.
std::vector<Individual> select_survivors(std::vector<Individual>& pool, int size, bool dedup)
{
    const auto order = ranked_order(fitness_of(pool));
    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(size));
    if (dedup) {
        std::unordered_set<std::uint64_t> seen;
        std::vector<int> duplicates;
        for (int i : order) {
            if (seen.insert(model_signature(pool[i].phenotype)).second) {
                chosen.push_back(i);
            } else {
                duplicates.push_back(i);
            }
        }
        chosen.insert(chosen.end(), duplicates.begin(), duplicates.end());
    } else {
        chosen = order;
    }
    chosen.resize(static_cast<std::size_t>(size));
    if (dedup) {
        // keep the sorted order of the survivors themselves
        std::vector<int> rank(pool.size());
        for (std::size_t r = 0; r < order.size(); ++r) {
            rank[order[r]] = static_cast<int>(r);
        }
        std::sort(chosen.begin(), chosen.end(), [&](int a, int b) { return rank[a] < rank[b]; });
    }
    std::vector<Individual> next;
    next.reserve(chosen.size());
    for (int i : chosen) {
        next.push_back(std::move(pool[i]));
    }
    return next;
}

} // namespace

ObjectivePoint sentinel_fitness()
{
    return {{inf, inf}};
}

bool dominates(const ObjectivePoint& a, const ObjectivePoint& b)
{
    if (a.values.size() != b.values.size()) {
        throw Error("objective vectors differ in dimension");
    }
    bool strict = false;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (a.values[i] > b.values[i]) {
            return false;
        }
        strict = strict || a.values[i] < b.values[i];
    }
    return strict;
}

std::vector<double> crowding_distance(std::span<const ObjectivePoint> points, std::span<const int> front)
{
    const std::size_t n = front.size();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) {
        std::fill(dist.begin(), dist.end(), inf);
        return dist;
    }
    const std::size_t m = points[front[0]].values.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t obj = 0; obj < m; ++obj) {
        std::iota(idx.begin(), idx.end(), 0);
        auto value = [&](std::size_t k) { return points[front[k]].values[obj]; };
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return value(a) < value(b); });
        dist[idx.front()] = inf;
        dist[idx.back()] = inf;
        // Normalize by the finite extent; gaps touching a sentinel count as a full range.
        double lo = inf;
        double hi = -inf;
        for (std::size_t k = 0; k < n; ++k) {
            if (std::isfinite(value(k))) {
                lo = std::min(lo, value(k));
                hi = std::max(hi, value(k));
            }
        }
        const double range = hi - lo;
        if (!(range > 0.0)) {
            continue;
        }
        for (std::size_t r = 1; r + 1 < n; ++r) {
            const double gap = value(idx[r + 1]) - value(idx[r - 1]);
            dist[idx[r]] += std::isfinite(gap) ? gap / range : 1.0;
        }
    }
    return dist;
}

std::vector<std::vector<int>> nondominated_sort(std::span<const ObjectivePoint> points)
{
    const int n = static_cast<int>(points.size());
    std::vector<std::vector<int>> dominated_by_me(static_cast<std::size_t>(n));
    std::vector<int> count(static_cast<std::size_t>(n), 0);
    std::vector<std::vector<int>> fronts(1);
    for (int p = 0; p < n; ++p) {
        for (int q = p + 1; q < n; ++q) {
            if (dominates(points[p], points[q])) {
                dominated_by_me[p].push_back(q);
                ++count[q];
            } else if (dominates(points[q], points[p])) {
                dominated_by_me[q].push_back(p);
                ++count[p];
            }
        }
    }
    for (int p = 0; p < n; ++p) {
        if (count[p] == 0) {
            fronts[0].push_back(p);
        }
    }
    while (!fronts.back().empty()) {
        std::vector<int> next;
        for (int p : fronts.back()) {
            for (int q : dominated_by_me[p]) {
                if (--count[q] == 0) {
                    next.push_back(q);
                }
            }
        }
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();

    for (auto& front : fronts) {
        std::sort(front.begin(), front.end());
        const auto dist = crowding_distance(points, front);
        std::vector<std::size_t> idx(front.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return dist[a] > dist[b]; });
        std::vector<int> ordered;
        ordered.reserve(front.size());
        for (auto k : idx) {
            ordered.push_back(front[k]);
        }
        front = std::move(ordered);
    }
    return fronts;
}

std::vector<int> ranked_order(std::span<const ObjectivePoint> points)
{
    std::vector<int> out;
    out.reserve(points.size());
    for (const auto& f : nondominated_sort(points)) {
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

void GpConfig::check() const
{
    if (pop_size < 2) {
        throw ConfigError("pop_size must be >= 2");
    }
    if (generations < 1) {
        throw ConfigError("generations must be >= 1");
    }
    if (complexity < 1) {
        throw ConfigError("complexity must be >= 1");
    }
    if (!(mu > 0.0 && mu <= 100.0)) {
        throw ConfigError("mu must be in (0, 100]");
    }
    if (workers < 0) {
        throw ConfigError("workers must be >= 0");
    }
    estimator.check();
}

std::optional<DerivationPair> crossover_at(const DerivationTree& a,
                                           const DerivationTree& b,
                                           const Grammar& g,
                                           int i,
                                           int j)
{
    if (i <= 0 || j <= 0 || static_cast<std::size_t>(i) >= a.ops.size() || static_cast<std::size_t>(j) >= b.ops.size()) {
        return std::nullopt;
    }
    const auto& oi = a.ops[i];
    const auto& oj = b.ops[j];
    if (oi.kind != OperationKind::Adjoin || oj.kind != OperationKind::Adjoin ||
        elementary_tree(oi.tree).root_label() != elementary_tree(oj.tree).root_label()) {
        return std::nullopt;
    }
    DerivationPair out{graft(remove_subtree(a, i), {oi.parent, oi.address}, b, j),
                       graft(remove_subtree(b, j), {oj.parent, oj.address}, a, i)};
    if (!validate(out.first, g).empty() || !validate(out.second, g).empty()) {
        return std::nullopt;
    }
    return out;
}

DerivationPair crossover(const DerivationTree& a, const DerivationTree& b, const Grammar& g, Rng& rng)
{
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 1; i < a.ops.size(); ++i) {
        if (a.ops[i].kind != OperationKind::Adjoin) {
            continue;
        }
        const Label li = elementary_tree(a.ops[i].tree).root_label();
        for (std::size_t j = 1; j < b.ops.size(); ++j) {
            if (b.ops[j].kind == OperationKind::Adjoin && elementary_tree(b.ops[j].tree).root_label() == li) {
                pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
            }
        }
    }
    for (int attempt = 0; attempt < crossover_attempts && !pairs.empty(); ++attempt) {
        const auto k = uniform_index(rng, pairs.size());
        if (auto out = crossover_at(a, b, g, pairs[k].first, pairs[k].second)) {
            return std::move(*out);
        }
        pairs.erase(pairs.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return {a, b};
}

DerivationTree mutate(const DerivationTree& dt, const Grammar& g, Rng& rng)
{
    const bool grow_first = uniform01(rng) < 0.5;
    for (int pass = 0; pass < 2; ++pass) {
        const bool grow = (pass == 0) == grow_first;
        if (grow) {
            if (dt.complexity() >= g.limits.max_complexity) {
                continue;
            }
            const auto moves = legal_moves(dt, g);
            if (moves.empty()) {
                continue;
            }
            const auto& m = moves[uniform_index(rng, moves.size())];
            return adjoin(dt, g, m.tree, m.site, sample_payload(m.tree, g, rng));
        }
        std::vector<int> leaves;
        for (int k = 1; k < static_cast<int>(dt.ops.size()); ++k) {
            if (is_leaf_adjunction(dt, k)) {
                leaves.push_back(k);
            }
        }
        if (!leaves.empty()) {
            return remove_subtree(dt, leaves[uniform_index(rng, leaves.size())]);
        }
    }
    return dt;
}

void evaluate_individual(Individual& ind, const EvaluationContext& ctx, std::uint64_t stream_key)
{
    ind.phenotype = interpret(derive(ind.genotype), ctx.grammar.channels);
    try {
        EstimatorConfig cfg = ctx.estimator;
        cfg.seed = make_stream(ctx.estimator.seed, {stream_key, Estimate})();
        ind.phenotype = estimate(ind.phenotype, ctx.estimation, cfg);
        double es = 0.0;
        double ep = 0.0;
        for (const auto& d : ctx.test) {
            const auto r = evaluate(ind.phenotype, d);
            es += r.error.es;
            ep += r.error.ep;
        }
        const double n = static_cast<double>(ctx.test.size());
        es /= n;
        ep /= n;
        ind.fitness = ObjectivePoint{{std::isfinite(es) ? es : inf, std::isfinite(ep) ? ep : inf}};
    } catch (const Error&) {
        ind.fitness = sentinel_fitness();
    }
}

namespace {

std::uint64_t individual_key(std::uint64_t generation, std::size_t index)
{
    return splitmix64(generation * 0x10000ULL + index);
}

} // namespace

void evaluate_population_serial(std::span<Individual> pop, const EvaluationContext& ctx, std::uint64_t generation)
{
    for (std::size_t i = 0; i < pop.size(); ++i) {
        evaluate_individual(pop[i], ctx, individual_key(generation, i));
    }
}

void evaluate_population(std::span<Individual> pop, const EvaluationContext& ctx, std::uint64_t generation, int workers)
{
    const int n = static_cast<int>(pop.size());
    const int threads = workers > 0 ? workers : omp_get_max_threads();
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (int i = 0; i < n; ++i) {
        try {
            evaluate_individual(pop[i], ctx, individual_key(generation, static_cast<std::size_t>(i)));
        } catch (...) {
#pragma omp critical(tagsr_eval_failure)
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

nlohmann::json ProgressRecord::to_json() const
{
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"gen", gen},
            {"best_Es", num(best_es)},
            {"best_Ep", num(best_ep)},
            {"front1_size", front1_size},
            {"elapsed_s", elapsed_s}};
}

EvolutionResult evolve(const Grammar& grammar,
                       std::span<const DataSet> estimation,
                       std::span<const DataSet> test,
                       const GpConfig& cfg,
                       const ProgressSink& progress)
{
    cfg.check();
    if (estimation.empty() || test.empty()) {
        throw ConfigError("need at least one estimation and one test data set");
    }
    for (const auto& d : estimation) {
        d.check();
        if (d.inputs() != grammar.channels.inputs || d.outputs() != grammar.channels.outputs) {
            throw DataError("data set '" + d.name + "' does not match the grammar's channel counts");
        }
    }
    for (const auto& d : test) {
        d.check();
        if (d.inputs() != grammar.channels.inputs || d.outputs() != grammar.channels.outputs) {
            throw DataError("data set '" + d.name + "' does not match the grammar's channel counts");
        }
    }
    Grammar g = grammar;
    g.limits.max_complexity = cfg.complexity;
    const EvaluationContext ctx{g, estimation, test, cfg.estimator};
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
    const auto pop_size = static_cast<std::size_t>(cfg.pop_size);
    std::uint64_t next_id = 0;

    std::vector<Individual> pop(pop_size);
    for (std::size_t i = 0; i < pop_size; ++i) {
        Rng rng = make_stream(cfg.seed, {0, i, Init});
        pop[i].genotype = random_derivation(g, cfg.complexity, rng);
        pop[i].id = next_id++;
    }
    evaluate_population(pop, ctx, 0, cfg.workers);
    pop = select_survivors(pop, cfg.pop_size, cfg.dedup);
    if (progress) {
        progress(summarize(pop, 0, elapsed()));
    }

    const auto pool_size = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(cfg.mu / 100.0 * static_cast<double>(pop_size))), 1, pop_size);
    for (int gen = 1; gen <= cfg.generations; ++gen) {
        const auto ugen = static_cast<std::uint64_t>(gen);
        std::vector<Individual> offspring;
        offspring.reserve(2 * pop_size);
        // pop is kept in sorted order, so its head is the top mu% pool.
        for (std::size_t q = 0; offspring.size() < pop_size; ++q) {
            Rng rng = make_stream(cfg.seed, {ugen, q, Cross});
            const auto& p1 = pop[uniform_index(rng, pool_size)];
            const auto& p2 = pop[uniform_index(rng, pop_size)];
            auto [c1, c2] = crossover(p1.genotype, p2.genotype, g, rng);
            offspring.push_back({std::move(c1), {}, {}, next_id++});
            if (offspring.size() < pop_size) {
                offspring.push_back({std::move(c2), {}, {}, next_id++});
            }
        }
        for (std::size_t i = 0; i < pop_size; ++i) {
            Rng rng = make_stream(cfg.seed, {ugen, i, Mutate});
            offspring.push_back({mutate(pop[i].genotype, g, rng), {}, {}, next_id++});
        }
        evaluate_population(offspring, ctx, ugen, cfg.workers);

        std::vector<Individual> pool = std::move(pop);
        pool.insert(pool.end(), std::make_move_iterator(offspring.begin()), std::make_move_iterator(offspring.end()));
        pop = select_survivors(pool, cfg.pop_size, cfg.dedup);
        if (progress) {
            progress(summarize(pop, gen, elapsed()));
        }
    }

    EvolutionResult result;
    const auto fronts = nondominated_sort(fitness_of(pop));
    for (int i : fronts.front()) {
        result.front.push_back(pop[static_cast<std::size_t>(i)]);
    }
    result.population = std::move(pop);
    return result;
}

} // namespace tagsr

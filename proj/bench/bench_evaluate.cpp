// Serial vs OpenMP population evaluation on the planted system.
// Usage: bench_evaluate [population] [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include <omp.h>

#include "tagsr/benchmarks.hpp"
#include "tagsr/evolution.hpp"

using namespace tagsr;

namespace {

std::vector<Individual> random_population(const Grammar& g, int n, int complexity)
{
    Rng rng(42);
    std::vector<Individual> pop(static_cast<std::size_t>(n));
    for (auto& ind : pop) {
        ind.genotype = random_derivation(g, complexity, rng);
    }
    return pop;
}

template <class F>
double best_of(int repeats, F&& f)
{
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

} // namespace

int main(int argc, char** argv)
{
    const int n = argc > 1 ? std::atoi(argv[1]) : 120;
    const int repeats = argc > 2 ? std::atoi(argv[2]) : 3;
    const auto sys = default_planted_system(0.01);
    const std::vector<DataSet> est{generate_planted(sys, 2000, 1).data};
    const std::vector<DataSet> test{generate_planted(sys, 2000, 2).data};
    const auto g = build_grammar("NARMAX", {1, 1, 1}, {});
    const EstimatorConfig ecfg;
    const EvaluationContext ctx{g, est, test, ecfg};
    const auto base = random_population(g, n, 30);

    std::vector<Individual> reference = base;
    const double serial = best_of(repeats, [&] {
        reference = base;
        evaluate_population_serial(reference, ctx, 1);
    });
    std::printf("population %d, %d hardware threads\n", n, omp_get_num_procs());
    std::printf("%-10s %10s %8s %s\n", "kernel", "seconds", "speedup", "matches serial");
    std::printf("%-10s %10.4f %8.2f %s\n", "serial", serial, 1.0, "yes");
    for (int workers : {1, 2, 4, 8}) {
        std::vector<Individual> pop = base;
        const double t = best_of(repeats, [&] {
            pop = base;
            evaluate_population(pop, ctx, 1, workers);
        });
        bool same = true;
        for (std::size_t i = 0; i < pop.size(); ++i) {
            same = same && pop[i].fitness == reference[i].fitness;
        }
        char label[16];
        std::snprintf(label, sizeof label, "omp x%d", workers);
        std::printf("%-10s %10.4f %8.2f %s\n", label, t, serial / t, same ? "yes" : "NO");
        if (!same) {
            return 1;
        }
    }
    return 0;
}

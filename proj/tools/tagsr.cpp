#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "tagsr/benchmarks.hpp"
#include "tagsr/cli.hpp"
#include "tagsr/error.hpp"

namespace {

constexpr int exit_failure = 1;
constexpr int exit_usage = 2;

int identify(const std::filesystem::path& config, const std::optional<std::string>& out, std::optional<int> workers)
{
    auto cfg = tagsr::load_config(config);
    if (out) {
        cfg.output.dir = *out;
    }
    cfg.gp.workers = workers ? *workers : tagsr::resolve_workers(cfg.gp.workers);
    const auto report = tagsr::run_identification(cfg);
    if (report.front.empty()) {
        return exit_failure;
    }
    const auto& head = report.front[report.headline];
    std::cout << "front of " << report.front.size() << " models written to " << cfg.output.dir.string() << "\n";
    std::cout << "headline model " << report.headline << ": validation "
              << tagsr::metrics_json(head.validation).dump() << "\n";
    for (const auto& line : tagsr::to_equation_strings(head.individual.phenotype)) {
        std::cout << "  " << line << "\n";
    }
    return 0;
}

int generate(const std::string& system, int n, std::uint64_t seed, const std::filesystem::path& out, double noise_std)
{
    tagsr::GeneratedData gen;
    if (system == "planted") {
        gen = tagsr::generate_planted(tagsr::default_planted_system(noise_std), n, seed);
    } else if (system == "boucwen") {
        tagsr::BoucWenOptions opts;
        opts.noise_std = noise_std;
        gen = tagsr::generate_bouc_wen(n, opts, seed);
    } else if (system == "cstr") {
        gen = tagsr::generate_cstr(n, tagsr::CstrOptions{}, seed);
    } else {
        throw tagsr::ConfigError("unknown system '" + system + "'");
    }
    if (out.has_parent_path()) {
        std::filesystem::create_directories(out.parent_path());
    }
    tagsr::save_csv(gen.data, out);
    auto sidecar = out;
    sidecar.replace_extension(".json");
    std::ofstream meta(sidecar);
    meta << gen.metadata.dump(2) << "\n";
    if (!meta) {
        throw tagsr::Error("cannot write " + sidecar.string());
    }
    return 0;
}

int evaluate(const std::filesystem::path& model, const std::filesystem::path& data)
{
    const auto m = tagsr::run_evaluate(model, data);
    std::cout << tagsr::metrics_json(m).dump() << "\n";
    return 0;
}

int init_config(const std::optional<std::string>& out)
{
    const auto text = tagsr::init_config_template();
    if (!out) {
        std::cout << text;
        return 0;
    }
    std::ofstream f(*out);
    f << text;
    if (!f) {
        throw tagsr::Error("cannot write " + *out);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Grammar-guided genetic programming for polynomial NARMAX identification"};
    app.require_subcommand(1);

    std::string config;
    std::optional<std::string> out;
    std::optional<int> workers;
    auto* id = app.add_subcommand("identify", "run an identification from a config file");
    id->add_option("--config", config, "run configuration")->required();
    id->add_option("--out", out, "output directory (overrides output.dir)");
    id->add_option("--workers", workers, "evaluation threads (overrides config and TAGSR_WORKERS)")
        ->check(CLI::NonNegativeNumber);

    std::string system;
    int n = 0;
    std::uint64_t seed = 0;
    std::string gen_out;
    double noise_std = 0.0;
    auto* gen = app.add_subcommand("gen", "generate a benchmark data set");
    gen->add_option("--system", system, "planted | boucwen | cstr")
        ->required()
        ->check(CLI::IsMember({"planted", "boucwen", "cstr"}));
    gen->add_option("--n", n, "number of samples")->required()->check(CLI::PositiveNumber);
    gen->add_option("--seed", seed, "random seed");
    gen->add_option("--out", gen_out, "CSV file; metadata goes next to it as .json")->required();
    gen->add_option("--noise-std", noise_std, "output noise standard deviation (planted, boucwen)");

    std::string model;
    std::string data;
    auto* ev = app.add_subcommand("eval", "score a stored model on a data set");
    ev->add_option("--model", model, "model JSON")->required();
    ev->add_option("--data", data, "data CSV")->required();

    std::optional<std::string> init_out;
    auto* init = app.add_subcommand("init-config", "print a commented configuration template");
    init->add_option("--out", init_out, "write the template to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    try {
        if (*id) {
            return identify(config, out, workers);
        }
        if (*gen) {
            return generate(system, n, seed, gen_out, noise_std);
        }
        if (*ev) {
            return evaluate(model, data);
        }
        return init_config(init_out);
    } catch (const tagsr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_usage;
    } catch (const tagsr::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_failure;
    }
}

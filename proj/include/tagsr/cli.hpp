#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tagsr/evolution.hpp"

namespace tagsr {

struct GrammarSection {
    std::string name = "NARX";
    std::vector<NonlinearOp> nonlinear_ops;
    std::vector<TreeId> custom_trees;
    int max_delay = 10;
    int noise_channels = 0; // 0: one per output
};

struct DataSection {
    std::vector<std::filesystem::path> est;
    std::vector<std::filesystem::path> test;
    std::vector<std::filesystem::path> val;
};

struct OutputSection {
    std::filesystem::path dir = "tagsr_out";
    bool series = true; // per-model time series CSVs
};

/// Parsed run configuration. Paths are absolute (resolved against the
/// config file's directory).
struct RunConfig {
    GrammarSection grammar;
    GpConfig gp;
    DataSection data;
    OutputSection output;
};

/// Parses the sectioned `key = value` format. Values are JSON; anything that
/// is not valid JSON is taken as a bare string. Unknown keys throw ConfigError.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Commented template listing every key with its default.
std::string init_config_template();

/// Metrics of one model on one or more records (means over records).
struct Metrics {
    double es = 0.0;
    double ep = 0.0;
    std::optional<double> bfr; // empty when undefined (constant channel)
};

Metrics score(const PolynomialModel& model, std::span<const DataSet> data);

struct FrontEntry {
    Individual individual;
    Metrics test;
    Metrics validation;
};

struct RunReport {
    std::vector<FrontEntry> front;
    std::size_t headline = 0;
    std::vector<ProgressRecord> progress;
};

/// Loads data, runs the evolution, scores front 1 on the validation sets and
/// writes pareto.json, equations.txt, progress.ndjson, models/ and series/
/// under cfg.output.dir.
RunReport run_identification(const RunConfig& cfg);

/// pareto.json content; contains no timings so reruns are byte-identical.
nlohmann::json pareto_json(const RunReport& report, const RunConfig& cfg, const Grammar& g);

/// Scores a stored model JSON on a CSV record.
Metrics run_evaluate(const std::filesystem::path& model_file, const std::filesystem::path& data_file);

/// Number or null for non-finite values.
nlohmann::json finite_or_null(double v);
nlohmann::json metrics_json(const Metrics& m);

/// Worker count after applying TAGSR_WORKERS (if set) on top of `configured`.
int resolve_workers(int configured);

} // namespace tagsr

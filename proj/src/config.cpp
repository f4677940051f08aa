#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tagsr/cli.hpp"
#include "tagsr/error.hpp"

namespace tagsr {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

nlohmann::json parse_value(const std::string& raw)
{
    try {
        return nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        return raw;
    }
}

std::vector<std::filesystem::path> path_list(const nlohmann::json& v, const std::filesystem::path& base)
{
    std::vector<std::filesystem::path> out;
    auto add = [&](const nlohmann::json& item) {
        std::filesystem::path p = item.get<std::string>();
        out.push_back(p.is_absolute() || base.empty() ? p : base / p);
    };
    if (v.is_array()) {
        for (const auto& item : v) {
            add(item);
        }
    } else {
        add(v);
    }
    return out;
}

template <class T>
T get(const nlohmann::json& v)
{
    return v.get<T>();
}

} // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir)
{
    RunConfig cfg;
    std::optional<int> grammar_complexity;
    using Handler = std::function<void(const nlohmann::json&)>;
    const std::map<std::string, Handler> handlers{
        {"grammar.name", [&](const auto& v) { cfg.grammar.name = get<std::string>(v); }},
        {"grammar.nonlinear_ops",
         [&](const auto& v) {
             cfg.grammar.nonlinear_ops.clear();
             for (const auto& item : v) {
                 const auto name = item.template get<std::string>();
                 const auto op = parse_op(name);
                 if (!op) {
                     throw ConfigError("unknown nonlinear op '" + name + "'");
                 }
                 cfg.grammar.nonlinear_ops.push_back(*op);
             }
         }},
        {"grammar.trees",
         [&](const auto& v) {
             cfg.grammar.custom_trees.clear();
             for (const auto& item : v) {
                 const auto name = item.template get<std::string>();
                 const auto id = parse_tree_id(name);
                 if (!id) {
                     throw ConfigError("unknown elementary tree '" + name + "'");
                 }
                 cfg.grammar.custom_trees.push_back(*id);
             }
         }},
        {"grammar.max_delay", [&](const auto& v) { cfg.grammar.max_delay = get<int>(v); }},
        {"grammar.noise_channels", [&](const auto& v) { cfg.grammar.noise_channels = get<int>(v); }},
        {"grammar.complexity", [&](const auto& v) { grammar_complexity = get<int>(v); }},
        {"gp.pop_size", [&](const auto& v) { cfg.gp.pop_size = get<int>(v); }},
        {"gp.generations", [&](const auto& v) { cfg.gp.generations = get<int>(v); }},
        {"gp.complexity", [&](const auto& v) { cfg.gp.complexity = get<int>(v); }},
        {"gp.mu", [&](const auto& v) { cfg.gp.mu = get<double>(v); }},
        {"gp.seed", [&](const auto& v) { cfg.gp.seed = get<std::uint64_t>(v); }},
        {"gp.dedup", [&](const auto& v) { cfg.gp.dedup = get<bool>(v); }},
        {"gp.workers", [&](const auto& v) { cfg.gp.workers = get<int>(v); }},
        {"estimator.method", [&](const auto& v) { cfg.gp.estimator.method = parse_method(get<std::string>(v)); }},
        {"estimator.weights",
         [&](const auto& v) {
             if (!v.is_array() || v.size() != 2) {
                 throw ConfigError("estimator.weights must be [omega_s, omega_p]");
             }
             cfg.gp.estimator.weight_sim = v[0].template get<double>();
             cfg.gp.estimator.weight_pred = v[1].template get<double>();
         }},
        {"estimator.ridge", [&](const auto& v) { cfg.gp.estimator.ridge = get<double>(v); }},
        {"estimator.seed", [&](const auto& v) { cfg.gp.estimator.seed = get<std::uint64_t>(v); }},
        {"estimator.cmaes.population", [&](const auto& v) { cfg.gp.estimator.cmaes.population = get<int>(v); }},
        {"estimator.cmaes.max_evals", [&](const auto& v) { cfg.gp.estimator.cmaes.max_evals = get<int>(v); }},
        {"estimator.cmaes.sigma", [&](const auto& v) { cfg.gp.estimator.cmaes.initial_sigma = get<double>(v); }},
        {"data.est", [&](const auto& v) { cfg.data.est = path_list(v, base_dir); }},
        {"data.test", [&](const auto& v) { cfg.data.test = path_list(v, base_dir); }},
        {"data.val", [&](const auto& v) { cfg.data.val = path_list(v, base_dir); }},
        {"output.dir",
         [&](const auto& v) {
             std::filesystem::path p = get<std::string>(v);
             cfg.output.dir = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
         }},
        {"output.series", [&](const auto& v) { cfg.output.series = get<bool>(v); }},
    };

    if (!base_dir.empty()) {
        cfg.output.dir = base_dir / cfg.output.dir;
    }
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') {
            continue;
        }
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(where + "unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + "expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) {
            key = section + "." + key;
        } else if (key == "grammar") {
            key = "grammar.name";
        }
        const auto it = handlers.find(key);
        if (it == handlers.end()) {
            throw ConfigError(where + "unknown key '" + key + "'");
        }
        try {
            it->second(parse_value(trim(line.substr(eq + 1))));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where + "bad value for '" + key + "': " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    if (grammar_complexity) {
        cfg.gp.complexity = *grammar_complexity;
    }
    cfg.gp.check();
    if (cfg.grammar.max_delay < 1) {
        throw ConfigError("grammar.max_delay must be >= 1");
    }
    if (cfg.grammar.noise_channels < 0) {
        throw ConfigError("grammar.noise_channels must be >= 0");
    }
    if (cfg.data.est.empty() || cfg.data.test.empty() || cfg.data.val.empty()) {
        throw ConfigError("data.est, data.test and data.val must each name at least one file");
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

std::string init_config_template()
{
    return R"(# tagsr run configuration. Values are JSON; bare words are read as strings.
# Relative paths are resolved against this file's directory.

[grammar]
# IP | LTI | NARX | NARMAX | extNARX | expNARX | custom
name = "NARX"
# sin, cos, abs, inv, exp; only for extNARX / expNARX / custom grammars with beta8
nonlinear_ops = []
# elementary trees of a custom grammar, e.g. ["alpha1", "beta1", "beta4"]
# trees = []
# largest delay any signal factor may reach
max_delay = 10
# noise channels r_xi; 0 means one per output
noise_channels = 0

[gp]
pop_size = 30
generations = 60
# maximum number of auxiliary trees per derivation tree
complexity = 20
# percent of the sorted population eligible as first crossover parent
mu = 50
seed = 0
# keep one individual per model structure when selecting survivors
dedup = false
# evaluation threads; 0 uses the OpenMP default, TAGSR_WORKERS overrides
workers = 0

[estimator]
# least_squares | cmaes | local_refine
method = "least_squares"
# [omega_s, omega_p]; least_squares requires [0, 1]
weights = [0, 1]
ridge = 1e-8
seed = 0
cmaes.population = 0
cmaes.max_evals = 2000
# 0 means 0.3 times the scale of the least-squares coefficients
cmaes.sigma = 0

[data]
# a file name or a list of file names (CSV with header u1..,y1..)
est = ["est.csv"]
test = ["test.csv"]
val = ["val.csv"]

[output]
dir = "tagsr_out"
# write per-model simulated and predicted series
series = true
)";
}

int resolve_workers(int configured)
{
    if (const char* env = std::getenv("TAGSR_WORKERS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 0) {
            throw ConfigError("TAGSR_WORKERS must be a non-negative integer");
        }
        return static_cast<int>(v);
    }
    return configured;
}

} // namespace tagsr

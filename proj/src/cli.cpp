#include "tagsr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "tagsr/error.hpp"

namespace tagsr {

namespace {

std::vector<DataSet> load_all(const std::vector<std::filesystem::path>& paths)
{
    std::vector<DataSet> out;
    out.reserve(paths.size());
    for (const auto& p : paths) {
        if (!std::filesystem::exists(p)) {
            throw ConfigError("data file not found: " + p.string());
        }
        out.push_back(load_csv(p));
    }
    return out;
}

ChannelCounts infer_channels(const RunConfig& cfg,
                             std::span<const DataSet> est,
                             std::span<const DataSet> test,
                             std::span<const DataSet> val)
{
    const DataSet& first = est.front();
    ChannelCounts ch{first.inputs(), first.outputs(), cfg.grammar.noise_channels};
    if (ch.noise == 0) {
        ch.noise = ch.outputs;
    }
    for (auto group : {est, test, val}) {
        for (const auto& d : group) {
            if (d.inputs() != ch.inputs || d.outputs() != ch.outputs) {
                throw DataError("data set " + d.name + " has " + std::to_string(d.inputs()) + " inputs and " +
                                std::to_string(d.outputs()) + " outputs; expected " + std::to_string(ch.inputs) +
                                " and " + std::to_string(ch.outputs));
            }
        }
    }
    return ch;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << text;
}

std::string format_series(const DataSet& data, const ResponsePair& r)
{
    std::string out;
    for (int c = 1; c <= data.outputs(); ++c) {
        const auto n = std::to_string(c);
        out += (c > 1 ? ",y" : "y") + n + ",y" + n + "_pred,y" + n + "_sim";
    }
    out += '\n';
    char buf[32];
    for (int k = 0; k < data.samples(); ++k) {
        for (int c = 0; c < data.outputs(); ++c) {
            for (double v : {data.y(k, c), r.y_pred(k, c), r.y_sim(k, c)}) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                out += buf;
                out += ',';
            }
        }
        out.back() = '\n';
    }
    return out;
}

std::string model_file_name(std::size_t i)
{
    return "models/model_" + std::to_string(i) + ".json";
}

} // namespace

nlohmann::json finite_or_null(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json metrics_json(const Metrics& m)
{
    return {{"Es", finite_or_null(m.es)},
            {"Ep", finite_or_null(m.ep)},
            {"BFR", m.bfr ? finite_or_null(*m.bfr) : nlohmann::json(nullptr)}};
}

Metrics score(const PolynomialModel& model, std::span<const DataSet> data)
{
    if (data.empty()) {
        throw DataError("no data to score on");
    }
    Metrics m;
    double bfr_sum = 0.0;
    bool bfr_defined = true;
    for (const auto& d : data) {
        const auto r = evaluate(model, d);
        m.es += r.error.es;
        m.ep += r.error.ep;
        if (r.diverged) {
            continue; // clamps at 0
        }
        try {
            bfr_sum += bfr(d.y, r.y_sim, r.skip);
        } catch (const DataError&) {
            bfr_defined = false;
        }
    }
    const auto n = static_cast<double>(data.size());
    m.es /= n;
    m.ep /= n;
    if (bfr_defined) {
        m.bfr = bfr_sum / n;
    }
    return m;
}

Metrics run_evaluate(const std::filesystem::path& model_file, const std::filesystem::path& data_file)
{
    std::ifstream in(model_file);
    if (!in) {
        throw ConfigError("cannot open model file " + model_file.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed model file " + model_file.string() + ": " + e.what());
    }
    const auto model = model_from_json(j);
    if (!std::filesystem::exists(data_file)) {
        throw ConfigError("data file not found: " + data_file.string());
    }
    const auto data = load_csv(data_file);
    return score(model, std::span(&data, 1));
}

nlohmann::json pareto_json(const RunReport& report, const RunConfig& cfg, const Grammar& g)
{
    auto front = nlohmann::json::array();
    for (std::size_t i = 0; i < report.front.size(); ++i) {
        const auto& e = report.front[i];
        const auto& fit = e.individual.fitness.value_or(sentinel_fitness()).values;
        front.push_back({
            {"index", i},
            {"headline", i == report.headline},
            {"complexity", e.individual.genotype.complexity()},
            {"terms", e.individual.phenotype.term_count()},
            {"equations", to_equation_strings(e.individual.phenotype)},
            {"fitness", {{"Es", finite_or_null(fit[0])}, {"Ep", finite_or_null(fit[1])}}},
            {"test", metrics_json(e.test)},
            {"validation", metrics_json(e.validation)},
            {"model_file", model_file_name(i)},
            {"model", model_to_json(e.individual.phenotype)},
        });
    }
    auto names = [](const std::vector<std::filesystem::path>& paths) {
        auto out = nlohmann::json::array();
        for (const auto& p : paths) {
            out.push_back(p.filename().string());
        }
        return out;
    };
    const auto& est = cfg.gp.estimator;
    return {
        {"grammar",
         {{"name", g.name},
          {"channels", {{"inputs", g.channels.inputs}, {"outputs", g.channels.outputs}, {"noise", g.channels.noise}}},
          {"max_delay", g.limits.max_delay}}},
        {"gp",
         {{"pop_size", cfg.gp.pop_size},
          {"generations", cfg.gp.generations},
          {"complexity", cfg.gp.complexity},
          {"mu", cfg.gp.mu},
          {"seed", cfg.gp.seed},
          {"dedup", cfg.gp.dedup}}},
        {"estimator",
         {{"method", method_name(est.method)},
          {"weights", {est.weight_sim, est.weight_pred}},
          {"ridge", est.ridge},
          {"seed", est.seed}}},
        {"data", {{"est", names(cfg.data.est)}, {"test", names(cfg.data.test)}, {"val", names(cfg.data.val)}}},
        {"headline", report.headline},
        {"front", front},
    };
}

RunReport run_identification(const RunConfig& cfg)
{
    cfg.gp.check();
    const auto est = load_all(cfg.data.est);
    const auto test = load_all(cfg.data.test);
    const auto val = load_all(cfg.data.val);
    if (est.empty() || test.empty() || val.empty()) {
        throw ConfigError("data.est, data.test and data.val must each name at least one file");
    }
    const auto channels = infer_channels(cfg, est, test, val);
    Grammar g;
    try {
        g = build_grammar(cfg.grammar.name,
                          channels,
                          cfg.grammar.nonlinear_ops,
                          GrammarLimits{cfg.grammar.max_delay, cfg.gp.complexity},
                          cfg.grammar.custom_trees);
    } catch (const GrammarError& e) {
        throw ConfigError(e.what());
    }

    const auto& dir = cfg.output.dir;
    std::filesystem::create_directories(dir / "models");
    if (cfg.output.series) {
        std::filesystem::create_directories(dir / "series");
    }

    RunReport report;
    std::ofstream progress(dir / "progress.ndjson", std::ios::binary);
    const auto result = evolve(g, est, test, cfg.gp, [&](const ProgressRecord& r) {
        report.progress.push_back(r);
        progress << r.to_json().dump() << '\n' << std::flush;
    });
    if (result.front.empty()) {
        throw Error("evolution produced an empty front");
    }

    for (const auto& ind : result.front) {
        FrontEntry e{ind, {}, {}};
        try {
            e.test = score(ind.phenotype, test);
            e.validation = score(ind.phenotype, val);
        } catch (const Error&) {
            constexpr double inf = std::numeric_limits<double>::infinity();
            e.test = e.validation = Metrics{inf, inf, std::nullopt};
        }
        report.front.push_back(std::move(e));
    }
    for (std::size_t i = 1; i < report.front.size(); ++i) {
        if (report.front[i].validation.es < report.front[report.headline].validation.es) {
            report.headline = i;
        }
    }

    std::string equations;
    for (std::size_t i = 0; i < report.front.size(); ++i) {
        const auto& e = report.front[i];
        write_text(dir / model_file_name(i), model_to_json(e.individual.phenotype).dump(2) + "\n");
        equations += "# model " + std::to_string(i) + (i == report.headline ? " (headline)" : "") + "\n";
        for (const auto& line : to_equation_strings(e.individual.phenotype)) {
            equations += line + "\n";
        }
        if (!cfg.output.series) {
            continue;
        }
        for (std::size_t v = 0; v < val.size(); ++v) {
            try {
                const auto r = evaluate(e.individual.phenotype, val[v]);
                write_text(dir / "series" /
                               ("model_" + std::to_string(i) + "_" + cfg.data.val[v].stem().string() + ".csv"),
                           format_series(val[v], r));
            } catch (const DataError&) {
            }
        }
    }
    write_text(dir / "equations.txt", equations);
    write_text(dir / "pareto.json", pareto_json(report, cfg, g).dump(2) + "\n");
    return report;
}

} // namespace tagsr

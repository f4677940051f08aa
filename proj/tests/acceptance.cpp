// Acceptance criteria AC1-AC8. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "tagsr/benchmarks.hpp"
#include "tagsr/cli.hpp"
#include "tagsr/error.hpp"

using namespace tagsr;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double ac1_time_limit_s = 60.0;
constexpr int ac1_samples = 10000;
constexpr double ac2_exact_tol = 1e-8;
constexpr double ac2_noise_std = 0.01;
constexpr double ac2_se_factor = 3.0;
constexpr int ac2_samples = 500;
constexpr int ac3_problems = 100;
constexpr double ac3_rel_tol = 1e-6;
constexpr int ac4_sets = 100;
constexpr int ac4_points = 200;
constexpr int ac5_seeds = 10;
constexpr int ac5_required = 8;
constexpr double ac5_es_tol = 1e-3;
constexpr double ac5_median_limit_s = 300.0;
constexpr int ac5_smoke_generations = 3;
constexpr double ac8_t2_snr = 63.68;
constexpr double ac8_c2_snr = 45.56;
constexpr double ac8_snr_rel_tol = 0.10;
constexpr double ac8_halving_tol = 1e-6;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------- AC1

// Structural conformance to the polynomial model form under grammar g.
std::string model_form_violation(const PolynomialModel& m, const Grammar& g)
{
    const auto has = [&](TreeId id) { return g.contains(id); };
    MaxDelays md;
    for (std::size_t i = 0; i < m.terms.size(); ++i) {
        const auto& t = m.terms[i];
        if (i > 0 && !(m.terms[i - 1] < t)) {
            return "terms not canonical/unique";
        }
        if (!std::is_sorted(t.factors.begin(), t.factors.end())) {
            return "factors not sorted";
        }
        for (const auto& f : t.factors) {
            if (!f.link.valid() || f.link.size() != g.channels.of(f.source)) {
                return "bad linking array";
            }
            const TreeId source_tree = f.source == Signal::U ? TreeId::Beta4
                                       : f.source == Signal::Y ? TreeId::Beta2
                                                               : TreeId::Beta3;
            if (!has(source_tree)) {
                return "signal outside the grammar";
            }
            const int base = f.source == Signal::U ? 0 : 1;
            if (f.delay < base || f.delay > g.limits.max_delay) {
                return "delay out of range";
            }
            const TreeId delay_tree = f.source == Signal::Xi ? TreeId::Beta6 : TreeId::Beta7;
            if (f.delay > base && !has(delay_tree)) {
                return "delay without a delay tree";
            }
            if (f.wrap && std::find(g.nonlinear_ops.begin(), g.nonlinear_ops.end(), *f.wrap) == g.nonlinear_ops.end()) {
                return "wrap outside the grammar";
            }
            int& slot = f.source == Signal::U ? md.u : f.source == Signal::Y ? md.y : md.xi;
            slot = std::max(slot, f.delay);
        }
    }
    if (!(md == m.max_delays)) {
        return "max delays inconsistent";
    }
    if (m.channels != g.channels) {
        return "channel counts differ";
    }
    return {};
}

Outcome ac1()
{
    const auto t0 = Clock::now();
    const ChannelCounts mimo{2, 2, 2};
    const std::vector<Grammar> grammars{
        build_grammar("IP", mimo, {}),
        build_grammar("LTI", mimo, {}),
        build_grammar("NARX", mimo, {}),
        build_grammar("NARMAX", mimo, {}),
        build_grammar("extNARX", mimo, {NonlinearOp::Sin, NonlinearOp::Cos, NonlinearOp::Abs}),
        build_grammar("expNARX", mimo, {NonlinearOp::Inv, NonlinearOp::Exp}),
    };
    constexpr int cap = 30;
    long invalid = 0;
    long checked = 0;
    std::string first_problem;
    auto check = [&](const DerivationTree& dt, const Grammar& g) {
        ++checked;
        auto problems = validate(dt, g);
        if (problems.empty() && dt.complexity() > cap) {
            problems.push_back("complexity above cap");
        }
        if (problems.empty()) {
            const auto why = model_form_violation(interpret(derive(dt), g.channels), g);
            if (!why.empty()) {
                problems.push_back(why);
            }
        }
        if (!problems.empty()) {
            ++invalid;
            if (first_problem.empty()) {
                first_problem = g.name + ": " + problems.front();
            }
        }
    };

    Rng rng = make_stream(1, {1});
    for (auto g : grammars) {
        g.limits.max_complexity = cap;
        for (int i = 0; i < ac1_samples; ++i) {
            check(random_derivation(g, cap, rng), g);
        }
    }
    for (int i = 0; i < ac1_samples; ++i) {
        auto g = grammars[static_cast<std::size_t>(i) % grammars.size()];
        g.limits.max_complexity = cap;
        const auto a = random_derivation(g, cap, rng);
        const auto b = random_derivation(g, cap, rng);
        const auto [c1, c2] = crossover(a, b, g, rng);
        check(c1, g);
        check(c2, g);
        check(mutate(a, g, rng), g);
    }
    const double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = invalid == 0 && elapsed < ac1_time_limit_s;
    o.detail = std::to_string(checked) + " trees, " + std::to_string(invalid) + " invalid, " +
               fmt("%.1f s", elapsed) + (first_problem.empty() ? "" : " (" + first_problem + ")");
    return o;
}

// ---------------------------------------------------------------- AC2

Outcome ac2()
{
    const auto truth = default_planted_system();
    PolynomialModel structure = truth.model;
    structure.theta.reset();
    const Eigen::MatrixXd& theta_true = *truth.model.theta;

    const auto clean = generate_planted(truth, ac2_samples, 2).data;
    const auto exact = estimate(structure, clean, EstimatorConfig{});
    const double exact_err = (*exact.theta - theta_true).cwiseAbs().maxCoeff();

    const auto noisy = generate_planted(default_planted_system(ac2_noise_std), ac2_samples, 2).data;
    const auto fitted = estimate(structure, noisy, EstimatorConfig{});
    // Classical LS standard errors: s^2 (Phi^T Phi)^-1.
    const auto rp = build_regression(structure, noisy);
    const Eigen::MatrixXd resid = rp.psi - rp.phi * *fitted.theta;
    const double dof = static_cast<double>(rp.phi.rows() - rp.phi.cols());
    const double s2 = resid.squaredNorm() / dof;
    const Eigen::MatrixXd cov = s2 * (rp.phi.transpose() * rp.phi).inverse();
    double worst_z = 0.0;
    for (int j = 0; j < theta_true.rows(); ++j) {
        const double se = std::sqrt(cov(j, j));
        worst_z = std::max(worst_z, std::abs((*fitted.theta)(j, 0) - theta_true(j, 0)) / se);
    }
    Outcome o;
    o.pass = exact_err <= ac2_exact_tol && worst_z <= ac2_se_factor;
    o.detail = "noise-free max error " + fmt("%.2e", exact_err) + ", noisy max |error|/SE " + fmt("%.2f", worst_z);
    return o;
}

// ---------------------------------------------------------------- AC3

Outcome ac3()
{
    Rng rng = make_stream(3, {});
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<int> dim(1, 12);
    std::uniform_int_distribution<int> outs(1, 3);
    double worst = 0.0;
    for (int rep = 0; rep < ac3_problems; ++rep) {
        const int p = dim(rng);
        const int n = p + 20 + 10 * dim(rng);
        const int r = outs(rng);
        RegressionProblem rp;
        rp.phi = Eigen::MatrixXd::NullaryExpr(n, p, [&] { return normal(rng); });
        rp.psi = Eigen::MatrixXd::NullaryExpr(n, r, [&] { return normal(rng); });
        for (int j = 0; j < p; ++j) {
            rp.column_map.push_back(j);
        }
        const auto theta = least_squares(rp, EstimatorConfig{}.ridge);
        const double lhs = (rp.phi.transpose() * (rp.psi - rp.phi * theta)).cwiseAbs().maxCoeff();
        const double rhs = (rp.phi.transpose() * rp.psi).cwiseAbs().maxCoeff();
        worst = std::max(worst, lhs / rhs);
    }
    return {worst <= ac3_rel_tol, "worst relative normal-equation residual " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- AC4

Outcome ac4()
{
    Rng rng = make_stream(4, {});
    int mismatches = 0;
    int partition_errors = 0;
    for (int rep = 0; rep < ac4_sets; ++rep) {
        // Alternate continuous and coarse-grid sets so ties occur.
        std::uniform_int_distribution<int> grid(0, 9);
        std::uniform_real_distribution<double> cont(0.0, 1.0);
        std::vector<ObjectivePoint> pts;
        for (int i = 0; i < ac4_points; ++i) {
            pts.push_back(rep % 2 ? ObjectivePoint{{static_cast<double>(grid(rng)), static_cast<double>(grid(rng))}}
                                  : ObjectivePoint{{cont(rng), cont(rng)}});
        }
        std::set<int> brute;
        for (int i = 0; i < ac4_points; ++i) {
            bool dominated = false;
            for (int j = 0; j < ac4_points && !dominated; ++j) {
                const auto& a = pts[j].values;
                const auto& b = pts[i].values;
                dominated = a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1]);
            }
            if (!dominated) {
                brute.insert(i);
            }
        }
        const auto fronts = nondominated_sort(pts);
        if (fronts.empty() || std::set<int>(fronts[0].begin(), fronts[0].end()) != brute) {
            ++mismatches;
        }
        std::vector<int> all;
        for (const auto& f : fronts) {
            all.insert(all.end(), f.begin(), f.end());
        }
        std::sort(all.begin(), all.end());
        std::vector<int> expected(ac4_points);
        std::iota(expected.begin(), expected.end(), 0);
        if (all != expected) {
            ++partition_errors;
        }
    }
    return {mismatches == 0 && partition_errors == 0,
            std::to_string(ac4_sets) + " sets: " + std::to_string(mismatches) + " front-1 mismatches, " +
                std::to_string(partition_errors) + " partition errors"};
}

// ---------------------------------------------------------------- AC5

struct Workspace {
    fs::path dir;
    explicit Workspace(const std::string& name)
        : dir(fs::temp_directory_path() / ("tagsr_acceptance_" + name))
    {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    Workspace(const Workspace&) = delete;
    Workspace& operator=(const Workspace&) = delete;
};

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

std::string planted_config(std::uint64_t seed, int generations, const std::string& out)
{
    return "grammar = NARX\n[gp]\npop_size = 30\ngenerations = " + std::to_string(generations) +
           "\ncomplexity = 20\nseed = " + std::to_string(seed) +
           "\n[estimator]\nmethod = least_squares\n[data]\nest = est.csv\ntest = test.csv\nval = val.csv\n"
           "[output]\ndir = " +
           out + "\nseries = false\n";
}

void write_planted_data(const fs::path& dir)
{
    const auto sys = default_planted_system();
    save_csv(generate_planted(sys, 500, 101).data, dir / "est.csv");
    save_csv(generate_planted(sys, 500, 102).data, dir / "test.csv");
    save_csv(generate_planted(sys, 500, 103).data, dir / "val.csv");
}

std::string smoke_large_configs()
{
    Workspace ws("smoke");
    BoucWenOptions bw;
    save_csv(generate_bouc_wen(500, bw, 1).data, ws.dir / "bw_est.csv");
    save_csv(generate_bouc_wen(500, bw, 2).data, ws.dir / "bw_test.csv");
    save_csv(generate_bouc_wen(500, bw, 3).data, ws.dir / "bw_val.csv");
    write_planted_data(ws.dir);
    save_csv(generate_cstr(1000, {}, 1).data, ws.dir / "cstr_est.csv");
    save_csv(generate_cstr(1000, {}, 2).data, ws.dir / "cstr_test.csv");
    save_csv(generate_cstr(500, {}, 3).data, ws.dir / "cstr_val.csv");

    struct Row {
        std::string grammar;
        std::string ops;
        int pop;
        int complexity;
        std::string data;
    };
    const std::vector<Row> rows{
        {"NARX", "[]", 36, 150, "bw"},
        {"extNARX", "[\"abs\"]", 50, 150, ""},
        {"expNARX", "[\"inv\", \"exp\"]", 60, 120, "cstr"},
    };
    std::string failures;
    for (const auto& r : rows) {
        const std::string prefix = r.data.empty() ? "" : r.data + "_";
        const auto cfg_text = "[grammar]\nname = " + r.grammar + "\nnonlinear_ops = " + r.ops +
                              "\n[gp]\npop_size = " + std::to_string(r.pop) +
                              "\ngenerations = " + std::to_string(ac5_smoke_generations) +
                              "\ncomplexity = " + std::to_string(r.complexity) + "\n[data]\nest = " + prefix +
                              "est.csv\ntest = " + prefix + "test.csv\nval = " + prefix + "val.csv\n[output]\ndir = out_" +
                              r.grammar + "\n";
        write_file(ws.dir / "smoke.cfg", cfg_text);
        try {
            const auto report = run_identification(load_config(ws.dir / "smoke.cfg"));
            if (report.front.empty() || report.progress.size() != ac5_smoke_generations + 1) {
                failures += " " + r.grammar;
            }
        } catch (const std::exception& e) {
            failures += " " + r.grammar + "(" + e.what() + ")";
        }
    }
    return failures;
}

Outcome ac5()
{
    Workspace ws("recovery");
    write_planted_data(ws.dir);
    int successes = 0;
    std::vector<double> times;
    std::string per_seed;
    for (int s = 1; s <= ac5_seeds; ++s) {
        const std::string out = "out" + std::to_string(s);
        write_file(ws.dir / "run.cfg", planted_config(static_cast<std::uint64_t>(s), 60, out));
        const auto t0 = Clock::now();
        double es = std::numeric_limits<double>::infinity();
        try {
            const auto report = run_identification(load_config(ws.dir / "run.cfg"));
            es = report.front.at(report.headline).validation.es;
        } catch (const std::exception&) {
        }
        times.push_back(seconds_since(t0));
        successes += es < ac5_es_tol ? 1 : 0;
        per_seed += fmt(" %.1e", es);
    }
    std::sort(times.begin(), times.end());
    const double median = 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
    const auto smoke = smoke_large_configs();
    Outcome o;
    o.pass = successes >= ac5_required && median < ac5_median_limit_s && smoke.empty();
    o.detail = std::to_string(successes) + "/" + std::to_string(ac5_seeds) + " seeds below 1e-3 (validation E_s:" +
               per_seed + "), median " + fmt("%.2f s", median) + ", large-configuration smoke " +
               (smoke.empty() ? "ok" : "failed:" + smoke);
    return o;
}

// ---------------------------------------------------------------- AC6

Outcome ac6()
{
    const Eigen::MatrixXd y{{1.0, 2.0}, {3.0, -1.0}, {0.5, 4.0}, {2.0, 0.0}};
    Eigen::MatrixXd shifted = y;
    shifted.col(0).array() += 1.0;
    shifted.col(1).array() -= 3.0;
    const auto e = rms_errors(y, shifted, shifted);
    const bool two = e.es == 2.0 && e.ep == 2.0;
    const bool perfect = bfr(y, y) == 100.0;
    const Eigen::MatrixXd mean_predictor = y.colwise().mean().replicate(y.rows(), 1);
    const bool mean_zero = bfr(y, mean_predictor) == 0.0;
    return {two && perfect && mean_zero,
            std::string("E(1,3)=") + fmt("%.17g", e.es) + ", BFR perfect=" + fmt("%.17g", bfr(y, y)) +
                ", BFR mean=" + fmt("%.17g", bfr(y, mean_predictor))};
}

// ---------------------------------------------------------------- AC7

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome ac7()
{
    Workspace ws("determinism");
    write_planted_data(ws.dir);
    std::vector<std::string> outputs;
    for (int workers : {1, 1, 4, 8}) {
        write_file(ws.dir / "run.cfg", planted_config(7, 20, "out"));
        auto cfg = load_config(ws.dir / "run.cfg");
        cfg.gp.workers = workers;
        run_identification(cfg);
        outputs.push_back(slurp(ws.dir / "out" / "pareto.json"));
    }
    const bool same = std::all_of(outputs.begin(), outputs.end(), [&](const auto& s) { return s == outputs[0]; });
    return {same && !outputs[0].empty(),
            "pareto.json " + std::string(same ? "identical" : "differs") + " across rerun and workers 1/4/8 (" +
                std::to_string(outputs[0].size()) + " bytes)"};
}

// ---------------------------------------------------------------- AC8

Outcome ac8()
{
    double t2_lo = 1e9, t2_hi = -1e9, c2_lo = 1e9, c2_hi = -1e9, worst_halving = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto gen = generate_cstr(1000, {}, seed);
        const double t2 = gen.metadata["snr_db"]["y1"];
        const double c2 = gen.metadata["snr_db"]["y2"];
        t2_lo = std::min(t2_lo, t2);
        t2_hi = std::max(t2_hi, t2);
        c2_lo = std::min(c2_lo, c2);
        c2_hi = std::max(c2_hi, c2);
        const auto coarse = simulate_cstr(gen.data.u, 10);
        const auto fine = simulate_cstr(gen.data.u, 20);
        for (int c = 0; c < 2; ++c) {
            worst_halving = std::max(worst_halving, rms_error(fine.col(c), coarse.col(c)));
        }
    }
    const auto within = [](double v, double target) { return std::abs(v - target) <= ac8_snr_rel_tol * target; };
    const bool ok = within(t2_lo, ac8_t2_snr) && within(t2_hi, ac8_t2_snr) && within(c2_lo, ac8_c2_snr) &&
                    within(c2_hi, ac8_c2_snr) && worst_halving < ac8_halving_tol;
    return {ok,
            "SNR T2 " + fmt("%.2f", t2_lo) + ".." + fmt("%.2f", t2_hi) + " dB, C2 " + fmt("%.2f", c2_lo) + ".." +
                fmt("%.2f", c2_hi) + " dB, step-halving RMS " + fmt("%.2e", worst_halving)};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"AC1 grammar closure", ac1},
        {"AC2 least-squares oracle", ac2},
        {"AC3 normal-equation residual", ac3},
        {"AC4 NSGA-II front equivalence", ac4},
        {"AC5 end-to-end recovery", ac5},
        {"AC6 metric correctness", ac6},
        {"AC7 determinism", ac7},
        {"AC8 CSTR generator", ac8},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}

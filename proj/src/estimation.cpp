#include "tagsr/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tagsr/error.hpp"
#include "tagsr/rng.hpp"

namespace tagsr {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double finite_or_inf(double v)
{
    return std::isfinite(v) ? v : inf;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& theta)
{
    return Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size());
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& x, Eigen::Index rows, Eigen::Index cols)
{
    return Eigen::Map<const Eigen::MatrixXd>(x.data(), rows, cols);
}

// Extended least squares: fit the deterministic terms, then refit everything
// with noise regressors filled by the first-pass residuals.
Eigen::MatrixXd fit_least_squares(const PolynomialModel& model, std::span<const DataSet> data, double ridge)
{
    auto rp = build_regression(model, data);
    if (!model.has_noise_terms()) {
        return least_squares(rp, ridge);
    }

    std::vector<int> plain;
    for (int i = 0; i < model.term_count(); ++i) {
        if (!model.terms[static_cast<std::size_t>(i)].has_noise()) {
            plain.push_back(i);
        }
    }
    const Eigen::Index outputs = rp.psi.cols();
    Eigen::MatrixXd fitted = Eigen::MatrixXd::Zero(rp.psi.rows(), outputs);
    if (!plain.empty()) {
        RegressionProblem sub{Eigen::MatrixXd(rp.phi.rows(), static_cast<Eigen::Index>(plain.size())), rp.psi, plain};
        for (std::size_t j = 0; j < plain.size(); ++j) {
            sub.phi.col(static_cast<Eigen::Index>(j)) = rp.phi.col(plain[j]);
        }
        fitted = sub.phi * least_squares(sub, ridge);
    }

    const int t0 = model.transient();
    std::vector<Eigen::MatrixXd> residuals;
    Eigen::Index row = 0;
    for (const auto& d : data) {
        Eigen::MatrixXd e = Eigen::MatrixXd::Zero(d.samples(), outputs);
        const Eigen::Index rows = d.samples() - t0;
        e.bottomRows(rows) = rp.psi.middleRows(row, rows) - fitted.middleRows(row, rows);
        row += rows;
        residuals.push_back(std::move(e));
    }
    return least_squares(build_regression(model, data, residuals), ridge);
}

double coefficient_scale(const Eigen::MatrixXd& theta)
{
    if (theta.size() == 0) {
        return 1.0;
    }
    const double rms = std::sqrt(theta.squaredNorm() / static_cast<double>(theta.size()));
    return std::isfinite(rms) && rms > 1e-3 ? rms : 1e-3;
}

} // namespace

std::string_view method_name(EstimatorMethod m)
{
    switch (m) {
    case EstimatorMethod::LeastSquares:
        return "least_squares";
    case EstimatorMethod::Cmaes:
        return "cmaes";
    case EstimatorMethod::LocalRefine:
        return "local_refine";
    }
    return "?";
}

EstimatorMethod parse_method(std::string_view name)
{
    for (auto m : {EstimatorMethod::LeastSquares, EstimatorMethod::Cmaes, EstimatorMethod::LocalRefine}) {
        if (method_name(m) == name) {
            return m;
        }
    }
    throw ConfigError("unknown estimator method '" + std::string(name) + "'");
}

void EstimatorConfig::check() const
{
    if (weight_sim < 0.0 || weight_pred < 0.0 || weight_sim + weight_pred <= 0.0) {
        throw ConfigError("estimator weights must be non-negative and not both zero");
    }
    if (method == EstimatorMethod::LeastSquares && (weight_sim != 0.0 || weight_pred != 1.0)) {
        throw ConfigError("least_squares minimizes prediction error only; weights must be [0, 1]");
    }
    if (ridge < 0.0) {
        throw ConfigError("ridge must be >= 0");
    }
    if (cmaes.max_evals < 1 || cmaes.population < 0 || cmaes.initial_sigma < 0.0) {
        throw ConfigError("invalid cmaes settings");
    }
}

RegressionProblem build_regression(const PolynomialModel& model,
                                   std::span<const DataSet> data,
                                   std::span<const Eigen::MatrixXd> residuals)
{
    const int p = model.term_count();
    if (p == 0) {
        throw EstimationError("model has no terms to estimate");
    }
    if (!residuals.empty() && residuals.size() != data.size()) {
        throw EstimationError("need one residual record per data set");
    }
    const int t0 = model.transient();
    Eigen::Index rows = 0;
    for (const auto& d : data) {
        check_compatible(model, d);
        rows += d.samples() - t0;
    }
    RegressionProblem rp;
    rp.phi.resize(rows, p);
    rp.psi.resize(rows, model.channels.outputs);
    rp.column_map.resize(static_cast<std::size_t>(p));
    std::iota(rp.column_map.begin(), rp.column_map.end(), 0);

    Eigen::Index row = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const auto& d = data[s];
        const Eigen::MatrixXd* xi = residuals.empty() ? nullptr : &residuals[s];
        for (int k = t0; k < d.samples(); ++k, ++row) {
            for (int i = 0; i < p; ++i) {
                const double v = term_value(model.terms[static_cast<std::size_t>(i)], d.u, d.y, xi, k);
                if (!std::isfinite(v)) {
                    throw EstimationError("non-finite regressor for term " +
                                          term_string(model.terms[static_cast<std::size_t>(i)]) + " at sample " +
                                          std::to_string(k) + " of '" + d.name + "'");
                }
                rp.phi(row, i) = v;
            }
            rp.psi.row(row) = d.y.row(k);
        }
    }
    return rp;
}

RegressionProblem build_regression(const PolynomialModel& model, const DataSet& data)
{
    return build_regression(model, std::span<const DataSet>(&data, 1));
}

Eigen::MatrixXd least_squares(const RegressionProblem& rp, double ridge)
{
    const Eigen::Index p = rp.phi.cols();
    if (p == 0) {
        throw EstimationError("empty regression problem");
    }
    if (ridge < 0.0) {
        throw EstimationError("ridge must be >= 0");
    }
    if (ridge == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(rp.phi);
        if (qr.rank() < p) {
            throw EstimationError("regressor matrix is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                                  std::to_string(p) + "); use ridge > 0");
        }
        return qr.solve(rp.psi);
    }
    const Eigen::Index n = rp.phi.rows();
    Eigen::MatrixXd a(n + p, p);
    a.topRows(n) = rp.phi;
    a.bottomRows(p) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(p, p);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n + p, rp.psi.cols());
    b.topRows(n) = rp.psi;
    return Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(a).solve(b);
}

double sub_objective(const PolynomialModel& model, std::span<const DataSet> data, double weight_sim, double weight_pred)
{
    double es = 0.0;
    double ep = 0.0;
    for (const auto& d : data) {
        const auto r = evaluate(model, d);
        es += r.error.es;
        ep += r.error.ep;
    }
    const double n = static_cast<double>(data.size());
    // 0 * inf would be NaN; an unused objective contributes nothing.
    double j = 0.0;
    if (weight_sim != 0.0) {
        j += weight_sim * es / n;
    }
    if (weight_pred != 0.0) {
        j += weight_pred * ep / n;
    }
    return finite_or_inf(j);
}

PolynomialModel estimate(const PolynomialModel& model, std::span<const DataSet> data, const EstimatorConfig& cfg)
{
    cfg.check();
    if (data.empty()) {
        throw EstimationError("no estimation data");
    }
    PolynomialModel out = model;
    out.theta.reset();
    const Eigen::Index p = model.term_count();
    const Eigen::Index outputs = model.channels.outputs;
    if (p == 0) {
        for (const auto& d : data) {
            check_compatible(model, d);
        }
        out.theta = Eigen::MatrixXd::Zero(0, outputs);
        return out;
    }

    if (cfg.method == EstimatorMethod::LeastSquares) {
        out.theta = fit_least_squares(model, data, cfg.ridge);
        return out;
    }

    Eigen::MatrixXd start;
    try {
        start = fit_least_squares(model, data, std::max(cfg.ridge, 1e-12));
    } catch (const EstimationError&) {
        start = Eigen::MatrixXd::Zero(p, outputs);
    }
    if (!start.allFinite()) {
        start.setZero();
    }
    PolynomialModel trial = out;
    const Objective f = [&](const Eigen::VectorXd& x) {
        trial.theta = unflatten(x, p, outputs);
        return sub_objective(trial, data, cfg.weight_sim, cfg.weight_pred);
    };
    const double scale = coefficient_scale(start);
    MinimizeResult best;
    if (cfg.method == EstimatorMethod::Cmaes) {
        CmaesOptions opts;
        opts.population = cfg.cmaes.population;
        opts.max_evals = cfg.cmaes.max_evals;
        opts.sigma0 = cfg.cmaes.initial_sigma > 0.0 ? cfg.cmaes.initial_sigma : 0.3 * scale;
        opts.seed = cfg.seed;
        best = cmaes_minimize(f, flatten(start), opts);
    } else {
        best = nelder_mead(f, flatten(start), 0.1 * scale, cfg.cmaes.max_evals);
    }
    out.theta = unflatten(best.x, p, outputs);
    return out;
}

PolynomialModel estimate(const PolynomialModel& model, const DataSet& data, const EstimatorConfig& cfg)
{
    return estimate(model, std::span<const DataSet>(&data, 1), cfg);
}

MinimizeResult cmaes_minimize(const Objective& f, const Eigen::VectorXd& x0, const CmaesOptions& opts)
{
    const Eigen::Index n = x0.size();
    MinimizeResult res;
    res.x = x0;
    res.value = finite_or_inf(f(x0));
    res.evaluations = 1;
    res.best_history.push_back(res.value);
    if (n == 0) {
        return res;
    }

    const double dn = static_cast<double>(n);
    const int lambda = opts.population > 0 ? opts.population : 4 + static_cast<int>(std::floor(3.0 * std::log(dn)));
    const int mu = std::max(1, lambda / 2);
    Eigen::VectorXd w(mu);
    for (int i = 0; i < mu; ++i) {
        w(i) = std::log(mu + 0.5) - std::log(i + 1.0);
    }
    w /= w.sum();
    const double mueff = 1.0 / w.squaredNorm();
    const double cc = (4.0 + mueff / dn) / (dn + 4.0 + 2.0 * mueff / dn);
    const double cs = (mueff + 2.0) / (dn + mueff + 5.0);
    const double c1 = 2.0 / ((dn + 1.3) * (dn + 1.3) + mueff);
    const double cmu = std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((dn + 2.0) * (dn + 2.0) + mueff));
    const double damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (dn + 1.0)) - 1.0) + cs;
    const double chin = std::sqrt(dn) * (1.0 - 1.0 / (4.0 * dn) + 1.0 / (21.0 * dn * dn));

    Rng rng = make_stream(opts.seed, {0xC3A5ULL});
    std::normal_distribution<double> normal(0.0, 1.0);

    Eigen::VectorXd mean = x0;
    double sigma = opts.sigma0;
    Eigen::VectorXd pc = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd ps = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd C = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd D = Eigen::VectorXd::Ones(n);

    Eigen::MatrixXd ys(n, lambda);
    std::vector<double> values(static_cast<std::size_t>(lambda));
    std::vector<int> order(static_cast<std::size_t>(lambda));
    for (int gen = 0; res.evaluations < opts.max_evals; ++gen) {
        for (int k = 0; k < lambda; ++k) {
            Eigen::VectorXd z(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                z(i) = normal(rng);
            }
            ys.col(k) = B * D.asDiagonal() * z;
        }
        // Candidates are drawn before any evaluation, so evaluation order cannot matter.
        for (int k = 0; k < lambda && res.evaluations < opts.max_evals; ++k) {
            const Eigen::VectorXd x = mean + sigma * ys.col(k);
            values[static_cast<std::size_t>(k)] = finite_or_inf(f(x));
            ++res.evaluations;
            if (values[static_cast<std::size_t>(k)] < res.value) {
                res.value = values[static_cast<std::size_t>(k)];
                res.x = x;
            }
        }
        res.best_history.push_back(res.value);
        if (res.evaluations >= opts.max_evals) {
            break;
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)]; });

        Eigen::VectorXd yw = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < mu; ++i) {
            yw += w(i) * ys.col(order[static_cast<std::size_t>(i)]);
        }
        mean += sigma * yw;

        const Eigen::VectorXd cinv_yw = B * D.cwiseInverse().asDiagonal() * B.transpose() * yw;
        ps = (1.0 - cs) * ps + std::sqrt(cs * (2.0 - cs) * mueff) * cinv_yw;
        const double ps_norm = ps.norm();
        const bool hsig =
            ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * (gen + 1))) < (1.4 + 2.0 / (dn + 1.0)) * chin;
        pc = (1.0 - cc) * pc + (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) : 0.0) * yw;

        Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < mu; ++i) {
            const auto& yi = ys.col(order[static_cast<std::size_t>(i)]);
            rank_mu += w(i) * yi * yi.transpose();
        }
        C = (1.0 - c1 - cmu) * C + c1 * (pc * pc.transpose() + (hsig ? 0.0 : cc * (2.0 - cc)) * C) + cmu * rank_mu;
        sigma *= std::exp((cs / damps) * (ps_norm / chin - 1.0));

        C = 0.5 * (C + C.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
        B = eig.eigenvectors();
        D = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt();
        if (!std::isfinite(sigma) || sigma * D.maxCoeff() < 1e-14 * (1.0 + mean.cwiseAbs().maxCoeff())) {
            break;
        }
    }
    return res;
}

MinimizeResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, double step, int max_evals)
{
    const Eigen::Index n = x0.size();
    MinimizeResult res;
    std::vector<Eigen::VectorXd> pts{x0};
    std::vector<double> vals{finite_or_inf(f(x0))};
    res.evaluations = 1;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd x = x0;
        x(i) += x0(i) != 0.0 ? step * std::max(1.0, std::fabs(x0(i))) : step;
        pts.push_back(x);
        vals.push_back(finite_or_inf(f(x)));
        ++res.evaluations;
    }
    auto record = [&] {
        const auto it = std::min_element(vals.begin(), vals.end());
        res.value = *it;
        res.x = pts[static_cast<std::size_t>(it - vals.begin())];
        res.best_history.push_back(res.value);
    };
    record();
    if (n == 0) {
        return res;
    }

    std::vector<std::size_t> idx(pts.size());
    while (res.evaluations < max_evals) {
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
        const auto best = idx.front();
        const auto worst = idx.back();
        const auto second = idx[idx.size() - 2];
        if (std::isfinite(vals[worst]) && vals[worst] - vals[best] <= 1e-15 * (1.0 + std::fabs(vals[best]))) {
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (auto i : idx) {
            if (i != worst) {
                centroid += pts[i];
            }
        }
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
        const double fr = finite_or_inf(f(xr));
        ++res.evaluations;
        if (fr < vals[best]) {
            const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
            const double fe = finite_or_inf(f(xe));
            ++res.evaluations;
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
        } else if (fr < vals[second]) {
            pts[worst] = xr;
            vals[worst] = fr;
        } else {
            const bool outside = fr < vals[worst];
            const Eigen::VectorXd xc =
                outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid)) : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
            const double fc = finite_or_inf(f(xc));
            ++res.evaluations;
            if (fc < (outside ? fr : vals[worst])) {
                pts[worst] = xc;
                vals[worst] = fc;
            } else {
                for (auto i : idx) {
                    if (i == best) {
                        continue;
                    }
                    pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
                    vals[i] = finite_or_inf(f(pts[i]));
                    ++res.evaluations;
                }
            }
        }
        record();
    }
    return res;
}

} // namespace tagsr

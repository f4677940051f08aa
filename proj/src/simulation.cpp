#include "tagsr/simulation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "tagsr/error.hpp"

namespace tagsr {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr double nan = std::numeric_limits<double>::quiet_NaN();

double apply_wrap(NonlinearOp op, double x)
{
    switch (op) {
    case NonlinearOp::Sin:
        return std::sin(x);
    case NonlinearOp::Cos:
        return std::cos(x);
    case NonlinearOp::Abs:
        return std::fabs(x);
    case NonlinearOp::Inv:
        return 1.0 / x;
    case NonlinearOp::Exp:
        return std::exp(x);
    }
    return nan;
}

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) {
        while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) {
            cur.pop_back();
        }
        std::size_t b = cur.find_first_not_of(' ');
        out.push_back(b == std::string::npos ? std::string{} : cur.substr(b));
    }
    return out;
}

const Eigen::MatrixXd& coefficients(const PolynomialModel& model)
{
    if (!model.theta) {
        throw EstimationError("model has no estimated coefficients");
    }
    return *model.theta;
}

double divergence_bound(const DataSet& data)
{
    return 1e6 * (1.0 + data.y.cwiseAbs().maxCoeff());
}

} // namespace

void DataSet::check() const
{
    if (y.rows() < 1) {
        throw DataError("data set '" + name + "' has no samples");
    }
    if (u.rows() != y.rows()) {
        throw DataError("data set '" + name + "': input and output lengths differ");
    }
    if (!u.allFinite() || !y.allFinite()) {
        throw DataError("data set '" + name + "' contains non-finite values");
    }
}

DataSet parse_csv(const std::string& text, const std::string& name)
{
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) {
        throw DataError("'" + name + "': empty CSV");
    }
    const auto header = split(line, ',');
    int ru = 0;
    int ry = 0;
    for (const auto& h : header) {
        const bool is_u = h.size() > 1 && h[0] == 'u';
        const bool is_y = h.size() > 1 && h[0] == 'y';
        if (is_u && ry == 0 && h == "u" + std::to_string(ru + 1)) {
            ++ru;
        } else if (is_y && h == "y" + std::to_string(ry + 1)) {
            ++ry;
        } else {
            throw DataError("'" + name + "': header must be u1..u{r_u},y1..y{r_y}, got column '" + h + "'");
        }
    }
    if (ru < 1 || ry < 1) {
        throw DataError("'" + name + "': need at least one input and one output column");
    }

    std::vector<double> values;
    int rows = 0;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \r\t") == std::string::npos) {
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) {
            throw DataError("'" + name + "': row " + std::to_string(rows + 2) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        }
        for (const auto& c : cells) {
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            if (c.empty() || end != c.c_str() + c.size()) {
                throw DataError("'" + name + "': cannot parse '" + c + "' on row " + std::to_string(rows + 2));
            }
            values.push_back(v);
        }
        ++rows;
    }

    DataSet d;
    d.name = name;
    d.u.resize(rows, ru);
    d.y.resize(rows, ry);
    const int cols = ru + ry;
    for (int k = 0; k < rows; ++k) {
        for (int c = 0; c < ru; ++c) {
            d.u(k, c) = values[static_cast<std::size_t>(k * cols + c)];
        }
        for (int c = 0; c < ry; ++c) {
            d.y(k, c) = values[static_cast<std::size_t>(k * cols + ru + c)];
        }
    }
    d.check();
    return d;
}

DataSet load_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open data file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), path.filename().string());
}

std::string format_csv(const DataSet& data, int precision)
{
    std::string out;
    for (int c = 0; c < data.inputs(); ++c) {
        out += (c ? ",u" : "u") + std::to_string(c + 1);
    }
    for (int c = 0; c < data.outputs(); ++c) {
        out += ",y" + std::to_string(c + 1);
    }
    out += '\n';
    char buf[64];
    for (int k = 0; k < data.samples(); ++k) {
        for (int c = 0; c < data.inputs(); ++c) {
            std::snprintf(buf, sizeof buf, "%s%.*g", c ? "," : "", precision, data.u(k, c));
            out += buf;
        }
        for (int c = 0; c < data.outputs(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.*g", precision, data.y(k, c));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void save_csv(const DataSet& data, const std::filesystem::path& path, int precision)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << format_csv(data, precision);
}

void check_compatible(const PolynomialModel& model, const DataSet& data)
{
    data.check();
    if (model.channels.inputs != data.inputs() || model.channels.outputs != data.outputs()) {
        throw DataError("model channels (" + std::to_string(model.channels.inputs) + " in, " +
                        std::to_string(model.channels.outputs) + " out) do not match data '" + data.name + "' (" +
                        std::to_string(data.inputs()) + " in, " + std::to_string(data.outputs()) + " out)");
    }
    if (model.has_noise_terms() && model.channels.noise != model.channels.outputs) {
        throw DataError("noise regressors need as many noise channels as outputs");
    }
    if (model.transient() >= data.samples()) {
        throw DataError("model delay " + std::to_string(model.transient()) + " exceeds length of data '" + data.name +
                        "' (" + std::to_string(data.samples()) + " samples)");
    }
}

double term_value(const MonomialTerm& term,
                  const Eigen::MatrixXd& u,
                  const Eigen::MatrixXd& y,
                  const Eigen::MatrixXd* xi,
                  int k)
{
    double value = 1.0;
    for (const auto& f : term.factors) {
        if (f.source == Signal::Xi && xi == nullptr) {
            return 0.0;
        }
        const Eigen::MatrixXd& src = f.source == Signal::U ? u : f.source == Signal::Y ? y : *xi;
        const int row = k - f.delay;
        double s = 0.0;
        for (int c = 0; c < f.link.size(); ++c) {
            if (f.link.bits[static_cast<std::size_t>(c)]) {
                s += src(row, c);
            }
        }
        value *= f.wrap ? apply_wrap(*f.wrap, s) : s;
    }
    return value;
}

Response predict(const PolynomialModel& model, const DataSet& data)
{
    const auto& theta = coefficients(model);
    check_compatible(model, data);
    const int n = data.samples();
    const int t0 = model.transient();
    const int p = model.term_count();
    Response r;
    r.y = Eigen::MatrixXd::Zero(n, data.outputs());
    r.y.topRows(t0) = data.y.topRows(t0);
    Eigen::MatrixXd residual = Eigen::MatrixXd::Zero(n, data.outputs());
    const Eigen::MatrixXd* xi = model.has_noise_terms() ? &residual : nullptr;
    Eigen::RowVectorXd phi(p);
    for (int k = t0; k < n; ++k) {
        for (int i = 0; i < p; ++i) {
            phi(i) = term_value(model.terms[static_cast<std::size_t>(i)], data.u, data.y, xi, k);
        }
        r.y.row(k) = p > 0 ? Eigen::RowVectorXd(phi * theta) : Eigen::RowVectorXd::Zero(data.outputs());
        if (!r.y.row(k).allFinite()) {
            r.diverged = true;
            r.y.bottomRows(n - k).setConstant(nan);
            break;
        }
        residual.row(k) = data.y.row(k) - r.y.row(k);
    }
    return r;
}

Response simulate(const PolynomialModel& model, const DataSet& data)
{
    const auto& theta = coefficients(model);
    check_compatible(model, data);
    const int n = data.samples();
    const int t0 = model.transient();
    const int p = model.term_count();
    const double bound = divergence_bound(data);
    Response r;
    r.y = Eigen::MatrixXd::Zero(n, data.outputs());
    r.y.topRows(t0) = data.y.topRows(t0);
    Eigen::RowVectorXd phi(p);
    for (int k = t0; k < n; ++k) {
        for (int i = 0; i < p; ++i) {
            phi(i) = term_value(model.terms[static_cast<std::size_t>(i)], data.u, r.y, nullptr, k);
        }
        r.y.row(k) = p > 0 ? Eigen::RowVectorXd(phi * theta) : Eigen::RowVectorXd::Zero(data.outputs());
        if (!r.y.row(k).allFinite() || r.y.row(k).cwiseAbs().maxCoeff() > bound) {
            r.diverged = true;
            r.y.bottomRows(n - k).setConstant(nan);
            break;
        }
    }
    return r;
}

double rms_error(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_hat, int skip)
{
    if (y_true.rows() != y_hat.rows() || y_true.cols() != y_hat.cols()) {
        throw DataError("shape mismatch in error computation");
    }
    const Eigen::Index rows = y_true.rows() - skip;
    if (rows <= 0 || y_true.cols() == 0) {
        throw DataError("no samples to score");
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < y_true.cols(); ++c) {
        const auto e = y_true.col(c).tail(rows) - y_hat.col(c).tail(rows);
        const double ms = e.squaredNorm() / static_cast<double>(rows);
        if (!std::isfinite(ms)) {
            return inf;
        }
        total += std::sqrt(ms);
    }
    return total / static_cast<double>(y_true.cols());
}

ErrorPair rms_errors(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_pred, const Eigen::MatrixXd& y_sim, int skip)
{
    return {rms_error(y_true, y_sim, skip), rms_error(y_true, y_pred, skip)};
}

double bfr(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_hat, int skip)
{
    if (y_true.rows() != y_hat.rows() || y_true.cols() != y_hat.cols()) {
        throw DataError("shape mismatch in BFR");
    }
    const Eigen::Index rows = y_true.rows() - skip;
    if (rows <= 0) {
        throw DataError("no samples to score");
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < y_true.cols(); ++c) {
        const Eigen::VectorXd y = y_true.col(c).tail(rows);
        const double spread = (y.array() - y.mean()).matrix().norm();
        if (spread == 0.0) {
            throw DataError("BFR undefined for constant output channel " + std::to_string(c + 1));
        }
        const double miss = (y - y_hat.col(c).tail(rows)).norm();
        const double fit = std::isfinite(miss) ? std::max(0.0, 1.0 - miss / spread) : 0.0;
        total += 100.0 * fit;
    }
    return total / static_cast<double>(y_true.cols());
}

ResponsePair evaluate(const PolynomialModel& model, const DataSet& data)
{
    check_compatible(model, data);
    ResponsePair out;
    out.skip = model.transient();
    auto pred = predict(model, data);
    auto sim = simulate(model, data);
    out.diverged = sim.diverged;
    out.error.es = sim.diverged ? inf : rms_error(data.y, sim.y, out.skip);
    out.error.ep = pred.diverged ? inf : rms_error(data.y, pred.y, out.skip);
    out.y_pred = std::move(pred.y);
    out.y_sim = std::move(sim.y);
    return out;
}

} // namespace tagsr

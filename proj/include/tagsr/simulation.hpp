#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "tagsr/interpreter.hpp"

namespace tagsr {

/// Multichannel input/output record: one row per sample k.
struct DataSet {
    std::string name;
    Eigen::MatrixXd u; // N x r_u
    Eigen::MatrixXd y; // N x r_y

    int samples() const { return static_cast<int>(y.rows()); }
    int inputs() const { return static_cast<int>(u.cols()); }
    int outputs() const { return static_cast<int>(y.cols()); }
    /// Throws DataError unless N >= 1, shapes agree and all values are finite.
    void check() const;
};

/// CSV with header `u1,...,u{r_u},y1,...,y{r_y}`.
DataSet load_csv(const std::filesystem::path& path);
DataSet parse_csv(const std::string& text, const std::string& name = {});
void save_csv(const DataSet& data, const std::filesystem::path& path, int precision = 17);
std::string format_csv(const DataSet& data, int precision = 17);

struct Response {
    Eigen::MatrixXd y;
    bool diverged = false;
};

/// One-step-ahead prediction from measured past outputs and inputs; noise
/// regressors use lagged prediction residuals. The first transient() samples
/// are copied from the data (residual 0).
Response predict(const PolynomialModel& model, const DataSet& data);

/// Free-run simulation: own past outputs fed back, noise regressors zero.
/// Stops and flags divergence when |y_s| > 1e6 * (1 + max|y|) or non-finite.
Response simulate(const PolynomialModel& model, const DataSet& data);

/// Value of `term` at sample k from full signal histories. A null `xi`
/// makes every noise-bearing term zero. Shared by the regression builder.
double term_value(const MonomialTerm& term,
                  const Eigen::MatrixXd& u,
                  const Eigen::MatrixXd& y,
                  const Eigen::MatrixXd* xi,
                  int k);

struct ErrorPair {
    double es = 0.0;
    double ep = 0.0;
};

/// Channel-averaged RMS of y_true - y_hat over rows [skip, N). Non-finite
/// residuals give +inf.
double rms_error(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_hat, int skip = 0);

/// (E_s, E_p): channel-wise RMS averaged over channels.
ErrorPair rms_errors(const Eigen::MatrixXd& y_true,
                     const Eigen::MatrixXd& y_pred,
                     const Eigen::MatrixXd& y_sim,
                     int skip = 0);

/// Best fit rate in percent, averaged over channels:
/// 100 * max(0, 1 - |y - y_hat| / |y - mean(y)|). Throws on a constant channel.
double bfr(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_hat, int skip = 0);

struct ResponsePair {
    Eigen::MatrixXd y_pred;
    Eigen::MatrixXd y_sim;
    bool diverged = false;
    ErrorPair error;
    int skip = 0;
};

/// Prediction, simulation and their RMS errors over the post-transient samples.
/// Diverged responses score +inf. Throws DataError when the model's delays
/// leave no samples to score or channels do not match.
ResponsePair evaluate(const PolynomialModel& model, const DataSet& data);

void check_compatible(const PolynomialModel& model, const DataSet& data);

} // namespace tagsr

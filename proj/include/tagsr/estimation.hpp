#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tagsr/interpreter.hpp"
#include "tagsr/simulation.hpp"

namespace tagsr {

/// Psi = Phi * Theta + E over the post-transient samples of one or more records.
struct RegressionProblem {
    Eigen::MatrixXd phi;         // N_eff x p
    Eigen::MatrixXd psi;         // N_eff x r_y
    std::vector<int> column_map; // term index of each column
};

enum class EstimatorMethod { LeastSquares, Cmaes, LocalRefine };

std::string_view method_name(EstimatorMethod m);
EstimatorMethod parse_method(std::string_view name);

struct CmaesSettings {
    int population = 0;          // 0: 4 + floor(3 ln n)
    int max_evals = 2000;
    double initial_sigma = 0.0;  // 0: 0.3 * coefficient scale
};

struct EstimatorConfig {
    EstimatorMethod method = EstimatorMethod::LeastSquares;
    double weight_sim = 0.0;  // omega_s
    double weight_pred = 1.0; // omega_p
    double ridge = 1e-8;
    CmaesSettings cmaes;
    std::uint64_t seed = 0;

    /// Throws ConfigError; least squares only minimizes prediction error,
    /// so it requires (omega_s, omega_p) = (0, 1).
    void check() const;
};

/// Regressor matrix from measured signals. `residuals` (one matrix per data
/// set, N x r_y) fill noise regressors; without them noise columns are zero.
RegressionProblem build_regression(const PolynomialModel& model,
                                   std::span<const DataSet> data,
                                   std::span<const Eigen::MatrixXd> residuals = {});
RegressionProblem build_regression(const PolynomialModel& model, const DataSet& data);

/// argmin |Psi - Phi Theta|^2 + ridge |Theta|^2 via column-pivoted QR of the
/// ridge-augmented system. Rank-deficient Phi with ridge == 0 throws.
Eigen::MatrixXd least_squares(const RegressionProblem& rp, double ridge);

/// J_sub = omega_s * mean E_s + omega_p * mean E_p over the records.
double sub_objective(const PolynomialModel& model, std::span<const DataSet> data, double weight_sim, double weight_pred);

/// Returns a copy of `model` with estimated theta.
PolynomialModel estimate(const PolynomialModel& model, std::span<const DataSet> data, const EstimatorConfig& cfg);
PolynomialModel estimate(const PolynomialModel& model, const DataSet& data, const EstimatorConfig& cfg);

struct MinimizeResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int evaluations = 0;
    std::vector<double> best_history; // best-so-far after each generation / iteration
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct CmaesOptions {
    int population = 0;
    int max_evals = 2000;
    double sigma0 = 0.3;
    std::uint64_t seed = 0;
};

/// (mu/mu_w, lambda)-CMA-ES with rank-one and rank-mu covariance updates.
/// Non-finite objective values rank last. The initial point is evaluated
/// first so the result is never worse than x0.
MinimizeResult cmaes_minimize(const Objective& f, const Eigen::VectorXd& x0, const CmaesOptions& opts);

/// Nelder-Mead simplex descent.
MinimizeResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, double step, int max_evals);

} // namespace tagsr

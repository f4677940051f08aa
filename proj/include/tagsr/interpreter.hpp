#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tagsr/grammar.hpp"

namespace tagsr {

/// wrap(L . X(k - delay)): channel-selected, delayed and optionally wrapped signal.
struct SignalFactor {
    Signal source = Signal::U;
    int delay = 0;
    LinkingArray link;
    std::optional<NonlinearOp> wrap;

    bool operator==(const SignalFactor&) const = default;
    bool operator<(const SignalFactor& other) const;
};

/// Product of factors; repeated factors encode exponents. Empty product is the constant 1.
struct MonomialTerm {
    std::vector<SignalFactor> factors; // canonical (sorted) order

    bool operator==(const MonomialTerm&) const = default;
    bool operator<(const MonomialTerm& other) const { return factors < other.factors; }
    bool has_noise() const;
};

struct MaxDelays {
    int u = 0;
    int y = 0;
    int xi = 0;
    bool operator==(const MaxDelays&) const = default;
};

/// Y(k) = sum_i theta_i^T * term_i(k) + Xi(k), theta stacked as a p x r_y matrix.
struct PolynomialModel {
    std::vector<MonomialTerm> terms;
    std::optional<Eigen::MatrixXd> theta;
    ChannelCounts channels;
    MaxDelays max_delays;

    int term_count() const { return static_cast<int>(terms.size()); }
    /// Samples at the start of a record whose regressors reach before k = 0.
    int transient() const { return std::max({max_delays.u, max_delays.y, max_delays.xi}); }
    bool has_noise_terms() const;
    bool has_output_feedback() const;
    /// Structural equality; coefficients are ignored.
    bool same_structure(const PolynomialModel& other) const;
};

/// Interprets a derived tree. Terms are canonicalized and duplicates merged.
PolynomialModel interpret(const DerivedTree& tree, ChannelCounts channels);

/// Sorts factors and terms, merges duplicate terms and recomputes max delays.
/// Fails if theta is present (merging would change the meaning of its rows).
void canonicalize(PolynomialModel& model);

/// One line per output channel, e.g. `y1(k) = 0.5*y1(k-1) + 0.3*u1(k-1) + xi1(k)`.
std::vector<std::string> to_equation_strings(const PolynomialModel& model);
std::string to_equation_string(const PolynomialModel& model);
std::string term_string(const MonomialTerm& term);

/// Structure-only hash (FNV-1a over the canonical form).
std::uint64_t model_signature(const PolynomialModel& model);

nlohmann::json model_to_json(const PolynomialModel& model);
PolynomialModel model_from_json(const nlohmann::json& j);

} // namespace tagsr

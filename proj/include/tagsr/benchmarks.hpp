#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tagsr/interpreter.hpp"
#include "tagsr/rng.hpp"
#include "tagsr/simulation.hpp"

namespace tagsr {

/// Random multilevel sequence: each block of `hold` samples takes one of
/// `levels` equally spaced values on [low, high].
struct PrbsInput {
    int levels = 2;
    int hold = 1;
    double low = -1.0;
    double high = 1.0;
};

/// Periodic multisine with equal-amplitude, random-phase lines on the
/// frequency grid fs / n inside [f_min, f_max].
struct MultisineInput {
    double f_min = 0.0;
    double f_max = 0.0;
    double rms = 1.0;
    double fs = 1.0;
};

/// Linear chirp from f_start to f_end over the record.
struct SweepInput {
    double f_start = 0.0;
    double f_end = 0.0;
    double amplitude = 1.0;
    double fs = 1.0;
};

using InputSpec = std::variant<PrbsInput, MultisineInput, SweepInput>;

Eigen::VectorXd generate_input(const InputSpec& spec, int n, Rng& rng);

/// Generated record plus ground-truth metadata for the sidecar file.
struct GeneratedData {
    DataSet data;
    nlohmann::json metadata;
};

struct PlantedSystem {
    PolynomialModel model; // with theta
    std::vector<double> noise_std; // per output channel
    InputSpec input;
};

/// y(k) = 0.5 y(k-1) + 0.3 u(k-1) + 0.1 u(k-1)^2 driven by an 11-level
/// random sequence on [-1, 1].
PlantedSystem default_planted_system(double noise_std = 0.0);

/// Free-run simulation of the true model from rest plus Gaussian output
/// noise. Throws DataError if the true system diverges or n <= max delay.
GeneratedData generate_planted(const PlantedSystem& sys, int n, std::uint64_t seed);

struct BoucWenOptions {
    InputSpec input = MultisineInput{5.0, 150.0, 50.0, 750.0};
    int substeps = 10; // RK4 steps per sample
    double noise_std = 0.0;
};

/// Bouc-Wen oscillator sampled at 750 Hz; u = force [N], y = displacement [m].
GeneratedData generate_bouc_wen(int n, const BoucWenOptions& opts, std::uint64_t seed);

/// Displacement response of the Bouc-Wen oscillator to a given force record
/// (zero-order hold between samples).
Eigen::VectorXd simulate_bouc_wen(const Eigen::VectorXd& force, int substeps);

struct CstrOptions {
    int substeps = 10;
    bool noise = true;
};

/// CSTR with inputs (Q1, Tc, C1) and outputs (T2, C2): +-10 % random binary
/// sequences on Q1 and Tc, a slow ramp of C1 across 50-150 % of nominal,
/// uniform output noise. Starts at the equilibrium of the first input sample.
GeneratedData generate_cstr(int n, const CstrOptions& opts, std::uint64_t seed);

/// Noise-free CSTR outputs (T2, C2) for an input record (Q1, Tc, C1).
Eigen::MatrixXd simulate_cstr(const Eigen::MatrixXd& inputs, int substeps);

/// 20 log10(rms(clean) / rms(noise)) in dB.
double snr_db(const Eigen::VectorXd& clean, const Eigen::VectorXd& noise);

} // namespace tagsr

#pragma once

/// Physical constants of the simulated benchmark systems.
namespace tagsr::constants {

/// Bouc-Wen hysteretic oscillator, parameter set of the nonlinear system
/// identification benchmark by J.P. Noel and M. Schoukens, "Hysteretic
/// benchmark with a dynamic nonlinearity" (Workshop on Nonlinear System
/// Identification Benchmarks, 2016):
///
///   m y'' + c y' + k y + z = u
///   z' = alpha y' - beta (gamma |y'| |z|^(nu-1) z + delta y' |z|^nu)
namespace bouc_wen {
inline constexpr double mass = 2.0;           // kg
inline constexpr double damping = 10.0;       // N s / m
inline constexpr double stiffness = 5.0e4;    // N / m
inline constexpr double alpha = 5.0e4;        // N / m
inline constexpr double beta = 1.0e3;         // 1 / m
inline constexpr double gamma = 0.8;
inline constexpr double delta = -1.1;
inline constexpr double nu = 1.0;
inline constexpr double sample_rate = 750.0;  // Hz
inline constexpr double band_low = 5.0;       // Hz, multisine excitation band
inline constexpr double band_high = 150.0;    // Hz
inline constexpr double input_rms = 50.0;     // N
} // namespace bouc_wen

/// Jacketed CSTR with one exothermic first-order reaction A -> B:
///
///   C2' = Q1/V (C1 - C2) - k0 exp(-E/R / T2) C2
///   T2' = Q1/V (T1 - T2) + J k0 exp(-E/R / T2) C2 - UA/V (T2 - Tc)
///
/// Outputs are reactor temperature T2 [K] and concentration C2 [mol/m^3];
/// inputs are feed flow Q1 [m^3/min], coolant temperature Tc [K] and feed
/// concentration C1 [mol/m^3]. k0 and J put the nominal steady state at
/// T2 = 440 K, C2 = 220 mol/m^3. The reaction heat gain stays below half the
/// heat removal gain, so the equilibrium is unique and open-loop stable over
/// the whole excitation range.
namespace cstr {
inline constexpr double volume = 1.0;                 // m^3
inline constexpr double flow_nominal = 0.1;           // m^3 / min
inline constexpr double feed_conc_nominal = 1000.0;   // mol / m^3
inline constexpr double feed_temp = 400.0;            // K
inline constexpr double coolant_temp_nominal = 400.0; // K
inline constexpr double activation = 2000.0;          // E / R, K
inline constexpr double k0 = 33.39932952875426;       // 1 / min, 78/220 * exp(2000/440)
inline constexpr double ua = 0.2;                     // UA / (rho cp), m^3 / min
inline constexpr double heat = 12.0 / 78.0;           // -dH / (rho cp), K m^3 / mol
inline constexpr double temp_nominal = 440.0;         // K
inline constexpr double conc_nominal = 220.0;         // mol / m^3
inline constexpr double sample_time = 0.25;           // min
inline constexpr double prbs_fraction = 0.10;         // +-10 % of nominal
inline constexpr int prbs_hold = 10;                  // samples
inline constexpr double feed_conc_low = 0.5;          // fraction of nominal
inline constexpr double feed_conc_high = 1.5;
inline constexpr double temp_noise = 0.5;             // uniform on [-a, a], K
inline constexpr double conc_noise = 2.0;             // uniform on [-a, a], mol / m^3
} // namespace cstr

} // namespace tagsr::constants

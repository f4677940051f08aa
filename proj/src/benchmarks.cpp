#include "tagsr/benchmarks.hpp"

#include <cmath>
#include <numbers>

#include "tagsr/benchmark_constants.hpp"
#include "tagsr/error.hpp"

namespace tagsr {

namespace {

template <class State, class Rhs>
State rk4_step(const State& x, double h, Rhs&& f)
{
    const State k1 = f(x);
    const State k2 = f(State(x + 0.5 * h * k1));
    const State k3 = f(State(x + 0.5 * h * k2));
    const State k4 = f(State(x + h * k3));
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Eigen::VectorXd prbs(const PrbsInput& s, int n, Rng& rng)
{
    if (s.levels < 2 || s.hold < 1) {
        throw ConfigError("prbs needs levels >= 2 and hold >= 1");
    }
    Eigen::VectorXd u(n);
    std::uniform_int_distribution<int> level(0, s.levels - 1);
    double value = 0.0;
    for (int k = 0; k < n; ++k) {
        if (k % s.hold == 0) {
            value = s.low + (s.high - s.low) * level(rng) / (s.levels - 1);
        }
        u(k) = value;
    }
    return u;
}

Eigen::VectorXd multisine(const MultisineInput& s, int n, Rng& rng)
{
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    const double df = s.fs / n;
    const int first = std::max(1, static_cast<int>(std::ceil(s.f_min / df - 1e-9)));
    const int last = std::min(n / 2, static_cast<int>(std::floor(s.f_max / df + 1e-9)));
    for (int line = first; line <= last; ++line) {
        const double phase = 2.0 * std::numbers::pi * uniform01(rng);
        for (int k = 0; k < n; ++k) {
            u(k) += std::cos(2.0 * std::numbers::pi * line * k / n + phase);
        }
    }
    const double rms = std::sqrt(u.squaredNorm() / n);
    if (rms > 0.0) {
        u *= s.rms / rms;
    }
    return u;
}

Eigen::VectorXd sweep(const SweepInput& s, int n)
{
    Eigen::VectorXd u(n);
    const double duration = n / s.fs;
    for (int k = 0; k < n; ++k) {
        const double t = k / s.fs;
        const double phase = 2.0 * std::numbers::pi * (s.f_start * t + 0.5 * (s.f_end - s.f_start) * t * t / duration);
        u(k) = s.amplitude * std::sin(phase);
    }
    return u;
}

double rms(const Eigen::VectorXd& v)
{
    return std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
}

} // namespace

Eigen::VectorXd generate_input(const InputSpec& spec, int n, Rng& rng)
{
    if (n < 1) {
        throw ConfigError("record length must be >= 1");
    }
    return std::visit(
        [&](const auto& s) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, PrbsInput>) {
                return prbs(s, n, rng);
            } else if constexpr (std::is_same_v<T, MultisineInput>) {
                return multisine(s, n, rng);
            } else {
                return sweep(s, n);
            }
        },
        spec);
}

double snr_db(const Eigen::VectorXd& clean, const Eigen::VectorXd& noise)
{
    return 20.0 * std::log10(rms(clean) / rms(noise));
}

PlantedSystem default_planted_system(double noise_std)
{
    const SignalFactor y1{Signal::Y, 1, LinkingArray{{1}}, {}};
    const SignalFactor u1{Signal::U, 1, LinkingArray{{1}}, {}};
    PlantedSystem sys;
    sys.model.channels = {1, 1, 1};
    sys.model.terms = {MonomialTerm{{y1}}, MonomialTerm{{u1}}, MonomialTerm{{u1, u1}}};
    canonicalize(sys.model);
    // canonical order: u(k-1), u(k-1)^2, y(k-1)
    sys.model.theta = Eigen::MatrixXd{{0.3}, {0.1}, {0.5}};
    sys.noise_std = {noise_std};
    sys.input = PrbsInput{11, 1, -1.0, 1.0};
    return sys;
}

GeneratedData generate_planted(const PlantedSystem& sys, int n, std::uint64_t seed)
{
    const auto& ch = sys.model.channels;
    if (n <= sys.model.transient()) {
        throw DataError("record length must exceed the planted model's largest delay");
    }
    if (static_cast<int>(sys.noise_std.size()) != ch.outputs) {
        throw ConfigError("need one noise level per output channel");
    }
    DataSet d{"planted", Eigen::MatrixXd(n, ch.inputs), Eigen::MatrixXd::Zero(n, ch.outputs)};
    for (int c = 0; c < ch.inputs; ++c) {
        Rng rng = make_stream(seed, {1, static_cast<std::uint64_t>(c)});
        d.u.col(c) = generate_input(sys.input, n, rng);
    }
    const auto sim = simulate(sys.model, d);
    if (sim.diverged) {
        throw DataError("planted system diverges on the generated input");
    }
    d.y = sim.y;
    Rng noise_rng = make_stream(seed, {2});
    std::normal_distribution<double> n01;
    for (int c = 0; c < ch.outputs; ++c) {
        const double s = sys.noise_std[static_cast<std::size_t>(c)];
        for (int k = 0; k < n; ++k) {
            const double e = n01(noise_rng);
            d.y(k, c) += s * e;
        }
    }
    return {std::move(d),
            {{"system", "planted"},
             {"samples", n},
             {"seed", seed},
             {"noise_std", sys.noise_std},
             {"true_equations", to_equation_strings(sys.model)},
             {"true_model", model_to_json(sys.model)}}};
}

Eigen::VectorXd simulate_bouc_wen(const Eigen::VectorXd& force, int substeps)
{
    namespace bw = constants::bouc_wen;
    if (substeps < 1) {
        throw ConfigError("substeps must be >= 1");
    }
    const double h = 1.0 / (bw::sample_rate * substeps);
    Eigen::Vector3d x = Eigen::Vector3d::Zero(); // displacement, velocity, hysteretic force
    Eigen::VectorXd y(force.size());
    for (Eigen::Index k = 0; k < force.size(); ++k) {
        y(k) = x(0);
        const double u = force(k);
        const auto rhs = [u](const Eigen::Vector3d& s) {
            const double v = s(1);
            const double z = s(2);
            const double az = std::fabs(z);
            const double dz = bw::alpha * v -
                              bw::beta * (bw::gamma * std::fabs(v) * std::pow(az, bw::nu - 1.0) * z +
                                          bw::delta * v * std::pow(az, bw::nu));
            return Eigen::Vector3d(v, (u - bw::damping * v - bw::stiffness * s(0) - z) / bw::mass, dz);
        };
        for (int s = 0; s < substeps; ++s) {
            x = rk4_step(x, h, rhs);
        }
    }
    return y;
}

GeneratedData generate_bouc_wen(int n, const BoucWenOptions& opts, std::uint64_t seed)
{
    Rng rng = make_stream(seed, {1});
    DataSet d{"boucwen", Eigen::MatrixXd(n, 1), Eigen::MatrixXd(n, 1)};
    d.u.col(0) = generate_input(opts.input, n, rng);
    d.y.col(0) = simulate_bouc_wen(d.u.col(0), opts.substeps);
    if (opts.noise_std > 0.0) {
        Rng noise_rng = make_stream(seed, {2});
        std::normal_distribution<double> n01;
        for (int k = 0; k < n; ++k) {
            d.y(k, 0) += opts.noise_std * n01(noise_rng);
        }
    }
    if (!d.y.allFinite()) {
        throw DataError("Bouc-Wen integration produced non-finite values");
    }
    namespace bw = constants::bouc_wen;
    return {std::move(d),
            {{"system", "boucwen"},
             {"samples", n},
             {"seed", seed},
             {"sample_rate_hz", bw::sample_rate},
             {"rk4_substeps", opts.substeps},
             {"noise_std", opts.noise_std},
             {"parameters",
              {{"m", bw::mass},
               {"c", bw::damping},
               {"k", bw::stiffness},
               {"alpha", bw::alpha},
               {"beta", bw::beta},
               {"gamma", bw::gamma},
               {"delta", bw::delta},
               {"nu", bw::nu}}},
             {"channels", {{"u1", "force [N]"}, {"y1", "displacement [m]"}}}}};
}

namespace {

Eigen::Vector2d cstr_rhs(const Eigen::Vector2d& s, double q1, double tc, double c1)
{
    namespace cs = constants::cstr;
    const double c2 = s(0);
    const double t2 = s(1);
    const double rate = cs::k0 * std::exp(-cs::activation / t2) * c2;
    return {q1 / cs::volume * (c1 - c2) - rate,
            q1 / cs::volume * (cs::feed_temp - t2) + cs::heat * rate - cs::ua / cs::volume * (t2 - tc)};
}

// Equilibrium for constant inputs, found by integrating from the nominal point.
Eigen::Vector2d cstr_equilibrium(double q1, double tc, double c1, double h)
{
    Eigen::Vector2d s(constants::cstr::conc_nominal, constants::cstr::temp_nominal);
    const auto rhs = [&](const Eigen::Vector2d& x) { return cstr_rhs(x, q1, tc, c1); };
    for (int i = 0; i < 200000; ++i) {
        s = rk4_step(s, h, rhs);
        if (i % 1000 == 999 && rhs(s).cwiseAbs().maxCoeff() < 1e-12) {
            break;
        }
    }
    return s;
}

} // namespace

Eigen::MatrixXd simulate_cstr(const Eigen::MatrixXd& inputs, int substeps)
{
    namespace cs = constants::cstr;
    if (substeps < 1) {
        throw ConfigError("substeps must be >= 1");
    }
    if (inputs.cols() != 3 || inputs.rows() < 1) {
        throw DataError("CSTR input record needs columns Q1, Tc, C1");
    }
    const double h = cs::sample_time / substeps;
    Eigen::Vector2d s = cstr_equilibrium(inputs(0, 0), inputs(0, 1), inputs(0, 2), cs::sample_time / 10.0);
    Eigen::MatrixXd y(inputs.rows(), 2);
    for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
        y(k, 0) = s(1);
        y(k, 1) = s(0);
        const double q1 = inputs(k, 0);
        const double tc = inputs(k, 1);
        const double c1 = inputs(k, 2);
        const auto rhs = [&](const Eigen::Vector2d& x) { return cstr_rhs(x, q1, tc, c1); };
        for (int i = 0; i < substeps; ++i) {
            s = rk4_step(s, h, rhs);
        }
        if (!s.allFinite() || s(0) < 0.0 || s(1) <= 0.0) {
            throw DataError("CSTR state left the physical range");
        }
    }
    return y;
}

GeneratedData generate_cstr(int n, const CstrOptions& opts, std::uint64_t seed)
{
    namespace cs = constants::cstr;
    if (n < 1) {
        throw ConfigError("record length must be >= 1");
    }
    DataSet d{"cstr", Eigen::MatrixXd(n, 3), Eigen::MatrixXd(n, 2)};
    const PrbsInput binary{2, cs::prbs_hold, 1.0 - cs::prbs_fraction, 1.0 + cs::prbs_fraction};
    Rng q_rng = make_stream(seed, {1, 0});
    Rng t_rng = make_stream(seed, {1, 1});
    d.u.col(0) = cs::flow_nominal * generate_input(binary, n, q_rng);
    d.u.col(1) = cs::coolant_temp_nominal * generate_input(binary, n, t_rng);
    for (int k = 0; k < n; ++k) {
        const double frac = n > 1 ? static_cast<double>(k) / (n - 1) : 0.0;
        d.u(k, 2) = cs::feed_conc_nominal * (cs::feed_conc_low + (cs::feed_conc_high - cs::feed_conc_low) * frac);
    }
    const Eigen::MatrixXd clean = simulate_cstr(d.u, opts.substeps);
    Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(n, 2);
    if (opts.noise) {
        Rng noise_rng = make_stream(seed, {2});
        std::uniform_real_distribution<double> t_noise(-cs::temp_noise, cs::temp_noise);
        std::uniform_real_distribution<double> c_noise(-cs::conc_noise, cs::conc_noise);
        for (int k = 0; k < n; ++k) {
            noise(k, 0) = t_noise(noise_rng);
            noise(k, 1) = c_noise(noise_rng);
        }
    }
    d.y = clean + noise;
    nlohmann::json meta{{"system", "cstr"},
                        {"samples", n},
                        {"seed", seed},
                        {"sample_time_min", cs::sample_time},
                        {"rk4_substeps", opts.substeps},
                        {"channels",
                         {{"u1", "Q1 feed flow [m^3/min]"},
                          {"u2", "Tc coolant temperature [K]"},
                          {"u3", "C1 feed concentration [mol/m^3]"},
                          {"y1", "T2 reactor temperature [K]"},
                          {"y2", "C2 reactor concentration [mol/m^3]"}}},
                        {"noise_amplitude", {{"y1", opts.noise ? cs::temp_noise : 0.0}, {"y2", opts.noise ? cs::conc_noise : 0.0}}}};
    if (opts.noise) {
        meta["snr_db"] = {{"y1", snr_db(clean.col(0), noise.col(0))}, {"y2", snr_db(clean.col(1), noise.col(1))}};
    }
    return {std::move(d), std::move(meta)};
}

} // namespace tagsr

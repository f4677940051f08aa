#include <doctest.h>

#include <set>
#include <unordered_set>

#include "tagsr/error.hpp"
#include "tagsr/interpreter.hpp"

using namespace tagsr;
using enum TreeId;

namespace {

SignalFactor factor(Signal s, int delay, std::vector<std::uint8_t> bits = {1}, std::optional<NonlinearOp> wrap = {})
{
    return {s, delay, LinkingArray{std::move(bits)}, wrap};
}

// Checks the structural form every interpreted model must have.
void check_model_form(const PolynomialModel& m, const Grammar& g)
{
    for (std::size_t i = 0; i < m.terms.size(); ++i) {
        const auto& t = m.terms[i];
        CHECK(std::is_sorted(t.factors.begin(), t.factors.end()));
        if (i > 0) {
            CHECK(m.terms[i - 1] < t);
        }
        for (const auto& f : t.factors) {
            CHECK(f.link.valid());
            CHECK(f.link.size() == g.channels.of(f.source));
            CHECK(f.delay >= (f.source == Signal::U ? 0 : 1));
            CHECK(f.delay <= g.limits.max_delay);
            if (f.wrap) {
                CHECK(std::find(g.nonlinear_ops.begin(), g.nonlinear_ops.end(), *f.wrap) != g.nonlinear_ops.end());
            }
        }
    }
    MaxDelays md;
    for (const auto& t : m.terms) {
        for (const auto& f : t.factors) {
            int& slot = f.source == Signal::U ? md.u : f.source == Signal::Y ? md.y : md.xi;
            slot = std::max(slot, f.delay);
        }
    }
    CHECK(md == m.max_delays);
}

} // namespace

TEST_CASE("root-only derivation is the pure noise model")
{
    const auto g = build_grammar("NARX", {1, 1, 1}, {});
    const auto m = interpret(derive(make_root(g)), g.channels);
    CHECK(m.term_count() == 0);
    CHECK(m.transient() == 0);
    CHECK(to_equation_string(m) == "y1(k) = xi1(k)\n");
}

TEST_CASE("alpha1 + beta1 + beta2 is c * y(k-1)")
{
    const auto g = build_grammar("LTI", {1, 1, 1}, {});
    auto dt = adjoin(make_root(g), g, Beta1, {0, 0});
    dt = adjoin(dt, g, Beta2, {1, 3});
    const auto m = interpret(derive(dt), g.channels);
    REQUIRE(m.term_count() == 1);
    CHECK(m.terms[0].factors == std::vector{factor(Signal::Y, 1)});
    CHECK(m.max_delays == MaxDelays{0, 1, 0});
    CHECK(to_equation_strings(m).at(0) == "y1(k) = c1_1*y1(k-1) + xi1(k)");
}

TEST_CASE("beta1 alone gives a constant term")
{
    const auto g = build_grammar("NARX", {1, 1, 1}, {});
    const auto m = interpret(derive(adjoin(make_root(g), g, Beta1, {0, 0})), g.channels);
    REQUIRE(m.term_count() == 1);
    CHECK(m.terms[0].factors.empty());
}

TEST_CASE("delay, power and wrap trees shape the factor")
{
    const auto g = build_grammar("extNARX", {2, 1, 1}, {NonlinearOp::Abs});
    auto dt = adjoin(make_root(g), g, Beta1, {0, 0});
    dt = adjoin(dt, g, Beta4, {1, 3}, {LinkingArray{{0, 1}}, {}}); // op2: u2(k)
    dt = adjoin(dt, g, Beta7, {2, 3});                            // op3: delay 1
    dt = adjoin(dt, g, Beta5, {3, 0});                            // op4: squared
    dt = adjoin(dt, g, Beta2, {2, 0});                            // op5: * y1(k-1)
    dt = adjoin(dt, g, Beta8, {5, 3}, {{}, NonlinearOp::Abs});    // abs(y1(k-1))
    const auto m = interpret(derive(dt), g.channels);
    REQUIRE(m.term_count() == 1);
    const auto u = factor(Signal::U, 1, {0, 1});
    const auto y = factor(Signal::Y, 1, {1}, NonlinearOp::Abs);
    CHECK(m.terms[0].factors == std::vector{u, u, y});
    CHECK(term_string(m.terms[0]) == "u2(k-1)^2*abs(y1(k-1))");
    check_model_form(m, g);
}

TEST_CASE("identical branches merge into one term")
{
    const auto g = build_grammar("IP", {1, 1, 1}, {});
    auto dt = adjoin(make_root(g), g, Beta1, {0, 0});
    dt = adjoin(dt, g, Beta4, {1, 3});
    dt = adjoin(dt, g, Beta1, {1, 0});
    dt = adjoin(dt, g, Beta4, {3, 3});
    CHECK(dt.complexity() == 4);
    const auto m = interpret(derive(dt), g.channels);
    CHECK(m.term_count() == 1);
}

TEST_CASE("equation strings")
{
    PolynomialModel m;
    m.channels = {2, 2, 2};
    m.terms = {MonomialTerm{{factor(Signal::U, 1, {1, 0})}}, MonomialTerm{{factor(Signal::Y, 2, {1, 1})}}};
    canonicalize(m);
    m.theta = Eigen::MatrixXd{{2.0, 0.5}, {-0.25, 1e-7}};
    const auto lines = to_equation_strings(m);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "y1(k) = 2*u1(k-1) - 0.25*(y1(k-2)+y2(k-2)) + xi1(k)");
    CHECK(lines[1] == "y2(k) = 0.5*u1(k-1) + 1e-07*(y1(k-2)+y2(k-2)) + xi2(k)");

    PolynomialModel single;
    single.terms = {MonomialTerm{{factor(Signal::U, 1)}}};
    single.theta = Eigen::MatrixXd{{2.0}};
    CHECK(to_equation_string(single) == "y1(k) = 2*u1(k-1) + xi1(k)\n");
}

TEST_CASE("signature ignores theta and separates structures")
{
    const auto g = build_grammar("NARMAX", {2, 2, 2}, {});
    Rng rng(11);
    std::set<std::vector<MonomialTerm>> structures;
    std::unordered_set<std::uint64_t> hashes;
    for (int i = 0; i < 3000; ++i) {
        const auto dt = random_derivation(g, 12, rng);
        auto m = interpret(derive(dt), g.channels);
        CHECK(model_signature(m) == model_signature(interpret(derive(dt), g.channels)));
        if (structures.insert(m.terms).second) {
            CHECK(hashes.insert(model_signature(m)).second);
        }
        auto estimated = m;
        estimated.theta = Eigen::MatrixXd::Random(m.term_count(), 2);
        CHECK(model_signature(estimated) == model_signature(m));
    }
    CHECK(structures.size() > 500);

    PolynomialModel a;
    a.terms = {MonomialTerm{{factor(Signal::U, 1)}}};
    auto b = a;
    b.terms[0].factors[0].delay = 2;
    CHECK(model_signature(a) != model_signature(b));
}

TEST_CASE("interpretations of random derivations keep the model form")
{
    for (const char* name : {"IP", "LTI", "NARX", "NARMAX"}) {
        const auto g = build_grammar(name, {2, 3, 3}, {});
        Rng rng(5);
        for (int i = 0; i < 500; ++i) {
            const auto m = interpret(derive(random_derivation(g, 25, rng)), g.channels);
            check_model_form(m, g);
        }
    }
    const auto g = build_grammar("extNARX", {1, 2, 2}, {NonlinearOp::Sin, NonlinearOp::Inv});
    Rng rng(6);
    for (int i = 0; i < 500; ++i) {
        check_model_form(interpret(derive(random_derivation(g, 25, rng)), g.channels), g);
    }
}

TEST_CASE("model json round trip")
{
    const auto g = build_grammar("extNARX", {2, 2, 2}, {NonlinearOp::Cos, NonlinearOp::Exp});
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        auto m = interpret(derive(random_derivation(g, 15, rng)), g.channels);
        if (i % 2) {
            m.theta = Eigen::MatrixXd::Random(m.term_count(), 2);
        }
        const auto j = model_to_json(m);
        const auto back = model_from_json(nlohmann::json::parse(j.dump()));
        CHECK(back.same_structure(m));
        CHECK(back.max_delays == m.max_delays);
        CHECK(back.theta.has_value() == m.theta.has_value());
        if (m.theta) {
            CHECK(*back.theta == *m.theta);
        }
    }
    CHECK_THROWS_AS(model_from_json(nlohmann::json::parse(R"({"channels":{"inputs":1}})")), DataError);
    CHECK_THROWS_AS(
        model_from_json(nlohmann::json::parse(
            R"({"channels":{"inputs":1,"outputs":1,"noise":1},"terms":[{"factors":[{"source":"y","channel_mask":[1],"delay":0,"wrap":null}]}],"theta":null})")),
        DataError);
}

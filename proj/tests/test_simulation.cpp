#include <doctest.h>

#include <cmath>

#include "tagsr/error.hpp"
#include "tagsr/simulation.hpp"

using namespace tagsr;

namespace {

SignalFactor factor(Signal s, int delay, std::vector<std::uint8_t> bits = {1}, std::optional<NonlinearOp> wrap = {})
{
    return {s, delay, LinkingArray{std::move(bits)}, wrap};
}

PolynomialModel make_model(std::vector<MonomialTerm> terms, Eigen::MatrixXd theta, ChannelCounts ch = {1, 1, 1})
{
    PolynomialModel m;
    m.channels = ch;
    m.terms = std::move(terms);
    canonicalize(m);
    m.theta = std::move(theta);
    return m;
}

DataSet make_data(Eigen::MatrixXd u, Eigen::MatrixXd y)
{
    return {"test", std::move(u), std::move(y)};
}

// Independent reference: y(k) = a*y(k-1) + b*u(k-1) + c*u(k-1)^2 from rest.
Eigen::MatrixXd planted_reference(const Eigen::VectorXd& u, double a, double b, double c)
{
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(u.size(), 1);
    for (Eigen::Index k = 1; k < u.size(); ++k) {
        y(k, 0) = a * y(k - 1, 0) + b * u(k - 1) + c * u(k - 1) * u(k - 1);
    }
    return y;
}

PolynomialModel planted_model()
{
    return make_model({MonomialTerm{{factor(Signal::Y, 1)}},
                       MonomialTerm{{factor(Signal::U, 1)}},
                       MonomialTerm{{factor(Signal::U, 1), factor(Signal::U, 1)}}},
                      Eigen::MatrixXd::Zero(3, 1));
}

void set_planted_theta(PolynomialModel& m, double a, double b, double c)
{
    // canonical order: u(k-1) < u(k-1)^2 < y(k-1)
    REQUIRE(m.terms[0].factors.size() == 1);
    REQUIRE(m.terms[0].factors[0].source == Signal::U);
    REQUIRE(m.terms[1].factors.size() == 2);
    REQUIRE(m.terms[2].factors[0].source == Signal::Y);
    m.theta = Eigen::MatrixXd{{b}, {c}, {a}};
}

} // namespace

TEST_CASE("rms errors: hand examples")
{
    const Eigen::MatrixXd y = Eigen::MatrixXd::Random(50, 2);
    ErrorPair e = rms_errors(y, y, y);
    CHECK(e.es == 0.0);
    CHECK(e.ep == 0.0);

    Eigen::MatrixXd shifted = y;
    shifted.col(0).array() += 2.0;
    CHECK(rms_error(y.leftCols(1), shifted.leftCols(1)) == doctest::Approx(2.0).epsilon(1e-14));

    Eigen::MatrixXd two = y;
    two.col(0).array() -= 1.0;
    two.col(1).array() += 3.0;
    e = rms_errors(y, two, two);
    CHECK(e.es == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(e.ep == doctest::Approx(2.0).epsilon(1e-14));

    CHECK_THROWS_AS(rms_error(y, y.leftCols(1)), DataError);
}

TEST_CASE("rms errors are invariant under consistent channel permutation")
{
    const Eigen::MatrixXd y = Eigen::MatrixXd::Random(40, 3);
    const Eigen::MatrixXd h = Eigen::MatrixXd::Random(40, 3);
    Eigen::PermutationMatrix<3> p;
    p.indices() << 2, 0, 1;
    CHECK(rms_error(y * p, h * p) == doctest::Approx(rms_error(y, h)).epsilon(1e-14));
}

TEST_CASE("bfr boundary cases")
{
    Eigen::MatrixXd y(6, 1);
    y << 1, 3, 2, 5, 4, 0;
    CHECK(bfr(y, y) == 100.0);
    const Eigen::MatrixXd mean = Eigen::MatrixXd::Constant(6, 1, y.mean());
    CHECK(bfr(y, mean) == doctest::Approx(0.0).epsilon(1e-14));
    const Eigen::MatrixXd mid = 0.5 * (y + mean);
    CHECK(bfr(y, mid) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(bfr(y, -10.0 * y) == 0.0);
    CHECK_THROWS_AS(bfr(Eigen::MatrixXd::Ones(5, 1), Eigen::MatrixXd::Zero(5, 1)), DataError);
}

TEST_CASE("predict with y(k) = y(k-1) on constant data")
{
    auto m = make_model({MonomialTerm{{factor(Signal::Y, 1)}}}, Eigen::MatrixXd{{1.0}});
    const auto d = make_data(Eigen::MatrixXd::Zero(10, 1), Eigen::MatrixXd::Constant(10, 1, 3.5));
    const auto r = predict(m, d);
    CHECK_FALSE(r.diverged);
    CHECK(r.y == d.y);
}

TEST_CASE("pure noise model predicts zero")
{
    PolynomialModel m;
    m.theta = Eigen::MatrixXd::Zero(0, 1);
    const auto d = make_data(Eigen::MatrixXd::Random(20, 1), Eigen::MatrixXd::Random(20, 1));
    CHECK(predict(m, d).y.isZero(0.0));
    const auto r = evaluate(m, d);
    CHECK(r.error.es == doctest::Approx(std::sqrt(d.y.squaredNorm() / 20.0)).epsilon(1e-14));
}

TEST_CASE("stable first-order model converges to its static gain")
{
    auto m = make_model({MonomialTerm{{factor(Signal::Y, 1)}}, MonomialTerm{{factor(Signal::U, 1)}}},
                        Eigen::MatrixXd{{1.0}, {0.5}}); // u(k-1) then y(k-1)
    const int n = 80;
    const auto d = make_data(Eigen::MatrixXd::Ones(n, 1), Eigen::MatrixXd::Zero(n, 1));
    const auto r = simulate(m, d);
    CHECK_FALSE(r.diverged);
    // y(k) = sum_{i<k} 0.5^i = 2 (1 - 0.5^k)
    for (int k = 1; k < n; ++k) {
        CHECK(r.y(k, 0) == doctest::Approx(2.0 * (1.0 - std::pow(0.5, k))).epsilon(1e-13));
    }
}

TEST_CASE("unstable model diverges with infinite simulation error")
{
    auto m = make_model({MonomialTerm{{factor(Signal::Y, 1)}}}, Eigen::MatrixXd{{2.0}});
    const auto d = make_data(Eigen::MatrixXd::Zero(200, 1), Eigen::MatrixXd::Ones(200, 1));
    const auto r = simulate(m, d);
    CHECK(r.diverged);
    const auto e = evaluate(m, d);
    CHECK(e.diverged);
    CHECK(std::isinf(e.error.es));
    CHECK(std::isfinite(e.error.ep));
}

TEST_CASE("inv of zero flags divergence instead of crashing")
{
    auto m = make_model({MonomialTerm{{factor(Signal::U, 0, {1}, NonlinearOp::Inv)}}}, Eigen::MatrixXd{{1.0}});
    Eigen::MatrixXd u = Eigen::MatrixXd::Ones(10, 1);
    u(4, 0) = 0.0;
    const auto d = make_data(u, Eigen::MatrixXd::Ones(10, 1));
    CHECK(predict(m, d).diverged);
    CHECK(simulate(m, d).diverged);
    const auto e = evaluate(m, d);
    CHECK(std::isinf(e.error.es));
    CHECK(std::isinf(e.error.ep));
}

TEST_CASE("feedback-free models predict exactly what they simulate")
{
    auto m = make_model({MonomialTerm{{factor(Signal::U, 0, {1, 1})}},
                         MonomialTerm{{factor(Signal::U, 2, {0, 1}), factor(Signal::U, 1, {1, 0}, NonlinearOp::Sin)}},
                         MonomialTerm{}},
                        Eigen::MatrixXd::Random(3, 2), {2, 2, 2});
    const auto d = make_data(Eigen::MatrixXd::Random(100, 2), Eigen::MatrixXd::Random(100, 2));
    CHECK_FALSE(m.has_output_feedback());
    const auto p = predict(m, d);
    const auto s = simulate(m, d);
    CHECK(p.y == s.y);
}

TEST_CASE("planted model reproduces its own noise-free data")
{
    Eigen::VectorXd u = Eigen::VectorXd::Random(300);
    const auto y = planted_reference(u, 0.5, 0.3, 0.1);
    auto m = planted_model();
    set_planted_theta(m, 0.5, 0.3, 0.1);
    const auto d = make_data(u, y);
    const auto r = evaluate(m, d);
    CHECK(r.skip == 1);
    CHECK(r.error.ep < 1e-10);
    CHECK(r.error.es < 1e-10);
    CHECK((r.y_sim - y).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("noise regressors use residuals in prediction and vanish in simulation")
{
    // y(k) = 0.5 u(k-1) + 0.8 xi(k-1)
    auto m = make_model({MonomialTerm{{factor(Signal::U, 1)}}, MonomialTerm{{factor(Signal::Xi, 1)}}},
                        Eigen::MatrixXd{{0.5}, {0.8}});
    const int n = 30;
    Eigen::MatrixXd u = Eigen::MatrixXd::Random(n, 1);
    Eigen::MatrixXd y = Eigen::MatrixXd::Random(n, 1);
    const auto d = make_data(u, y);
    const auto p = predict(m, d);
    const auto s = simulate(m, d);
    double e_prev = 0.0;
    for (int k = 1; k < n; ++k) {
        const double expected = 0.5 * u(k - 1, 0) + 0.8 * e_prev;
        CHECK(p.y(k, 0) == doctest::Approx(expected).epsilon(1e-14));
        CHECK(s.y(k, 0) == doctest::Approx(0.5 * u(k - 1, 0)).epsilon(1e-14));
        e_prev = y(k, 0) - p.y(k, 0);
    }
}

TEST_CASE("compatibility checks")
{
    auto m = make_model({MonomialTerm{{factor(Signal::Y, 5)}}}, Eigen::MatrixXd{{0.1}});
    CHECK_THROWS_AS(evaluate(m, make_data(Eigen::MatrixXd::Zero(5, 1), Eigen::MatrixXd::Zero(5, 1))), DataError);
    CHECK_THROWS_AS(evaluate(m, make_data(Eigen::MatrixXd::Zero(9, 2), Eigen::MatrixXd::Zero(9, 1))), DataError);
    PolynomialModel unestimated;
    CHECK_THROWS_AS(predict(unestimated, make_data(Eigen::MatrixXd::Zero(9, 1), Eigen::MatrixXd::Zero(9, 1))),
                    EstimationError);
}

TEST_CASE("csv round trip and header validation")
{
    const auto d = make_data(Eigen::MatrixXd::Random(25, 2), Eigen::MatrixXd::Random(25, 3));
    const auto back = parse_csv(format_csv(d), "x");
    CHECK(back.u == d.u);
    CHECK(back.y == d.y);
    CHECK(back.inputs() == 2);
    CHECK(back.outputs() == 3);

    CHECK_THROWS_AS(parse_csv("u1,y2\n1,2\n"), DataError);
    CHECK_THROWS_AS(parse_csv("y1,u1\n1,2\n"), DataError);
    CHECK_THROWS_AS(parse_csv("u1,y1\n1\n"), DataError);
    CHECK_THROWS_AS(parse_csv("u1,y1\n1,abc\n"), DataError);
    CHECK_THROWS_AS(parse_csv("u1,y1\n1,nan\n"), DataError);
    CHECK_THROWS_AS(parse_csv("u1,y1\n"), DataError);
    CHECK(parse_csv("u1,y1\r\n1,2\r\n\n3,4\n").samples() == 2);
}

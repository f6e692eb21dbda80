#include "umq/util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace umq;

TEST_CASE("pairwise_sum matches long double accumulation", "[util]") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(100001);
    long double ref = 0.0L;
    for (double& x : v) {
        x = u(rng) * std::pow(10.0, u(rng) * 6.0);
        ref += x;
    }
    double got = pairwise_sum(v);
    REQUIRE(std::abs(got - static_cast<double>(ref)) <=
            1e-9 * std::abs(static_cast<double>(ref)) + 1e-9);
}

TEST_CASE("golden_min locates smooth minima", "[util]") {
    double x = golden_min([](double t) { return (t - 0.3) * (t - 0.3); },
                          -1.0, 2.0, 1e-12);
    REQUIRE(std::abs(x - 0.3) < 1e-7);

    double y = golden_min([](double t) { return std::cos(t); }, 2.0, 4.5,
                          1e-12);
    REQUIRE(std::abs(y - kPi) < 1e-7);
}

TEST_CASE("nelder_mead minimizes quadratics and respects projection",
          "[util]") {
    Vec x0 = Vec::Zero(3);
    auto res = nelder_mead(
        [](const Vec& x) {
            return (x[0] - 1.0) * (x[0] - 1.0) + 2.0 * x[1] * x[1] +
                   (x[2] + 0.5) * (x[2] + 0.5);
        },
        x0, 0.5, 600, 1e-14);
    REQUIRE(std::abs(res.x[0] - 1.0) < 1e-6);
    REQUIRE(std::abs(res.x[1]) < 1e-6);
    REQUIRE(std::abs(res.x[2] + 0.5) < 1e-6);
    REQUIRE(res.evaluations <= 600);

    // Projection onto the box [0, 1]^2 makes the constrained optimum (0, 0).
    auto proj = [](const Vec& x) {
        Vec y = x;
        for (int i = 0; i < y.size(); ++i) y[i] = std::clamp(y[i], 0.0, 1.0);
        return y;
    };
    auto res2 = nelder_mead(
        [](const Vec& x) {
            return (x[0] + 1.0) * (x[0] + 1.0) + (x[1] + 2.0) * (x[1] + 2.0);
        },
        Vec::Constant(2, 0.5), 0.3, 400, 1e-14, proj);
    REQUIRE(proj(res2.x).isApprox(res2.x, 1e-12));
    REQUIRE(res2.x.norm() < 1e-6);
}

TEST_CASE("solve_bracketed finds roots to tolerance", "[util]") {
    auto f = [](double x) { return std::cos(x) - x; };
    auto df = [](double x) { return -std::sin(x) - 1.0; };
    double r = solve_bracketed(f, df, 0.0, 1.0, 1e-14);
    REQUIRE(std::abs(f(r)) < 1e-13);

    REQUIRE_THROWS_AS(
        solve_bracketed([](double x) { return x * x + 1.0; },
                        [](double x) { return 2.0 * x; }, -1.0, 1.0, 1e-12),
        NumericalError);
}

TEST_CASE("parallel_for covers every index exactly once", "[util]") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4,
                 [&](std::size_t i) { hits[i] += static_cast<int>(i) + 1; });
    for (std::size_t i = 0; i < hits.size(); ++i)
        REQUIRE(hits[i] == static_cast<int>(i) + 1);
}

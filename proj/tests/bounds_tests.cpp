#include "umq/bounds.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>

using namespace umq;

namespace {

/// Adaptive Simpson quadrature, used as an independent oracle for the
/// closed-form barrier integral.
double simpson(const std::function<double(double)>& f, double a, double b,
               double fa, double fm, double fb, double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, 0.5 * tol, depth - 1) +
           simpson(f, m, b, fm, frm, fb, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
    if (a == b) return 0.0;
    double m = 0.5 * (a + b);
    return simpson(f, a, b, f(a), f(m), f(b), tol, 60);
}

}  // namespace

TEST_CASE("zeta_star solves the cubic and matches the reference window",
          "[bounds]") {
    REQUIRE(zeta_star(0.0) == 1.0);
    double z1 = zeta_star(1.0);
    REQUIRE(z1 >= 1.8793);
    REQUIRE(z1 <= 1.8795);
    REQUIRE(z1 <= 1.88);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    double prev = 1.0;
    for (int i = 0; i < 200; ++i) {
        double m = u(rng);
        double z = zeta_star(m);
        double res = (z * z - 3.0) * z + 2.0 - 3.0 * m;
        REQUIRE(std::abs(res) < 1e-9 * (1.0 + 3.0 * m));
        REQUIRE(z >= 1.0);
    }
    // Monotone in m.
    for (double m = 0.0; m < 5.0; m += 0.25) {
        double z = zeta_star(m);
        REQUIRE(z >= prev - 1e-12);
        prev = z;
    }
    REQUIRE_THROWS_AS(zeta_star(-0.1), ConfigError);
}

TEST_CASE("z_pm are exact roots of the velocity quadratic", "[bounds]") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 200; ++i) {
        double p = u(rng), q = u(rng);
        auto [zp, zm] = z_pm(p, q);
        REQUIRE(zp >= 0.0);
        REQUIRE(zm <= 0.0);
        REQUIRE(std::abs(zp * zp - p * zp - q * q) <
                1e-12 * (1.0 + zp * zp + q * q));
        REQUIRE(std::abs(zm * zm - p * zm - q * q) <
                1e-12 * (1.0 + zm * zm + q * q));
        // No cancellation for tiny q against large p.
        auto [zp2, zm2] = z_pm(10.0, 1e-12);
        REQUIRE(zm2 < 0.0);
        REQUIRE(std::abs(zm2 + 1e-24 / 10.0) < 1e-30);
        (void)zp2;
    }
}

TEST_CASE("barrier_I matches adaptive quadrature", "[bounds]") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        double p = 2.0 * u(rng);
        double q = 0.01 + 2.0 * u(rng);
        // Cover the numerically delicate small-l regime as well.
        double l = std::pow(10.0, -12.0 * u(rng)) * 3.0 * u(rng);
        double zp = z_pm(p, q).first;
        double z = zp * (1.0 + 3.0 * u(rng)) + 0.1;
        double closed = barrier_I(z, p, q, l);
        double quad = integrate(
            [&](double w) { return ((w - p) * w - q * q) / (l * w + 1.0); },
            zp, z, 1e-15 * std::max(1.0, std::abs(closed)));
        REQUIRE(std::abs(closed - quad) <=
                1e-10 * std::max(1.0, std::abs(quad)));
    }
}

TEST_CASE("barrier_I derivative and domain guards", "[bounds]") {
    double p = 0.5, q = 1.2, l = 0.7;
    double zp = z_pm(p, q).first;
    double z = zp + 0.8;
    double h = 1e-6;
    double fd = (barrier_I(z + h, p, q, l) - barrier_I(z - h, p, q, l)) /
                (2.0 * h);
    REQUIRE(std::abs(fd - barrier_I_prime(z, p, q, l)) < 1e-8);
    REQUIRE(barrier_I(zp, p, q, l) == 0.0);
    REQUIRE_THROWS_AS(barrier_I(zp - 0.5, p, q, l), ConfigError);
    REQUIRE_THROWS_AS(barrier_I(z, p, q, -0.1), ConfigError);
}

TEST_CASE("z_star reduces to the cubic path when p = l = 0", "[bounds]") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        double q = 0.05 + 2.0 * u(rng);
        double C_f = 0.05 + u(rng);
        double C_U = 0.05 + 3.0 * u(rng);
        double via_barrier = z_star(C_f, C_U, 0.0, q, 0.0, 1e-14);
        double via_cubic = q * zeta_star(C_f * C_U / (q * q), 1e-14);
        REQUIRE(std::abs(via_barrier - via_cubic) <=
                1e-9 * std::max(1.0, via_cubic));
    }
}

TEST_CASE("z_star satisfies the analytic upper estimate", "[bounds]") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int tested = 0;
    for (int i = 0; i < 300 && tested < 100; ++i) {
        double p = 2.0 * u(rng);
        double q = 0.05 + 2.0 * u(rng);
        double l = 2.0 * u(rng);
        double zp = z_pm(p, q).first;
        if (!(l < zp / (q * q))) continue;
        ++tested;
        double C_f = 0.02 + 0.8 * u(rng);
        double C_U = 0.02 + 2.0 * u(rng);
        double zs = z_star(C_f, C_U, p, q, l);
        double bound =
            zp + (1.0 + l * zp) * std::sqrt(C_f * C_U * zp / q);
        REQUIRE(zs >= zp);
        REQUIRE(zs <= bound + 1e-10 * std::max(1.0, bound));
        // The root actually solves the barrier equation.
        REQUIRE(std::abs(barrier_I(zs, p, q, l) - C_f * C_U * zp) <
                1e-10 * std::max(1.0, C_f * C_U * zp));
    }
    REQUIRE(tested == 100);
}

TEST_CASE("z_star degenerate and trivial cases", "[bounds]") {
    REQUIRE(z_star(0.0, 1.0, 0.5, 1.0, 0.1) == z_pm(0.5, 1.0).first);
    // p = q = 0 forces z_plus = 0 and a zero target, so the root is 0.
    REQUIRE(z_star(1.0, 1.0, 0.0, 0.0, 0.0) == 0.0);
}

TEST_CASE("sigma_threshold formula and guards", "[bounds]") {
    REQUIRE(sigma_threshold(0, 0, 0, 0, 5.0) == 0.0);
    double v = sigma_threshold(2.0, 0.5, 0.3, 0.1, 1.5);
    REQUIRE(std::abs(v - (0.5 * (2.0 * 0.5 + 0.3 + 0.2) * 1.5 + 0.25 * 0.25)) <
            1e-15);
    REQUIRE_THROWS_AS(sigma_threshold(-1, 0, 0, 0, 1), ConfigError);
}

TEST_CASE("connecting_bound_d solves its defining quadratic", "[bounds]") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        double C_U = 3.0 * u(rng);
        double l_U = 0.1 + 3.0 * u(rng);
        double U_min = -u(rng), U_max = U_min + 2.0 * u(rng);
        double d = connecting_bound_d(C_U, l_U, U_min, U_max);
        double dU = U_max - U_min;
        double res = 0.5 * l_U * std::exp(-dU) * d * d - C_U * d - dU;
        REQUIRE(std::abs(res) < 1e-9 * (1.0 + d * d));
        REQUIRE(d >= 0.0);
    }
    REQUIRE_THROWS_AS(connecting_bound_d(1.0, 0.0, 0.0, 1.0), ConfigError);
    REQUIRE_THROWS_AS(connecting_bound_d(1.0, 1.0, 1.0, 0.0), ConfigError);
}

TEST_CASE("finalize_constants fills the derived members consistently",
          "[bounds]") {
    ConstantsReport r;
    r.C_f = 0.2;
    r.C_U = 2.5;
    r.q = 0.8;
    r.p = 0.3;
    r.l = 0.05;
    r.l_U = 2.0;
    r.U_star_min = 0.0;
    r.U_star_max = 1.0;
    finalize_constants(r);
    REQUIRE(r.z_plus == z_pm(r.p, r.q).first);
    REQUIRE(std::abs(barrier_I(r.z_star, r.p, r.q, r.l) -
                     r.C_f * r.C_U * r.z_plus) < 1e-10);
    REQUIRE(r.d == connecting_bound_d(r.C_U, r.l_U, 0.0, 1.0));
}

#include "umq/sphere_case.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace umq;

namespace {

Vec v3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

Vec cap_point(double s, double theta) {
    double r = std::sqrt(1.0 - s * s);
    return v3(r * std::cos(theta), r * std::sin(theta), s);
}

}  // namespace

TEST_CASE("parameter validation rejects degenerate setups", "[sphere]") {
    SphereParams p = sphere_demo_params();
    p.a = 0.0;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p = sphere_demo_params();
    p.rho = 1.0;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p = sphere_demo_params();
    p.omega = Vec();
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p = sphere_demo_params();
    p.kappa = -0.1;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("spherical force field matches the direct projection", "[sphere]") {
    SphereParams params = sphere_demo_params();
    SystemSpec spec = make_spec(params);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec k = params.k_axis();
    for (int i = 0; i < 25; ++i) {
        double s = 0.6 + 0.4 * u(rng);
        Vec x = cap_point(s, kTwoPi * u(rng));
        Phase phi{Vec(v3(kTwoPi * u(rng), kTwoPi * u(rng), 0.0).head(2))};
        Vec f = spec.f_tangent(phi, x);
        REQUIRE(std::abs(f.dot(x)) < 1e-13);
        // Direct construction: project -c/r^3 + E onto the tangent space.
        Vec c = x + params.a * k;
        Vec amb = -c / std::pow(c.norm(), 3.0) + params.E_at(phi);
        Vec ref = amb - amb.dot(x) * x;
        REQUIRE((f - ref).norm() < 1e-13);
    }
    // The potential gradient vanishes at the pole, and U itself is zero.
    Vec pole = v3(0.0, 0.0, 1.0);
    REQUIRE(spec.U(pole) == 0.0);
    REQUIRE(grad_on_manifold(spec.U, make_point(spec.manifold, pole))
                .comps.norm() < 1e-14);
}

TEST_CASE("analytic force Jacobian agrees with finite differences",
          "[sphere]") {
    SphereParams params = sphere_demo_params();
    params.kappa = 0.01;
    params.B_field = [](const Phase& phi) {
        return Vec(v3(0.0, 0.0, 0.05 * std::cos(phi.angles[0])));
    };
    SystemSpec spec = make_spec(params);
    Phase phi{Vec(v3(0.7, 2.1, 0.0).head(2))};
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10; ++i) {
        Vec x = cap_point(0.6 + 0.4 * u(rng), kTwoPi * u(rng));
        Mat J = spec.f.jacobian(phi, x);
        double h = 1e-6;
        for (int j = 0; j < 3; ++j) {
            Vec e = Vec::Unit(3, j);
            Vec fd = (spec.f.value(phi, Vec(x + h * e)) -
                      spec.f.value(phi, Vec(x - h * e))) /
                     (2.0 * h);
            REQUIRE((J.col(j) - fd).norm() < 1e-8);
        }
    }
}

TEST_CASE("closed-form constants on the demo configuration", "[sphere]") {
    SphereParams params = sphere_demo_params();
    std::string notice;
    ConstantsReport r = closed_form_constants(params, &notice);
    REQUIRE(notice.empty());
    REQUIRE(r.l_U == 2.0);
    REQUIRE(std::abs(r.C_U - 8.0 / 3.0) < 1e-14);
    // C_f = (max ||E|| + 1/(1+2 a rho+a^2)) / 2 with max ||E|| = 0.05 sqrt(2).
    double Cf = 0.5 * (0.05 * std::sqrt(2.0) + 1.0 / 3.2);
    REQUIRE(std::abs(r.C_f - Cf) < 1e-9);
    REQUIRE(r.U_star_min == 0.0);
    REQUIRE(std::abs(r.U_star_max + 2.0 * std::log(0.6)) < 1e-14);
    REQUIRE_FALSE(r.q_degenerate);
    REQUIRE(r.q > 0.0);
    REQUIRE(r.p == 0.0);
    REQUIRE(r.l == 0.0);
    REQUIRE(r.z_star > r.z_plus);

    REQUIRE(std::abs(sphere_lambda_II(0.6) - 0.75) < 1e-15);
    REQUIRE(std::abs(sphere_gradU_normal(0.6) - 8.0 / 3.0) < 1e-15);
}

TEST_CASE("crossed-field closed forms for p and l", "[sphere]") {
    // beta = B/rho = 1, varkappa = kappa/rho = 0.5 gives p = 0.625.
    SphereParams params;
    params.a = 1.0;
    params.rho = 0.6;
    params.kappa = 0.3;
    params.omega = Vec::Ones(1);
    params.B_field = [](const Phase&) { return Vec(v3(0.0, 0.0, 0.6)); };
    ConstantsReport r = closed_form_constants(params);
    REQUIRE(std::abs(r.p - 0.625) < 1e-12);
    // l = (1+a)^2 varkappa rho / ((1+a)^2 E + 1) with E = 0.
    REQUIRE(std::abs(r.l - 4.0 * 0.5 * 0.6) < 1e-12);
    // Without an electric field the drift functional is negative everywhere.
    REQUIRE(r.q_degenerate);
    REQUIRE(r.q == 0.0);
    REQUIRE(r.z_plus == r.p);
}

TEST_CASE("closed forms fall back to the generic optimizers when "
          "inapplicable",
          "[sphere]") {
    SphereParams params = sphere_demo_params();
    params.coulomb_strength = -1.0;
    std::string notice;
    ConstantsReport r = closed_form_constants(params, &notice);
    REQUIRE_FALSE(notice.empty());
    (void)r;

    // Damping above the magnetic scale also disables the crossed-field forms.
    SphereParams heavy;
    heavy.a = 1.0;
    heavy.rho = 0.6;
    heavy.kappa = 0.6;
    heavy.omega = Vec::Ones(1);
    heavy.B_field = [](const Phase&) { return Vec(v3(0.0, 0.0, 0.05)); };
    notice.clear();
    closed_form_constants(heavy, &notice);
    REQUIRE_FALSE(notice.empty());
}

TEST_CASE("convexity excess over curvature vanishes identically on the cap",
          "[sphere]") {
    SystemSpec spec = make_spec(sphere_demo_params());
    Phase phi(Vec::Zero(2));
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        Vec x = cap_point(0.6 + 0.4 * u(rng), kTwoPi * u(rng));
        PointCoefficients c = point_coefficients(spec, phi, x, 1);
        REQUIRE(std::abs(c.mu_U - 2.0 * c.K) < 1e-9);
    }
}

TEST_CASE("monotonicity margin is weakest at the pole", "[sphere]") {
    // lambda_f + <grad U, f>/2 >= a/(1+a)^3 - <E, k> across the cap.
    SphereParams params = sphere_demo_params();
    SystemSpec spec = make_spec(params);
    Vec k = params.k_axis();
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 30; ++i) {
        Vec x = cap_point(0.6 + 0.4 * u(rng), kTwoPi * u(rng));
        Phase phi{Vec(v3(kTwoPi * u(rng), kTwoPi * u(rng), 0.0).head(2))};
        PointCoefficients c = point_coefficients(spec, phi, x, 1);
        double floor = params.a / std::pow(1.0 + params.a, 3.0) -
                       params.E_at(phi).dot(k);
        REQUIRE(c.lambda_f + 0.5 * c.gradU_f >= floor - 1e-9);
    }
}

TEST_CASE("feasibility margins on reference configurations", "[sphere]") {
    // Bare attraction (no fields): the pole margin is exactly 1/8.
    SphereParams bare;
    bare.a = 1.0;
    bare.rho = 0.6;
    bare.omega = Vec::Ones(1);
    auto verdicts = feasibility(bare);
    REQUIRE(verdicts.size() == 3);
    REQUIRE(verdicts[0].name == "feasibility.attraction-dominance");
    REQUIRE(std::abs(verdicts[0].margin - 0.125) < 1e-12);
    for (const auto& v : verdicts) REQUIRE(v.holds);

    // A constant axial electric field beyond the pole margin breaks it.
    SphereParams pushed = bare;
    pushed.E_field = [](const Phase&) { return Vec(v3(0.0, 0.0, 0.2)); };
    auto broken = feasibility(pushed);
    REQUIRE_FALSE(broken[0].holds);
    REQUIRE(broken[0].margin < 0.0);

    // The demo configuration is feasible; without a perturbation the
    // smallness display reduces to the boundary comparison term.
    auto demo = feasibility(sphere_demo_params());
    for (const auto& v : demo) {
        INFO(v.name << " margin " << v.margin);
        REQUIRE(v.holds);
    }
}

TEST_CASE("negative control fails feasibility", "[sphere]") {
    SphereParams params = sphere_demo_params();
    params.coulomb_strength = -1.0;
    auto verdicts = feasibility(params);
    REQUIRE_FALSE(verdicts[0].holds);
}

#include "umq/finder.hpp"
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

}  // namespace

TEST_CASE("escape time is zero outside and censored for a stationary point",
          "[finder]") {
    SphereParams params = sphere_demo_params();
    SystemSpec spec = make_spec(params);
    // Below the cap boundary: already outside the domain.
    REQUIRE(escape_time(spec, 0.0, v3(0.8, 0.0, 0.6), 1.0, 10.0) == 0.0);

    // A force-free copy keeps the pole stationary, so it never exits.
    SystemSpec still = spec;
    still.f.value = [](const Phase&, const Vec& x) {
        return Vec(Vec::Zero(x.size()));
    };
    still.f.jacobian = nullptr;
    REQUIRE(escape_time(still, 0.0, v3(0.0, 0.0, 1.0), 1.0, 12.5) == 12.5);
}

TEST_CASE("hull extraction recovers a synthetic quasiperiodic orbit",
          "[finder]") {
    ManifoldDesc m = ManifoldDesc::unit_sphere(3);
    Vec omega(2);
    omega << 1.0, std::sqrt(2.0);
    auto truth = [&](const Phase& phi) {
        Vec x = v3(0.12 * std::cos(phi.angles[0]) +
                       0.05 * std::sin(phi.angles[1]),
                   0.12 * std::sin(phi.angles[0]), 1.0);
        return Vec(x.normalized());
    };

    Trajectory traj;
    traj.manifold = &m;
    Phase phi0(Vec::Zero(2));
    for (double t = 0.0; t <= 3000.0; t += 0.25) {
        Phase ph = advance(phi0, omega, t);
        traj.times.push_back(t);
        traj.xs.push_back(truth(ph));
    }

    HullFunction hull = hull_extract(traj, omega, phi0, 0.0, 32);
    REQUIRE(hull.fill_factor >= 0.9);
    // Quadratic node fit + Catmull-Rom evaluation: measured ~6e-5 at 32
    // nodes per angle.
    REQUIRE(hull.residual < 2e-4);

    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(0.0, kTwoPi);
    for (int i = 0; i < 50; ++i) {
        Phase ph{Vec(v3(u(rng), u(rng), 0.0).head(2))};
        Vec hx = hull.eval(ph);
        REQUIRE((hx - truth(ph)).norm() < 2e-4);
        REQUIRE(std::abs(hx.norm() - 1.0) < 1e-12);  // projected to the sphere
    }
}

TEST_CASE("hull extraction rejects poor phase coverage", "[finder]") {
    ManifoldDesc m = ManifoldDesc::unit_sphere(3);
    Vec omega(2);
    omega << 1.0, std::sqrt(2.0);
    Trajectory traj;
    traj.manifold = &m;
    for (double t = 0.0; t <= 20.0; t += 0.25) {
        traj.times.push_back(t);
        traj.xs.push_back(v3(0.0, 0.0, 1.0));
    }
    REQUIRE_THROWS_AS(hull_extract(traj, omega, Phase(Vec::Zero(2)), 0.0, 32),
                      NumericalError);
}

TEST_CASE("uniqueness probe reports a trajectory as identical to itself",
          "[finder]") {
    SystemSpec spec = make_spec(sphere_demo_params());
    State st;
    st.x = v3(0.05, -0.02, 1.0).normalized();
    st.v = project_tangent(spec.manifold, st.x, v3(0.02, 0.03, 0.0));
    st.t = 0.0;
    st.phi = Phase(Vec::Zero(2));
    Trajectory tr = integrate_main(spec, st, 30.0);
    UniquenessRecord rec = uniqueness_probe(spec, tr, tr);
    REQUIRE(rec.sup_distance == 0.0);
    REQUIRE_FALSE(rec.distinct_bounded_solutions);
    for (double s : rec.S) REQUIRE(s == 0.0);
}

TEST_CASE("staying-orbit search finds a long-lived seed", "[finder]") {
    SystemSpec spec = make_spec(sphere_demo_params());
    ConstantsReport cr = closed_form_constants(sphere_demo_params());

    SearchBudget budget;
    budget.seeds = 25;
    budget.refine_evals = 25;
    budget.shadow.nm_evals = 25;
    budget.shadow.chunk = 10.0;
    SearchReport rep = waszewski_search(spec, 0.0, 20.0, budget, cr.z_plus);

    REQUIRE(rep.escape_time > 1.0);
    REQUIRE(spec.G(rep.x0) < 0.0);
    REQUIRE(std::abs(rep.x0.norm() - 1.0) < 1e-12);
    REQUIRE(rep.v0.norm() <= cr.z_plus + 1e-12);
    REQUIRE(rep.refinement_trace.size() >= 2);
    // Refinement stages never lose ground.
    for (std::size_t i = 1; i < rep.refinement_trace.size(); ++i)
        REQUIRE(rep.refinement_trace[i] >= rep.refinement_trace[i - 1] - 1e-12);
    if (rep.censored) REQUIRE(rep.staying_candidate);
}

TEST_CASE("staying-orbit search faults when every seed exits immediately",
          "[finder]") {
    // G = 0 everywhere: seeds are sampled (G <= 0) but count as escaped at
    // time zero (G >= 0), which must be reported as a search failure.
    SystemSpec spec = make_spec(sphere_demo_params());
    spec.G.value = [](const Vec&) { return 0.0; };
    spec.G.gradient = [](const Vec&) { return Vec(Vec::Zero(3)); };
    REQUIRE_THROWS_AS(waszewski_search(spec, 0.0, 10.0), NumericalError);
}

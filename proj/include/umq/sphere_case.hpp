#pragma once

// Charged particle on the unit sphere: Coulomb attraction toward a charge on
// the polar axis, quasiperiodic electric and magnetic fields, and linear
// damping. Everything here has a closed form, so this module doubles as the
// oracle suite for the generic machinery: analytic force/perturbation
// evaluators, closed-form constants, feasibility inequalities for the
// existence theorem, and the full end-to-end pipeline.

#include "umq/bounds.hpp"
#include "umq/dichotomy.hpp"
#include "umq/dynamics.hpp"
#include "umq/finder.hpp"
#include "umq/hypotheses.hpp"
#include "umq/system.hpp"

#include <chrono>
#include <memory>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace umq {

/// Cross product for dynamically sized 3-vectors.
inline Vec cross3d(const Vec& u, const Vec& v) {
    Vec w(3);
    w << u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0];
    return w;
}

/// Parameters of the spherical charged-particle system. The pole axis is
/// k = e_z; the attracting charge sits at -a k. The domain is the spherical
/// cap {x in S^2 : <k, x> > rho}.
struct SphereParams {
    double a = 1.0;       // distance of the charge from the sphere center
    double kappa = 0.0;   // damping coefficient
    double rho = 0.6;     // cap parameter, in (0, 1)
    Vec omega;            // frequency vector (defines the torus dimension)
    std::function<Vec(const Phase&)> E_field;  // electric field; null = 0
    std::function<Vec(const Phase&)> B_field;  // magnetic field; null = 0

    // Scale of the Coulomb term; -1 reverses the attraction (negative
    // control: the inward-pointing force hypothesis must then fail).
    double coulomb_strength = 1.0;

    Vec k_axis() const {
        Vec k = Vec::Zero(3);
        k[2] = 1.0;
        return k;
    }

    Vec E_at(const Phase& phi) const {
        return E_field ? E_field(phi) : Vec(Vec::Zero(3));
    }
    Vec B_at(const Phase& phi) const {
        return B_field ? B_field(phi) : Vec(Vec::Zero(3));
    }

    bool has_perturbation() const {
        return kappa != 0.0 || static_cast<bool>(B_field);
    }

    void validate() const {
        if (a == 0.0)
            throw ConfigError("sphere params: a = 0 degenerates the attraction "
                              "geometry (charge at the center)");
        if (a < 0.0) throw ConfigError("sphere params: a must be > 0");
        if (kappa < 0.0) throw ConfigError("sphere params: kappa must be >= 0");
        if (!(rho > 0.0 && rho < 1.0))
            throw ConfigError("sphere params: rho must lie in (0, 1)");
        if (omega.size() == 0)
            throw ConfigError("sphere params: omega must be nonempty");
    }
};

/// Default demo parameters: a = 1, rho = 0.6, two-frequency electric field of
/// amplitude 0.05, no magnetic field, no damping.
inline SphereParams sphere_demo_params() {
    SphereParams p;
    p.a = 1.0;
    p.rho = 0.6;
    p.omega = Vec(2);
    p.omega << 1.0, std::sqrt(2.0);
    p.E_field = [](const Phase& phi) {
        Vec e(3);
        e << 0.05 * std::cos(phi.angles[0]), 0.05 * std::sin(phi.angles[1]),
            0.0;
        return e;
    };
    return p;
}

/// Assemble the generic problem instance with analytic derivative evaluators.
inline SystemSpec make_spec(const SphereParams& params) {
    params.validate();
    const Vec k = params.k_axis();
    const double a = params.a;
    const double cs = params.coulomb_strength;

    SystemSpec spec;
    spec.manifold = ManifoldDesc::unit_sphere(3);
    spec.omega = params.omega;

    // Tangential force: projection of the Coulomb pull toward -a k plus the
    // electric field.
    spec.f.value = [k, a, cs, params](const Phase& phi, const Vec& x) {
        Vec c = x + a * k;
        double r = c.norm();
        Vec h = cs * c / (r * r * r);
        Vec E = params.E_at(phi);
        return Vec(-h + E + (h - E).dot(x) * x);
    };
    spec.f.jacobian = [k, a, cs, params](const Phase& phi, const Vec& x) {
        Vec c = x + a * k;
        double r = c.norm();
        Mat Dh = cs * (Mat::Identity(3, 3) / (r * r * r) -
                       3.0 * c * c.transpose() / std::pow(r, 5));
        Vec h = cs * c / (r * r * r);
        Vec E = params.E_at(phi);
        Mat J = -Dh + x * (x.transpose() * Dh + (h - E).transpose()) +
                (h - E).dot(x) * Mat::Identity(3, 3);
        return J;
    };

    if (params.has_perturbation()) {
        PerturbationField P;
        double kap = params.kappa;
        P.apply = [params, kap](const Phase& phi, const Vec& x, const Vec& xi) {
            Vec B = params.B_at(phi);
            Vec w = cross3d(xi, B);
            return Vec(w - w.dot(x) * x - kap * xi);
        };
        P.nabla = [params](const Phase& phi, const Vec& x, const Vec& eta,
                           const Vec& xi) {
            Vec B = params.B_at(phi);
            return Vec(-xi.dot(eta) * cross3d(x, B) - cross3d(xi, B).dot(x) * eta);
        };
        spec.P = std::move(P);
    }

    // U(x) = -ln <k,x>^2; smooth on the open cap <k,x> > 0.
    spec.U.value = [k](const Vec& x) {
        double u = k.dot(x);
        return -std::log(u * u);
    };
    spec.U.gradient = [k](const Vec& x) { return Vec(-2.0 / k.dot(x) * k); };
    spec.U.hessian = [k](const Vec& x) {
        double u = k.dot(x);
        return Mat(2.0 / (u * u) * k * k.transpose());
    };

    // G(x) = rho - <k,x>; the cap is {G < 0}.
    double rho = params.rho;
    spec.G.value = [k, rho](const Vec& x) { return rho - k.dot(x); };
    spec.G.gradient = [k](const Vec&) { return Vec(-k); };
    spec.G.hessian = [](const Vec&) { return Mat(Mat::Zero(3, 3)); };

    // Ambient box enclosing the cap, for rejection sampling.
    double s = std::sqrt(1.0 - rho * rho);
    spec.box_lo = Vec(3);
    spec.box_lo << -s, -s, rho;
    spec.box_hi = Vec(3);
    spec.box_hi << s, s, 1.0;
    return spec;
}

namespace sphere_detail {

/// Torus statistics of the fields: max ||E||, max <E,k>, max |<E,k>|,
/// max ||B||, and max non-axial component of B.
struct FieldStats {
    double E_max = 0.0;
    double E_k_max = -std::numeric_limits<double>::infinity();
    double E_k_abs = 0.0;
    double B_max = 0.0;
    double B_offaxis = 0.0;
};

inline FieldStats field_stats(const SphereParams& params,
                              int torus_points = 48) {
    FieldStats st;
    const Vec k = params.k_axis();
    auto scan = [&](const Phase& phi) {
        Vec E = params.E_at(phi);
        Vec B = params.B_at(phi);
        st.E_max = std::max(st.E_max, E.norm());
        st.E_k_max = std::max(st.E_k_max, E.dot(k));
        st.E_k_abs = std::max(st.E_k_abs, std::abs(E.dot(k)));
        st.B_max = std::max(st.B_max, B.norm());
        st.B_offaxis = std::max(st.B_offaxis, (B - B.dot(k) * k).norm());
    };
    for (const Phase& phi :
         detail::torus_grid(static_cast<int>(params.omega.size()),
                            torus_points))
        scan(phi);
    // Local refinement of the two maxima that enter the closed forms.
    auto refine = [&](const std::function<double(const Phase&)>& g,
                      double& slot) {
        auto obj = [&](const Vec& ang) { return -g(Phase(ang)); };
        auto res = nelder_mead(obj, Vec::Zero(params.omega.size()), 0.3, 200);
        slot = std::max(slot, -res.value);
    };
    refine([&](const Phase& p) { return params.E_at(p).norm(); }, st.E_max);
    refine([&](const Phase& p) { return params.E_at(p).dot(k); }, st.E_k_max);
    refine([&](const Phase& p) { return params.B_at(p).norm(); }, st.B_max);
    return st;
}

/// The drift functional whose positive part bounds q^2:
///   M(s, phi) = -a(1-s^2) / (s (1+2sa+a^2)^{3/2})
///             + (1-s^2) E_k(phi)/s + sqrt(1-s^2) ||E_perp(phi)||,
/// where s = <k, x> and E_perp is the component of E orthogonal to k.
inline double drift_M(double s, double a, double E_k, double E_perp) {
    double s2 = 1.0 - s * s;
    double r3 = std::pow(1.0 + 2.0 * s * a + a * a, 1.5);
    return -a * s2 / (s * r3) + s2 * E_k / s + std::sqrt(s2) * E_perp;
}

/// Maximize drift_M over s in [rho, 1] for fixed field values.
inline std::pair<double, double> drift_M_max_s(double rho, double a,
                                               double E_k, double E_perp) {
    auto neg = [&](double s) { return -drift_M(s, a, E_k, E_perp); };
    double s = golden_min(neg, rho, 1.0, 1e-12);
    double best_s = s, best = drift_M(s, a, E_k, E_perp);
    for (double se : {rho, 1.0}) {
        double v = drift_M(se, a, E_k, E_perp);
        if (v > best) {
            best = v;
            best_s = se;
        }
    }
    return {best, best_s};
}

}  // namespace sphere_detail

/// Closed-form constants of the spherical system. Valid displays:
///   lambda_U = 2 on the whole cap;  C_U = 2 sqrt(1-rho^2)/rho;
///   C_f = (E + (1+2 a rho+a^2)^{-1}) / 2;
///   q^2 = max of the drift functional M(s, phi);
/// and, in the crossed-field mode (E normal to k, B parallel to k,
/// kappa/rho <= max||B||/rho):
///   p = (beta^2 + kappa_r^2) / (2 beta),
///   l = (1+a)^2 kappa_r rho / ((1+a)^2 E + 1).
/// Outside the crossed-field regime the generic optimizers are used instead
/// and `notice` explains why.
inline ConstantsReport closed_form_constants(const SphereParams& params,
                                             std::string* notice = nullptr,
                                             double root_tol = 1e-12) {
    params.validate();
    if (notice) notice->clear();
    const double a = params.a;
    const double rho = params.rho;
    auto st = sphere_detail::field_stats(params);

    const double beta = st.B_max / rho;
    const double varkappa = params.kappa / rho;
    const double axis_tol = 1e-10 * (1.0 + st.B_max + st.E_max);
    bool crossed_ok = st.E_k_abs <= axis_tol && st.B_offaxis <= axis_tol;
    bool p_l_closed =
        !params.has_perturbation() || (crossed_ok && varkappa <= beta);

    if (params.coulomb_strength != 1.0 || !p_l_closed) {
        std::string why = params.coulomb_strength != 1.0
                              ? "nonstandard attraction strength"
                              : (crossed_ok ? "damping exceeds the magnetic "
                                              "scale (kappa/rho > beta)"
                                            : "fields are not in the crossed "
                                              "configuration");
        if (notice)
            *notice = "closed forms inapplicable (" + why +
                      "); constants from the generic optimizers";
        CheckOptions opts;
        return check_all(make_spec(params), opts).constants;
    }

    ConstantsReport r;
    r.l_U = 2.0;
    r.C_U = 2.0 * std::sqrt(1.0 - rho * rho) / rho;
    r.C_f = 0.5 * (st.E_max + 1.0 / (1.0 + 2.0 * a * rho + a * a));
    r.U_star_min = 0.0;              // U = -ln s^2 at the pole s = 1
    r.U_star_max = -2.0 * std::log(rho);

    // q^2 = max over the torus and s in [rho, 1] of the drift functional.
    const Vec k = params.k_axis();
    const int kdim = static_cast<int>(params.omega.size());
    double q2 = -std::numeric_limits<double>::infinity();
    Phase q_phi;
    double q_s = 1.0, q_Eperp = 0.0;
    Vec q_Ep = Vec::Zero(3);
    auto eval_phi = [&](const Phase& phi) {
        Vec E = params.E_at(phi);
        double E_k = E.dot(k);
        Vec Ep = E - E_k * k;
        auto [v, s] = sphere_detail::drift_M_max_s(rho, a, E_k, Ep.norm());
        if (v > q2) {
            q2 = v;
            q_phi = phi;
            q_s = s;
            q_Eperp = Ep.norm();
            q_Ep = Ep;
        }
        return v;
    };
    for (const Phase& phi : detail::torus_grid(kdim, 48)) eval_phi(phi);
    {
        auto obj = [&](const Vec& ang) {
            Vec E = params.E_at(Phase(ang));
            double E_k = E.dot(k);
            double Eperp = (E - E_k * k).norm();
            return -sphere_detail::drift_M_max_s(rho, a, E_k, Eperp).first;
        };
        auto res = nelder_mead(obj, q_phi.angles, 0.2, 300);
        if (-res.value > q2) eval_phi(Phase(res.x));
    }
    r.q_degenerate = q2 <= 0.0;
    r.q = r.q_degenerate ? 0.0 : std::sqrt(q2);
    if (!r.q_degenerate) {
        // Witness point: polar angle from s, azimuth opposing the transverse
        // field (the transverse term is maximized against E_perp).
        Vec w = q_Eperp > 0.0 ? Vec(-q_Ep / q_Eperp) : Vec(Vec::Unit(3, 0));
        Vec x = q_s * k + std::sqrt(std::max(0.0, 1.0 - q_s * q_s)) * w;
        r.witnesses["q"] = {q_phi, x};
    }

    if (params.has_perturbation()) {
        r.p = (beta * beta + varkappa * varkappa) / (2.0 * beta);
        r.l = (1.0 + a) * (1.0 + a) * varkappa * rho /
              ((1.0 + a) * (1.0 + a) * st.E_max + 1.0);
    }
    r.grid_meta.torus_points = 48;
    r.grid_meta.domain_samples = 0;  // closed forms; no ambient sampling
    finalize_constants(r, root_tol);
    return r;
}

/// Minimal boundary curvature of the cap and the normal derivative of U on
/// the cap boundary, both closed-form.
inline double sphere_lambda_II(double rho) {
    return rho / std::sqrt(1.0 - rho * rho);
}
inline double sphere_gradU_normal(double rho) {
    return 2.0 * std::sqrt(1.0 - rho * rho) / rho;
}

/// Displayed feasibility inequalities of the spherical existence theorem,
/// each with its margin:
///   1. attraction dominance:  a/(1+a)^3 - <E(phi), k> > 0 for all phi;
///   2. boundary strength:     a/(1+2 rho a+a^2)^{3/2}
///                               > E rho/sqrt(1-rho^2) + (b^2 rho^2+k^2) rho/2;
///   3. combined smallness:    a/(1+a)^3 > max{ rho z_* ((2b^2+k^2)/b
///                               + rho (b^2+k^2)/4),
///                               rho E/sqrt(1-rho^2) + rho (b^2 rho^2+k^2)/2 },
/// where b, k abbreviate beta, varkappa. Inequality 3 first tries the cheap
/// analytic upper estimate of rho z_* and falls back to the computed z_*.
inline std::vector<HypothesisVerdict> feasibility(const SphereParams& params) {
    params.validate();
    const double a = params.a;
    const double rho = params.rho;
    const double sr = std::sqrt(1.0 - rho * rho);
    auto st = sphere_detail::field_stats(params);
    const double beta = st.B_max / rho;
    const double vk = params.kappa / rho;
    const double E = st.E_max;
    const double cs = params.coulomb_strength;

    std::vector<HypothesisVerdict> out;
    auto push = [&](const std::string& name, double margin) {
        HypothesisVerdict v;
        v.name = name;
        v.margin = margin;
        v.holds = margin > 0.0;
        v.witness_x = Vec::Zero(3);
        out.push_back(std::move(v));
    };

    double pole = cs * a / std::pow(1.0 + a, 3.0);
    push("feasibility.attraction-dominance", pole - st.E_k_max);

    double bnd = cs * a / std::pow(1.0 + 2.0 * rho * a + a * a, 1.5) -
                 E * rho / sr -
                 0.5 * rho * (beta * beta * rho * rho + vk * vk);
    push("feasibility.boundary-strength", bnd);

    // Combined smallness display.
    double term2 = rho * E / sr + 0.5 * rho * (beta * beta * rho * rho + vk * vk);
    double term1 = 0.0;
    double rho_zstar = 0.0;
    if (beta > 0.0 || vk > 0.0) {
        ConstantsReport cr = closed_form_constants(params);
        double zp = cr.z_plus;
        bool cheap_ok = false;
        if (cr.q > 0.0 && cr.l < zp / (cr.q * cr.q)) {
            // Analytic upper estimate of rho z_*.
            double cheap = rho * zp +
                           std::sqrt(rho * zp / cr.q) * std::pow(1.0 - rho * rho, 0.25) *
                               (1.0 + cr.l * zp) *
                               std::sqrt(E + 1.0 / (1.0 + a * a));
            rho_zstar = cheap;
            double t1 = beta > 0.0
                            ? cheap * ((2.0 * beta * beta + vk * vk) / beta +
                                       0.25 * rho * (beta * beta + vk * vk))
                            : std::numeric_limits<double>::infinity();
            cheap_ok = pole - std::max(t1, term2) > 0.0;
            if (cheap_ok) term1 = t1;
        }
        if (!cheap_ok) {
            rho_zstar = rho * cr.z_star;
            term1 = beta > 0.0
                        ? rho_zstar * ((2.0 * beta * beta + vk * vk) / beta +
                                       0.25 * rho * (beta * beta + vk * vk))
                        : (vk > 0.0 ? std::numeric_limits<double>::infinity()
                                    : 0.0);
        }
    }
    push("feasibility.combined-smallness", pole - std::max(term1, term2));
    return out;
}

/// Knobs of the end-to-end pipeline.
struct CaseStudyBudget {
    double horizon = 5000.0;  // certification window [0, horizon]
    double burn = 60.0;       // initial transient before the window
    double window_tol = 1e-4; // burn-doubling reproduction tolerance
    int hull_grid = 64;
    double gap_tol = 0.01;
    double renorm_dt = 1.0;
    double frame_dt = 0.1;    // variational-frame sampling step
    CheckOptions check;
    SearchBudget search;
};

struct StageRecord {
    std::string name;
    bool ran = false;
    bool ok = false;
    double seconds = 0.0;
    std::string message;
};

struct CaseStudyReport {
    // The assembled problem instance, owned by the report: the trajectory
    // and hull below hold manifold pointers into it, so it must outlive
    // them (heap allocation keeps the pointers valid across moves).
    std::shared_ptr<SystemSpec> spec;

    std::vector<HypothesisVerdict> feasibility;
    bool feasible = false;

    CheckResult hypotheses;
    bool hypotheses_ran = false;

    ConstantsReport closed_form;
    std::string closed_form_notice;
    // name -> (generic-optimizer value, closed-form value)
    std::map<std::string, std::pair<double, double>> cross_validation;

    SearchReport search;
    bool search_ran = false;

    Trajectory trajectory;
    bool solution_found = false;
    double sup_speed = 0.0, speed_bound = 0.0;
    double sup_vU = 0.0, vU_bound = 0.0;
    double min_axis_height = 0.0;  // min <k, x> along the window
    bool confined = false, speed_ok = false, vU_ok = false;
    double window_diff = 0.0;      // burn-doubling reproduction distance

    HullFunction hull;
    bool hull_ran = false;

    DichotomyReport dichotomy;
    bool dichotomy_ran = false;

    std::vector<StageRecord> stages;
    bool verdict = false;
    int exit_code = 2;  // 0 all true; 2 some verdict false; 3 numerics failed
};

/// Full pipeline: spec -> hypotheses -> bounded solution -> hull ->
/// variational frame -> hyperbolicity certificate. Stage failures are
/// recorded by name; later stages run where they remain meaningful.
inline CaseStudyReport run_case_study(const SphereParams& params,
                                      const CaseStudyBudget& budget = {}) {
    using clock = std::chrono::steady_clock;
    CaseStudyReport rep;
    rep.spec = std::make_shared<SystemSpec>(make_spec(params));
    SystemSpec& spec = *rep.spec;

    bool numerics_failed = false;
    auto stage = [&](const std::string& name,
                     const std::function<std::string()>& body) {
        StageRecord sr;
        sr.name = name;
        sr.ran = true;
        auto t0 = clock::now();
        try {
            sr.message = body();
            sr.ok = sr.message.empty();
        } catch (const NumericalError& e) {
            sr.ok = false;
            sr.message = e.what();
            numerics_failed = true;
        }
        sr.seconds =
            std::chrono::duration<double>(clock::now() - t0).count();
        rep.stages.push_back(sr);
        return sr.ok;
    };

    // Feasibility displays. A failure stops the constructive stages but the
    // diagnostic stages (hypothesis margins, short staying-orbit probe) still
    // run so the report explains what broke.
    stage("feasibility", [&] {
        rep.feasibility = feasibility(params);
        rep.feasible = true;
        for (const auto& v : rep.feasibility) rep.feasible &= v.holds;
        return rep.feasible ? std::string{}
                            : std::string("a feasibility display fails");
    });

    stage("closed-form-constants", [&] {
        rep.closed_form =
            closed_form_constants(params, &rep.closed_form_notice);
        return std::string{};
    });

    bool hyp_ok = stage("hypotheses", [&] {
        CheckOptions opts = budget.check;
        rep.hypotheses = check_all(spec, opts);
        rep.hypotheses_ran = true;

        const ConstantsReport& g = rep.hypotheses.constants;
        const ConstantsReport& c = rep.closed_form;
        rep.cross_validation["C_f"] = {g.C_f, c.C_f};
        rep.cross_validation["C_U"] = {g.C_U, c.C_U};
        rep.cross_validation["q"] = {g.q, c.q};
        rep.cross_validation["p"] = {g.p, c.p};
        rep.cross_validation["l"] = {g.l, c.l};
        rep.cross_validation["l_U"] = {g.l_U, c.l_U};
        rep.cross_validation["z_plus"] = {g.z_plus, c.z_plus};
        rep.cross_validation["z_star"] = {g.z_star, c.z_star};
        rep.cross_validation["d"] = {g.d, c.d};
        return rep.hypotheses.all_hold()
                   ? std::string{}
                   : std::string("a structural hypothesis fails");
    });

    // Velocity bounds used downstream; prefer the closed forms when the
    // hypotheses sweep did not complete.
    const ConstantsReport& cr =
        rep.hypotheses_ran ? rep.hypotheses.constants : rep.closed_form;

    if (rep.feasible && hyp_ok) {
        stage("solve", [&] {
            rep.trajectory = bounded_solution(
                spec, 0.0, budget.horizon, budget.burn, budget.window_tol,
                budget.search, cr.z_plus, 3, &rep.window_diff);
            rep.solution_found = true;
            rep.search_ran = true;
            rep.search.x0 = rep.trajectory.xs.front();
            rep.search.v0 = rep.trajectory.vs.front();
            rep.search.escape_time = budget.horizon;
            rep.search.censored = true;
            rep.search.staying_candidate = true;
            return std::string{};
        });
    } else {
        // Diagnostic probe. The staying-orbit search is only meaningful
        // under the structural hypotheses, so this stage always reports
        // failure; the probe result explains how the search breaks down.
        stage("solve", [&] {
            rep.search_ran = true;
            double probe = std::min(budget.horizon, 2.0 * budget.search.shadow.guard);
            rep.search = waszewski_search(spec, 0.0, probe, budget.search,
                                          cr.z_plus);
            return rep.search.staying_candidate
                       ? std::string("search failure: a staying candidate "
                                     "exists but cannot be certified (a "
                                     "prerequisite stage fails)")
                       : std::string("search failure: no staying-orbit "
                                     "candidate (best escape " +
                                     std::to_string(rep.search.escape_time) +
                                     ")");
        });
    }

    if (rep.solution_found) {
        stage("monitors", [&] {
            const Trajectory& tr = rep.trajectory;
            const Vec k = params.k_axis();
            rep.sup_speed = 0.0;
            rep.sup_vU = 0.0;
            rep.min_axis_height = 1.0;
            for (std::size_t i = 0; i < tr.size(); ++i) {
                rep.sup_speed = std::max(rep.sup_speed, tr.mon_speed[i]);
                rep.sup_vU = std::max(rep.sup_vU, std::abs(tr.mon_vU[i]));
                rep.min_axis_height =
                    std::min(rep.min_axis_height, k.dot(tr.xs[i]));
            }
            rep.speed_bound = cr.z_star;
            rep.vU_bound = cr.C_U * cr.z_plus;
            rep.confined = rep.min_axis_height > params.rho;
            rep.speed_ok = rep.sup_speed <= rep.speed_bound + 1e-9;
            rep.vU_ok = rep.sup_vU <= rep.vU_bound + 1e-6;
            return (rep.confined && rep.speed_ok && rep.vU_ok)
                       ? std::string{}
                       : std::string("a trajectory monitor violates its bound");
        });

        stage("hull", [&] {
            rep.hull = hull_extract(rep.trajectory, spec.omega,
                                    Phase(Vec::Zero(spec.torus_dim())), 0.0,
                                    budget.hull_grid);
            rep.hull_ran = true;
            return std::string{};
        });

        stage("dichotomy", [&] {
            VariationalFrame frame = variational_frame(
                spec, rep.trajectory, Phase(Vec::Zero(spec.torus_dim())), 0.0,
                budget.frame_dt);
            rep.dichotomy =
                certify(spec, frame, cr.z_star, budget.gap_tol,
                        budget.renorm_dt,
                        rep.hypotheses_ran ? &rep.hypotheses : nullptr,
                        budget.check);
            rep.dichotomy_ran = true;
            return rep.dichotomy.verdict
                       ? std::string{}
                       : std::string("hyperbolicity certificate failed");
        });
    }

    rep.verdict = true;
    for (const auto& sr : rep.stages) rep.verdict &= sr.ok;
    rep.verdict &= rep.solution_found && rep.hull_ran && rep.dichotomy_ran;
    rep.exit_code = rep.verdict ? 0 : (numerics_failed ? 3 : 2);
    return rep;
}

}  // namespace umq

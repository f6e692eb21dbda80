#pragma once

// Grid-based verification (with local refinement) of the structural
// hypotheses of the theory: convexity of U, inward drift, boundary push-out
// and convexity, U-monotonicity, and the perturbation thresholds. Also the
// global extremizers feeding the scalar-constants report.

#include "umq/bounds.hpp"
#include "umq/geometry.hpp"
#include "umq/system.hpp"
#include "umq/util.hpp"

#include <limits>
#include <random>
#include <string>
#include <vector>

namespace umq {

/// All pointwise coefficients entering the hypotheses at one (phi, x).
/// Torus-maximized members (M_f, Lambda_P) maximize over phi internally.
struct PointCoefficients {
    double M_f = 0.0;       // max_phi ||f(phi, x)||
    double Lambda_P = 0.0;  // max_phi max eig of sym P
    double lambda_U = 0.0;  // min eig of H_U on the tangent space
    double mu_U = 0.0;      // min of <H_U e,e> - <grad U, e>^2 / 2
    double lambda_f = 0.0;  // min eig of sym covariant Df at the given phi
    double M_P = 0.0;       // operator norm of P at the given phi
    double M_U = 0.0;       // ||grad U||
    double M_PU = 0.0;      // ||P* grad U|| at the given phi
    double L_P = 0.0;       // max |<nabla P (eta, xi), eta>| at the given phi
    double K = 0.0;         // positive-part sectional curvature bound
    double gradU_f = 0.0;   // <grad U, f> at the given phi
};

/// Extremes of a symmetric ambient bilinear form restricted to the tangent
/// space at x.
inline std::pair<double, double> tangent_form_extremes(const Mat& form,
                                                       const MPoint& x) {
    if ((form - form.transpose()).cwiseAbs().maxCoeff() >
        1e-10 * std::max(1.0, form.cwiseAbs().maxCoeff()))
        throw ConfigError("tangent_form_extremes: form must be symmetric");
    Mat T = tangent_basis(*x.manifold, x.coords);
    Mat R = T.transpose() * form * T;
    R = symmetrize(R);
    Eigen::SelfAdjointEigenSolver<Mat> es(R);
    return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

namespace detail {

/// Uniform torus grid with `n` points per angle.
inline std::vector<Phase> torus_grid(int k, int n) {
    long total = 1;
    for (int i = 0; i < k; ++i) total *= n;
    std::vector<Phase> out;
    out.reserve(static_cast<std::size_t>(total));
    std::vector<int> idx(k, 0);
    for (long c = 0; c < total; ++c) {
        Vec phi(k);
        for (int i = 0; i < k; ++i) phi[i] = idx[i] * (kTwoPi / n);
        out.emplace_back(phi);
        for (int i = 0; i < k; ++i) {
            if (++idx[i] < n) break;
            idx[i] = 0;
        }
    }
    return out;
}

/// P as a matrix in the tangent-basis coordinates.
inline Mat P_matrix(const SystemSpec& spec, const Phase& phi, const Vec& x,
                    const Mat& T) {
    const int md = static_cast<int>(T.cols());
    Mat Pm(md, md);
    for (int j = 0; j < md; ++j)
        Pm.col(j) = T.transpose() * spec.P_apply(phi, x, T.col(j));
    return Pm;
}

/// L_P(phi, x) = max over unit eta of || xi -> <nabla P(eta, xi), eta> ||.
/// The inner max over xi is exact (norm of a linear functional); the outer
/// max over eta uses an angular scan (m = 2) or simplex ascent.
inline double L_P_max(const SystemSpec& spec, const Phase& phi, const Vec& x,
                      const Mat& T) {
    if (!spec.P) return 0.0;
    const int md = static_cast<int>(T.cols());
    // <nabla P(eta, xi), eta> is linear in the differentiation direction and
    // in the argument, so on the basis it is a family of quadratic forms
    // G_j in eta: precompute them with md^2 evaluations, then the scan over
    // eta costs no further tensor evaluations.
    std::vector<Mat> G(md, Mat(md, md));
    for (int a = 0; a < md; ++a)
        for (int j = 0; j < md; ++j) {
            Vec w = spec.P_nabla(phi, x, T.col(a), T.col(j));
            for (int b = 0; b < md; ++b) G[j](a, b) = w.dot(T.col(b));
        }
    for (int j = 0; j < md; ++j) G[j] = symmetrize(G[j]);
    auto value = [&](const Vec& eta_c) {
        double s = 0.0;
        for (int j = 0; j < md; ++j) {
            double w = eta_c.dot(G[j] * eta_c);
            s += w * w;
        }
        return std::sqrt(s);
    };
    if (md == 1) return value(Vec::Ones(1));
    if (md == 2) {
        auto at_angle = [&](double th) {
            Vec e(2);
            e << std::cos(th), std::sin(th);
            return value(e);
        };
        // The objective has period pi in the angle (even in eta).
        double best = 0.0, best_th = 0.0;
        const int n = 24;
        for (int i = 0; i < n; ++i) {
            double th = kPi * i / n;
            double v = at_angle(th);
            if (v > best) {
                best = v;
                best_th = th;
            }
        }
        double th = golden_min([&](double t) { return -at_angle(t); },
                               best_th - kPi / n, best_th + kPi / n, 1e-10);
        return std::max(best, at_angle(th));
    }
    // Generic dimension: simplex ascent from coordinate directions.
    double best = 0.0;
    for (int i = 0; i < md; ++i) {
        Vec e0 = Vec::Unit(md, i);
        auto res = nelder_mead(
            [&](const Vec& u) { return -value(u); }, e0, 0.5, 200, 1e-10,
            [](const Vec& u) { return Vec(u.normalized()); });
        best = std::max(best, -res.value);
    }
    return best;
}

}  // namespace detail

/// Pointwise coefficients at (phi, x); torus maxima on a grid of
/// `torus_points` per angle refined by simplex ascent.
inline PointCoefficients point_coefficients(const SystemSpec& spec,
                                            const Phase& phi, const Vec& x,
                                            int torus_points = 24) {
    const ManifoldDesc& m = spec.manifold;
    MPoint pt{x, &m};
    Mat T = tangent_basis(m, x);
    const int md = m.dim();

    PointCoefficients c;
    Mat HU = hess_form_matrix(spec.U, pt);
    Vec gU = grad_on_manifold(spec.U, pt).comps;
    {
        Mat R = T.transpose() * HU * T;
        R = symmetrize(R);
        Eigen::SelfAdjointEigenSolver<Mat> es(R);
        c.lambda_U = es.eigenvalues().minCoeff();
        Vec gt = T.transpose() * gU;
        Mat Rm = R - 0.5 * gt * gt.transpose();
        Eigen::SelfAdjointEigenSolver<Mat> es2(Rm);
        c.mu_U = es2.eigenvalues().minCoeff();
    }
    c.M_U = gU.norm();
    c.K = curvature_bound(pt);

    // phi-dependent coefficients at the supplied phase.
    {
        Vec f = spec.f_tangent(phi, x);
        c.gradU_f = gU.dot(f);
        Mat Df = spec.f.jac(phi, x, std::max(1.0, x.norm()));
        Mat Fm(md, md);
        for (int j = 0; j < md; ++j)
            Fm.col(j) = T.transpose() * project_tangent(m, x, Df * T.col(j));
        Fm = symmetrize(Fm);
        Eigen::SelfAdjointEigenSolver<Mat> es(Fm);
        c.lambda_f = es.eigenvalues().minCoeff();
        if (spec.P) {
            Mat Pm = detail::P_matrix(spec, phi, x, T);
            c.M_P = Pm.jacobiSvd().singularValues().maxCoeff();
            c.M_PU = (Pm.transpose() * (T.transpose() * gU)).norm();
            c.L_P = detail::L_P_max(spec, phi, x, T);
        }
    }

    // Torus maxima with local refinement.
    const int k = spec.torus_dim();
    auto f_norm = [&](const Vec& ang) {
        return spec.f_tangent(Phase(ang), x).norm();
    };
    auto lp_eig = [&](const Vec& ang) {
        if (!spec.P) return 0.0;
        Mat Pm = detail::P_matrix(spec, Phase(ang), x, T);
        Pm = symmetrize(Pm);
        Eigen::SelfAdjointEigenSolver<Mat> es(Pm);
        return es.eigenvalues().maxCoeff();
    };
    auto torus_max = [&](const std::function<double(const Vec&)>& g) {
        double best = -std::numeric_limits<double>::infinity();
        Vec best_ang = Vec::Zero(k);
        for (const Phase& ph : detail::torus_grid(k, torus_points)) {
            double v = g(ph.angles);
            if (v > best) {
                best = v;
                best_ang = ph.angles;
            }
        }
        auto res = nelder_mead([&](const Vec& u) { return -g(u); }, best_ang,
                               kPi / torus_points, 200, 1e-12);
        return std::max(best, -res.value);
    };
    c.M_f = torus_max(f_norm);
    c.Lambda_P = spec.P ? torus_max(lp_eig) : 0.0;
    return c;
}

struct HypothesisVerdict {
    std::string name;
    bool holds = false;
    double margin = 0.0;  // worst-case slack; positive = condition satisfied
    double slack = 0.0;   // non-strict conditions: holds <=> margin > -slack
    Phase witness_phi;
    Vec witness_x;
    GridMeta grid_meta;
};

struct CheckOptions {
    int torus_points = 24;
    int domain_samples = 2000;
    int boundary_samples = 400;
    int refine_starts = 5;
    int refine_evals = 250;
    std::uint64_t seed = 12345;
    unsigned threads = 1;
    double z_star_hint = -1.0;  // < 0: computed from the constants
    bool q_from_CfCU = false;   // alternative q = sqrt(C_f C_U)
    double mu_slack = 1e-9;     // non-strict convexity margin slack
    double root_tol = 1e-12;
};

struct CheckResult {
    std::vector<HypothesisVerdict> verdicts;
    ConstantsReport constants;

    const HypothesisVerdict& verdict(const std::string& name) const {
        for (const auto& v : verdicts)
            if (v.name == name) return v;
        throw ConfigError("unknown hypothesis verdict: " + name);
    }
    bool all_hold() const {
        for (const auto& v : verdicts)
            if (!v.holds) return false;
        return true;
    }
};

namespace detail {

/// Project onto the manifold and pull back into cl(D) = {G <= 0} if needed
/// (Newton along the manifold gradient of G).
inline Vec pull_into_domain(const SystemSpec& spec, Vec x) {
    const ManifoldDesc& m = spec.manifold;
    x = project_to_manifold(m, x);
    for (int it = 0; it < 25 && spec.G(x) > 0.0; ++it) {
        Vec g = project_tangent(m, x, spec.G.grad(x));
        double g2 = g.squaredNorm();
        if (g2 < m.singular_tol * m.singular_tol) break;
        x = project_to_manifold(m, x - (spec.G(x) / g2) * g);
    }
    return x;
}

/// Move a manifold point onto the boundary {G = 0} (Newton along grad_M G).
inline Vec project_to_boundary(const SystemSpec& spec, Vec x,
                               double tol = 1e-12) {
    const ManifoldDesc& m = spec.manifold;
    x = project_to_manifold(m, x);
    for (int it = 0; it < 50; ++it) {
        double gv = spec.G(x);
        if (std::abs(gv) < tol) return x;
        Vec g = project_tangent(m, x, spec.G.grad(x));
        double g2 = g.squaredNorm();
        if (g2 < m.singular_tol * m.singular_tol)
            throw NumericalError("boundary projection: grad_M G vanishes");
        x = project_to_manifold(m, x - (gv / g2) * g);
    }
    throw NumericalError("boundary projection did not converge");
}

/// Deterministic rejection sample of cl(D) on the manifold.
inline std::vector<Vec> sample_domain(const SystemSpec& spec, int count,
                                      std::uint64_t seed) {
    if (spec.box_lo.size() != spec.manifold.ambient_dim ||
        spec.box_hi.size() != spec.manifold.ambient_dim)
        throw ConfigError("spec lacks a sampling box enclosing cl(D)");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Vec> pts;
    pts.reserve(static_cast<std::size_t>(count));
    const int n = spec.manifold.ambient_dim;
    long guard = 0;
    while (static_cast<int>(pts.size()) < count) {
        if (++guard > 2000L * count)
            throw NumericalError("domain sampling: rejection rate too high");
        Vec x(n);
        for (int i = 0; i < n; ++i)
            x[i] = spec.box_lo[i] + u(rng) * (spec.box_hi[i] - spec.box_lo[i]);
        x = project_to_manifold(spec.manifold, x);
        if (spec.G(x) <= 0.0) pts.push_back(x);
    }
    return pts;
}

/// Tracked extremum with its witness.
struct Extremum {
    double value;
    Phase phi;
    Vec x;
    explicit Extremum(double init) : value(init) {}
    void take_min(double v, const Phase& p, const Vec& xx) {
        if (v < value) {
            value = v;
            phi = p;
            x = xx;
        }
    }
    void take_max(double v, const Phase& p, const Vec& xx) {
        if (v > value) {
            value = v;
            phi = p;
            x = xx;
        }
    }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Local simplex refinement of an extremum of g(phi, x) over the torus and a
/// feasible set reached through `pull` (domain or boundary projection).
inline void refine_extremum(const SystemSpec& spec,
                            const std::function<double(const Phase&, const Vec&)>& g,
                            bool maximize, Extremum& ext,
                            const std::function<Vec(const SystemSpec&, Vec)>& pull,
                            const CheckOptions& opts) {
    if (!std::isfinite(ext.value)) return;
    const int k = spec.torus_dim();
    const int md = spec.manifold.dim();
    Mat T = tangent_basis(spec.manifold, ext.x);
    Vec u0 = Vec::Zero(k + md);
    u0.head(k) = ext.phi.angles;
    Vec xbase = ext.x;
    auto objective = [&](const Vec& u) {
        Phase ph(Vec(u.head(k)));
        Vec x = pull(spec, xbase + T * u.tail(md));
        double v = g(ph, x);
        return maximize ? -v : v;
    };
    auto res = nelder_mead(objective, u0, 0.1, opts.refine_evals, 1e-12);
    double v = maximize ? -res.value : res.value;
    Phase ph(Vec(res.x.head(k)));
    Vec x = pull(spec, xbase + T * res.x.tail(md));
    if (maximize)
        ext.take_max(v, ph, x);
    else
        ext.take_min(v, ph, x);
}

}  // namespace detail

/// Global extremum of g over T^k x cl(D): rejection-sampled grid plus local
/// simplex refinement around the best cells.
inline std::pair<double, std::pair<Phase, Vec>> domain_extremize(
    const std::function<double(const Phase&, const Vec&)>& g,
    const SystemSpec& spec, bool maximize, const CheckOptions& opts = {}) {
    auto xs = detail::sample_domain(spec, opts.domain_samples, opts.seed);
    auto phis = detail::torus_grid(spec.torus_dim(), opts.torus_points);
    detail::Extremum ext(maximize ? -detail::kInf : detail::kInf);
    for (const Vec& x : xs)
        for (const Phase& ph : phis) {
            double v = g(ph, x);
            if (maximize)
                ext.take_max(v, ph, x);
            else
                ext.take_min(v, ph, x);
        }
    for (int r = 0; r < opts.refine_starts; ++r)
        detail::refine_extremum(spec, g, maximize, ext,
                                detail::pull_into_domain, opts);
    return {ext.value, {ext.phi, ext.x}};
}

/// Verify all structural hypotheses and assemble the constants report in a
/// single sweep over a sampled T^k x cl(D) grid plus a boundary sweep.
inline CheckResult check_all(const SystemSpec& spec, CheckOptions opts = {}) {
    using detail::Extremum;
    const ManifoldDesc& m = spec.manifold;
    const int md = m.dim();
    const int k = spec.torus_dim();
    const double inf = detail::kInf;

    auto xs = detail::sample_domain(spec, opts.domain_samples, opts.seed);
    auto phis = detail::torus_grid(k, opts.torus_points);

    // Running extrema (constants and interior hypothesis margins).
    Extremum min_lambda_U(inf), min_gradUf(inf), min_H3a(inf), min_muK(inf);
    Extremum max_Cf(-inf), max_CU(-inf), max_q2(-inf), max_l(-inf), max_p(-inf);
    Extremum min_lU(inf), min_U(inf), max_U(-inf);

    // Per-pair sigma-condition pieces: margin(Z) = a - b Z with witness index.
    struct SigmaPiece {
        double a, b;
        int xi;
        std::size_t pi;
    };
    std::vector<SigmaPiece> sigma_pieces;
    if (spec.P) sigma_pieces.reserve(xs.size() * phis.size());

    const Phase phi_zero{Vec::Zero(k)};

    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
        const Vec& x = xs[ix];
        MPoint pt{x, &m};
        Mat T = tangent_basis(m, x);
        Mat HU = hess_form_matrix(spec.U, pt);
        Vec gU = grad_on_manifold(spec.U, pt).comps;
        Vec gUt = T.transpose() * gU;

        Mat R = T.transpose() * HU * T;
        R = symmetrize(R);
        Eigen::SelfAdjointEigenSolver<Mat> esU(R);
        double lamU = esU.eigenvalues().minCoeff();
        Eigen::SelfAdjointEigenSolver<Mat> esMu(
            Mat(R - 0.5 * gUt * gUt.transpose()));
        double muU = esMu.eigenvalues().minCoeff();
        double K = curvature_bound(pt);
        double MU = gU.norm();
        double Uval = spec.U(x);

        min_lambda_U.take_min(lamU, phi_zero, x);
        min_lU.take_min(lamU, phi_zero, x);
        min_muK.take_min(muU - 2.0 * K, phi_zero, x);
        max_CU.take_max(MU, phi_zero, x);
        min_U.take_min(Uval, phi_zero, x);
        max_U.take_max(Uval, phi_zero, x);

        double Mf = 0.0, LamP = -inf;
        for (std::size_t ip = 0; ip < phis.size(); ++ip) {
            const Phase& ph = phis[ip];
            Vec f = spec.f_tangent(ph, x);
            double fn = f.norm();
            Mf = std::max(Mf, fn);
            double gUf = gU.dot(f);
            min_gradUf.take_min(gUf, ph, x);
            max_q2.take_max(lamU > 0.0 ? -gUf / lamU : -inf, ph, x);

            Mat Df = spec.f.jac(ph, x, std::max(1.0, x.norm()));
            Mat Fm(md, md);
            for (int j = 0; j < md; ++j)
                Fm.col(j) = T.transpose() * project_tangent(m, x, Df * T.col(j));
            Fm = symmetrize(Fm);
            Eigen::SelfAdjointEigenSolver<Mat> esF(Fm);
            double lamf = esF.eigenvalues().minCoeff();
            double h3a = lamf + 0.5 * gUf;
            min_H3a.take_min(h3a, ph, x);

            if (spec.P) {
                Mat Pm = detail::P_matrix(spec, ph, x, T);
                double MP = Pm.jacobiSvd().singularValues().maxCoeff();
                double MPU = (Pm.transpose() * gUt).norm();
                Mat Ps = 0.5 * (Pm + Pm.transpose());
                Eigen::SelfAdjointEigenSolver<Mat> esP(Ps);
                LamP = std::max(LamP, esP.eigenvalues().maxCoeff());
                max_p.take_max(lamU > 0.0 ? MPU / lamU : -inf, ph, x);
                double LP = detail::L_P_max(spec, ph, x, T);
                sigma_pieces.push_back(
                    {h3a - 0.25 * MP * MP,
                     0.5 * (MU * MP + MPU + 2.0 * LP), static_cast<int>(ix),
                     ip});
            }
        }
        max_Cf.take_max(lamU > 0.0 ? Mf / lamU : -inf, phi_zero, x);
        if (spec.P && Mf > 0.0) max_l.take_max(LamP / Mf, phi_zero, x);
    }

    // Boundary sweep.
    Extremum min_nuF(inf), min_lamII(inf), min_bnd(inf), min_pert_bnd(inf);
    {
        auto seeds = detail::sample_domain(spec, opts.boundary_samples,
                                           opts.seed + 1);
        for (const Vec& s : seeds) {
            Vec xb;
            try {
                xb = detail::project_to_boundary(spec, s);
            } catch (const NumericalError&) {
                continue;
            }
            MPoint pb{xb, &m};
            BoundaryData bd = boundary_normal_and_curvature(
                spec.G, pb, spec.tol.boundary_tol);
            Vec gU = grad_on_manifold(spec.U, pb).comps;
            min_lamII.take_min(bd.lambda_II, phi_zero, xb);
            min_bnd.take_min(bd.lambda_II + 0.5 * gU.dot(bd.nu.comps),
                             phi_zero, xb);
            Mat T = tangent_basis(m, xb);
            Vec nut = T.transpose() * bd.nu.comps;

            // Boundary points belong to cl(D), so the constants' suprema must
            // see them too (for cap-like domains several of them peak here).
            Mat Rb = T.transpose() * hess_form_matrix(spec.U, pb) * T;
            Rb = symmetrize(Rb);
            Eigen::SelfAdjointEigenSolver<Mat> esb(Rb);
            double lamUb = esb.eigenvalues().minCoeff();
            Vec gUtb = T.transpose() * gU;
            Eigen::SelfAdjointEigenSolver<Mat> esmub(
                Mat(Rb - 0.5 * gUtb * gUtb.transpose()));
            min_lambda_U.take_min(lamUb, phi_zero, xb);
            min_lU.take_min(lamUb, phi_zero, xb);
            min_muK.take_min(
                esmub.eigenvalues().minCoeff() - 2.0 * curvature_bound(pb),
                phi_zero, xb);
            max_CU.take_max(gU.norm(), phi_zero, xb);
            min_U.take_min(spec.U(xb), phi_zero, xb);
            max_U.take_max(spec.U(xb), phi_zero, xb);

            double Mfb = 0.0, LamPb = -inf;
            for (const Phase& ph : phis) {
                Vec f = spec.f_tangent(ph, xb);
                double nf = bd.nu.comps.dot(f);
                min_nuF.take_min(nf, ph, xb);
                Mfb = std::max(Mfb, f.norm());
                double gUfb = gU.dot(f);
                min_gradUf.take_min(gUfb, ph, xb);
                max_q2.take_max(lamUb > 0.0 ? -gUfb / lamUb : -inf, ph, xb);
                if (spec.P) {
                    Mat Pm = detail::P_matrix(spec, ph, xb, T);
                    double pn2 = (Pm.transpose() * nut).squaredNorm();
                    min_pert_bnd.take_min(4.0 * bd.lambda_II * nf - pn2, ph,
                                          xb);
                    Mat Ps = 0.5 * (Pm + Pm.transpose());
                    Eigen::SelfAdjointEigenSolver<Mat> esP(Ps);
                    LamPb = std::max(LamPb, esP.eigenvalues().maxCoeff());
                    max_p.take_max(lamUb > 0.0
                                       ? (Pm.transpose() * gUtb).norm() / lamUb
                                       : -inf,
                                   ph, xb);
                }
            }
            max_Cf.take_max(lamUb > 0.0 ? Mfb / lamUb : -inf, phi_zero, xb);
            if (spec.P && Mfb > 0.0) max_l.take_max(LamPb / Mfb, phi_zero, xb);
        }
        if (!std::isfinite(min_lamII.value))
            throw NumericalError("no boundary samples reached {G = 0}");
    }

    // Local refinement of the interior extrema.
    auto gradUf_fn = [&](const Phase& ph, const Vec& x) {
        return grad_on_manifold(spec.U, MPoint{x, &m})
            .comps.dot(spec.f_tangent(ph, x));
    };
    auto h3a_fn = [&](const Phase& ph, const Vec& x) {
        PointCoefficients c = point_coefficients(spec, ph, x, 4);
        return c.lambda_f + 0.5 * c.gradU_f;
    };
    auto muK_fn = [&](const Phase& ph, const Vec& x) {
        PointCoefficients c = point_coefficients(spec, ph, x, 4);
        return c.mu_U - 2.0 * c.K;
    };
    auto lamU_fn = [&](const Phase& ph, const Vec& x) {
        return point_coefficients(spec, ph, x, 4).lambda_U;
    };
    for (int r = 0; r < opts.refine_starts; ++r) {
        detail::refine_extremum(spec, gradUf_fn, false, min_gradUf,
                                detail::pull_into_domain, opts);
        detail::refine_extremum(spec, h3a_fn, false, min_H3a,
                                detail::pull_into_domain, opts);
        detail::refine_extremum(spec, muK_fn, false, min_muK,
                                detail::pull_into_domain, opts);
        detail::refine_extremum(spec, lamU_fn, false, min_lambda_U,
                                detail::pull_into_domain, opts);
    }

    // Refine the constants' extrema too: the sampled suprema inherit the grid
    // resolution otherwise, which is far too coarse for tight barriers.
    auto CU_fn = [&](const Phase&, const Vec& x) {
        return grad_on_manifold(spec.U, MPoint{x, &m}).comps.norm();
    };
    auto U_fn = [&](const Phase&, const Vec& x) { return spec.U(x); };
    auto q2_fn = [&](const Phase& ph, const Vec& x) {
        PointCoefficients c = point_coefficients(spec, ph, x, 1);
        return c.lambda_U > 0.0 ? -c.gradU_f / c.lambda_U : -detail::kInf;
    };
    auto Cf_fn = [&](const Phase& ph, const Vec& x) {
        // max over (phi, x) of ||f|| / lambda_U equals the max over x of
        // M_f / lambda_U, so the joint refinement is legitimate.
        PointCoefficients c = point_coefficients(spec, ph, x, 1);
        return c.lambda_U > 0.0
                   ? spec.f_tangent(ph, x).norm() / c.lambda_U
                   : -detail::kInf;
    };
    for (int r = 0; r < opts.refine_starts; ++r) {
        detail::refine_extremum(spec, CU_fn, true, max_CU,
                                detail::pull_into_domain, opts);
        detail::refine_extremum(spec, U_fn, true, max_U,
                                detail::pull_into_domain, opts);
        detail::refine_extremum(spec, U_fn, false, min_U,
                                detail::pull_into_domain, opts);
        detail::refine_extremum(spec, q2_fn, true, max_q2,
                                detail::pull_into_domain, opts);
        detail::refine_extremum(spec, Cf_fn, true, max_Cf,
                                detail::pull_into_domain, opts);
        detail::refine_extremum(spec, lamU_fn, false, min_lU,
                                detail::pull_into_domain, opts);
    }
    if (spec.P) {
        auto p_fn = [&](const Phase& ph, const Vec& x) {
            PointCoefficients c = point_coefficients(spec, ph, x, 1);
            return c.lambda_U > 0.0 ? c.M_PU / c.lambda_U : -detail::kInf;
        };
        auto l_fn = [&](const Phase& ph, const Vec& x) {
            // Lambda_P at the given phi over the torus max of ||f||; the
            // torus max is resolved inside point_coefficients.
            PointCoefficients c = point_coefficients(spec, ph, x, 8);
            Mat T = tangent_basis(m, x);
            Mat Pm = detail::P_matrix(spec, ph, x, T);
            Mat Ps = 0.5 * (Pm + Pm.transpose());
            Eigen::SelfAdjointEigenSolver<Mat> esP(Ps);
            return c.M_f > 0.0 ? esP.eigenvalues().maxCoeff() / c.M_f
                               : -detail::kInf;
        };
        for (int r = 0; r < opts.refine_starts; ++r) {
            detail::refine_extremum(spec, p_fn, true, max_p,
                                    detail::pull_into_domain, opts);
            detail::refine_extremum(spec, l_fn, true, max_l,
                                    detail::pull_into_domain, opts);
        }
    }

    // Boundary refinement.
    auto pull_bnd = [](const SystemSpec& sp, Vec x) {
        return detail::project_to_boundary(sp, std::move(x));
    };
    auto nuF_fn = [&](const Phase& ph, const Vec& x) {
        BoundaryData bd = boundary_normal_and_curvature(spec.G, MPoint{x, &m},
                                                        1e-6);
        return bd.nu.comps.dot(spec.f_tangent(ph, x));
    };
    auto bnd_fn = [&](const Phase&, const Vec& x) {
        MPoint pb{x, &m};
        BoundaryData bd = boundary_normal_and_curvature(spec.G, pb, 1e-6);
        return bd.lambda_II +
               0.5 * grad_on_manifold(spec.U, pb).comps.dot(bd.nu.comps);
    };
    for (int r = 0; r < opts.refine_starts; ++r) {
        detail::refine_extremum(spec, nuF_fn, false, min_nuF, pull_bnd, opts);
        detail::refine_extremum(spec, bnd_fn, false, min_bnd, pull_bnd, opts);
    }

    // Constants report.
    ConstantsReport cr;
    cr.grid_meta.torus_points = opts.torus_points;
    cr.grid_meta.domain_samples = opts.domain_samples;
    cr.grid_meta.refine_rounds = opts.refine_starts;
    cr.C_f = std::max(0.0, max_Cf.value);
    cr.C_U = std::max(0.0, max_CU.value);
    if (max_q2.value <= 0.0) {
        cr.q = 0.0;
        cr.q_degenerate = true;
    } else {
        cr.q = std::sqrt(max_q2.value);
    }
    if (opts.q_from_CfCU) {
        cr.q = std::sqrt(cr.C_f * cr.C_U);
        cr.q_from_CfCU = true;
        cr.q_degenerate = false;
    }
    cr.p = spec.P ? std::max(0.0, max_p.value) : 0.0;
    // The barrier is monotone in l, so clamping a negative ratio to zero is
    // conservative (it can only enlarge z_star).
    cr.l = spec.P ? std::max(0.0, max_l.value) : 0.0;
    cr.l_U = min_lU.value;
    cr.U_star_min = min_U.value;
    cr.U_star_max = max_U.value;
    cr.witnesses["C_f"] = {max_Cf.phi, max_Cf.x};
    cr.witnesses["C_U"] = {max_CU.phi, max_CU.x};
    if (!cr.q_degenerate && !cr.q_from_CfCU)
        cr.witnesses["q"] = {max_q2.phi, max_q2.x};
    if (spec.P && std::isfinite(max_p.value))
        cr.witnesses["p"] = {max_p.phi, max_p.x};
    cr.witnesses["l_U"] = {min_lU.phi, min_lU.x};
    if (cr.l_U > 0.0)
        finalize_constants(cr, opts.root_tol);
    else {
        auto [zp, zm] = z_pm(cr.p, cr.q);
        cr.z_plus = zp;
        cr.z_minus = zm;
    }

    double zs = opts.z_star_hint >= 0.0 ? opts.z_star_hint : cr.z_star;

    // Sigma condition at Z = z_star (affine in Z per sampled pair).
    Extremum min_sigma(inf);
    if (spec.P) {
        for (const auto& sp : sigma_pieces) {
            double v = sp.a - sp.b * zs;
            min_sigma.take_min(v, phis[sp.pi], xs[static_cast<std::size_t>(sp.xi)]);
        }
        auto sigma_fn = [&](const Phase& ph, const Vec& x) {
            PointCoefficients c = point_coefficients(spec, ph, x, 4);
            return c.lambda_f + 0.5 * c.gradU_f -
                   sigma_threshold(c.M_U, c.M_P, c.M_PU, c.L_P, zs);
        };
        for (int r = 0; r < opts.refine_starts; ++r)
            detail::refine_extremum(spec, sigma_fn, false, min_sigma,
                                    detail::pull_into_domain, opts);
    } else {
        min_sigma = min_H3a;  // sigma vanishes without a perturbation
    }

    GridMeta gm = cr.grid_meta;
    auto verdict = [&](const std::string& name, const Extremum& e,
                       double slack = 0.0) {
        HypothesisVerdict v;
        v.name = name;
        v.margin = e.value;
        v.slack = slack;
        v.holds = e.value > -slack;
        v.witness_phi = e.phi;
        v.witness_x = e.x;
        v.grid_meta = gm;
        return v;
    };

    CheckResult out;
    out.constants = cr;
    out.verdicts.push_back(verdict("H1.convexity", min_lambda_U));
    {
        // H1 second part: the minimum of <grad U, f> must be negative.
        Extremum flipped(-min_gradUf.value);
        flipped.phi = min_gradUf.phi;
        flipped.x = min_gradUf.x;
        out.verdicts.push_back(verdict("H1.inward-drift", flipped));
    }
    out.verdicts.push_back(verdict("H2.outward-force", min_nuF));
    out.verdicts.push_back(verdict("H2.boundary-convexity", min_lamII));
    out.verdicts.push_back(verdict("H3.force-monotonicity", min_H3a));
    // Non-strict inequality; exact equality is an admitted boundary case.
    out.verdicts.push_back(verdict("H3.metric-convexity", min_muK, opts.mu_slack));
    out.verdicts.push_back(verdict("boundary.sublevel", min_bnd));
    if (spec.P) {
        out.verdicts.push_back(verdict("perturbation.boundary", min_pert_bnd));
        out.verdicts.push_back(verdict("perturbation.sigma", min_sigma));
    } else {
        out.verdicts.push_back(verdict("perturbation.sigma", min_sigma));
    }
    return out;
}

}  // namespace umq

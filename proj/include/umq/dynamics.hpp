#pragma once

// Numerical integration on the manifold: the main second-order system, the
// connecting flow with its conservation law, the shooting map joining pairs
// of points, and the parallel-transported variational system.

#include "umq/geometry.hpp"
#include "umq/system.hpp"
#include "umq/util.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace umq {

struct State {
    Vec x;
    Vec v;
    double t = 0.0;
    Phase phi;
};

struct StepStats {
    long accepted = 0;
    long rejected = 0;
    double min_h = std::numeric_limits<double>::infinity();
    double max_h = 0.0;
};

struct IntegrateOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double h_init = 1e-3;
    double h_min = 1e-13;
    double h_max = 1.0;
    long max_steps = 200'000'000;
    bool stop_on_exit = false;     // stop when G(x) >= 0
    double velocity_guard = 0.0;   // >0: fault if ||v|| exceeds it
    bool light_monitors = false;   // skip U / v_U monitors (escape scans)
};

/// Accepted-step record of an integration on the manifold. Dense output is
/// cubic Hermite between stored samples, re-projected to the manifold.
struct Trajectory {
    const ManifoldDesc* manifold = nullptr;
    std::vector<double> times;
    std::vector<Vec> xs;
    std::vector<Vec> vs;
    std::vector<Vec> as;  // accelerations at samples (Hermite slopes for v)

    // Per-sample monitors.
    std::vector<double> mon_speed;     // ||v||
    std::vector<double> mon_U;         // U(x)
    std::vector<double> mon_vU;        // <grad U, v>
    std::vector<double> mon_G;         // G(x)
    std::vector<double> mon_residual;  // |Phi(x)|

    StepStats stats;
    bool exited = false;     // left the domain {G < 0}
    double exit_time = 0.0;  // valid iff exited

    double t_begin() const { return times.front(); }
    double t_end() const { return times.back(); }
    std::size_t size() const { return times.size(); }

    std::size_t segment_index(double t) const {
        if (times.size() < 2) return 0;
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t i = static_cast<std::size_t>(
            std::max<std::ptrdiff_t>(1, it - times.begin()) - 1);
        return std::min(i, times.size() - 2);
    }

    /// Dense position/velocity at t (cubic Hermite + projection).
    std::pair<Vec, Vec> eval(double t) const {
        if (times.empty()) throw NumericalError("eval on empty trajectory");
        if (times.size() == 1) return {xs[0], vs[0]};
        std::size_t i = segment_index(t);
        double h = times[i + 1] - times[i];
        double s = (t - times[i]) / h;
        double s2 = s * s, s3 = s2 * s;
        double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
        double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
        Vec x = h00 * xs[i] + (h10 * h) * vs[i] + h01 * xs[i + 1] +
                (h11 * h) * vs[i + 1];
        Vec v = h00 * vs[i] + (h10 * h) * as[i] + h01 * vs[i + 1] +
                (h11 * h) * as[i + 1];
        if (manifold) {
            x = project_to_manifold(*manifold, x);
            v = project_tangent(*manifold, x, v);
        }
        return {x, v};
    }

    CurveFn as_curve() const {
        return CurveFn{[this](double t) { return eval(t).first; },
                       [this](double t) { return eval(t).second; }};
    }
};

namespace detail {

/// One adaptive Dormand-Prince 5(4) integration of y' = rhs(t, y).
/// `post_step` cleans up an accepted state (projection); `observe` records
/// it; returning false from `observe` stops the integration.
inline StepStats dopri5(
    const std::function<Vec(double, const Vec&)>& rhs, double t0, double t1,
    Vec y, const IntegrateOptions& opts,
    const std::function<Vec(const Vec&)>& post_step,
    const std::function<bool(double, const Vec&, const Vec&)>& observe) {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                            a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113,
                            b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                            e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5,
                            c5 = 8.0 / 9;

    const double dir = (t1 >= t0) ? 1.0 : -1.0;
    double t = t0;
    double h = dir * std::min(opts.h_init, std::abs(t1 - t0));
    StepStats stats;

    if (post_step) y = post_step(y);
    Vec k1 = rhs(t, y);
    if (!observe(t, y, k1)) return stats;

    while (dir * (t1 - t) > 0.0) {
        if (stats.accepted + stats.rejected > opts.max_steps)
            throw NumericalError("integration exceeded the step budget");
        if (dir * (t + h) > dir * t1) h = t1 - t;

        Vec k2 = rhs(t + c2 * h, y + h * (a21 * k1));
        Vec k3 = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
        Vec k4 = rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        Vec k5 = rhs(t + c5 * h,
                     y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        Vec k6 = rhs(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 +
                                     a64 * k4 + a65 * k5));
        Vec y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        Vec k7 = rhs(t + h, y5);
        Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 +
                       e7 * k7);

        double enorm = 0.0;
        for (int i = 0; i < y.size(); ++i) {
            double sc = opts.abs_tol +
                        opts.rel_tol * std::max(std::abs(y[i]), std::abs(y5[i]));
            double r = err[i] / sc;
            enorm += r * r;
        }
        enorm = std::sqrt(enorm / static_cast<double>(y.size()));

        if (enorm <= 1.0) {
            t += h;
            y = post_step ? post_step(y5) : y5;
            ++stats.accepted;
            stats.min_h = std::min(stats.min_h, std::abs(h));
            stats.max_h = std::max(stats.max_h, std::abs(h));
            k1 = rhs(t, y);  // post-step projection invalidates FSAL reuse
            if (!observe(t, y, k1)) return stats;
        } else {
            ++stats.rejected;
        }
        double fac = 0.9 * std::pow(std::max(enorm, 1e-10), -0.2);
        h *= std::clamp(fac, 0.2, 5.0);
        if (std::abs(h) > opts.h_max) h = dir * opts.h_max;
        if (std::abs(h) < opts.h_min)
            throw NumericalError("step-size underflow at t = " +
                                 std::to_string(t));
    }
    return stats;
}

}  // namespace detail

/// Second fundamental form value <S v, v> scaled for the geodesic correction:
/// the normal part of the ambient acceleration of a curve with velocity v.
inline double normal_acceleration_coeff(const ManifoldDesc& m, const Vec& x,
                                        const Vec& v) {
    if (m.kind == ManifoldKind::UnitSphere) return v.squaredNorm();
    Vec g = m.level.grad(x);
    double gn = g.norm();
    if (gn < m.singular_tol)
        throw NumericalError("singular geometry during integration");
    return v.dot(m.level.hess(x) * v) / gn;
}

/// Integrate the main system  nabla_v v = f(t omega + phi0, x) + P(.) v
/// from `init` to t_end in the ambient first-order form with per-step
/// projection. Monitors are populated from the spec's U and G.
inline Trajectory integrate_main(const SystemSpec& spec, const State& init,
                                 double t_end, IntegrateOptions opts = {}) {
    const ManifoldDesc& m = spec.manifold;
    const int n = m.ambient_dim;
    const Phase phi0 = init.phi;
    const double t0 = init.t;

    auto accel = [&](double t, const Vec& x, const Vec& v) {
        Phase phi = advance(phi0, spec.omega, t - t0);
        Vec a = spec.f_tangent(phi, x);
        if (spec.P) a += spec.P_apply(phi, x, v);
        a -= normal_acceleration_coeff(m, x, v) * unit_normal(m, x);
        return a;
    };
    auto rhs = [&](double t, const Vec& y) {
        Vec x = y.head(n), v = y.tail(n);
        Vec dy(2 * n);
        dy.head(n) = v;
        dy.tail(n) = accel(t, x, v);
        return dy;
    };
    auto post = [&](const Vec& y) {
        Vec x = project_to_manifold(m, y.head(n));
        Vec out(2 * n);
        out.head(n) = x;
        out.tail(n) = project_tangent(m, x, y.tail(n));
        return out;
    };

    Trajectory traj;
    traj.manifold = &m;
    auto record = [&](double t, const Vec& y, const Vec& dy) {
        Vec x = y.head(n), v = y.tail(n);
        traj.times.push_back(t);
        traj.xs.push_back(x);
        traj.vs.push_back(v);
        traj.as.push_back(dy.tail(n));
        traj.mon_speed.push_back(v.norm());
        if (opts.light_monitors) {
            traj.mon_U.push_back(0.0);
            traj.mon_vU.push_back(0.0);
        } else {
            traj.mon_U.push_back(spec.U(x));
            traj.mon_vU.push_back(
                grad_on_manifold(spec.U, MPoint{x, &m}).comps.dot(v));
        }
        traj.mon_G.push_back(spec.G(x));
        traj.mon_residual.push_back(constraint_residual(m, x));
        if (opts.velocity_guard > 0.0 && v.norm() > opts.velocity_guard)
            throw NumericalError("velocity guard tripped at t = " +
                                 std::to_string(t));
        if (opts.stop_on_exit && spec.G(x) >= 0.0 && traj.times.size() > 1)
            return false;
        return true;
    };

    Vec y0(2 * n);
    y0.head(n) = init.x;
    y0.tail(n) = init.v;
    traj.stats = detail::dopri5(rhs, t0, t_end, y0, opts, post, record);

    if (opts.stop_on_exit && !traj.mon_G.empty() && traj.mon_G.back() >= 0.0) {
        traj.exited = true;
        // Locate the G = 0 crossing inside the last segment via dense output.
        if (traj.size() >= 2) {
            double lo = traj.times[traj.size() - 2], hi = traj.times.back();
            if (spec.G(traj.eval(lo).first) < 0.0) {
                for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
                    double mid = 0.5 * (lo + hi);
                    (spec.G(traj.eval(mid).first) < 0.0 ? lo : hi) = mid;
                }
            } else {
                hi = lo;
            }
            traj.exit_time = hi;
        } else {
            traj.exit_time = traj.times.back();
        }
    }
    return traj;
}

/// Integrate the connecting flow  nabla_{x'} x' = (||x'||^2 / 2) grad U(x)
/// in the s-parameter. The quantity ||x'||^2 e^{-U} is conserved; its drift
/// is exposed through the mon_vU slot repurposed as the conserved value.
inline Trajectory integrate_connecting(const ManifoldDesc& m,
                                       const ScalarField& U, const Vec& x0,
                                       const Vec& xi, double s_end,
                                       IntegrateOptions opts = {}) {
    const int n = m.ambient_dim;
    auto rhs = [&](double, const Vec& y) {
        Vec x = y.head(n), v = y.tail(n);
        Vec gU = project_tangent(m, x, U.grad(x));
        Vec a = 0.5 * v.squaredNorm() * gU -
                normal_acceleration_coeff(m, x, v) * unit_normal(m, x);
        Vec dy(2 * n);
        dy.head(n) = v;
        dy.tail(n) = a;
        return dy;
    };
    auto post = [&](const Vec& y) {
        Vec x = project_to_manifold(m, y.head(n));
        Vec out(2 * n);
        out.head(n) = x;
        out.tail(n) = project_tangent(m, x, y.tail(n));
        return out;
    };

    Trajectory traj;
    traj.manifold = &m;
    auto record = [&](double s, const Vec& y, const Vec& dy) {
        Vec x = y.head(n), v = y.tail(n);
        traj.times.push_back(s);
        traj.xs.push_back(x);
        traj.vs.push_back(v);
        traj.as.push_back(dy.tail(n));
        traj.mon_speed.push_back(v.norm());
        traj.mon_U.push_back(U(x));
        traj.mon_vU.push_back(v.squaredNorm() * std::exp(-U(x)));  // conserved
        traj.mon_G.push_back(0.0);
        traj.mon_residual.push_back(constraint_residual(m, x));
        return true;
    };

    Vec y0(2 * n);
    y0.head(n) = project_to_manifold(m, x0);
    y0.tail(n) = project_tangent(m, y0.head(n), xi);
    traj.stats = detail::dopri5(rhs, 0.0, s_end, y0, opts, post, record);
    return traj;
}

/// Largest drift of the connecting-flow conserved quantity along `traj`,
/// relative to its initial value's natural scale ||xi||^2.
inline double connecting_conservation_drift(const Trajectory& traj) {
    if (traj.mon_vU.empty()) return 0.0;
    double c0 = traj.mon_vU.front();
    double worst = 0.0;
    for (double c : traj.mon_vU) worst = std::max(worst, std::abs(c - c0));
    return worst;
}

/// Shooting solve of x(1, xi) = x1 for the connecting flow: Newton on the
/// initial velocity in tangent coordinates, with a continuation fallback
/// along the chord from x0 to x1. Throws on persistent failure.
inline Vec connecting_map(const ManifoldDesc& m, const ScalarField& U,
                          const Vec& x0_in, const Vec& x1_in,
                          double d_bound = 0.0, double root_tol = 1e-10,
                          IntegrateOptions flow_opts = {}) {
    const int n = m.ambient_dim;
    const int md = m.dim();
    Vec x0 = project_to_manifold(m, x0_in);
    Vec x1 = project_to_manifold(m, x1_in);
    Mat T0 = tangent_basis(m, x0);

    auto endpoint = [&](const Vec& c) {
        Trajectory tr = integrate_connecting(m, U, x0, T0 * c, 1.0, flow_opts);
        return tr.xs.back();
    };

    auto newton_to = [&](Vec c, const Vec& target,
                         double tol) -> std::optional<Vec> {
        Mat Tt = tangent_basis(m, target);
        auto residual = [&](const Vec& cc) {
            return Vec(Tt.transpose() * (endpoint(cc) - target));
        };
        Vec r = residual(c);
        for (int it = 0; it < 50; ++it) {
            if (r.norm() <= tol) return c;
            // Forward-difference shooting Jacobian.
            double h = std::max(1e-7, 1e-7 * c.norm());
            Mat J(md, md);
            for (int j = 0; j < md; ++j) {
                Vec cp = c;
                cp[j] += h;
                J.col(j) = (residual(cp) - r) / h;
            }
            Vec dc = J.colPivHouseholderQr().solve(-r);
            double lam = 1.0;
            for (int bt = 0; bt < 30; ++bt) {
                Vec rn = residual(c + lam * dc);
                if (rn.norm() < r.norm() || rn.norm() <= tol) {
                    c += lam * dc;
                    r = rn;
                    break;
                }
                lam *= 0.5;
                if (bt == 29) return std::nullopt;
            }
        }
        return std::nullopt;
    };

    // Geodesic-style initial guess toward x1.
    Vec chord = project_tangent(m, x0, x1 - x0);
    double guess_len = (m.kind == ManifoldKind::UnitSphere)
                           ? std::acos(std::clamp(x0.dot(x1), -1.0, 1.0))
                           : (x1 - x0).norm();
    Vec c = Vec::Zero(md);
    if (chord.norm() > 0.0)
        c = T0.transpose() * (guess_len * chord.normalized());

    if (auto hit = newton_to(c, x1, root_tol)) {
        Vec xi = T0 * *hit;
        if (d_bound > 0.0 && xi.norm() > d_bound + 1e-6)
            throw NumericalError("connecting map exceeds its norm bound");
        return xi;
    }

    // Continuation: walk intermediate targets along the projected chord.
    for (int levels = 2; levels <= 64; levels *= 2) {
        Vec cc = Vec::Zero(md);
        bool ok = true;
        for (int i = 1; i <= levels; ++i) {
            double s = static_cast<double>(i) / levels;
            Vec target = project_to_manifold(m, (1.0 - s) * x0 + s * x1);
            auto hit = newton_to(cc, target, root_tol);
            if (!hit) {
                ok = false;
                break;
            }
            cc = *hit;
        }
        if (ok) {
            Vec xi = T0 * cc;
            if (d_bound > 0.0 && xi.norm() > d_bound + 1e-6)
                throw NumericalError("connecting map exceeds its norm bound");
            return xi;
        }
    }
    throw NumericalError("connecting map: shooting failed to converge");
}

/// Reduced variational data sampled along a trajectory in a parallel
/// transported orthonormal tangent frame:  y' = z, z' = A(t) y + B(t) z.
struct VariationalFrame {
    std::vector<double> times;
    std::vector<Mat> A;          // m x m
    std::vector<Mat> B;          // m x m
    std::vector<double> c;       // <grad U, tau>
    std::vector<double> cdot;    // analytic d/dt of c
    std::vector<Mat> frames;     // ambient N x m frame at each time
    double orthonormality_drift = 0.0;

    int dim() const { return A.empty() ? 0 : static_cast<int>(A.front().rows()); }

    std::size_t segment_index(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t i = static_cast<std::size_t>(
            std::max<std::ptrdiff_t>(1, it - times.begin()) - 1);
        return std::min(i, times.size() - 2);
    }

    /// Linear interpolation of the sampled operators.
    void interp(double t, Mat& Ai, Mat& Bi) const {
        std::size_t i = segment_index(t);
        double s = (t - times[i]) / (times[i + 1] - times[i]);
        s = std::clamp(s, 0.0, 1.0);
        Ai = (1.0 - s) * A[i] + s * A[i + 1];
        Bi = (1.0 - s) * B[i] + s * B[i + 1];
    }
};

/// Curvature contraction R(eta, tau) tau for hypersurfaces via the Gauss
/// equation; closed form on the unit sphere.
inline Vec curvature_term(const ManifoldDesc& m, const Vec& x, const Vec& eta,
                          const Vec& tau) {
    if (m.kind == ManifoldKind::UnitSphere)
        return tau.squaredNorm() * eta - eta.dot(tau) * tau;
    Mat S = shape_operator_ambient(m, x);
    Vec St = S * tau, Se = S * eta;
    return tau.dot(St) * Se - tau.dot(Se) * St;
}

/// Sample A(t), B(t), c(t) along `traj` in a transported frame. `sample_dt`
/// <= 0 uses the trajectory's own accepted steps as sample times.
inline VariationalFrame variational_frame(const SystemSpec& spec,
                                          const Trajectory& traj,
                                          const Phase& phi0, double t0_phase,
                                          double sample_dt = 0.0,
                                          double transport_step = 1e-3) {
    const ManifoldDesc& m = spec.manifold;
    const int md = m.dim();

    std::vector<double> times;
    if (sample_dt > 0.0) {
        for (double t = traj.t_begin(); t < traj.t_end(); t += sample_dt)
            times.push_back(t);
        times.push_back(traj.t_end());
    } else {
        times = traj.times;
    }

    VariationalFrame vf;
    vf.times = times;
    CurveFn curve = traj.as_curve();

    Mat W = tangent_basis(m, traj.xs.front());
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (i > 0)
            W = transport_frame_along(m, curve, W, times[i - 1], times[i],
                                      transport_step);
        Mat gram = W.transpose() * W;
        vf.orthonormality_drift = std::max(
            vf.orthonormality_drift,
            (gram - Mat::Identity(md, md)).cwiseAbs().maxCoeff());

        auto [x, tau] = traj.eval(times[i]);
        Phase phi = advance(phi0, spec.omega, times[i] - t0_phase);
        MPoint pt{x, &m};

        Mat Df = spec.f.jac(phi, x, std::max(1.0, x.norm()));
        Mat A(md, md), B(md, md);
        for (int j = 0; j < md; ++j) {
            Vec eta = W.col(j);
            Vec col = project_tangent(m, x, Df * eta) -
                      curvature_term(m, x, eta, tau);
            if (spec.P) col += spec.P_nabla(phi, x, eta, tau);
            A.col(j) = W.transpose() * col;
            B.col(j) = W.transpose() * spec.P_apply(phi, x, eta);
        }
        vf.A.push_back(A);
        vf.B.push_back(B);
        vf.frames.push_back(W);

        Vec gU = grad_on_manifold(spec.U, pt).comps;
        vf.c.push_back(gU.dot(tau));
        Vec ft = spec.f_tangent(phi, x);
        Vec Pt = spec.P ? spec.P_apply(phi, x, tau) : Vec(Vec::Zero(x.size()));
        vf.cdot.push_back(hess_form(spec.U, pt, TVec{pt, tau}, TVec{pt, tau}) +
                          gU.dot(ft + Pt));
    }
    return vf;
}

struct FundamentalPath {
    std::vector<double> times;
    std::vector<Mat> Y;  // 2m x 2m fundamental matrix at each frame time
    double log_det_drift = 0.0;  // Liouville residual over the whole span
};

/// Integrate Y' = [[0, I], [A(t), B(t)]] Y across the frame samples (RK4 on
/// the interpolated operators). Refuses spans whose growth overflows 1e12.
inline FundamentalPath integrate_variational(const VariationalFrame& frame,
                                             const Mat& Y0,
                                             double max_substep = 1e-2) {
    const int md = frame.dim();
    const int d2 = 2 * md;
    if (Y0.rows() != d2 || Y0.cols() != Y0.rows())
        throw ConfigError("integrate_variational: Y0 must be square 2m x 2m");

    auto sys = [&](double t) {
        Mat A, B;
        frame.interp(t, A, B);
        Mat M = Mat::Zero(d2, d2);
        M.block(0, md, md, md) = Mat::Identity(md, md);
        M.block(md, 0, md, md) = A;
        M.block(md, md, md, md) = B;
        return M;
    };

    FundamentalPath path;
    path.times = frame.times;
    path.Y.push_back(Y0);
    Mat Y = Y0;
    double trace_int = 0.0;  // integral of tr B (the system-matrix trace)
    for (std::size_t i = 0; i + 1 < frame.times.size(); ++i) {
        double ta = frame.times[i], tb = frame.times[i + 1];
        long ns = std::max<long>(1, std::lround((tb - ta) / max_substep));
        double h = (tb - ta) / static_cast<double>(ns);
        for (long s = 0; s < ns; ++s) {
            double t = ta + s * h;
            Mat k1 = sys(t) * Y;
            Mat k2 = sys(t + 0.5 * h) * (Y + 0.5 * h * k1);
            Mat k3 = sys(t + 0.5 * h) * (Y + 0.5 * h * k2);
            Mat k4 = sys(t + h) * (Y + h * k3);
            Y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            trace_int += h * 0.5 * (sys(t).trace() + sys(t + h).trace());
            if (Y.cwiseAbs().maxCoeff() > 1e12)
                throw NumericalError(
                    "variational growth exceeds 1e12: renormalize (QR) instead");
        }
        path.Y.push_back(Y);
    }

    double logdet0 = std::log(std::abs(Y0.determinant()));
    double logdet1 = std::log(std::abs(Y.determinant()));
    path.log_det_drift = std::abs((logdet1 - logdet0) - trace_int);
    return path;
}

}  // namespace umq

#pragma once

// Hyperbolicity certification of a found trajectory: (i) positivity of the
// derivative of the indefinite quadratic form Q(eta, zeta) = <eta, zeta> +
// (<grad U, xdot>/2) ||eta||^2 along the reduced variational system, and
// (ii) finite-time Lyapunov exponents by the discrete QR method, with a
// Liouville-trace consistency check.

#include "umq/dynamics.hpp"
#include "umq/hypotheses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace umq {

/// Symmetric matrix of the derivative of Q along the reduced variational
/// system at frame sample i:
///   [[sym(A) + (cdot/2) I, (B + c I)/2], [(B + c I)^T/2, I]].
inline Mat q_dot_matrix(const VariationalFrame& frame, std::size_t i) {
    const int md = frame.dim();
    const Mat& A = frame.A[i];
    const Mat& B = frame.B[i];
    Mat M(2 * md, 2 * md);
    M.block(0, 0, md, md) =
        0.5 * (A + A.transpose()) +
        0.5 * frame.cdot[i] * Mat::Identity(md, md);
    Mat C = 0.5 * (B + frame.c[i] * Mat::Identity(md, md));
    M.block(0, md, md, md) = C;
    M.block(md, 0, md, md) = C.transpose();
    M.block(md, md, md, md) = Mat::Identity(md, md);
    return 0.5 * (M + M.transpose());
}

/// Minimum over the sampled times of the smallest eigenvalue of the Q-dot
/// form. A positive value certifies the quadratic-form dichotomy criterion.
inline double q_form_margin(const VariationalFrame& frame) {
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < frame.times.size(); ++i) {
        Eigen::SelfAdjointEigenSolver<Mat> es(q_dot_matrix(frame, i));
        margin = std::min(margin, es.eigenvalues().minCoeff());
    }
    return margin;
}

struct LyapunovResult {
    std::vector<double> exponents;               // sorted descending
    std::vector<std::vector<double>> trace;      // running estimates
    double liouville_residual = 0.0;  // |sum exponents - mean trace|
};

/// Finite-time Lyapunov exponents of y' = z, z' = A(t) y + B(t) z by the
/// discrete QR method with renormalization every `renorm_dt`.
inline LyapunovResult lyapunov_exponents(const VariationalFrame& frame,
                                         double t0, double t1,
                                         double renorm_dt,
                                         double max_substep = 1e-2) {
    const int md = frame.dim();
    const int d2 = 2 * md;
    if (t1 <= t0) throw ConfigError("lyapunov_exponents: empty span");

    auto sys = [&](double t) {
        Mat A, B;
        frame.interp(t, A, B);
        Mat M = Mat::Zero(d2, d2);
        M.block(0, md, md, md) = Mat::Identity(md, md);
        M.block(md, 0, md, md) = A;
        M.block(md, md, md, md) = B;
        return M;
    };

    LyapunovResult out;
    Vec logs = Vec::Zero(d2);
    Mat Q = Mat::Identity(d2, d2);
    double trace_int = 0.0;
    double t = t0;
    while (t < t1 - 1e-12) {
        double tb = std::min(t + renorm_dt, t1);
        long ns = std::max<long>(1, std::lround((tb - t) / max_substep));
        double h = (tb - t) / static_cast<double>(ns);
        Mat Y = Q;
        for (long s = 0; s < ns; ++s) {
            double ts = t + s * h;
            Mat k1 = sys(ts) * Y;
            Mat k2 = sys(ts + 0.5 * h) * (Y + 0.5 * h * k1);
            Mat k3 = sys(ts + 0.5 * h) * (Y + 0.5 * h * k2);
            Mat k4 = sys(ts + h) * (Y + h * k3);
            Y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            trace_int += h * 0.5 * (sys(ts).trace() + sys(ts + h).trace());
        }
        Eigen::HouseholderQR<Mat> qr(Y);
        Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
        Q = qr.householderQ() * Mat::Identity(d2, d2);
        for (int i = 0; i < d2; ++i) {
            double r = R(i, i);
            if (r < 0.0) {
                Q.col(i) *= -1.0;
                r = -r;
            }
            logs[i] += std::log(std::max(r, 1e-300));
        }
        t = tb;
        std::vector<double> running(d2);
        for (int i = 0; i < d2; ++i) running[i] = logs[i] / (t - t0);
        out.trace.push_back(running);
    }

    out.exponents.assign(logs.data(), logs.data() + d2);
    for (double& e : out.exponents) e /= (t1 - t0);
    std::sort(out.exponents.rbegin(), out.exponents.rend());
    double sum = 0.0;
    for (double e : out.exponents) sum += e;
    out.liouville_residual = std::abs(sum - trace_int / (t1 - t0));
    return out;
}

struct DichotomyReport {
    double alpha1_estimate = 0.0;   // Q-dot margin
    std::vector<double> exponents;  // sorted descending
    double max_negative = 0.0;
    double min_positive = 0.0;
    double gap_tol = 0.01;
    bool split_balanced = false;    // m positive and m negative exponents
    double sigma_margin = 0.0;      // perturbation-threshold margin at Z
    double liouville_residual = 0.0;
    bool verdict = false;
};

/// Combine the sigma-condition margin at the observed velocity bound Z, the
/// Q-dot margin, and the exponent gap into one hyperbolicity certificate.
inline DichotomyReport certify(const SystemSpec& spec,
                               const VariationalFrame& frame, double Z,
                               double gap_tol = 0.01,
                               double renorm_dt = 1.0,
                               const CheckResult* hypotheses = nullptr,
                               CheckOptions check_opts = {}) {
    DichotomyReport rep;
    rep.gap_tol = gap_tol;

    CheckResult local;
    if (!hypotheses) {
        check_opts.z_star_hint = Z;
        local = check_all(spec, check_opts);
        hypotheses = &local;
    }
    rep.sigma_margin = hypotheses->verdict("perturbation.sigma").margin;

    rep.alpha1_estimate = q_form_margin(frame);

    LyapunovResult lr = lyapunov_exponents(frame, frame.times.front(),
                                           frame.times.back(), renorm_dt);
    rep.exponents = lr.exponents;
    rep.liouville_residual = lr.liouville_residual;
    const int md = frame.dim();
    int pos = 0, neg = 0;
    for (double e : rep.exponents) {
        if (e >= gap_tol / 2.0) ++pos;
        if (e <= -gap_tol / 2.0) ++neg;
    }
    rep.split_balanced = (pos == md && neg == md);
    rep.min_positive = rep.exponents[md - 1];
    rep.max_negative = rep.exponents[md];
    bool gap_ok = rep.min_positive - rep.max_negative >= gap_tol &&
                  rep.min_positive > 0.0 && rep.max_negative < 0.0;
    rep.verdict = rep.sigma_margin > 0.0 && rep.alpha1_estimate > 0.0 &&
                  gap_ok && rep.split_balanced;
    return rep;
}

}  // namespace umq

#pragma once

// Scalar constants and one-dimensional root problems of the a-priori velocity
// bounds: the cubic bound zeta_star, the quadratic roots z_pm, the barrier
// integral I(z), its root z_star, the perturbation threshold sigma, and the
// connecting-map bound d.

#include "umq/system.hpp"
#include "umq/util.hpp"

#include <cmath>
#include <map>
#include <string>
#include <utility>

namespace umq {

/// Greatest real root of zeta^3 - 3 zeta + 2 - 3m, m >= 0. Equals 1 at m=0
/// (double root) and grows monotonically with m.
inline double zeta_star(double m, double root_tol = 1e-12) {
    if (m < 0.0) throw ConfigError("zeta_star: m must be >= 0");
    if (m == 0.0) return 1.0;
    auto f = [&](double z) { return ((z * z) - 3.0) * z + 2.0 - 3.0 * m; };
    auto df = [](double z) { return 3.0 * z * z - 3.0; };
    // f(1) = -3m < 0 and f is strictly increasing on (1, inf), so the greatest
    // root is the unique root right of 1.
    double hi = 1.0 + std::cbrt(3.0 * m) + 2.0;
    while (f(hi) < 0.0) hi *= 2.0;
    return solve_bracketed(f, df, 1.0, hi, root_tol);
}

/// Roots of z^2 - p z - q^2: z_plus >= 0 >= z_minus.
inline std::pair<double, double> z_pm(double p, double q) {
    double disc = std::sqrt(4.0 * q * q + p * p);
    double zp = 0.5 * (p + disc);
    // Compute the negative root from the product to avoid cancellation.
    double zm = (zp > 0.0) ? -(q * q) / zp : 0.5 * (p - disc);
    return {zp, zm};
}

namespace detail {

/// L(x) = log1p(x) - x + x^2/2 = x^3/3 - x^4/4 + ... Stable for all x > -1.
inline double log1p_tail(double x) {
    if (std::abs(x) < 0.5) {
        double term = x * x * x;  // x^3 enters at n = 3
        double sum = 0.0;
        for (int n = 3; n < 200; ++n) {
            double add = term / n;
            sum += (n % 2 == 1) ? add : -add;
            term *= x;
            if (std::abs(term) < 1e-300 ||
                std::abs(add) < 1e-18 * std::abs(sum) + 1e-300)
                break;
        }
        return sum;
    }
    return std::log1p(x) - x + 0.5 * x * x;
}

/// L(l w) / l^3 = w^3/3 - l w^4/4 + ... evaluated stably uniformly in l >= 0.
inline double log1p_tail_scaled(double l, double w) {
    double x = l * w;
    if (std::abs(x) < 0.5) {
        // Series in powers of l keeps the l -> 0 limit exact.
        double term = w * w * w;  // coefficient of the n = 3 term
        double sum = 0.0;
        for (int n = 3; n < 200; ++n) {
            double add = term / n;
            sum += (n % 2 == 1) ? add : -add;
            term *= x;
            if (std::abs(add) < 1e-18 * std::abs(sum) + 1e-300) break;
        }
        return sum;
    }
    return log1p_tail(x) / (l * l * l);
}

}  // namespace detail

/// Barrier integral I(z) = int_{z_+}^{z} (w^2 - p w - q^2) / (l w + 1) dw.
/// Evaluated through the algebraically rearranged antiderivative
///   F(w) = (q^2 l - p) w^2 / 2 - q^2 w + (1 + p l - q^2 l^2) L(l w) / l^3,
/// with L(x) = log1p(x) - x + x^2/2, which is uniformly stable in l >= 0
/// (the naive ln(1+lw) bracket loses ~8 digits near l ~ 1e-4).
inline double barrier_I(double z, double p, double q, double l) {
    double zp = z_pm(p, q).first;
    if (z < zp - 1e-12 * std::max(1.0, zp))
        throw ConfigError("barrier_I: z must be >= z_plus");
    if (l < 0.0) throw ConfigError("barrier_I: l must be >= 0");
    if (1.0 + l * z <= 0.0) throw ConfigError("barrier_I: 1 + l z must be > 0");
    auto F = [&](double w) {
        return 0.5 * (q * q * l - p) * w * w - q * q * w +
               (1.0 + p * l - q * q * l * l) * detail::log1p_tail_scaled(l, w);
    };
    return F(z) - F(zp);
}

/// d/dz of barrier_I: the integrand itself.
inline double barrier_I_prime(double z, double p, double q, double l) {
    return ((z - p) * z - q * q) / (l * z + 1.0);
}

/// Root z_* in [z_+, inf) of I(z) = C_f C_U z_+. Reduces to z_+ when the right
/// side vanishes; for p = l = 0 it coincides with q * zeta_star(C_f C_U / q^2).
inline double z_star(double C_f, double C_U, double p, double q, double l,
                     double root_tol = 1e-12) {
    if (C_f < 0.0 || C_U < 0.0 || p < 0.0 || q < 0.0 || l < 0.0)
        throw ConfigError("z_star: inputs must be >= 0");
    double zp = z_pm(p, q).first;
    double target = C_f * C_U * zp;
    if (target == 0.0) return zp;
    if (q == 0.0 && p == 0.0)
        throw NumericalError("z_star: degenerate barrier (p = q = 0 with positive target)");
    auto g = [&](double z) { return barrier_I(z, p, q, l) - target; };
    auto dg = [&](double z) { return barrier_I_prime(z, p, q, l); };
    // Initial bracket from the analytic upper estimate when it applies.
    double hi = zp + 1.0;
    if (q > 0.0 && l < zp / (q * q))
        hi = zp + (1.0 + l * zp) * std::sqrt(C_f * C_U * zp / q) + 1.0;
    int guard = 0;
    while (g(hi) < 0.0) {
        hi = zp + 2.0 * (hi - zp);
        if (++guard > 200)
            throw NumericalError("z_star: failed to bracket the barrier root");
    }
    return solve_bracketed(g, dg, zp, hi, root_tol);
}

/// Perturbation threshold sigma(phi, x; Z) =
///   ((M_U M_P + M_PU + 2 L_P) Z) / 2 + M_P^2 / 4.
inline double sigma_threshold(double M_U, double M_P, double M_PU, double L_P,
                              double Z) {
    if (M_U < 0.0 || M_P < 0.0 || M_PU < 0.0 || L_P < 0.0 || Z < 0.0)
        throw ConfigError("sigma_threshold: inputs must be >= 0");
    return 0.5 * (M_U * M_P + M_PU + 2.0 * L_P) * Z + 0.25 * M_P * M_P;
}

/// Connecting-map norm bound
///   d = (C_U e^{dU} + sqrt((C_U e^{dU})^2 + 2 l_U e^{dU} dU)) / l_U,
/// dU = U_max - U_min: the positive root of
///   (l_U / 2) e^{-dU} d^2 - C_U d - dU = 0.
inline double connecting_bound_d(double C_U, double l_U, double U_min,
                                 double U_max) {
    if (l_U <= 0.0) throw ConfigError("connecting_bound_d: l_U must be > 0");
    if (U_max < U_min)
        throw ConfigError("connecting_bound_d: U_max must be >= U_min");
    double dU = U_max - U_min;
    double ce = C_U * std::exp(dU);
    return (ce + std::sqrt(ce * ce + 2.0 * l_U * std::exp(dU) * dU)) / l_U;
}

/// Resolution/refinement record attached to grid-derived quantities.
struct GridMeta {
    int torus_points = 24;
    long domain_samples = 2000;
    int refine_rounds = 0;
    double achieved_change = 0.0;
};

/// All scalar constants of the velocity-bound theory, with extremizer
/// witnesses where the constant came from a grid search.
struct ConstantsReport {
    double C_f = 0.0;
    double C_U = 0.0;
    double q = 0.0;
    double p = 0.0;
    double l = 0.0;
    double l_U = 0.0;
    double z_plus = 0.0;
    double z_minus = 0.0;
    double z_star = 0.0;
    double d = 0.0;
    double U_star_min = 0.0;
    double U_star_max = 0.0;
    bool q_degenerate = false;  // defining max for q^2 was <= 0
    bool q_from_CfCU = false;   // alternative mode q = sqrt(C_f C_U)
    std::map<std::string, std::pair<Phase, Vec>> witnesses;
    GridMeta grid_meta;
};

/// Fill the derived members (z_pm, z_star, d) of a report whose primitive
/// constants are already set.
inline void finalize_constants(ConstantsReport& r, double root_tol = 1e-12) {
    auto [zp, zm] = z_pm(r.p, r.q);
    r.z_plus = zp;
    r.z_minus = zm;
    r.z_star = (r.q == 0.0 && r.p == 0.0 && r.C_f * r.C_U > 0.0)
                   ? zp
                   : z_star(r.C_f, r.C_U, r.p, r.q, r.l, root_tol);
    r.d = connecting_bound_d(r.C_U, r.l_U, r.U_star_min, r.U_star_max);
}

}  // namespace umq

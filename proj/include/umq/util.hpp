#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace umq {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Symmetric part of a matrix. Taking the argument by value sidesteps the
/// Eigen aliasing hazard of writing `A = 0.5 * (A + A.transpose())`.
inline Mat symmetrize(Mat A) {
    return 0.5 * (A + Mat(A.transpose()));
}

/// Pairwise (tree) summation; deterministic and more accurate than a
/// running sum for long arrays.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(v.data(), v.size());
}

/// Index-chunked parallel map. Results land in a caller-indexed vector, so
/// the outcome is independent of thread scheduling.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    unsigned nt = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (unsigned t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += nt) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

/// Brent-free 1-d minimizer: golden section on [a,b].
inline double golden_min(const std::function<double(double)>& f, double a,
                         double b, double tol = 1e-10, int max_iter = 200) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < max_iter && (b - a) > tol; ++i) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

struct NelderMeadResult {
    Vec x;
    double value = 0.0;
    int evaluations = 0;
};

/// Downhill simplex minimization. `project` (optional) pulls iterates back
/// into the feasible set before evaluation.
inline NelderMeadResult nelder_mead(
    const std::function<double(const Vec&)>& f, const Vec& x0, double radius,
    int max_eval = 400, double xtol = 1e-12,
    const std::function<Vec(const Vec&)>& project = nullptr) {
    const int n = static_cast<int>(x0.size());
    auto fix = [&](const Vec& x) { return project ? project(x) : x; };
    int evals = 0;
    auto eval = [&](const Vec& x) {
        ++evals;
        return f(x);
    };

    std::vector<Vec> pts(n + 1);
    std::vector<double> vals(n + 1);
    pts[0] = fix(x0);
    vals[0] = eval(pts[0]);
    for (int i = 0; i < n; ++i) {
        Vec p = x0;
        p[i] += radius;
        pts[i + 1] = fix(p);
        vals[i + 1] = eval(pts[i + 1]);
    }

    auto order = [&] {
        for (int i = 0; i <= n; ++i)
            for (int j = i + 1; j <= n; ++j)
                if (vals[j] < vals[i]) {
                    std::swap(vals[i], vals[j]);
                    std::swap(pts[i], pts[j]);
                }
    };

    while (evals < max_eval) {
        order();
        double spread = 0.0;
        for (int i = 1; i <= n; ++i) spread = std::max(spread, (pts[i] - pts[0]).norm());
        if (spread < xtol) break;

        Vec centroid = Vec::Zero(n);
        for (int i = 0; i < n; ++i) centroid += pts[i];
        centroid /= n;

        Vec xr = fix(centroid + (centroid - pts[n]));
        double fr = eval(xr);
        if (fr < vals[0]) {
            Vec xe = fix(centroid + 2.0 * (centroid - pts[n]));
            double fe = eval(xe);
            if (fe < fr) {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if (fr < vals[n - 1]) {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            Vec xc = fix(centroid + 0.5 * (pts[n] - centroid));
            double fc = eval(xc);
            if (fc < vals[n]) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for (int i = 1; i <= n; ++i) {
                    pts[i] = fix(pts[0] + 0.5 * (pts[i] - pts[0]));
                    vals[i] = eval(pts[i]);
                }
            }
        }
    }
    order();
    return {pts[0], vals[0], evals};
}

/// Bracketing bisection refined by safeguarded Newton. `df` may be null
/// (pure bisection then). Requires f(a) and f(b) of opposite sign (or zero).
inline double solve_bracketed(const std::function<double(double)>& f,
                              const std::function<double(double)>& df, double a,
                              double b, double tol) {
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0)
        throw NumericalError("solve_bracketed: endpoints do not bracket a root");
    double x = 0.5 * (a + b);
    for (int it = 0; it < 200; ++it) {
        double fx = f(x);
        if (fx == 0.0 || (b - a) < tol) return x;
        if ((fa < 0.0) == (fx < 0.0)) {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        double xn = std::numeric_limits<double>::quiet_NaN();
        if (df) {
            double d = df(x);
            if (d != 0.0) xn = x - fx / d;
        }
        // Fall back to bisection whenever Newton leaves the bracket.
        if (!(xn > a && xn < b)) xn = 0.5 * (a + b);
        x = xn;
    }
    return x;
}

}  // namespace umq

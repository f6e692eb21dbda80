#pragma once

// Problem-instance container: quasiperiodic force field, velocity-linear
// perturbation tensor, auxiliary convex function, domain function, frequency
// vector; torus-phase arithmetic and torus averages.

#include "umq/geometry.hpp"
#include "umq/util.hpp"

#include <functional>
#include <optional>
#include <utility>

namespace umq {

/// Point of the k-torus; angles reduced to [0, 2pi).
struct Phase {
    Vec angles;

    Phase() = default;
    explicit Phase(Vec a) : angles(std::move(a)) { reduce(); }

    int dim() const { return static_cast<int>(angles.size()); }

    void reduce() {
        for (int i = 0; i < angles.size(); ++i) {
            angles[i] = std::fmod(angles[i], kTwoPi);
            if (angles[i] < 0.0) angles[i] += kTwoPi;
        }
    }
};

inline Phase advance(const Phase& phi, const Vec& omega, double t) {
    return Phase(phi.angles + t * omega);
}

struct ToleranceSet {
    double on_manifold_tol = 1e-9;
    double tangency_tol = 1e-9;
    double grid_refine_tol = 1e-6;
    double root_tol = 1e-12;
    double integrator_rel_tol = 1e-10;
    double integrator_abs_tol = 1e-12;
    double boundary_tol = 1e-9;
    double transport_tol = 1e-8;
};

/// Quasiperiodic tangent vector field f(phi, x) with ambient Jacobian in x.
struct ForceField {
    std::function<Vec(const Phase&, const Vec&)> value;
    std::function<Mat(const Phase&, const Vec&)> jacobian;  // optional

    Mat jac(const Phase& phi, const Vec& x, double scale = 1.0) const {
        if (jacobian) return jacobian(phi, x);
        TangentField tf{[&](const Vec& y) { return value(phi, y); }, nullptr};
        return tf.jac(x, scale);
    }
};

/// Quasiperiodic (1,1)-tensor field P(phi, x) acting on tangent vectors,
/// with a covariant-derivative evaluator nablaP(phi,x)(eta, xi).
struct PerturbationField {
    std::function<Vec(const Phase&, const Vec&, const Vec&)> apply;
    std::function<Vec(const Phase&, const Vec&, const Vec&, const Vec&)> nabla;
};

/// Full problem instance. Immutable after construction; evaluators must be
/// reentrant (grid sweeps evaluate them concurrently).
struct SystemSpec {
    ManifoldDesc manifold;
    ForceField f;
    std::optional<PerturbationField> P;
    ScalarField U;
    ScalarField G;  // domain D = {G < 0}
    Vec omega;
    ToleranceSet tol;

    // Ambient box enclosing cl(D), used for rejection sampling.
    Vec box_lo, box_hi;

    int torus_dim() const { return static_cast<int>(omega.size()); }

    Vec f_tangent(const Phase& phi, const Vec& x) const {
        return project_tangent(manifold, x, f.value(phi, x));
    }

    Vec P_apply(const Phase& phi, const Vec& x, const Vec& xi) const {
        if (!P) return Vec::Zero(x.size());
        return project_tangent(manifold, x, P->apply(phi, x, xi));
    }

    /// nablaP(phi,x)(eta, xi). Falls back to central differences of P along
    /// the projection retraction with projection-transported xi.
    Vec P_nabla(const Phase& phi, const Vec& x, const Vec& eta,
                const Vec& xi) const {
        if (!P) return Vec::Zero(x.size());
        if (P->nabla) return P->nabla(phi, x, eta, xi);
        const double h = std::cbrt(std::numeric_limits<double>::epsilon()) *
                         std::max(1.0, x.norm());
        auto sample = [&](double s) {
            Vec xs = project_to_manifold(manifold, x + s * eta);
            Vec xis = project_tangent(manifold, xs, xi);
            double nx = xi.norm();
            if (xis.norm() > 0.0 && nx > 0.0) xis *= nx / xis.norm();
            Vec px = P->apply(phi, xs, xis);
            // Transport the result back to x (first order: projection).
            return Vec(project_tangent(manifold, x, px));
        };
        return Vec((sample(h) - sample(-h)) / (2.0 * h));
    }
};

/// Smallest |<n, omega>| over nonzero integer vectors with |n|_inf <= nmax.
/// Diagnostic only; rational independence is not decidable numerically.
inline double resonance_diagnostic(const Vec& omega, int nmax = 10) {
    const int k = static_cast<int>(omega.size());
    if (k == 0) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> n(k, -nmax);
    while (true) {
        double dot = 0.0;
        bool zero = true;
        for (int i = 0; i < k; ++i) {
            dot += n[i] * omega[i];
            zero = zero && n[i] == 0;
        }
        if (!zero) best = std::min(best, std::abs(dot));
        int i = 0;
        for (; i < k; ++i) {
            if (++n[i] <= nmax) break;
            n[i] = -nmax;
        }
        if (i == k) break;
    }
    return best;
}

/// Torus average of f(., x) by the periodic trapezoidal rule on a uniform
/// grid, refined by doubling until the change drops below tol.
inline Vec averaged_field(const SystemSpec& spec, const Vec& x,
                          int quad_points_per_dim = 8,
                          int max_doublings = 6) {
    if (quad_points_per_dim < 4)
        throw ConfigError("averaged_field: need at least 4 points per dim");
    const int k = spec.torus_dim();
    auto average = [&](int npts) {
        const double dstep = kTwoPi / npts;
        long total = 1;
        for (int i = 0; i < k; ++i) total *= npts;
        std::vector<std::vector<double>> acc(
            x.size(), std::vector<double>(static_cast<std::size_t>(total)));
        std::vector<int> idx(k, 0);
        Vec phi(k);
        for (long c = 0; c < total; ++c) {
            for (int i = 0; i < k; ++i) phi[i] = idx[i] * dstep;
            Vec v = spec.f_tangent(Phase(phi), x);
            for (int d = 0; d < x.size(); ++d) acc[d][c] = v[d];
            for (int i = 0; i < k; ++i) {
                if (++idx[i] < npts) break;
                idx[i] = 0;
            }
        }
        Vec out(x.size());
        for (int d = 0; d < x.size(); ++d)
            out[d] = pairwise_sum(acc[d]) / static_cast<double>(total);
        return out;
    };

    int npts = quad_points_per_dim;
    Vec prev = average(npts);
    for (int it = 0; it < max_doublings; ++it) {
        npts *= 2;
        Vec next = average(npts);
        double change = (next - prev).norm();
        prev = next;
        if (change < spec.tol.grid_refine_tol)
            return project_tangent(spec.manifold, x, prev);
    }
    throw NumericalError("averaged_field: quadrature did not settle, residual " +
                         std::to_string((average(npts) - prev).norm()));
}

}  // namespace umq

#pragma once

// Riemannian geometry on hypersurfaces embedded in Euclidean space.
// A manifold is the regular zero set of a scalar function Phi; the unit
// sphere gets closed-form fast paths. All operations are pure.

#include "umq/util.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <utility>

namespace umq {

/// Smooth scalar field on ambient space. Gradient/Hessian evaluators are
/// optional; central finite differences fill the gaps.
struct ScalarField {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;  // ambient gradient
    std::function<Mat(const Vec&)> hessian;   // ambient Hessian

    double fd_scale = 1.0;

    double operator()(const Vec& x) const { return value(x); }

    Vec grad(const Vec& x) const {
        if (gradient) return gradient(x);
        const int n = static_cast<int>(x.size());
        const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * fd_scale;
        Vec g(n), xp = x, xm = x;
        for (int i = 0; i < n; ++i) {
            xp[i] = x[i] + h;
            xm[i] = x[i] - h;
            g[i] = (value(xp) - value(xm)) / (2.0 * h);
            xp[i] = x[i];
            xm[i] = x[i];
        }
        return g;
    }

    Mat hess(const Vec& x) const {
        if (hessian) return hessian(x);
        const int n = static_cast<int>(x.size());
        const double h = std::pow(std::numeric_limits<double>::epsilon(), 0.25) * fd_scale;
        Mat H(n, n);
        Vec xa = x;
        for (int i = 0; i < n; ++i) {
            xa[i] = x[i] + h;
            Vec gp = grad_fd_step(xa);
            xa[i] = x[i] - h;
            Vec gm = grad_fd_step(xa);
            xa[i] = x[i];
            H.col(i) = (gp - gm) / (2.0 * h);
        }
        return 0.5 * (H + H.transpose());
    }

  private:
    Vec grad_fd_step(const Vec& x) const {
        if (gradient) return gradient(x);
        const int n = static_cast<int>(x.size());
        const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * fd_scale;
        Vec g(n), xp = x, xm = x;
        for (int i = 0; i < n; ++i) {
            xp[i] = x[i] + h;
            xm[i] = x[i] - h;
            g[i] = (value(xp) - value(xm)) / (2.0 * h);
            xp[i] = x[i];
            xm[i] = x[i];
        }
        return g;
    }
};

enum class ManifoldKind { UnitSphere, LevelSet, Callback };

/// Hypersurface description. For LevelSet/UnitSphere everything derives from
/// the level function; Callback manifolds supply their own geometry hooks.
struct ManifoldDesc {
    int ambient_dim = 3;
    ManifoldKind kind = ManifoldKind::UnitSphere;
    ScalarField level;  // Phi; zero set is the manifold
    double singular_tol = 1e-10;
    double on_manifold_tol = 1e-9;

    // Callback hooks (required iff kind == Callback).
    std::function<double(const Vec&)> curvature_bound_fn;
    std::function<Vec(const Vec&)> unit_normal_fn;
    std::function<Vec(const Vec&)> closest_point_fn;

    int dim() const { return ambient_dim - 1; }

    static ManifoldDesc unit_sphere(int ambient_dim = 3) {
        ManifoldDesc m;
        m.ambient_dim = ambient_dim;
        m.kind = ManifoldKind::UnitSphere;
        m.level.value = [](const Vec& x) { return x.squaredNorm() - 1.0; };
        m.level.gradient = [](const Vec& x) { return Vec(2.0 * x); };
        m.level.hessian = [n = ambient_dim](const Vec&) {
            return Mat(2.0 * Mat::Identity(n, n));
        };
        return m;
    }

    static ManifoldDesc level_set(int ambient_dim, ScalarField phi) {
        ManifoldDesc m;
        m.ambient_dim = ambient_dim;
        m.kind = ManifoldKind::LevelSet;
        m.level = std::move(phi);
        return m;
    }
};

struct MPoint {
    Vec coords;
    const ManifoldDesc* manifold = nullptr;
};

struct TVec {
    MPoint base;
    Vec comps;

    double norm() const { return comps.norm(); }
};

inline double constraint_residual(const ManifoldDesc& m, const Vec& x) {
    return std::abs(m.level.value(x));
}

inline Vec unit_normal(const ManifoldDesc& m, const Vec& x) {
    if (m.kind == ManifoldKind::UnitSphere) return x.normalized();
    if (m.kind == ManifoldKind::Callback) {
        if (!m.unit_normal_fn)
            throw ConfigError("callback manifold lacks unit_normal_fn");
        return m.unit_normal_fn(x);
    }
    Vec g = m.level.grad(x);
    double n = g.norm();
    if (n < m.singular_tol * std::max(1.0, x.norm()))
        throw NumericalError("singular geometry: level-set gradient vanishes");
    return g / n;
}

/// Closest-point (re)projection onto the manifold. Sphere: normalize;
/// level set: Newton steps along the gradient direction.
inline Vec project_to_manifold(const ManifoldDesc& m, Vec x, int newton_iters = 4) {
    if (m.kind == ManifoldKind::UnitSphere) return x.normalized();
    if (m.kind == ManifoldKind::Callback) {
        if (!m.closest_point_fn)
            throw ConfigError("callback manifold lacks closest_point_fn");
        return m.closest_point_fn(x);
    }
    for (int i = 0; i < newton_iters; ++i) {
        double phi = m.level.value(x);
        Vec g = m.level.grad(x);
        double g2 = g.squaredNorm();
        if (g2 < m.singular_tol * m.singular_tol)
            throw NumericalError("singular geometry during projection");
        x -= (phi / g2) * g;
        if (std::abs(phi) < 0.1 * m.on_manifold_tol) break;
    }
    return x;
}

inline MPoint make_point(const ManifoldDesc& m, Vec coords) {
    return MPoint{project_to_manifold(m, std::move(coords)), &m};
}

inline Vec project_tangent(const ManifoldDesc& m, const Vec& x, const Vec& w) {
    Vec n = unit_normal(m, x);
    return w - n.dot(w) * n;
}

inline TVec project_tangent(const MPoint& x, const Vec& w) {
    return TVec{x, project_tangent(*x.manifold, x.coords, w)};
}

/// Orthonormal basis of the tangent space, as the columns of an N x (N-1)
/// matrix (orthogonal complement of the unit normal via Householder QR).
inline Mat tangent_basis(const ManifoldDesc& m, const Vec& x) {
    const int n = m.ambient_dim;
    Vec nor = unit_normal(m, x);
    Eigen::HouseholderQR<Mat> qr(nor);
    Mat Q = qr.householderQ() * Mat::Identity(n, n);
    return Q.rightCols(n - 1);
}

/// Manifold gradient of an ambient scalar field: tangential projection of
/// the ambient gradient.
inline TVec grad_on_manifold(const ScalarField& h, const MPoint& x) {
    return project_tangent(x, h.grad(x.coords));
}

/// Shape operator restricted to tangent vectors, as an ambient-space map:
/// S w = (I - n n^T) HessPhi w / |gradPhi|  (w tangent).
inline Mat shape_operator_ambient(const ManifoldDesc& m, const Vec& x) {
    if (m.kind == ManifoldKind::UnitSphere) {
        Vec n = x.normalized();
        return Mat::Identity(m.ambient_dim, m.ambient_dim) - n * n.transpose();
    }
    Vec g = m.level.grad(x);
    double gn = g.norm();
    if (gn < m.singular_tol)
        throw NumericalError("singular geometry in shape operator");
    Vec n = g / gn;
    Mat P = Mat::Identity(m.ambient_dim, m.ambient_dim) - n * n.transpose();
    return P * m.level.hess(x) * P / gn;
}

/// Hesse form of an ambient scalar field restricted to the manifold:
///   H(xi,eta) = xi^T D2h eta - <grad h, n> <xi, S eta>.
inline double hess_form(const ScalarField& h, const MPoint& x, const TVec& xi,
                        const TVec& eta) {
    const ManifoldDesc& m = *x.manifold;
    Vec n = unit_normal(m, x.coords);
    double hn = h.grad(x.coords).dot(n);
    double amb = xi.comps.dot(h.hess(x.coords) * eta.comps);
    double shape;
    if (m.kind == ManifoldKind::UnitSphere) {
        shape = xi.comps.dot(eta.comps);
    } else {
        shape = xi.comps.dot(shape_operator_ambient(m, x.coords) * eta.comps);
    }
    return amb - hn * shape;
}

/// Ambient matrix whose restriction to the tangent space is the Hesse form.
inline Mat hess_form_matrix(const ScalarField& h, const MPoint& x) {
    const ManifoldDesc& m = *x.manifold;
    Vec n = unit_normal(m, x.coords);
    double hn = h.grad(x.coords).dot(n);
    Mat S = shape_operator_ambient(m, x.coords);
    Mat H = h.hess(x.coords) - hn * S;
    return 0.5 * (H + H.transpose());
}

/// Tangent vector field with an ambient Jacobian evaluator.
struct TangentField {
    std::function<Vec(const Vec&)> value;
    std::function<Mat(const Vec&)> jacobian;  // optional; FD fallback

    Mat jac(const Vec& x, double scale = 1.0) const {
        if (jacobian) return jacobian(x);
        const int n = static_cast<int>(x.size());
        const double h = std::cbrt(std::numeric_limits<double>::epsilon()) * scale;
        Mat J(n, n);
        Vec xa = x;
        for (int i = 0; i < n; ++i) {
            xa[i] = x[i] + h;
            Vec vp = value(xa);
            xa[i] = x[i] - h;
            Vec vm = value(xa);
            xa[i] = x[i];
            J.col(i) = (vp - vm) / (2.0 * h);
        }
        return J;
    }
};

/// Levi-Civita covariant derivative of a tangent field along h at x:
/// ambient directional derivative followed by tangential projection.
inline TVec covariant_derivative(const TangentField& v, const MPoint& x,
                                 const TVec& h) {
    Vec dv = v.jac(x.coords, std::max(1.0, x.coords.norm())) * h.comps;
    return project_tangent(x, dv);
}

inline double curvature_bound_gauss(const MPoint& x);

/// Positive-part supremum of sectional curvature at x. Hypersurfaces: Gauss
/// equation over principal-curvature pairs; callback manifolds delegate.
inline double curvature_bound(const MPoint& x) {
    const ManifoldDesc& m = *x.manifold;
    if (m.kind == ManifoldKind::Callback) {
        if (!m.curvature_bound_fn)
            throw ConfigError("callback manifold lacks curvature_bound_fn");
        return m.curvature_bound_fn(x.coords);
    }
    if (m.kind == ManifoldKind::UnitSphere) return 1.0;
    return curvature_bound_gauss(x);
}

/// Generic Gauss-equation path (exposed separately so the sphere closed form
/// can be cross-checked against it).
inline double curvature_bound_gauss(const MPoint& x) {
    const ManifoldDesc& m = *x.manifold;
    const int md = m.dim();
    if (md < 2) return 0.0;
    Mat T = tangent_basis(m, x.coords);
    Mat S = T.transpose() * shape_operator_ambient(m, x.coords) * T;
    S = symmetrize(S);
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    const Vec k = es.eigenvalues();
    double best = 0.0;
    for (int i = 0; i < md; ++i)
        for (int j = i + 1; j < md; ++j) best = std::max(best, k[i] * k[j]);
    return best;
}

/// Time-parametrized curve on the manifold with velocity access.
struct CurveFn {
    std::function<Vec(double)> x;
    std::function<Vec(double)> v;
};

/// Parallel transport of frame columns along a curve by integrating
/// nabla_xdot w = 0 (RK4, fixed step), re-projecting to the tangent space
/// after every step. Columns keep their norms up to integration drift.
inline Mat transport_frame_along(const ManifoldDesc& m, const CurveFn& curve,
                                 Mat W, double t0, double t1,
                                 double step = 1e-3) {
    auto rhs = [&](double t, const Mat& w) -> Mat {
        Vec x = curve.x(t);
        Vec xd = curve.v(t);
        // ndot = (I - n n^T) HessPhi xdot / |gradPhi|, tangential part only
        // matters against tangent w.
        Vec n = unit_normal(m, x);
        Vec ndot;
        if (m.kind == ManifoldKind::UnitSphere) {
            ndot = xd - n.dot(xd) * n;
        } else {
            Vec g = m.level.grad(x);
            ndot = m.level.hess(x) * xd;
            ndot = (ndot - n.dot(ndot) * n) / g.norm();
        }
        Mat dw(w.rows(), w.cols());
        for (int c = 0; c < w.cols(); ++c)
            dw.col(c) = -(w.col(c).dot(ndot)) * n;
        return dw;
    };

    const double span = t1 - t0;
    if (span == 0.0) return W;
    const long nsteps = std::max<long>(1, std::lround(std::abs(span) / step));
    const double h = span / static_cast<double>(nsteps);
    double t = t0;
    for (long i = 0; i < nsteps; ++i) {
        Mat k1 = rhs(t, W);
        Mat k2 = rhs(t + 0.5 * h, W + 0.5 * h * k1);
        Mat k3 = rhs(t + 0.5 * h, W + 0.5 * h * k2);
        Mat k4 = rhs(t + h, W + h * k3);
        W += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = t0 + static_cast<double>(i + 1) * h;
        Vec x = curve.x(t);
        Vec n = unit_normal(m, x);
        for (int c = 0; c < W.cols(); ++c) W.col(c) -= n.dot(W.col(c)) * n;
    }
    return W;
}

inline Vec parallel_transport_along(const ManifoldDesc& m, const CurveFn& curve,
                                    const Vec& w0, double t0, double t1,
                                    double step = 1e-3) {
    Mat W(w0.size(), 1);
    W.col(0) = w0;
    return transport_frame_along(m, curve, W, t0, t1, step).col(0);
}

struct BoundaryData {
    TVec nu;          // outward unit normal of the domain boundary, in T_x M
    double lambda_II; // minimal principal curvature of the boundary
};

/// Outward normal and minimal principal curvature of the boundary {G=0}
/// inside the manifold:
///   nu = grad_M G / |grad_M G|,  <II xi,xi> = hess_form(G)(xi,xi)/|grad_M G|
/// minimized over unit xi tangent to both M and the boundary.
inline BoundaryData boundary_normal_and_curvature(const ScalarField& G,
                                                  const MPoint& x,
                                                  double boundary_tol = 1e-9) {
    const ManifoldDesc& m = *x.manifold;
    if (std::abs(G(x.coords)) > boundary_tol * std::max(1.0, x.coords.norm()))
        throw NumericalError("boundary operator queried away from {G=0}");
    TVec g = grad_on_manifold(G, x);
    double gn = g.norm();
    if (gn < m.singular_tol)
        throw NumericalError("non-transversal boundary: grad_M G vanishes");
    Vec nu = g.comps / gn;

    const int n = m.ambient_dim;
    const int bd = m.dim() - 1;  // dimension of the boundary tangent space
    if (bd <= 0)
        return {TVec{x, nu}, std::numeric_limits<double>::infinity()};

    // Orthonormal basis of T_x M orthogonal to nu.
    Mat T = tangent_basis(m, x.coords);
    Vec nu_t = T.transpose() * nu;
    Eigen::HouseholderQR<Mat> qr(nu_t);
    Mat Q = qr.householderQ() * Mat::Identity(m.dim(), m.dim());
    Mat Tb = T * Q.rightCols(bd);  // N x bd

    Mat H = hess_form_matrix(G, x);
    Mat Hb = Tb.transpose() * H * Tb / gn;
    Hb = symmetrize(Hb);
    Eigen::SelfAdjointEigenSolver<Mat> es(Hb);
    return {TVec{x, nu}, es.eigenvalues().minCoeff()};
}

}  // namespace umq

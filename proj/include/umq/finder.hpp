#pragma once

// Locating the bounded solution inside the domain. The existence proof is a
// topological exit-set argument and gives no algorithm; the numerical
// realization is escape-time maximization over initial data, extended to
// long horizons by chunked shadowing: the staying orbit is a saddle, so a
// raw trajectory leaves the domain after O(log(1/eps_machine)) characteristic
// times no matter how well the seed is chosen. Periodic microscopic
// corrections of the state (each bounded by the reported shadowing accuracy)
// keep the computed orbit on the staying set; the accumulated correction
// magnitude is reported, not hidden. Also: hull extraction certifying
// quasiperiodicity, and the uniqueness probe built on the connecting map.

#include "umq/dynamics.hpp"
#include "umq/hypotheses.hpp"
#include "umq/system.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <optional>
#include <vector>

namespace umq {

/// First time (relative span from `s`) at which the solution started at
/// (x0, eps * averaged_field(x0)) leaves the domain; `horizon` if censored.
inline double escape_time(const SystemSpec& spec, double s, const Vec& x0,
                          double eps, double horizon, double z_plus = 0.0,
                          IntegrateOptions opts = {}) {
    Vec fbar = averaged_field(spec, x0);
    double fn = fbar.norm();
    if (z_plus > 0.0 && eps * fn > z_plus) eps = z_plus / fn;
    State init;
    init.x = project_to_manifold(spec.manifold, x0);
    init.v = project_tangent(spec.manifold, init.x, eps * fbar);
    init.t = s;
    init.phi = advance(Phase(Vec::Zero(spec.torus_dim())), spec.omega, s);
    opts.stop_on_exit = true;
    opts.light_monitors = true;
    if (spec.G(init.x) >= 0.0) return 0.0;
    Trajectory tr = integrate_main(spec, init, s + horizon, opts);
    return tr.exited ? tr.exit_time - s : horizon;
}

struct ShadowingOptions {
    double guard = 60.0;       // escape window used for corrections
    double chunk = 15.0;       // advance per correction
    int nm_evals = 160;        // simplex budget per correction
    double radius = 1e-4;      // initial correction search radius
    double min_radius = 1e-9;
    double escape_rel_tol = 1e-11;
    double escape_abs_tol = 1e-13;
    double advance_rel_tol = 1e-10;
    double advance_abs_tol = 1e-12;
};

struct SearchBudget {
    int seeds = 200;
    int refine_evals = 200;  // simplex budget for the seed-position search
    std::uint64_t seed = 2024;
    double eps_cap = 1.0;    // initial eps before the z_plus auto-scale
    ShadowingOptions shadow;
};

struct SearchReport {
    Vec x0, v0;                           // best initial state found
    double escape_time = 0.0;             // censored at the horizon
    bool censored = false;
    bool staying_candidate = false;
    std::vector<double> refinement_trace; // best escape per refinement stage
    double max_correction = 0.0;          // largest shadowing correction
    double total_correction = 0.0;
};

namespace detail {

inline double censored_escape(const SystemSpec& spec, const State& init,
                              double guard, const ShadowingOptions& so) {
    if (spec.G(init.x) >= 0.0) return 0.0;
    IntegrateOptions opts;
    opts.rel_tol = so.escape_rel_tol;
    opts.abs_tol = so.escape_abs_tol;
    opts.stop_on_exit = true;
    opts.light_monitors = true;
    Trajectory tr = integrate_main(spec, init, init.t + guard, opts);
    return tr.exited ? tr.exit_time - init.t : guard;
}

/// Append `piece` to `dst`, keeping samples with t >= collect_from and
/// skipping a duplicated junction sample.
inline void append_trajectory(Trajectory& dst, const Trajectory& piece,
                              double collect_from) {
    dst.manifold = piece.manifold;
    for (std::size_t i = 0; i < piece.size(); ++i) {
        if (piece.times[i] < collect_from) continue;
        if (!dst.times.empty() && piece.times[i] <= dst.times.back()) continue;
        dst.times.push_back(piece.times[i]);
        dst.xs.push_back(piece.xs[i]);
        dst.vs.push_back(piece.vs[i]);
        dst.as.push_back(piece.as[i]);
        dst.mon_speed.push_back(piece.mon_speed[i]);
        dst.mon_U.push_back(piece.mon_U[i]);
        dst.mon_vU.push_back(piece.mon_vU[i]);
        dst.mon_G.push_back(piece.mon_G[i]);
        dst.mon_residual.push_back(piece.mon_residual[i]);
    }
    dst.stats.accepted += piece.stats.accepted;
    dst.stats.rejected += piece.stats.rejected;
}

struct ShadowResult {
    Trajectory traj;
    double max_correction = 0.0;
    double total_correction = 0.0;
    double min_guard_reached = std::numeric_limits<double>::infinity();
};

/// Advance a near-staying state to t_end by chunks, re-centering the state
/// onto the staying set before each chunk via escape-time maximization over
/// a small 2m-dimensional state perturbation.
inline ShadowResult shadow_advance(const SystemSpec& spec, State state,
                                   double t_end, double collect_from,
                                   const ShadowingOptions& so) {
    const ManifoldDesc& m = spec.manifold;
    const int md = m.dim();
    ShadowResult out;
    double radius = so.radius;

    IntegrateOptions adv;
    adv.rel_tol = so.advance_rel_tol;
    adv.abs_tol = so.advance_abs_tol;

    while (state.t < t_end - 1e-12) {
        // Correction step.
        Mat T = tangent_basis(m, state.x);
        auto candidate = [&](const Vec& u) {
            State s2 = state;
            s2.x = project_to_manifold(m, state.x + T * u.head(md));
            s2.v = project_tangent(m, s2.x, state.v + T * u.tail(md));
            return s2;
        };
        auto objective = [&](const Vec& u) {
            return -censored_escape(spec, candidate(u), so.guard, so);
        };
        double base = -objective(Vec::Zero(2 * md));
        double best = base;
        Vec best_u = Vec::Zero(2 * md);
        if (base < so.guard) {
            auto res = nelder_mead(objective, Vec::Zero(2 * md), radius,
                                   so.nm_evals, 1e-14);
            if (-res.value > best) {
                best = -res.value;
                best_u = res.x;
            }
        }
        out.min_guard_reached = std::min(out.min_guard_reached, best);
        double cn = best_u.norm();
        out.max_correction = std::max(out.max_correction, cn);
        out.total_correction += cn;
        state = candidate(best_u);
        radius = std::clamp(4.0 * cn, so.min_radius, so.radius);

        // Advance one chunk, collecting samples.
        double chunk_end = std::min(state.t + so.chunk, t_end);
        Trajectory piece = integrate_main(spec, state, chunk_end, adv);
        append_trajectory(out.traj, piece, collect_from);
        state.x = piece.xs.back();
        state.v = piece.vs.back();
        state.phi = advance(state.phi, spec.omega, piece.times.back() - state.t);
        state.t = piece.times.back();
        if (spec.G(state.x) >= 0.0)
            throw NumericalError(
                "shadowing lost the staying orbit (domain exit at t = " +
                std::to_string(state.t) + ")");
    }
    return out;
}

}  // namespace detail

/// Escape-time maximization over seeds in the domain: grid seeding of the
/// initial position (velocity eps * averaged field), elitist simplex
/// refinement, then shadowing verification up to the horizon.
inline SearchReport waszewski_search(const SystemSpec& spec, double s,
                                     double horizon, SearchBudget budget = {},
                                     double z_plus = 0.0) {
    const ManifoldDesc& m = spec.manifold;
    const int md = m.dim();
    auto seeds = detail::sample_domain(spec, budget.seeds, budget.seed);

    // eps so that ||eps * averaged field|| <= z_plus over the seeds.
    double eps = budget.eps_cap;
    if (z_plus > 0.0) {
        double fmax = 0.0;
        for (const Vec& x : seeds)
            fmax = std::max(fmax, averaged_field(spec, x).norm());
        if (fmax > 0.0) eps = std::min(eps, 0.5 * z_plus / fmax);
    }

    const double scan_guard = std::min(horizon, budget.shadow.guard);
    auto seed_state = [&](const Vec& x0) {
        State st;
        st.x = project_to_manifold(m, x0);
        Vec fbar = averaged_field(spec, st.x);
        st.v = project_tangent(m, st.x, eps * fbar);
        st.t = s;
        st.phi = advance(Phase(Vec::Zero(spec.torus_dim())), spec.omega, s);
        return st;
    };
    auto seed_escape = [&](const Vec& x0) {
        if (spec.G(project_to_manifold(m, x0)) >= 0.0) return 0.0;
        return detail::censored_escape(spec, seed_state(x0), scan_guard,
                                       budget.shadow);
    };

    SearchReport rep;
    double best = -1.0;
    Vec best_x;
    for (const Vec& x : seeds) {
        double e = seed_escape(x);
        if (e > best) {
            best = e;
            best_x = x;
        }
    }
    if (best <= 0.0)
        throw NumericalError("staying-orbit search failed: every seed exits "
                             "immediately");
    rep.refinement_trace.push_back(best);

    // Simplex refinement of the seed position (elitist: keep the best).
    Mat T = tangent_basis(m, best_x);
    auto res = nelder_mead(
        [&](const Vec& u) {
            Vec x = detail::pull_into_domain(spec, best_x + T * u);
            return -seed_escape(x);
        },
        Vec::Zero(md), 0.2, budget.refine_evals, 1e-14);
    if (-res.value >= best) {
        best = -res.value;
        best_x = detail::pull_into_domain(spec, best_x + T * res.x);
    }
    rep.refinement_trace.push_back(best);

    State st = seed_state(best_x);
    rep.x0 = st.x;
    rep.v0 = st.v;
    rep.escape_time = best;
    if (best >= scan_guard) {
        // Verify persistence to the full horizon by shadowing.
        try {
            auto sh = detail::shadow_advance(spec, st, s + horizon,
                                             s + horizon + 1.0, budget.shadow);
            rep.censored = true;
            rep.staying_candidate = true;
            rep.escape_time = horizon;
            rep.max_correction = sh.max_correction;
            rep.total_correction = sh.total_correction;
        } catch (const NumericalError&) {
            rep.censored = false;
        }
        rep.refinement_trace.push_back(rep.escape_time);
    }
    return rep;
}

/// Extract the bounded solution on [t_a, t_b]: seed search at t_a - burn,
/// shadow forward, collect the window. Doubling the burn-in (up to
/// `max_doublings`) must reproduce the window within `tol`.
inline Trajectory bounded_solution(const SystemSpec& spec, double t_a,
                                   double t_b, double burn, double tol,
                                   SearchBudget budget = {},
                                   double z_plus = 0.0, int max_doublings = 3,
                                   double* achieved_diff = nullptr) {
    auto run = [&](double b, std::uint64_t seed) {
        SearchBudget bud = budget;
        bud.seed = seed;
        double s0 = t_a - b;
        SearchReport rep = waszewski_search(spec, s0, b, bud, z_plus);
        State st;
        st.x = rep.x0;
        st.v = rep.v0;
        st.t = s0;
        st.phi = advance(Phase(Vec::Zero(spec.torus_dim())), spec.omega, s0);
        auto sh = detail::shadow_advance(spec, st, t_b, t_a, budget.shadow);
        if (sh.traj.times.empty() || sh.traj.t_begin() > t_a + budget.shadow.chunk)
            throw NumericalError("bounded_solution: window not covered");
        return sh.traj;
    };

    Trajectory prev = run(burn, budget.seed);
    for (int j = 1; j <= max_doublings; ++j) {
        burn *= 2.0;
        Trajectory next = run(burn, budget.seed + static_cast<std::uint64_t>(j));
        double lo = std::max(prev.t_begin(), next.t_begin());
        double hi = std::min(prev.t_end(), next.t_end());
        double diff = 0.0;
        for (int i = 0; i <= 200; ++i) {
            double t = lo + (hi - lo) * i / 200.0;
            diff = std::max(diff,
                            (prev.eval(t).first - next.eval(t).first).norm());
        }
        if (achieved_diff) *achieved_diff = diff;
        prev = std::move(next);
        if (diff < tol) return prev;
    }
    throw NumericalError(
        "bounded_solution: burn-in doubling did not converge within tol");
}

/// Torus-grid hull of a quasiperiodic trajectory: per-node local polynomial
/// fit of samples whose phase lands in the node neighborhood.
struct HullFunction {
    int k = 0;            // torus dimension
    int res = 0;          // nodes per angle
    std::vector<Vec> values;  // res^k node values (row-major over angles)
    const ManifoldDesc* manifold = nullptr;
    double residual = 0.0;    // sup dist over held-out samples
    double fill_factor = 0.0;

    long node_index(const std::vector<int>& idx) const {
        long n = 0;
        for (int i = k - 1; i >= 0; --i) n = n * res + idx[i];
        return n;
    }

    /// Tensor-product Catmull-Rom interpolation over the torus grid (fourth
    /// order in the grid spacing), projected back onto the manifold.
    Vec eval(const Phase& phi) const {
        std::vector<int> base(k);
        std::vector<std::array<double, 4>> w(static_cast<std::size_t>(k));
        const double h = kTwoPi / res;
        for (int i = 0; i < k; ++i) {
            double u = phi.angles[i] / h;
            base[i] = static_cast<int>(std::floor(u)) % res;
            if (base[i] < 0) base[i] += res;
            double s = u - std::floor(u);
            double s2 = s * s, s3 = s2 * s;
            w[static_cast<std::size_t>(i)] = {
                0.5 * (-s3 + 2.0 * s2 - s), 0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
                0.5 * (-3.0 * s3 + 4.0 * s2 + s), 0.5 * (s3 - s2)};
        }
        Vec acc = Vec::Zero(values.front().size());
        const int corners = 1 << (2 * k);  // 4^k stencil nodes
        for (int c = 0; c < corners; ++c) {
            double wt = 1.0;
            std::vector<int> idx(k);
            for (int i = 0; i < k; ++i) {
                int off = (c >> (2 * i)) & 3;  // stencil offset -1..2
                idx[i] = ((base[i] + off - 1) % res + res) % res;
                wt *= w[static_cast<std::size_t>(i)][static_cast<std::size_t>(
                    off)];
            }
            if (wt == 0.0) continue;
            acc += wt * values[static_cast<std::size_t>(node_index(idx))];
        }
        return manifold ? project_to_manifold(*manifold, acc) : acc;
    }
};

/// Fit the hull h with x(t) = h(t omega + phi0) from a long trajectory.
/// Even-index samples fit the nodes; odd-index samples are held out for the
/// residual. Torus dimension is capped at 3 (grid blowup).
inline HullFunction hull_extract(const Trajectory& traj, const Vec& omega,
                                 const Phase& phi0, double t_phase_origin,
                                 int grid_res, double min_fill = 0.9) {
    const int k = static_cast<int>(omega.size());
    if (k > 3)
        throw ConfigError("hull extraction supports torus dimension <= 3");
    if (traj.size() < 16)
        throw NumericalError("hull extraction needs a longer trajectory");
    const int n = static_cast<int>(traj.xs.front().size());
    const double h = kTwoPi / grid_res;

    HullFunction hull;
    hull.k = k;
    hull.res = grid_res;
    hull.manifold = traj.manifold;

    long total = 1;
    for (int i = 0; i < k; ++i) total *= grid_res;

    auto phase_of = [&](double t) {
        return advance(phi0, omega, t - t_phase_origin);
    };

    // Bucket the fitting samples by grid cell.
    std::vector<std::vector<int>> cell_samples(static_cast<std::size_t>(total));
    std::vector<Vec> phases(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        phases[i] = phase_of(traj.times[i]).angles;
        if (i % 2 != 0) continue;  // odd samples are held out
        std::vector<int> idx(k);
        for (int d = 0; d < k; ++d)
            idx[d] = std::min<int>(grid_res - 1,
                                   static_cast<int>(phases[i][d] / h));
        cell_samples[static_cast<std::size_t>(hull.node_index(idx))].push_back(
            static_cast<int>(i));
    }

    // Per node: local least squares over the 4^k cell neighborhood
    // (cells idx-2..idx+1 per axis, so displacements from the node cover
    // the symmetric window [-2h, 2h); an asymmetric window would let odd
    // Taylor terms bias the fitted node value).
    hull.values.assign(static_cast<std::size_t>(total),
                       Vec::Zero(n));
    long filled = 0;
    std::vector<int> idx(k, 0);
    for (long node = 0; node < total; ++node) {
        Vec center(k);
        for (int d = 0; d < k; ++d) center[d] = idx[d] * h;

        std::vector<int> rows;
        std::vector<int> nb(k, -2);
        while (true) {
            std::vector<int> cidx(k);
            for (int d = 0; d < k; ++d)
                cidx[d] = ((idx[d] + nb[d]) % grid_res + grid_res) % grid_res;
            const auto& cell =
                cell_samples[static_cast<std::size_t>(hull.node_index(cidx))];
            rows.insert(rows.end(), cell.begin(), cell.end());
            int d = 0;
            for (; d < k; ++d) {
                if (++nb[d] <= 1) break;
                nb[d] = -2;
            }
            if (d == k) break;
        }
        // Quadratic local model when the cell neighborhood has enough
        // samples (cuts the node bias to third order in the spacing),
        // affine otherwise.
        const int nquad = 1 + k + k * (k + 1) / 2;
        const bool quad = static_cast<int>(rows.size()) >= nquad + 2;
        const int ncoef = quad ? nquad : k + 1;
        if (static_cast<int>(rows.size()) >= k + 2) {
            ++filled;
            Mat Amat(rows.size(), ncoef);
            Mat bmat(rows.size(), n);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                Amat(r, 0) = 1.0;
                Vec dd(k);
                for (int d = 0; d < k; ++d) {
                    dd[d] = phases[static_cast<std::size_t>(rows[r])][d] -
                            center[d];
                    // wrap to (-pi, pi]
                    dd[d] = std::remainder(dd[d], kTwoPi);
                    Amat(r, 1 + d) = dd[d];
                }
                if (quad) {
                    int col = 1 + k;
                    for (int d = 0; d < k; ++d)
                        for (int e = d; e < k; ++e)
                            Amat(r, col++) = dd[d] * dd[e];
                }
                bmat.row(r) = traj.xs[static_cast<std::size_t>(rows[r])];
            }
            Mat coef = (Amat.transpose() * Amat)
                           .ldlt()
                           .solve(Amat.transpose() * bmat);
            Vec val = coef.row(0).transpose();
            hull.values[static_cast<std::size_t>(node)] =
                traj.manifold ? project_to_manifold(*traj.manifold, val) : val;
        }
        int d = 0;
        for (; d < k; ++d) {
            if (++idx[d] < grid_res) break;
            idx[d] = 0;
        }
    }
    hull.fill_factor = static_cast<double>(filled) / static_cast<double>(total);
    if (hull.fill_factor < min_fill)
        throw NumericalError(
            "hull extraction: insufficient phase coverage (fill factor " +
            std::to_string(hull.fill_factor) + "); use a longer trajectory");

    // Fill the rare empty nodes from the interpolant of their neighbors.
    if (filled < total) {
        std::vector<int> id2(k, 0);
        for (long node = 0; node < total; ++node) {
            if (hull.values[static_cast<std::size_t>(node)].norm() == 0.0) {
                Vec acc = Vec::Zero(n);
                int cnt = 0;
                for (int d = 0; d < k; ++d)
                    for (int off : {-1, 1}) {
                        std::vector<int> nbid = id2;
                        nbid[d] = ((id2[d] + off) % grid_res + grid_res) %
                                  grid_res;
                        const Vec& w = hull.values[static_cast<std::size_t>(
                            hull.node_index(nbid))];
                        if (w.norm() > 0.0) {
                            acc += w;
                            ++cnt;
                        }
                    }
                if (cnt > 0)
                    hull.values[static_cast<std::size_t>(node)] =
                        traj.manifold
                            ? project_to_manifold(*traj.manifold, acc / cnt)
                            : Vec(acc / cnt);
            }
            int d = 0;
            for (; d < k; ++d) {
                if (++id2[d] < grid_res) break;
                id2[d] = 0;
            }
        }
    }

    // Held-out residual.
    double worst = 0.0;
    for (std::size_t i = 1; i < traj.size(); i += 2) {
        Vec hx = hull.eval(Phase(phases[i]));
        worst = std::max(worst, (hx - traj.xs[i]).norm());
    }
    hull.residual = worst;
    return hull;
}

struct UniquenessRecord {
    double sup_distance = 0.0;
    std::vector<double> times;
    std::vector<double> S;           // connecting-functional samples
    std::vector<double> S_dot;       // centered differences of S
    std::vector<double> xi_norms;
    bool distinct_bounded_solutions = false;  // theory-violation flag
};

/// Compare two candidate bounded solutions: direct orbit distance plus the
/// connecting-functional probe S(t) = <chi', chi dot> between the orbits.
inline UniquenessRecord uniqueness_probe(const SystemSpec& spec,
                                         const Trajectory& t1,
                                         const Trajectory& t2,
                                         double d_bound = 0.0,
                                         int samples = 20,
                                         double distinct_tol = 1e-4) {
    UniquenessRecord rec;
    double lo = std::max(t1.t_begin(), t2.t_begin());
    double hi = std::min(t1.t_end(), t2.t_end());
    if (hi <= lo) throw ConfigError("uniqueness probe: disjoint time spans");

    for (int i = 0; i <= 200; ++i) {
        double t = lo + (hi - lo) * i / 200.0;
        rec.sup_distance = std::max(
            rec.sup_distance, (t1.eval(t).first - t2.eval(t).first).norm());
    }

    IntegrateOptions fo;
    fo.rel_tol = 1e-10;
    fo.abs_tol = 1e-12;
    for (int i = 0; i < samples; ++i) {
        double t = lo + (hi - lo) * (i + 0.5) / samples;
        auto [x1, v1] = t1.eval(t);
        auto [x2, v2] = t2.eval(t);
        double S;
        double xin;
        if ((x1 - x2).norm() < 1e-13) {
            S = 0.0;
            xin = 0.0;
        } else {
            Vec xi = connecting_map(spec.manifold, spec.U, x1, x2, d_bound,
                                    1e-10, fo);
            xin = xi.norm();
            Trajectory chi = integrate_connecting(spec.manifold, spec.U, x1,
                                                  xi, 1.0, fo);
            // S(t) = <chi'(1), xdot2> - <chi'(0), xdot1>.
            S = chi.vs.back().dot(v2) - chi.vs.front().dot(v1);
        }
        rec.times.push_back(t);
        rec.S.push_back(S);
        rec.xi_norms.push_back(xin);
    }
    rec.S_dot.assign(rec.S.size(), 0.0);
    for (std::size_t i = 1; i + 1 < rec.S.size(); ++i)
        rec.S_dot[i] = (rec.S[i + 1] - rec.S[i - 1]) /
                       (rec.times[i + 1] - rec.times[i - 1]);
    rec.distinct_bounded_solutions = rec.sup_distance > distinct_tol;
    return rec;
}

}  // namespace umq

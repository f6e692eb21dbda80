#pragma once

// Deterministic artifact serialization: JSON reports (sorted keys, fixed
// 17-significant-digit float formatting), trajectory/hull CSVs, and the run
// MANIFEST. Re-running with an identical config and seed must produce
// byte-identical files.

#include "umq/bounds.hpp"
#include "umq/dichotomy.hpp"
#include "umq/dynamics.hpp"
#include "umq/finder.hpp"
#include "umq/hypotheses.hpp"
#include "umq/sphere_case.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace umq {

using nlohmann::json;  // object keys are std::map-ordered, i.e. sorted

namespace report_detail {

/// %.17g with a canonical exponent form; "-0" normalized to "0".
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "null";
    if (std::isinf(v)) return v > 0 ? "1e999" : "-1e999";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    std::string s(buf);
    if (s == "-0") s = "0";
    // Ensure the token parses as a JSON number even for integral values.
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

inline void dump(const json& j, std::ostream& os, int indent) {
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    const std::string pad1(static_cast<std::size_t>(indent + 1) * 2, ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) os << ",\n";
                first = false;
                os << pad1 << json(it.key()).dump() << ": ";
                dump(it.value(), os, indent + 1);
            }
            os << "\n" << pad << "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            os << "[\n";
            bool first = true;
            for (const auto& el : j) {
                if (!first) os << ",\n";
                first = false;
                os << pad1;
                dump(el, os, indent + 1);
            }
            os << "\n" << pad << "]";
            return;
        }
        case json::value_t::number_float:
            os << fmt_double(j.get<double>());
            return;
        default:
            os << j.dump();
            return;
    }
}

}  // namespace report_detail

/// Serialize with sorted keys and fixed float formatting.
inline std::string dump_deterministic(const json& j) {
    std::ostringstream os;
    report_detail::dump(j, os, 0);
    os << "\n";
    return os.str();
}

inline json to_json(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline json to_json(const Phase& p) { return to_json(p.angles); }

inline json to_json(const GridMeta& g) {
    return {{"torus_points", g.torus_points},
            {"domain_samples", g.domain_samples},
            {"refine_rounds", g.refine_rounds},
            {"achieved_change", g.achieved_change}};
}

inline json to_json(const ConstantsReport& r) {
    json w = json::object();
    for (const auto& [name, pt] : r.witnesses)
        w[name] = {{"phi", to_json(pt.first)}, {"x", to_json(pt.second)}};
    return {{"C_f", r.C_f},
            {"C_U", r.C_U},
            {"q", r.q},
            {"p", r.p},
            {"l", r.l},
            {"l_U", r.l_U},
            {"z_plus", r.z_plus},
            {"z_minus", r.z_minus},
            {"z_star", r.z_star},
            {"d", r.d},
            {"U_star_min", r.U_star_min},
            {"U_star_max", r.U_star_max},
            {"q_degenerate", r.q_degenerate},
            {"q_from_CfCU", r.q_from_CfCU},
            {"witnesses", w},
            {"grid", to_json(r.grid_meta)}};
}

inline json to_json(const HypothesisVerdict& v) {
    return {{"name", v.name},
            {"holds", v.holds},
            {"margin", v.margin},
            {"slack", v.slack},
            {"witness_phi", to_json(v.witness_phi)},
            {"witness_x", to_json(v.witness_x)}};
}

inline json to_json(const CheckResult& r) {
    json verdicts = json::array();
    for (const auto& v : r.verdicts) verdicts.push_back(to_json(v));
    return {{"verdicts", verdicts},
            {"constants", to_json(r.constants)},
            {"all_hold", r.all_hold()}};
}

inline json to_json(const SearchReport& r) {
    return {{"x0", to_json(r.x0)},
            {"v0", to_json(r.v0)},
            {"escape_time", r.escape_time},
            {"censored", r.censored},
            {"staying_candidate", r.staying_candidate},
            {"refinement_trace", r.refinement_trace},
            {"max_correction", r.max_correction},
            {"total_correction", r.total_correction}};
}

inline json to_json(const DichotomyReport& r) {
    return {{"alpha1_estimate", r.alpha1_estimate},
            {"exponents", r.exponents},
            {"max_negative", r.max_negative},
            {"min_positive", r.min_positive},
            {"gap_tol", r.gap_tol},
            {"split_balanced", r.split_balanced},
            {"sigma_margin", r.sigma_margin},
            {"liouville_residual", r.liouville_residual},
            {"verdict", r.verdict}};
}

inline json to_json(const StageRecord& s) {
    // Wall-clock timings are deliberately excluded: report.json must be
    // byte-identical across reruns with the same config and seed. Timings
    // belong in the MANIFEST.
    return {{"name", s.name},
            {"ran", s.ran},
            {"ok", s.ok},
            {"message", s.message}};
}

inline json to_json(const CaseStudyReport& r) {
    json feas = json::array();
    for (const auto& v : r.feasibility) feas.push_back(to_json(v));
    json stages = json::array();
    for (const auto& s : r.stages) stages.push_back(to_json(s));
    json xval = json::object();
    for (const auto& [name, pr] : r.cross_validation)
        xval[name] = {{"generic", pr.first}, {"closed_form", pr.second}};
    json j = {{"feasibility", feas},
              {"feasible", r.feasible},
              {"closed_form_constants", to_json(r.closed_form)},
              {"closed_form_notice", r.closed_form_notice},
              {"cross_validation", xval},
              {"stages", stages},
              {"verdict", r.verdict},
              {"exit_code", r.exit_code}};
    if (r.hypotheses_ran) j["hypotheses"] = to_json(r.hypotheses);
    if (r.search_ran) j["search"] = to_json(r.search);
    if (r.solution_found) {
        j["monitors"] = {{"sup_speed", r.sup_speed},
                         {"speed_bound", r.speed_bound},
                         {"speed_ok", r.speed_ok},
                         {"sup_vU", r.sup_vU},
                         {"vU_bound", r.vU_bound},
                         {"vU_ok", r.vU_ok},
                         {"min_axis_height", r.min_axis_height},
                         {"confined", r.confined},
                         {"window_diff", r.window_diff}};
    }
    if (r.hull_ran)
        j["hull"] = {{"grid", r.hull.res},
                     {"residual", r.hull.residual},
                     {"fill_factor", r.hull.fill_factor}};
    if (r.dichotomy_ran) j["dichotomy"] = to_json(r.dichotomy);
    return j;
}

namespace report_detail {

inline void write_file(const std::string& path, const std::string& body) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open for writing: " + path);
    os << body;
    if (!os) throw ConfigError("write failed: " + path);
}

}  // namespace report_detail

/// Columns: t, phi_1..phi_k, x_1..x_n, v_1..v_n, speed, U, v_U, G, residual.
inline void write_trajectory_csv(const std::string& path,
                                 const Trajectory& traj, const Vec& omega,
                                 const Phase& phi0, double t_phase_origin) {
    std::ostringstream os;
    const int k = static_cast<int>(omega.size());
    const int n = traj.size() ? static_cast<int>(traj.xs.front().size()) : 0;
    os << "t";
    for (int i = 0; i < k; ++i) os << ",phi" << (i + 1);
    for (int i = 0; i < n; ++i) os << ",x" << (i + 1);
    for (int i = 0; i < n; ++i) os << ",v" << (i + 1);
    os << ",speed,U,v_U,G,residual\n";
    for (std::size_t i = 0; i < traj.size(); ++i) {
        double t = traj.times[i];
        os << report_detail::fmt_double(t);
        Phase ph = advance(phi0, omega, t - t_phase_origin);
        for (int d = 0; d < k; ++d)
            os << "," << report_detail::fmt_double(ph.angles[d]);
        for (int d = 0; d < n; ++d)
            os << "," << report_detail::fmt_double(traj.xs[i][d]);
        for (int d = 0; d < n; ++d)
            os << "," << report_detail::fmt_double(traj.vs[i][d]);
        os << "," << report_detail::fmt_double(traj.mon_speed[i]) << ","
           << report_detail::fmt_double(traj.mon_U[i]) << ","
           << report_detail::fmt_double(traj.mon_vU[i]) << ","
           << report_detail::fmt_double(traj.mon_G[i]) << ","
           << report_detail::fmt_double(traj.mon_residual[i]) << "\n";
    }
    report_detail::write_file(path, os.str());
}

/// Columns: phi_1..phi_k, x_1..x_n (one row per torus grid node).
inline void write_hull_csv(const std::string& path, const HullFunction& hull) {
    std::ostringstream os;
    const int n =
        hull.values.empty() ? 0 : static_cast<int>(hull.values.front().size());
    for (int i = 0; i < hull.k; ++i) os << (i ? "," : "") << "phi" << (i + 1);
    for (int i = 0; i < n; ++i) os << ",x" << (i + 1);
    os << "\n";
    const double h = kTwoPi / hull.res;
    std::vector<int> idx(hull.k, 0);
    for (std::size_t node = 0; node < hull.values.size(); ++node) {
        for (int d = 0; d < hull.k; ++d)
            os << (d ? "," : "") << report_detail::fmt_double(idx[d] * h);
        for (int d = 0; d < n; ++d)
            os << ","
               << report_detail::fmt_double(
                      hull.values[hull.node_index(idx)][d]);
        os << "\n";
        int d = 0;
        for (; d < hull.k; ++d) {
            if (++idx[d] < hull.res) break;
            idx[d] = 0;
        }
    }
    report_detail::write_file(path, os.str());
}

struct ManifestEntry {
    std::string key;
    std::string value;
};

/// Plain "key = value" manifest: inputs, seed, versions, stage wall-clocks.
inline void write_manifest(const std::string& path,
                           const std::vector<ManifestEntry>& entries) {
    std::ostringstream os;
    for (const auto& e : entries) os << e.key << " = " << e.value << "\n";
    report_detail::write_file(path, os.str());
}

inline void write_json_report(const std::string& path, const json& j) {
    report_detail::write_file(path, dump_deterministic(j));
}

}  // namespace umq

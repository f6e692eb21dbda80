// Command-line front end: hypothesis checking, constants, bounded-solution
// search, hyperbolicity certification, and the full sphere case study.
//
// Exit codes: 0 = all verdicts true; 2 = pipeline ran but a verdict is
// false; 3 = numerical failure; 4 = configuration error.

#include "umq/report.hpp"
#include "umq/sphere_case.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using umq::ConfigError;

struct ConfigFile {
    // key -> (value, line, column of the value)
    std::map<std::string, std::tuple<std::string, int, int>> entries;
    std::string path;

    bool has(const std::string& key) const { return entries.count(key) > 0; }

    std::string raw(const std::string& key) const {
        return std::get<0>(entries.at(key));
    }

    std::string where(const std::string& key) const {
        const auto& [v, line, col] = entries.at(key);
        (void)v;
        return path + ":" + std::to_string(line) + ":" + std::to_string(col);
    }

    double number(const std::string& key) const {
        const std::string& s = raw(key);
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size())
            throw ConfigError("malformed number '" + s + "' at " + where(key));
        return v;
    }

    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        std::stringstream ss(raw(key));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(tok, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != tok.size())
                throw ConfigError("malformed number list at " + where(key));
            out.push_back(v);
        }
        if (out.empty())
            throw ConfigError("empty number list at " + where(key));
        return out;
    }
};

/// Flat "section.key = value" format; '#' starts a comment.
ConfigFile parse_config_file(const std::string& path) {
    ConfigFile cfg;
    cfg.path = path;
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string body = line.substr(0, line.find('#'));
        auto first = body.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value' at " + path + ":" +
                              std::to_string(lineno) + ":" +
                              std::to_string(static_cast<int>(first) + 1));
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{}
                                          : s.substr(b, e - b + 1);
        };
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        int vcol = static_cast<int>(body.find_first_not_of(" \t", eq + 1)) + 1;
        if (key.empty() || value.empty())
            throw ConfigError("empty key or value at " + path + ":" +
                              std::to_string(lineno) + ":" +
                              std::to_string(vcol));
        if (cfg.entries.count(key))
            throw ConfigError("duplicate key '" + key + "' at " + path + ":" +
                              std::to_string(lineno));
        cfg.entries[key] = {value, lineno, vcol};
    }
    return cfg;
}

const std::vector<std::string> kKnownKeys = {
    "sphere.a",          "sphere.rho",      "sphere.kappa",
    "sphere.e_amp",      "sphere.e_k",      "sphere.b_amp",
    "sphere.coulomb_strength",              "sphere.omega",
    "run.horizon",       "run.burn",        "run.grid",
    "run.seed",          "run.threads",     "run.gap_tol",
    "run.samples",       "run.torus_points"};

struct RunConfig {
    umq::SphereParams sphere;
    umq::CaseStudyBudget budget;
    double e_amp = 0.05;
    double e_k = 0.0;
    double b_amp = 0.0;
    std::string out_dir = ".";
    std::string config_path;
    std::uint64_t seed = 2024;
    int threads = 1;
};

RunConfig resolve_config(const std::string& config_path,
                         const std::optional<std::uint64_t>& seed,
                         const std::optional<int>& grid,
                         const std::optional<double>& horizon,
                         const std::optional<int>& threads,
                         const std::optional<double>& gap_tol,
                         const std::string& out_dir) {
    RunConfig rc;
    rc.sphere = umq::sphere_demo_params();
    rc.out_dir = out_dir;
    rc.config_path = config_path;

    if (!config_path.empty()) {
        ConfigFile cfg = parse_config_file(config_path);
        for (const auto& [key, ent] : cfg.entries) {
            if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) ==
                kKnownKeys.end())
                throw ConfigError("unknown key '" + key + "' at " +
                                  cfg.where(key));
            (void)ent;
        }
        if (cfg.has("sphere.a")) rc.sphere.a = cfg.number("sphere.a");
        if (cfg.has("sphere.rho")) {
            rc.sphere.rho = cfg.number("sphere.rho");
            if (!(rc.sphere.rho > 0.0 && rc.sphere.rho < 1.0))
                throw ConfigError("rho must lie in (0, 1), got " +
                                  cfg.raw("sphere.rho") + " at " +
                                  cfg.where("sphere.rho"));
        }
        if (cfg.has("sphere.kappa"))
            rc.sphere.kappa = cfg.number("sphere.kappa");
        if (cfg.has("sphere.e_amp")) rc.e_amp = cfg.number("sphere.e_amp");
        if (cfg.has("sphere.e_k")) rc.e_k = cfg.number("sphere.e_k");
        if (cfg.has("sphere.b_amp")) rc.b_amp = cfg.number("sphere.b_amp");
        if (cfg.has("sphere.coulomb_strength"))
            rc.sphere.coulomb_strength = cfg.number("sphere.coulomb_strength");
        if (cfg.has("sphere.omega")) {
            auto w = cfg.numbers("sphere.omega");
            rc.sphere.omega = umq::Vec(w.size());
            for (std::size_t i = 0; i < w.size(); ++i)
                rc.sphere.omega[i] = w[i];
        }
        if (cfg.has("run.horizon"))
            rc.budget.horizon = cfg.number("run.horizon");
        if (cfg.has("run.burn")) rc.budget.burn = cfg.number("run.burn");
        if (cfg.has("run.grid"))
            rc.budget.hull_grid = static_cast<int>(cfg.number("run.grid"));
        if (cfg.has("run.seed"))
            rc.seed = static_cast<std::uint64_t>(cfg.number("run.seed"));
        if (cfg.has("run.threads"))
            rc.threads = static_cast<int>(cfg.number("run.threads"));
        if (cfg.has("run.gap_tol"))
            rc.budget.gap_tol = cfg.number("run.gap_tol");
        if (cfg.has("run.samples"))
            rc.budget.check.domain_samples =
                static_cast<int>(cfg.number("run.samples"));
        if (cfg.has("run.torus_points"))
            rc.budget.check.torus_points =
                static_cast<int>(cfg.number("run.torus_points"));
    }

    // Flags override the config file.
    if (seed) rc.seed = *seed;
    if (grid) rc.budget.hull_grid = *grid;
    if (horizon) rc.budget.horizon = *horizon;
    if (threads) rc.threads = *threads;
    if (gap_tol) rc.budget.gap_tol = *gap_tol;

    if (rc.budget.hull_grid < 4) throw ConfigError("--grid must be >= 4");
    if (rc.budget.horizon <= 0.0) throw ConfigError("--horizon must be > 0");
    if (rc.threads < 1) throw ConfigError("--threads must be >= 1");

    // Default demo field shapes scaled by the configured amplitudes.
    double e_amp = rc.e_amp, e_k = rc.e_k;
    rc.sphere.E_field = [e_amp, e_k](const umq::Phase& phi) {
        umq::Vec e(3);
        e << e_amp * std::cos(phi.angles[0]),
            e_amp * std::sin(phi.angles.size() > 1 ? phi.angles[1]
                                                   : phi.angles[0]),
            e_k;
        return e;
    };
    if (rc.b_amp != 0.0) {
        double b_amp = rc.b_amp;
        rc.sphere.B_field = [b_amp](const umq::Phase& phi) {
            umq::Vec b(3);
            b << 0.0, 0.0, b_amp * std::cos(phi.angles[0]);
            return b;
        };
    }

    rc.budget.check.seed = rc.seed;
    rc.budget.check.threads = rc.threads;
    rc.budget.search.seed = rc.seed;
    rc.sphere.validate();
    return rc;
}

std::string version_string() {
    std::ostringstream os;
    os << "umq 1.0.0; eigen " << EIGEN_WORLD_VERSION << "."
       << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION << "; "
#if defined(__clang__)
       << "clang " << __clang_major__ << "." << __clang_minor__;
#elif defined(__GNUC__)
       << "gcc " << __GNUC__ << "." << __GNUC_MINOR__;
#else
       << "unknown compiler";
#endif
    return os.str();
}

void emit_manifest(const RunConfig& rc, const std::string& subcommand,
                   const std::vector<umq::ManifestEntry>& extra) {
    std::vector<umq::ManifestEntry> ents;
    ents.push_back({"subcommand", subcommand});
    ents.push_back({"config", rc.config_path.empty() ? "<builtin defaults>"
                                                     : rc.config_path});
    ents.push_back({"seed", std::to_string(rc.seed)});
    ents.push_back({"threads", std::to_string(rc.threads)});
    ents.push_back({"grid", std::to_string(rc.budget.hull_grid)});
    auto num = [&](const std::string& key, double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        ents.push_back({key, os.str()});
    };
    num("horizon", rc.budget.horizon);
    num("gap_tol", rc.budget.gap_tol);
    num("sphere.a", rc.sphere.a);
    num("sphere.rho", rc.sphere.rho);
    num("sphere.kappa", rc.sphere.kappa);
    num("sphere.e_amp", rc.e_amp);
    num("sphere.e_k", rc.e_k);
    num("sphere.b_amp", rc.b_amp);
    num("sphere.coulomb_strength", rc.sphere.coulomb_strength);
    {
        std::ostringstream os;
        os.precision(17);
        for (int i = 0; i < rc.sphere.omega.size(); ++i)
            os << (i ? "," : "") << rc.sphere.omega[i];
        ents.push_back({"sphere.omega", os.str()});
    }
    ents.push_back({"versions", version_string()});
    for (const auto& e : extra) ents.push_back(e);
    umq::write_manifest(rc.out_dir + "/MANIFEST.txt", ents);
}

struct StageClock {
    std::chrono::steady_clock::time_point t0 =
        std::chrono::steady_clock::now();
    std::vector<umq::ManifestEntry> marks;

    void mark(const std::string& name) {
        auto now = std::chrono::steady_clock::now();
        double s = std::chrono::duration<double>(now - t0).count();
        t0 = now;
        std::ostringstream os;
        os << s;
        marks.push_back({"seconds." + name, os.str()});
    }
};

int cmd_check(const RunConfig& rc) {
    StageClock clk;
    umq::SystemSpec spec = umq::make_spec(rc.sphere);
    umq::CheckResult res = umq::check_all(spec, rc.budget.check);
    clk.mark("check");
    umq::write_json_report(rc.out_dir + "/report.json", umq::to_json(res));
    emit_manifest(rc, "check", clk.marks);
    for (const auto& v : res.verdicts)
        std::cout << (v.holds ? "PASS " : "FAIL ") << v.name
                  << "  margin=" << v.margin << "\n";
    return res.all_hold() ? 0 : 2;
}

int cmd_constants(const RunConfig& rc) {
    StageClock clk;
    umq::SystemSpec spec = umq::make_spec(rc.sphere);
    umq::CheckResult res = umq::check_all(spec, rc.budget.check);
    clk.mark("generic");
    std::string notice;
    umq::ConstantsReport cf = umq::closed_form_constants(rc.sphere, &notice);
    clk.mark("closed_form");
    umq::json j = {{"generic", umq::to_json(res.constants)},
                   {"closed_form", umq::to_json(cf)},
                   {"closed_form_notice", notice}};
    umq::write_json_report(rc.out_dir + "/report.json", j);
    emit_manifest(rc, "constants", clk.marks);
    std::cout << "z_star (generic) = " << res.constants.z_star
              << "; z_star (closed form) = " << cf.z_star << "\n";
    return 0;
}

int cmd_solve(const RunConfig& rc) {
    StageClock clk;
    umq::SystemSpec spec = umq::make_spec(rc.sphere);
    umq::CheckResult hyp = umq::check_all(spec, rc.budget.check);
    clk.mark("check");
    double window_diff = 0.0;
    umq::Trajectory traj = umq::bounded_solution(
        spec, 0.0, rc.budget.horizon, rc.budget.burn, rc.budget.window_tol,
        rc.budget.search, hyp.constants.z_plus, 3, &window_diff);
    clk.mark("solve");
    umq::write_trajectory_csv(rc.out_dir + "/trajectory.csv", traj,
                              spec.omega,
                              umq::Phase(umq::Vec::Zero(spec.torus_dim())),
                              0.0);
    umq::json j = {{"hypotheses", umq::to_json(hyp)},
                   {"window_diff", window_diff},
                   {"t_begin", traj.t_begin()},
                   {"t_end", traj.t_end()},
                   {"samples", traj.size()}};
    umq::write_json_report(rc.out_dir + "/report.json", j);
    emit_manifest(rc, "solve", clk.marks);
    std::cout << "bounded solution on [" << traj.t_begin() << ", "
              << traj.t_end() << "], window reproduction " << window_diff
              << "\n";
    return hyp.all_hold() ? 0 : 2;
}

int cmd_dichotomy(const RunConfig& rc) {
    StageClock clk;
    umq::SystemSpec spec = umq::make_spec(rc.sphere);
    umq::CheckResult hyp = umq::check_all(spec, rc.budget.check);
    clk.mark("check");
    umq::Trajectory traj = umq::bounded_solution(
        spec, 0.0, rc.budget.horizon, rc.budget.burn, rc.budget.window_tol,
        rc.budget.search, hyp.constants.z_plus);
    clk.mark("solve");
    umq::VariationalFrame frame = umq::variational_frame(
        spec, traj, umq::Phase(umq::Vec::Zero(spec.torus_dim())), 0.0,
        rc.budget.frame_dt);
    umq::DichotomyReport rep =
        umq::certify(spec, frame, hyp.constants.z_star, rc.budget.gap_tol,
                     rc.budget.renorm_dt, &hyp, rc.budget.check);
    clk.mark("certify");
    umq::json j = {{"hypotheses", umq::to_json(hyp)},
                   {"dichotomy", umq::to_json(rep)}};
    umq::write_json_report(rc.out_dir + "/report.json", j);
    emit_manifest(rc, "dichotomy", clk.marks);
    std::cout << (rep.verdict ? "hyperbolic" : "certificate failed")
              << "; exponents:";
    for (double e : rep.exponents) std::cout << " " << e;
    std::cout << "\n";
    return rep.verdict && hyp.all_hold() ? 0 : 2;
}

int cmd_case_study(const RunConfig& rc) {
    umq::CaseStudyReport rep = umq::run_case_study(rc.sphere, rc.budget);
    umq::write_json_report(rc.out_dir + "/report.json", umq::to_json(rep));
    if (rep.solution_found)
        umq::write_trajectory_csv(
            rc.out_dir + "/trajectory.csv", rep.trajectory, rc.sphere.omega,
            umq::Phase(umq::Vec::Zero(rc.sphere.omega.size())), 0.0);
    if (rep.hull_ran)
        umq::write_hull_csv(rc.out_dir + "/hull.csv", rep.hull);
    std::vector<umq::ManifestEntry> marks;
    for (const auto& s : rep.stages) {
        std::ostringstream os;
        os << s.seconds;
        marks.push_back({"seconds." + s.name, os.str()});
    }
    emit_manifest(rc, "case-study", marks);
    for (const auto& s : rep.stages)
        std::cout << (s.ok ? "PASS " : "FAIL ") << s.name
                  << (s.message.empty() ? "" : "  (" + s.message + ")")
                  << "\n";
    std::cout << "verdict: " << (rep.verdict ? "true" : "false") << "\n";
    return rep.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quasiperiodic bounded-solution toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", target = "sphere";
    std::optional<std::uint64_t> seed;
    std::optional<int> grid, threads;
    std::optional<double> horizon, gap_tol;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "flat key=value config file");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "RNG seed");
        sub->add_option("--grid", grid, "hull grid resolution per angle");
        sub->add_option("--horizon", horizon, "certification window length");
        sub->add_option("--threads", threads, "worker pool size");
        sub->add_option("--gap-tol", gap_tol, "exponent gap tolerance");
    };

    CLI::App* check = app.add_subcommand("check", "verify hypotheses");
    CLI::App* constants =
        app.add_subcommand("constants", "velocity-bound constants");
    CLI::App* solve = app.add_subcommand("solve", "find the bounded solution");
    CLI::App* dicho =
        app.add_subcommand("dichotomy", "hyperbolicity certificate");
    CLI::App* cs = app.add_subcommand("case-study", "end-to-end demo");
    cs->add_option("target", target, "built-in system name")
        ->check(CLI::IsMember({"sphere"}));
    for (CLI::App* sub : {check, constants, solve, dicho, cs})
        add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 4;
    }

    try {
        std::filesystem::create_directories(out_dir);
        RunConfig rc = resolve_config(config_path, seed, grid, horizon,
                                      threads, gap_tol, out_dir);
        if (check->parsed()) return cmd_check(rc);
        if (constants->parsed()) return cmd_constants(rc);
        if (solve->parsed()) return cmd_solve(rc);
        if (dicho->parsed()) return cmd_dichotomy(rc);
        return cmd_case_study(rc);
    } catch (const umq::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 4;
    } catch (const umq::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

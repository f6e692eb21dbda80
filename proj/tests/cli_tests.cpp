// End-to-end tests of the command-line binary: exit codes, config
// validation diagnostics, and byte-determinism of the JSON report.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kCli = UMQ_CLI_PATH;

struct RunResult {
    int code = -1;
    std::string err;
};

RunResult run(const std::string& args, const fs::path& dir) {
    fs::create_directories(dir);
    fs::path errfile = dir / "stderr.txt";
    std::string cmd = kCli + " " + args + " 2>" + errfile.string() +
                      " >" + (dir / "stdout.txt").string();
    int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream is(errfile);
    std::stringstream ss;
    ss << is.rdbuf();
    r.err = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream os(p);
    os << text;
}

fs::path scratch(const std::string& leaf) {
    return fs::temp_directory_path() / "umq_cli_tests" / leaf;
}

}  // namespace

TEST_CASE("check subcommand passes on the default system", "[cli]") {
    fs::path dir = scratch("check_ok");
    RunResult r = run("check --out " + dir.string(), dir);
    REQUIRE(r.code == 0);
    REQUIRE(fs::exists(dir / "report.json"));
    REQUIRE(fs::exists(dir / "MANIFEST.txt"));
    std::string out = slurp(dir / "stdout.txt");
    REQUIRE(out.find("PASS") != std::string::npos);
    REQUIRE(out.find("FAIL") == std::string::npos);
}

TEST_CASE("check subcommand flags the reversed-attraction control", "[cli]") {
    fs::path dir = scratch("check_reversed");
    write(dir / "reversed.cfg", "sphere.coulomb_strength = -1\n");
    RunResult r = run("check --config " + (dir / "reversed.cfg").string() +
                          " --out " + dir.string(),
                      dir);
    REQUIRE(r.code == 2);
    std::string out = slurp(dir / "stdout.txt");
    REQUIRE(out.find("FAIL H2.outward-force") != std::string::npos);
}

TEST_CASE("report.json is byte-identical across reruns", "[cli]") {
    fs::path d1 = scratch("det1"), d2 = scratch("det2");
    REQUIRE(run("constants --out " + d1.string(), d1).code == 0);
    REQUIRE(run("constants --out " + d2.string(), d2).code == 0);
    std::string r1 = slurp(d1 / "report.json");
    std::string r2 = slurp(d2 / "report.json");
    REQUIRE_FALSE(r1.empty());
    REQUIRE(r1 == r2);
}

TEST_CASE("config validation failures exit with code 4", "[cli]") {
    fs::path dir = scratch("badcfg");

    write(dir / "unknown.cfg", "sphere.charge = 2\n");
    RunResult r = run("check --config " + (dir / "unknown.cfg").string(), dir);
    REQUIRE(r.code == 4);
    REQUIRE(r.err.find("unknown key 'sphere.charge'") != std::string::npos);
    REQUIRE(r.err.find("unknown.cfg:1:") != std::string::npos);

    write(dir / "rho.cfg", "sphere.rho = 1.5\n");
    r = run("check --config " + (dir / "rho.cfg").string(), dir);
    REQUIRE(r.code == 4);
    REQUIRE(r.err.find("rho must lie in (0, 1)") != std::string::npos);

    write(dir / "num.cfg", "sphere.a = 1.2.3\n");
    r = run("check --config " + (dir / "num.cfg").string(), dir);
    REQUIRE(r.code == 4);
    REQUIRE(r.err.find("malformed number") != std::string::npos);

    write(dir / "dup.cfg", "sphere.a = 1\nsphere.a = 2\n");
    r = run("check --config " + (dir / "dup.cfg").string(), dir);
    REQUIRE(r.code == 4);
    REQUIRE(r.err.find("duplicate key") != std::string::npos);

    write(dir / "noeq.cfg", "sphere.a 1\n");
    r = run("check --config " + (dir / "noeq.cfg").string(), dir);
    REQUIRE(r.code == 4);
    REQUIRE(r.err.find("expected 'key = value'") != std::string::npos);

    r = run("check --config " + (dir / "missing.cfg").string(), dir);
    REQUIRE(r.code == 4);
    REQUIRE(r.err.find("cannot open config file") != std::string::npos);
}

TEST_CASE("flag validation failures exit with code 4", "[cli]") {
    fs::path dir = scratch("badflags");
    REQUIRE(run("check --grid 2 --out " + dir.string(), dir).code == 4);
    REQUIRE(run("check --horizon -5 --out " + dir.string(), dir).code == 4);
    REQUIRE(run("frobnicate", dir).code == 4);
    REQUIRE(run("", dir).code == 4);  // a subcommand is required
    REQUIRE(run("case-study cylinder --out " + dir.string(), dir).code == 4);
}

// End-to-end checks of the command-line surface: exit codes, file outputs
// and report contents. Drives the real binary.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rfmpc/sim.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = RFMPC_CLI_PATH;

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() / "rfmpc_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string operator/(const char* name) const { return (dir / name).string(); }
};

int run_cli(const std::string& args, const std::string& stdout_file = "") {
  std::string cmd = kCli + " " + args;
  cmd += stdout_file.empty() ? " > /dev/null" : (" > " + stdout_file);
  cmd += " 2> /dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli pipeline: collect, train, run, eval, compare") {
  Workdir wd;
  const std::string data = wd / "data.csv";
  const std::string model = wd / "model.json";
  const std::string report = wd / "report.json";
  const std::string log_n = wd / "nominal.csv";
  const std::string log_r = wd / "rfl.csv";

  REQUIRE(run_cli("collect --seed 1 --out " + data) == 0);
  REQUIRE(fs::exists(data));

  REQUIRE(run_cli("train --seed 1 --trees 20 --depth 6 --data " + data + " --out " + model +
                  " --report " + report) == 0);
  REQUIRE(fs::exists(model));
  REQUIRE(fs::exists(report));

  SUBCASE("train report shows leaf-linear beating leaf-mean on held-out data") {
    const auto rep = nlohmann::json::parse(slurp(report));
    const double lin = rep["leaf_linear"]["test"]["e1"]["rmse"].get<double>();
    const double mean = rep["leaf_mean"]["test"]["e1"]["rmse"].get<double>();
    CHECK(lin < mean);
  }

  SUBCASE("run, eval and compare agree") {
    REQUIRE(run_cli("run --seed 1 --path eval2 --variant nominal --out " + log_n) == 0);
    REQUIRE(run_cli("run --seed 1 --path eval2 --variant residual --model " + model +
                    " --out " + log_r) == 0);

    const std::string eval_json = wd / "eval.json";
    REQUIRE(run_cli("eval --log " + log_r + " --baseline " + log_n + " --out " + eval_json) == 0);
    const auto ev = nlohmann::json::parse(slurp(eval_json));

    const std::string cmp_json = wd / "cmp.json";
    REQUIRE(run_cli("compare --baseline " + log_n + " --log " + log_r + " --out " + cmp_json) == 0);
    const auto cmp = nlohmann::json::parse(slurp(cmp_json));

    // compare is a pass-through of evaluate-with-baseline
    CHECK(cmp["pe_percent"].get<double>() == ev["pe_percent"].get<double>());
    CHECK(cmp["e1"]["mae"].get<double>() == ev["e1"]["mae"].get<double>());

    // and it matches the library evaluation of the same files
    const rfmpc::SimLog base = rfmpc::read_simlog_csv(log_n);
    const rfmpc::SimLog cand = rfmpc::read_simlog_csv(log_r);
    const rfmpc::EvalReport lib = rfmpc::evaluate_with_baseline(cand, base);
    CHECK(ev["pe_percent"].get<double>() == doctest::Approx(*lib.pe_percent).epsilon(1e-12));
  }
}

TEST_CASE("cli error contract") {
  Workdir wd;

  SUBCASE("empty log file is a runtime error (exit 2)") {
    const std::string empty = wd / "empty.csv";
    std::ofstream(empty).close();
    CHECK(run_cli("eval --log " + empty) == 2);
  }

  SUBCASE("missing file is a runtime error (exit 2)") {
    CHECK(run_cli("eval --log " + (wd / "missing.csv")) == 2);
  }

  SUBCASE("malformed flags are usage errors (exit 1)") {
    CHECK(run_cli("collect") == 1);                      // missing --out
    CHECK(run_cli("run --out x.csv --path eval1 --variant sideways") == 1);
    CHECK(run_cli("frobnicate") == 1);                   // unknown subcommand
  }

  SUBCASE("unknown config keys are usage errors (exit 1)") {
    const std::string cfg = wd / "bad.cfg";
    std::ofstream(cfg) << "bogus.key = 1\n";
    CHECK(run_cli("collect --config " + cfg + " --out " + (wd / "d.csv")) == 1);
  }

  SUBCASE("residual run without a model is a usage error (exit 1)") {
    CHECK(run_cli("run --out " + (wd / "x.csv") + " --path eval1 --variant residual") == 1);
  }
}

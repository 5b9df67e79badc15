#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ergo/check.hpp"
#include "ergo/config.hpp"
#include "ergo/report.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  // stdout only: stderr carries timing and logging noise
  std::string cmd = std::string(ERGO_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult result;
  char buf[4096];
  while (size_t got = fread(buf, 1, sizeof(buf), pipe)) {
    result.output.append(buf, got);
  }
  int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "ergo_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string config_dir() { return ERGO_CONFIG_DIR; }

json minimal_config() {
  return json::parse(R"({
    "schema_version": 1,
    "target": {"name": "std_normal", "params": {"dim": 2}},
    "model": {"depth": 1, "leaps": 1},
    "train": {"iterations": 0, "batch_size": 64, "seed": 3},
    "diagnostics": {"n_eval": 200, "ground_truth": {"method": "none"}},
    "output": {"report_path": "r.json"}
  })");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("config parsing is strict about unknown keys") {
  CHECK_NOTHROW(ergo::parse_config(minimal_config()));

  auto top = minimal_config();
  top["surprise"] = 1;
  CHECK_THROWS_WITH_AS(ergo::parse_config(top),
                       doctest::Contains("unknown key 'surprise'"),
                       ergo::ConfigError);

  auto nested = minimal_config();
  nested["model"]["stepsize"] = 0.1;  // typo for init_step
  CHECK_THROWS_WITH_AS(ergo::parse_config(nested),
                       doctest::Contains("model.stepsize"), ergo::ConfigError);

  auto train_typo = minimal_config();
  train_typo["train"]["iteration"] = 10;
  CHECK_THROWS_WITH_AS(ergo::parse_config(train_typo),
                       doctest::Contains("train.iteration"), ergo::ConfigError);

  auto bad_target_param = minimal_config();
  bad_target_param["target"]["params"]["sigma"] = 2.0;
  CHECK_THROWS_AS(ergo::parse_config(bad_target_param), ergo::ContractViolation);
}

TEST_CASE("config validation names the offending key") {
  auto bad_depth = minimal_config();
  bad_depth["model"]["depth"] = -3;
  CHECK_THROWS_WITH_AS(ergo::parse_config(bad_depth),
                       doctest::Contains("model.depth"), ergo::ConfigError);

  auto bad_version = minimal_config();
  bad_version["schema_version"] = 42;
  CHECK_THROWS_WITH_AS(ergo::parse_config(bad_version),
                       doctest::Contains("schema_version"), ergo::ConfigError);

  auto bad_mode = minimal_config();
  bad_mode["train"]["mode"] = "sideways";
  CHECK_THROWS_AS(ergo::parse_config(bad_mode), ergo::ConfigError);
}

TEST_CASE("config echo round-trips through the parser") {
  auto cfg = ergo::parse_config(minimal_config());
  json echoed = ergo::config_to_json(cfg);
  auto reparsed = ergo::parse_config(echoed);
  CHECK(ergo::config_to_json(reparsed) == echoed);
}

TEST_CASE("shipped configs parse") {
  for (const auto& name :
       {"corr_gauss.json", "std_normal_smoke.json", "std_normal_train.json",
        "banana.json", "funnel.json", "diag_gauss_vi.json"}) {
    CHECK_NOTHROW(ergo::load_config(config_dir() + "/" + name));
  }
}

TEST_CASE("report serialization round-trips") {
  ergo::RunReport report;
  report.config_echo = minimal_config();
  report.trace.push_back({0, -3.25, -1.5, 0.125, 0, 2.5});
  report.trace.push_back({1, -2.5, -1.0, 0.0625, 1, 1.75});
  ergo::Vec p(2);
  p << 0.5, -1.25;
  report.final_params["layer000.log_step"] = p;
  report.precondition.status = ergo::PreconditionResult::Status::kPassed;
  report.precondition.q0_logp = -4.0;
  report.precondition.q0_std_error = 0.01;
  report.precondition.target_logp = -1.0;
  report.precondition.n_samples = 4096;
  report.diagnostics.mean_error = 0.01;
  report.diagnostics.mmd2 = 1e-4;
  report.env.seed = 7;
  report.env.timestamp = "2026-01-01T00:00:00Z";

  json j = ergo::report_to_json(report);
  ergo::RunReport back = ergo::report_from_json(j);
  CHECK(ergo::report_to_json(back) == j);
}

TEST_CASE("csv dump: shape, determinism, bit-exact reload") {
  auto dir = temp_dir();
  ergo::Mat samples(3, 2);
  samples << 1.0, 2.0, -0.5, 1e-17, 3.141592653589793, -2.718281828459045;

  auto path_a = dir / "dump_a.csv";
  auto path_b = dir / "dump_b.csv";
  ergo::dump_samples_csv(samples, path_a.string());
  ergo::dump_samples_csv(samples, path_b.string());

  std::string content = read_file(path_a);
  CHECK(content == read_file(path_b));
  CHECK(std::count(content.begin(), content.end(), '\n') == 4);
  CHECK(content.rfind("z0,z1", 0) == 0);

  // large dump reloads with moments identical to machine precision
  auto rng = ergo::substream_rng(121, 0, 0);
  ergo::Mat big(100000, 2);
  for (int i = 0; i < big.rows(); ++i) {
    ergo::Vec u(2);
    ergo::fill_standard_normal(rng, u);
    big.row(i) = u.transpose();
  }
  auto big_path = dir / "dump_big.csv";
  ergo::dump_samples_csv(big, big_path.string());
  ergo::Mat loaded = ergo::load_samples_csv(big_path.string());
  REQUIRE(loaded.rows() == big.rows());
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(loaded.col(j).mean() - big.col(j).mean()) < 1e-12);
    CHECK(std::abs(loaded.col(j).squaredNorm() - big.col(j).squaredNorm()) <
          1e-12 * big.col(j).squaredNorm());
  }

  CHECK_THROWS_AS(
      ergo::dump_samples_csv(samples, "/nonexistent_dir_zz/x.csv"),
      ergo::IoError);
}

TEST_CASE("run_check self-test: a flipped adjoint is caught by name") {
  ergo::CheckOptions options;
  options.reversibility_configs = 10;
  options.volume_configs = 5;
  options.mh_samples = 2000;
  options.flip_adjoint_sign = true;
  auto report = ergo::run_check(options);
  CHECK_FALSE(report.all_passed);
  bool gradient_line_failed = false;
  for (const auto& line : report.lines) {
    if (line.name.find("gradient") != std::string::npos) {
      gradient_line_failed = !line.passed;
    }
  }
  CHECK(gradient_line_failed);
}

TEST_CASE("cli: run on the smoke config exits 0 and writes an empty trace") {
  auto dir = temp_dir();
  auto report_path = dir / "smoke_report.json";
  auto result = run_cli("run --config " + config_dir() +
                        "/std_normal_smoke.json --out " + report_path.string());
  CAPTURE(result.output);
  CHECK(result.exit_code == 0);
  json j = json::parse(read_file(report_path));
  CHECK(j.at("trace").empty());
  CHECK(j.at("env").at("tool_version").get<std::string>() == ergo::kToolVersion);
}

TEST_CASE("cli: invalid configs exit 2 naming the problem") {
  auto dir = temp_dir();
  auto bad = minimal_config();
  bad["model"]["depth"] = -1;
  auto bad_path = dir / "bad_depth.json";
  std::ofstream(bad_path) << bad.dump();
  auto result = run_cli("run --config " + bad_path.string());
  CHECK(result.exit_code == 2);
  CHECK(result.output.find("model.depth") != std::string::npos);

  auto unknown = minimal_config();
  unknown["typo_key"] = true;
  auto unknown_path = dir / "unknown_key.json";
  std::ofstream(unknown_path) << unknown.dump();
  auto result2 = run_cli("run --config " + unknown_path.string());
  CHECK(result2.exit_code == 2);
  CHECK(result2.output.find("typo_key") != std::string::npos);

  auto result3 = run_cli("run --config " + (dir / "missing.json").string());
  CHECK(result3.exit_code == 2);
}

TEST_CASE("cli: strict mode gates on the diagnostics thresholds") {
  // the smoke config never trains, so q0 = N(0, 4I) stays three nats short
  // of the target in expected log-density: strict must exit 4
  auto dir = temp_dir();
  auto report_path = dir / "strict_report.json";
  auto result = run_cli("run --strict --config " + config_dir() +
                        "/std_normal_smoke.json --out " + report_path.string());
  CHECK(result.exit_code == 4);
  CHECK(result.output.find("diagnostics") != std::string::npos);
}

TEST_CASE("cli: training failure maps to exit 3") {
  auto dir = temp_dir();
  auto cfg = minimal_config();
  cfg["train"]["iterations"] = 2;
  cfg["model"]["init_log_std"] = {-2.0, -2.0};  // under-dispersed q0
  auto path = dir / "underdispersed.json";
  std::ofstream(path) << cfg.dump();
  auto result = run_cli("run --config " + path.string());
  CHECK(result.exit_code == 3);
  CHECK(result.output.find("training") != std::string::npos);
}

TEST_CASE("cli: reports are deterministic up to the timestamp") {
  auto dir = temp_dir();
  auto path_a = dir / "det_a.json";
  auto path_b = dir / "det_b.json";
  std::string base = "run --config " + config_dir() + "/std_normal_train.json --out ";
  CHECK(run_cli(base + path_a.string()).exit_code == 0);
  CHECK(run_cli(base + path_b.string()).exit_code == 0);

  json a = json::parse(read_file(path_a));
  json b = json::parse(read_file(path_b));
  a.at("env").erase("timestamp");
  b.at("env").erase("timestamp");
  a.at("config").at("output").erase("report_path");
  b.at("config").at("output").erase("report_path");
  CHECK(a == b);
}

TEST_CASE("cli: sample dumps are seeded and byte-identical") {
  auto dir = temp_dir();
  auto csv_a = dir / "s_a.csv";
  auto csv_b = dir / "s_b.csv";
  std::string base = "sample --config " + config_dir() +
                     "/std_normal_smoke.json --n 3 --seed 9 --out ";
  CHECK(run_cli(base + csv_a.string()).exit_code == 0);
  CHECK(run_cli(base + csv_b.string()).exit_code == 0);
  std::string content = read_file(csv_a);
  CHECK(content == read_file(csv_b));
  CHECK(std::count(content.begin(), content.end(), '\n') == 4);

  auto bad = run_cli("sample --config " + config_dir() +
                     "/std_normal_smoke.json --n 3 --out /nonexistent_zz/s.csv");
  CHECK(bad.exit_code == 5);
}

TEST_CASE("cli: baseline and sweep subcommands run end to end") {
  auto dir = temp_dir();

  auto vi = run_cli("baseline vi --config " + config_dir() +
                    "/diag_gauss_vi.json --out " + (dir / "vi.json").string());
  CAPTURE(vi.output);
  CHECK(vi.exit_code == 0);
  json vi_report = json::parse(read_file(dir / "vi.json"));
  CHECK(vi_report.at("baseline").at("method") == "vi");
  CHECK(vi_report.at("baseline").at("elbo_trace").size() == 500);

  auto hmc = run_cli("baseline hmc --config " + config_dir() +
                     "/std_normal_smoke.json --n 500 --out " +
                     (dir / "hmc.json").string());
  CAPTURE(hmc.output);
  CHECK(hmc.exit_code == 0);
  json hmc_report = json::parse(read_file(dir / "hmc.json"));
  CHECK(hmc_report.at("baseline").at("method") == "hmc");
  CHECK(hmc_report.at("baseline").at("acceptance_rate").get<double>() > 0.0);

  auto sweep = run_cli("sweep --config " + config_dir() +
                       "/std_normal_train.json --depths 1 2 --out " +
                       (dir / "sweep.json").string());
  CAPTURE(sweep.output);
  CHECK(sweep.exit_code == 0);
  json sweep_report = json::parse(read_file(dir / "sweep.json"));
  CHECK(sweep_report.at("baseline").at("entries").size() == 2);
}

TEST_CASE("cli: check exits 0 and repeats identically") {
  auto first = run_cli("check");
  CAPTURE(first.output);
  CHECK(first.exit_code == 0);
  CHECK(first.output.find("[PASS]") != std::string::npos);
  CHECK(first.output.find("[FAIL]") == std::string::npos);

  auto second = run_cli("check");
  CHECK(second.exit_code == 0);
  CHECK(second.output == first.output);
}

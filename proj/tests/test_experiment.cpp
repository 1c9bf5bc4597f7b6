#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifdef FRACSDE_CLI_PATH
#include <sys/wait.h>
#endif

#include "fracsde/experiment.hpp"

using namespace fracsde;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

long count_lines(const std::string& text) {
  long n = 0;
  for (char c : text) n += c == '\n' ? 1 : 0;
  return n;
}

// fresh scratch directory per section, removed up front so reruns are clean
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fracsde_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.n = 400;
  cfg.trials = 3;
  cfg.master_seed = 11;
  cfg.free_mask = {{true, false, false}};
  cfg.distance = DistanceKind::w1;
  cfg.init = ThetaVector::scalar(1.0, 0.5, 0.7);  // fixed coordinates sit at the truth
  validate_config(cfg);
  return cfg;
}

}  // namespace

TEST_CASE("configuration text is parsed with comments and whitespace") {
  const ExperimentConfig cfg = parse_config_text(
      "# experiment\n"
      "model = perturbed_ou\n"
      "lambda = 0.3\n"
      "  n   =  500   # inline comment\n"
      "\n"
      "free = sigma, hurst\n"
      "distance = w1\n"
      "estimator = simulated\n"
      "master_seed = 42\n"
      "lag_h = 0.2\n"
      "data = obs.csv\n");
  CHECK(cfg.model == ModelName::perturbed_ou);
  CHECK(cfg.lambda == 0.3);
  CHECK(cfg.n == 500);
  CHECK(cfg.free_mask == std::array<bool, 3>{{false, true, true}});
  CHECK(cfg.distance == DistanceKind::w1);
  CHECK(cfg.estimator == EstimatorKind::simulated);
  CHECK(cfg.master_seed == 42);
  CHECK(cfg.lag_h == 0.2);
  CHECK(cfg.data_file == "obs.csv");
  CHECK(cfg.effective_lag() == 0.2);
}

TEST_CASE("default configuration is valid and uses the lag invariant") {
  ExperimentConfig cfg;
  REQUIRE_NOTHROW(validate_config(cfg));
  CHECK(cfg.effective_lag() == Catch::Approx(cfg.subsample_k0 * cfg.fine_step));
  CHECK(cfg.trials == 100);
  CHECK(cfg.q == 2);
  CHECK(cfg.cf_p == 2.0);
  CHECK(cfg.cf_mc_samples == 100);
}

namespace {

void check_config_error(const std::string& text, const std::string& needle) {
  try {
    parse_config_text(text);
    FAIL("expected a validation error for: " + text);
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    INFO(what);
    CHECK(what.find(needle) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("configuration errors identify the line or field") {
  check_config_error("n = 500\nbogus_key = 1\n", "line 2");
  check_config_error("n = 500\nbogus_key = 1\n", "bogus_key");
  check_config_error("n = ten\n", "invalid integer for 'n'");
  check_config_error("fine_step = tiny\n", "invalid number for 'fine_step'");
  check_config_error("n 500\n", "expected key = value");
  check_config_error("n =\n", "empty value for 'n'");
  check_config_error("n = 5\nn = 6\n", "duplicate key 'n'");
  check_config_error("model = brownian\n", "must be ou or perturbed_ou");
  check_config_error("distance = l2\n", "must be cf or w1");
  check_config_error("estimator = newton\n", "auto, search, sgd or simulated");
  check_config_error("free = xi, xi\n", "duplicate 'xi'");
  check_config_error("free = rho\n", "must be xi, sigma or hurst");
  check_config_error("box_sigma_lo = 2\n", "box_sigma_lo/box_sigma_hi");
  check_config_error("box_hurst_hi = 1.5\n", "box_hurst_lo/box_hurst_hi");
  check_config_error("theta_true_sigma = -1\n", "theta_true_sigma");
  check_config_error("lag_h = 0.15\n", "lag_h");
  check_config_error("q = 1\nfree = xi, sigma, hurst\n", "q + 1 >= number of free parameters");
  check_config_error("cf_p = 1\n", "cf_p");
  check_config_error("free = xi, sigma\nestimator = search\n", "exactly one free parameter");
  check_config_error("model = perturbed_ou\nestimator = sgd\n", "ou model only");
  check_config_error("model = perturbed_ou\nlambda = 2\n", "lambda");
  check_config_error("trials = 0\n", "trials");
}

TEST_CASE("missing configuration file is a validation error") {
  REQUIRE_THROWS_AS(load_config_file("/nonexistent/nowhere.cfg"), std::invalid_argument);
}

TEST_CASE("trial records round-trip through json unchanged") {
  TrialRecord r;
  r.trial = 7;
  r.seed = 123456789012345ull;
  r.theta_hat = ThetaVector::scalar(1.9481726354091824, 0.51234567890123456, 0.69999999999999996);
  r.contrast = 3.0517578125e-05;
  r.wall_time = 12.5;
  r.iterations = 1000;
  r.final_loss = 0.1278190283719283;
  r.error = "";

  const nlohmann::json j = trial_record_json(r);
  CHECK_FALSE(j.contains("wall_time"));

  const TrialRecord back = trial_record_from_json(j);
  CHECK(back.trial == r.trial);
  CHECK(back.seed == r.seed);
  CHECK(back.theta_hat.xi(0) == r.theta_hat.xi(0));
  CHECK(back.theta_hat.sigma == r.theta_hat.sigma);
  CHECK(back.theta_hat.hurst == r.theta_hat.hurst);
  CHECK(back.contrast == r.contrast);
  CHECK(back.iterations == r.iterations);
  CHECK(back.final_loss == r.final_loss);
  CHECK(back.error == r.error);
  CHECK(back.wall_time == 0.0);

  CHECK(trial_record_json(back).dump() == j.dump());

  nlohmann::json broken = j;
  broken.erase("sigma");
  REQUIRE_THROWS_WITH(trial_record_from_json(broken),
                      Catch::Matchers::ContainsSubstring("missing field 'sigma'"));
}

TEST_CASE("dataset generation is deterministic and sized exactly") {
  ExperimentConfig cfg = tiny_config();

  const AugmentedPath a = generate_dataset(cfg, 0);
  CHECK(a.rows.rows() == cfg.n);
  CHECK(a.rows.cols() == cfg.q + 1);
  CHECK(a.lag_h == Catch::Approx(0.1));

  const AugmentedPath again = generate_dataset(cfg, 0);
  CHECK(a.rows == again.rows);

  const AugmentedPath other = generate_dataset(cfg, 1);
  REQUIRE(other.rows.rows() == a.rows.rows());
  CHECK(a.rows != other.rows);

  SECTION("an overridden lag keeps the row count") {
    cfg.lag_h = 0.2;  // stride 2 on the coarse grid
    validate_config(cfg);
    const AugmentedPath wide = generate_dataset(cfg, 0);
    CHECK(wide.rows.rows() == cfg.n);
    CHECK(wide.lag_h == Catch::Approx(0.2));
  }
}

TEST_CASE("augmented csv files survive a write and read cycle") {
  const fs::path dir = scratch("csv_roundtrip");
  fs::create_directories(dir);
  ExperimentConfig cfg = tiny_config();
  cfg.n = 50;
  const AugmentedPath data = generate_dataset(cfg, 0);
  const fs::path file = dir / "obs.csv";
  write_augmented_csv(file, data, cfg.fine_step * cfg.subsample_k0);

  const AugmentedPath back = read_augmented_csv(file.string(), cfg.q, cfg.effective_lag());
  REQUIRE(back.rows.rows() == data.rows.rows());
  REQUIRE(back.rows.cols() == data.rows.cols());
  CHECK(back.rows == data.rows);  // %.17g output parses back to the same doubles

  SECTION("header mismatches are reported") {
    REQUIRE_THROWS_WITH(read_augmented_csv(file.string(), 3, 0.1),
                        Catch::Matchers::ContainsSubstring("q = 2"));
    std::ofstream bad(dir / "bad.csv", std::ios::binary);
    bad << "time,x0,x1,x2\n0,1,2,3\n";
    bad.close();
    REQUIRE_THROWS_WITH(read_augmented_csv((dir / "bad.csv").string(), 2, 0.1),
                        Catch::Matchers::ContainsSubstring("header"));
  }
  SECTION("malformed numbers are reported with their line") {
    std::ofstream bad(dir / "bad2.csv", std::ios::binary);
    bad << "t,x0,x1,x2\n0,1,2,3\n0.1,1,oops,3\n";
    bad.close();
    REQUIRE_THROWS_WITH(read_augmented_csv((dir / "bad2.csv").string(), 2, 0.1),
                        Catch::Matchers::ContainsSubstring("line 3"));
  }
}

TEST_CASE("simulate writes the declared schema and is reproducible") {
  const fs::path dir = scratch("simulate");
  const ExperimentConfig cfg = tiny_config();

  REQUIRE(cmd_simulate(cfg, dir.string()) == 0);
  const std::string first = slurp(dir / "path.csv");
  CHECK(first.substr(0, first.find('\n')) == "t,x0,x1,x2");
  CHECK(count_lines(first) == cfg.n + 1);

  REQUIRE(cmd_simulate(cfg, dir.string()) == 0);
  CHECK(slurp(dir / "path.csv") == first);
}

TEST_CASE("estimate emits one record per trial and a consistent summary") {
  const fs::path dir = scratch("estimate");
  ExperimentConfig cfg = tiny_config();
  cfg.n = 600;
  cfg.trials = 4;

  REQUIRE(cmd_estimate(cfg, dir.string(), 1) == 0);
  const std::string jsonl = slurp(dir / "trials.jsonl");
  REQUIRE(count_lines(jsonl) == cfg.trials);

  std::vector<TrialRecord> records;
  {
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) records.push_back(trial_record_from_json(nlohmann::json::parse(line)));
  }
  for (int t = 0; t < cfg.trials; ++t) {
    CHECK(records[static_cast<std::size_t>(t)].trial == t);
    CHECK(records[static_cast<std::size_t>(t)].seed == cfg.master_seed);
    CHECK(records[static_cast<std::size_t>(t)].error.empty());
  }

  SECTION("summary statistics recomputed from the records match the csv") {
    std::ifstream in(dir / "summary.csv");
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "parameter,mean,bias,variance");
    const std::array<double, 3> truth{{cfg.theta_true.xi(0), cfg.theta_true.sigma, cfg.theta_true.hurst}};
    for (int i = 0; i < 3; ++i) {
      REQUIRE(std::getline(in, line));
      std::stringstream row(line);
      std::string name, mean_s, bias_s, var_s;
      std::getline(row, name, ',');
      std::getline(row, mean_s, ',');
      std::getline(row, bias_s, ',');
      std::getline(row, var_s, ',');

      double mean = 0.0;
      for (const TrialRecord& r : records) mean += fracsde::detail::theta_get(r.theta_hat, i);
      mean /= static_cast<double>(records.size());
      double var = 0.0;
      for (const TrialRecord& r : records) {
        const double d = fracsde::detail::theta_get(r.theta_hat, i) - mean;
        var += d * d;
      }
      var /= static_cast<double>(records.size());

      CHECK(std::abs(std::stod(mean_s) - mean) <= 1e-12);
      CHECK(std::abs(std::stod(bias_s) - (mean - truth[static_cast<std::size_t>(i)])) <= 1e-12);
      CHECK(std::abs(std::stod(var_s) - var) <= 1e-12);
    }
  }

  SECTION("a single trial emits exactly one record") {
    const fs::path one = scratch("estimate_one");
    ExperimentConfig single = cfg;
    single.trials = 1;
    REQUIRE(cmd_estimate(single, one.string(), 1) == 0);
    CHECK(count_lines(slurp(one / "trials.jsonl")) == 1);
  }

  SECTION("estimation can run on a dataset file written by simulate") {
    const fs::path sim = scratch("estimate_file");
    REQUIRE(cmd_simulate(cfg, sim.string()) == 0);
    ExperimentConfig from_file = cfg;
    from_file.data_file = (sim / "path.csv").string();
    REQUIRE(cmd_estimate(from_file, sim.string(), 1) == 0);
    const std::string file_jsonl = slurp(sim / "trials.jsonl");
    REQUIRE(count_lines(file_jsonl) == 1);
    const TrialRecord rec = trial_record_from_json(nlohmann::json::parse(file_jsonl));
    // same bytes as trial 0 of the generated run: identical estimate
    CHECK(rec.theta_hat.xi(0) == records[0].theta_hat.xi(0));
  }
}

TEST_CASE("trial outputs do not depend on the worker count") {
  ExperimentConfig cfg = tiny_config();
  cfg.trials = 4;
  const fs::path serial = scratch("pool_serial");
  const fs::path pooled = scratch("pool_threads");
  REQUIRE(cmd_estimate(cfg, serial.string(), 1) == 0);
  REQUIRE(cmd_estimate(cfg, pooled.string(), 4) == 0);
  CHECK(slurp(serial / "trials.jsonl") == slurp(pooled / "trials.jsonl"));
  CHECK(slurp(serial / "summary.csv") == slurp(pooled / "summary.csv"));
}

TEST_CASE("identifiability report covers the three cases with the expected signs") {
  const fs::path dir = scratch("ident");
  ExperimentConfig cfg;  // default boxes, lag 0.1
  REQUIRE(cmd_identifiability(cfg, dir.string()) == 0);

  std::ifstream in(dir / "identifiability.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "case,worst_slope,worst_xi,worst_hurst,margin_ok,injectivity_gap,grid_failures,"
        "xi_outside_critical_band,critical_band_lo,critical_band_hi,pass");
  std::map<std::string, std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::vector<std::string> fields;
    std::string f;
    while (std::getline(row, f, ',')) fields.push_back(f);
    REQUIRE(fields.size() == 11);
    rows[fields[0]] = fields;
  }
  REQUIRE(rows.size() == 3);
  CHECK(std::stod(rows["sigma_hurst"][1]) > 0.0);
  CHECK(std::stod(rows["xi_hurst"][1]) > 0.0);
  CHECK(std::stod(rows["xi_sigma"][1]) < 0.0);
  for (const auto& [name, fields] : rows) {
    INFO(name);
    CHECK(fields[10] == "1");               // pass
    CHECK(std::stod(rows[name][5]) > 0.0);  // injectivity gap
    CHECK(fields[6] == "0");                // no quadrature failures
  }
}

TEST_CASE("benchmark emits the seven datasets with the declared shapes") {
  const fs::path dir = scratch("bench");
  ExperimentConfig cfg;
  cfg.n = 800;
  cfg.trials = 2;
  cfg.sgd_iterations = 12;
  cfg.sgd_iterations_3d = 6;
  cfg.master_seed = 3;

  REQUIRE(cmd_benchmark(cfg, dir.string(), 1) == 0);

  for (const char* name : {"hist_xi.csv", "hist_sigma.csv", "hist_hurst.csv"})
    CHECK(count_lines(slurp(dir / name)) == 20 + 1);
  for (const char* name : {"estimates_xi.csv", "estimates_sigma.csv", "estimates_hurst.csv"})
    CHECK(count_lines(slurp(dir / name)) == cfg.trials + 1);
  for (const char* name : {"loss2d_sigma_hurst.csv", "loss2d_xi_hurst.csv", "loss2d_xi_sigma.csv"}) {
    const std::string text = slurp(dir / name);
    CHECK(text.substr(0, text.find('\n')) == "iteration,loss,xi,sigma,hurst");
    CHECK(count_lines(text) == cfg.sgd_iterations + 2);  // header + iterations + 1 rows
  }
  CHECK(count_lines(slurp(dir / "loss3d.csv")) == cfg.sgd_iterations_3d + 2);

  SECTION("the 2-D traces keep their fixed coordinate pinned at the truth") {
    std::ifstream in(dir / "loss2d_sigma_hurst.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::stringstream row(line);
      std::string field;
      std::getline(row, field, ',');
      std::getline(row, field, ',');
      std::getline(row, field, ',');  // xi column
      CHECK(std::stod(field) == cfg.theta_true.xi(0));
    }
  }

  SECTION("a rerun reproduces every file byte for byte") {
    const fs::path rerun = scratch("bench_rerun");
    REQUIRE(cmd_benchmark(cfg, rerun.string(), 1) == 0);
    for (const auto& entry : fs::directory_iterator(dir)) {
      INFO(entry.path().filename().string());
      CHECK(slurp(entry.path()) == slurp(rerun / entry.path().filename()));
    }
  }
}

#ifdef FRACSDE_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FRACSDE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("the command line front end maps errors to exit codes") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);

  SECTION("a valid run exits 0") {
    std::ofstream cfg(dir / "ok.cfg");
    cfg << "n = 300\ntrials = 1\nfree = xi\ndistance = w1\ninit_sigma = 0.5\ninit_hurst = 0.7\n";
    cfg.close();
    CHECK(run_cli("simulate --config " + (dir / "ok.cfg").string() + " --out " + (dir / "sim").string()) == 0);
    CHECK(run_cli("estimate --config " + (dir / "ok.cfg").string() + " --out " + (dir / "est").string()) == 0);
  }
  SECTION("configuration problems exit 2") {
    std::ofstream cfg(dir / "bad.cfg");
    cfg << "n = 300\nbogus = 1\n";
    cfg.close();
    CHECK(run_cli("estimate --config " + (dir / "bad.cfg").string()) == 2);
    CHECK(run_cli("estimate --config " + (dir / "missing.cfg").string()) == 2);
    CHECK(run_cli("--out " + dir.string()) == 2);  // missing subcommand
    CHECK(run_cli("estimate --bogus-flag") == 2);
  }
  SECTION("the seed flag overrides the configured master seed") {
    std::ofstream cfg(dir / "seed.cfg");
    cfg << "n = 300\ntrials = 1\nfree = xi\ndistance = w1\nmaster_seed = 1\n";
    cfg.close();
    const std::string base = "simulate --config " + (dir / "seed.cfg").string() + " --out ";
    REQUIRE(run_cli(base + (dir / "s1").string()) == 0);
    REQUIRE(run_cli(base + (dir / "s2").string() + " --seed 99") == 0);
    REQUIRE(run_cli(base + (dir / "s3").string() + " --seed 99") == 0);
    CHECK(slurp(dir / "s1" / "path.csv") != slurp(dir / "s2" / "path.csv"));
    CHECK(slurp(dir / "s2" / "path.csv") == slurp(dir / "s3" / "path.csv"));
  }
}
#endif

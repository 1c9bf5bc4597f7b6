#pragma once

// Experiment harness behind the command-line tool: flat key = value
// configuration, deterministic fan-out of one master seed into per-trial
// random streams, trial execution over a small thread pool, and CSV /
// JSON-lines persistence.
//
// Stream layout for trial t under master seed s:
//   observation path noise   (s, t)
//   contrast sampling chi    (s, 2^32 + t)
//   SGD minibatch draws      (s, 2^33 + t)
//   model-side path noise    (s, 2^34 + t)
// Records are written in trial order whatever the pool schedule, and no
// wall-clock value reaches an output file, so every command's outputs are a
// pure function of the configuration and the master seed.

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fracsde/estimator.hpp"

namespace fracsde {

enum class ModelName { ou, perturbed_ou };
enum class EstimatorKind { automatic, search, sgd, simulated };

struct ExperimentConfig {
  ModelName model = ModelName::ou;
  double lambda = 0.2;  // perturbation size, perturbed_ou only
  ThetaVector theta_true = ThetaVector::scalar(2.0, 0.5, 0.7);
  ThetaVector init = ThetaVector::scalar(1.0, 0.7, 0.5);
  ThetaBox box;
  std::array<bool, 3> free_mask{{true, true, true}};  // xi, sigma, hurst

  double fine_step = 1e-3;
  int subsample_k0 = 100;
  int n = 10000;
  int q = 2;
  double lag_h = 0.0;  // 0 means subsample_k0 * fine_step

  DistanceKind distance = DistanceKind::cf;
  double cf_p = 2.0;
  int cf_mc_samples = 100;

  EstimatorKind estimator = EstimatorKind::automatic;
  int sgd_iterations = 1000;
  int sgd_batch = 100;
  double sgd_tau = 0.0;  // 0 means iterations / 4
  double sgd_initial_fraction = 0.05;
  int sgd_h_sweep_every = 25;
  int sgd_h_sweep_evals = 10;
  int sgd_iterations_3d = 100;

  int sim_rows = 0;  // resimulation rows per replica; 0 means n
  int sim_replicas = 1;

  double ident_xi_lo = 1.0;
  double ident_xi_hi = 3.0;
  double ident_hurst_lo = 0.55;
  double ident_hurst_hi = 0.8;
  int ident_points = 26;
  double ident_lag = 0.1;

  int trials = 100;
  std::uint64_t master_seed = 1;
  std::string data_file;  // estimate only: read this dataset instead of simulating
  std::string out_dir = ".";

  double effective_lag() const { return lag_h > 0.0 ? lag_h : subsample_k0 * fine_step; }
  int n_free() const {
    int c = 0;
    for (bool f : free_mask) c += f ? 1 : 0;
    return c;
  }
};

namespace detail {

constexpr std::uint64_t stream_cf = 1ull << 32;
constexpr std::uint64_t stream_phi = 1ull << 33;
constexpr std::uint64_t stream_sim = 1ull << 34;

// augmentation stride on the subsampled grid; 1 unless lag_h was overridden
inline long lag_stride(const ExperimentConfig& c) {
  const double coarse = c.fine_step * c.subsample_k0;
  return std::lround(c.effective_lag() / coarse);
}

}  // namespace detail

inline void validate_config(const ExperimentConfig& c) {
  auto bad = [](const std::string& msg) { return std::invalid_argument("config: " + msg); };
  if (!(c.box.xi.lo > 0.0) || !(c.box.xi.lo < c.box.xi.hi))
    throw bad("box_xi_lo/box_xi_hi: need 0 < lo < hi");
  if (!(c.box.sigma.lo > 0.0) || !(c.box.sigma.lo < c.box.sigma.hi))
    throw bad("box_sigma_lo/box_sigma_hi: need 0 < lo < hi");
  if (!(c.box.hurst.lo > 0.0) || !(c.box.hurst.lo < c.box.hurst.hi) || !(c.box.hurst.hi < 1.0))
    throw bad("box_hurst_lo/box_hurst_hi: need 0 < lo < hi < 1");
  if (!(c.theta_true.xi(0) > 0.0)) throw bad("theta_true_xi: must be positive");
  if (!(c.theta_true.sigma > 0.0)) throw bad("theta_true_sigma: must be positive");
  if (!(c.theta_true.hurst > 0.0) || !(c.theta_true.hurst < 1.0))
    throw bad("theta_true_hurst: must lie in (0, 1)");
  if (!(c.fine_step > 0.0)) throw bad("fine_step: must be positive");
  if (c.subsample_k0 < 1) throw bad("subsample_k0: must be >= 1");
  if (c.n < 1) throw bad("n: must be >= 1");
  if (c.q < 1) throw bad("q: must be >= 1");
  const double coarse = c.fine_step * c.subsample_k0;
  const double ratio = c.effective_lag() / coarse;
  const long stride = std::lround(ratio);
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio)
    throw bad("lag_h: must be a positive integer multiple of subsample_k0 * fine_step");
  if (!(c.cf_p > 0.5 * (c.q + 1))) throw bad("cf_p: must exceed (q + 1) / 2");
  if (c.cf_mc_samples < 1) throw bad("cf_mc_samples: must be >= 1");
  const int nf = c.n_free();
  if (nf < 1) throw bad("free: need at least one free parameter");
  if (c.q + 1 < nf) throw bad("q: need q + 1 >= number of free parameters");
  if (c.sgd_iterations < 1) throw bad("sgd_iterations: must be >= 1");
  if (c.sgd_batch < 1) throw bad("sgd_batch: must be >= 1");
  if (!(c.sgd_tau >= 0.0)) throw bad("sgd_tau: must be >= 0");
  if (!(c.sgd_initial_fraction > 0.0)) throw bad("sgd_initial_fraction: must be positive");
  if (c.sgd_h_sweep_every < 0) throw bad("sgd_h_sweep_every: must be >= 0");
  if (c.sgd_h_sweep_evals < 1) throw bad("sgd_h_sweep_evals: must be >= 1");
  if (c.sgd_iterations_3d < 1) throw bad("sgd_iterations_3d: must be >= 1");
  if (c.sim_rows < 0) throw bad("sim_rows: must be >= 0");
  if (c.sim_replicas < 1) throw bad("sim_replicas: must be >= 1");
  if (c.model == ModelName::perturbed_ou) {
    const double xi_lo = std::min(c.box.xi.lo, c.theta_true.xi(0));
    if (!(c.lambda >= 0.0) || !(c.lambda <= 0.5 * xi_lo))
      throw bad("lambda: need 0 <= lambda <= half the smallest mean-reversion rate");
  }
  if (c.estimator == EstimatorKind::search && nf != 1)
    throw bad("estimator: search needs exactly one free parameter");
  if (c.estimator == EstimatorKind::sgd && c.model != ModelName::ou)
    throw bad("estimator: sgd applies to the ou model only");
  if (!(c.ident_xi_lo > 0.0) || !(c.ident_xi_lo < c.ident_xi_hi))
    throw bad("ident_xi_lo/ident_xi_hi: need 0 < lo < hi");
  if (!(c.ident_hurst_lo > 0.0) || !(c.ident_hurst_lo < c.ident_hurst_hi) || !(c.ident_hurst_hi < 1.0))
    throw bad("ident_hurst_lo/ident_hurst_hi: need 0 < lo < hi < 1");
  if (c.ident_points < 2) throw bad("ident_points: must be >= 2");
  if (!(c.ident_lag > 0.0)) throw bad("ident_lag: must be positive");
  if (c.trials < 1) throw bad("trials: must be >= 1");
}

namespace detail {

inline std::string trim_copy(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct ConfigEntry {
  std::string value;
  int line = 0;
  bool used = false;
};

inline std::invalid_argument config_error(int line, const std::string& msg) {
  return std::invalid_argument("config line " + std::to_string(line) + ": " + msg);
}

inline double parse_config_double(const ConfigEntry& e, const std::string& key) {
  double v = 0.0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw config_error(e.line, "invalid number for '" + key + "'");
  return v;
}

inline long long parse_config_int(const ConfigEntry& e, const std::string& key) {
  long long v = 0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw config_error(e.line, "invalid integer for '" + key + "'");
  return v;
}

inline std::uint64_t parse_config_u64(const ConfigEntry& e, const std::string& key) {
  std::uint64_t v = 0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw config_error(e.line, "invalid unsigned integer for '" + key + "'");
  return v;
}

inline std::array<bool, 3> parse_free_list(const ConfigEntry& e) {
  std::array<bool, 3> mask{{false, false, false}};
  std::stringstream ss(e.value);
  std::string token;
  bool any = false;
  while (std::getline(ss, token, ',')) {
    token = trim_copy(token);
    int idx = -1;
    if (token == "xi") idx = 0;
    else if (token == "sigma") idx = 1;
    else if (token == "hurst") idx = 2;
    else throw config_error(e.line, "'free' entries must be xi, sigma or hurst, got '" + token + "'");
    if (mask[static_cast<std::size_t>(idx)])
      throw config_error(e.line, "duplicate '" + token + "' in 'free'");
    mask[static_cast<std::size_t>(idx)] = true;
    any = true;
  }
  if (!any) throw config_error(e.line, "'free' must name at least one parameter");
  return mask;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::map<std::string, detail::ConfigEntry> entries;
  {
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::size_t hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      const std::string line = detail::trim_copy(raw);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) throw detail::config_error(line_no, "expected key = value");
      const std::string key = detail::trim_copy(line.substr(0, eq));
      const std::string value = detail::trim_copy(line.substr(eq + 1));
      if (key.empty()) throw detail::config_error(line_no, "expected key = value");
      if (value.empty()) throw detail::config_error(line_no, "empty value for '" + key + "'");
      auto [it, inserted] = entries.emplace(key, detail::ConfigEntry{value, line_no, false});
      if (!inserted)
        throw detail::config_error(line_no, "duplicate key '" + key + "' (first set on line " +
                                                std::to_string(it->second.line) + ")");
    }
  }

  ExperimentConfig cfg;
  auto take = [&](const char* key) -> detail::ConfigEntry* {
    auto it = entries.find(key);
    if (it == entries.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  };
  auto set_double = [&](const char* key, double& dst) {
    if (auto* e = take(key)) dst = detail::parse_config_double(*e, key);
  };
  auto set_int = [&](const char* key, int& dst) {
    if (auto* e = take(key)) {
      const long long v = detail::parse_config_int(*e, key);
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw detail::config_error(e->line, "value out of range for '" + std::string(key) + "'");
      dst = static_cast<int>(v);
    }
  };
  auto set_string = [&](const char* key, std::string& dst) {
    if (auto* e = take(key)) dst = e->value;
  };

  if (auto* e = take("model")) {
    if (e->value == "ou") cfg.model = ModelName::ou;
    else if (e->value == "perturbed_ou") cfg.model = ModelName::perturbed_ou;
    else throw detail::config_error(e->line, "'model' must be ou or perturbed_ou");
  }
  set_double("lambda", cfg.lambda);
  set_double("theta_true_xi", cfg.theta_true.xi(0));
  set_double("theta_true_sigma", cfg.theta_true.sigma);
  set_double("theta_true_hurst", cfg.theta_true.hurst);
  set_double("init_xi", cfg.init.xi(0));
  set_double("init_sigma", cfg.init.sigma);
  set_double("init_hurst", cfg.init.hurst);
  set_double("box_xi_lo", cfg.box.xi.lo);
  set_double("box_xi_hi", cfg.box.xi.hi);
  set_double("box_sigma_lo", cfg.box.sigma.lo);
  set_double("box_sigma_hi", cfg.box.sigma.hi);
  set_double("box_hurst_lo", cfg.box.hurst.lo);
  set_double("box_hurst_hi", cfg.box.hurst.hi);
  if (auto* e = take("free")) cfg.free_mask = detail::parse_free_list(*e);
  set_double("fine_step", cfg.fine_step);
  set_int("subsample_k0", cfg.subsample_k0);
  set_int("n", cfg.n);
  set_int("q", cfg.q);
  set_double("lag_h", cfg.lag_h);
  if (auto* e = take("distance")) {
    if (e->value == "cf") cfg.distance = DistanceKind::cf;
    else if (e->value == "w1") cfg.distance = DistanceKind::w1;
    else throw detail::config_error(e->line, "'distance' must be cf or w1");
  }
  set_double("cf_p", cfg.cf_p);
  set_int("cf_mc_samples", cfg.cf_mc_samples);
  if (auto* e = take("estimator")) {
    if (e->value == "auto") cfg.estimator = EstimatorKind::automatic;
    else if (e->value == "search") cfg.estimator = EstimatorKind::search;
    else if (e->value == "sgd") cfg.estimator = EstimatorKind::sgd;
    else if (e->value == "simulated") cfg.estimator = EstimatorKind::simulated;
    else throw detail::config_error(e->line, "'estimator' must be auto, search, sgd or simulated");
  }
  set_int("sgd_iterations", cfg.sgd_iterations);
  set_int("sgd_batch", cfg.sgd_batch);
  set_double("sgd_tau", cfg.sgd_tau);
  set_double("sgd_initial_fraction", cfg.sgd_initial_fraction);
  set_int("sgd_h_sweep_every", cfg.sgd_h_sweep_every);
  set_int("sgd_h_sweep_evals", cfg.sgd_h_sweep_evals);
  set_int("sgd_iterations_3d", cfg.sgd_iterations_3d);
  set_int("sim_rows", cfg.sim_rows);
  set_int("sim_replicas", cfg.sim_replicas);
  set_double("ident_xi_lo", cfg.ident_xi_lo);
  set_double("ident_xi_hi", cfg.ident_xi_hi);
  set_double("ident_hurst_lo", cfg.ident_hurst_lo);
  set_double("ident_hurst_hi", cfg.ident_hurst_hi);
  set_int("ident_points", cfg.ident_points);
  set_double("ident_lag", cfg.ident_lag);
  set_int("trials", cfg.trials);
  if (auto* e = take("master_seed")) cfg.master_seed = detail::parse_config_u64(*e, "master_seed");
  set_string("data", cfg.data_file);
  set_string("out_dir", cfg.out_dir);

  for (const auto& [key, entry] : entries)
    if (!entry.used) throw detail::config_error(entry.line, "unknown key '" + key + "'");

  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

// --- trial records ----------------------------------------------------------

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;  // master seed the trial streams were derived from
  ThetaVector theta_hat;
  double contrast = 0.0;
  double wall_time = 0.0;  // seconds; reported on stdout, never serialized
  int iterations = 0;      // 0 for deterministic scalar searches
  double final_loss = 0.0;
  std::string error;       // empty on success

  bool ok() const { return error.empty(); }
};

inline nlohmann::json trial_record_json(const TrialRecord& r) {
  nlohmann::json j;
  j["trial"] = r.trial;
  j["seed"] = r.seed;
  j["xi"] = std::vector<double>(r.theta_hat.xi.data(), r.theta_hat.xi.data() + r.theta_hat.xi.size());
  j["sigma"] = r.theta_hat.sigma;
  j["hurst"] = r.theta_hat.hurst;
  j["contrast"] = r.contrast;
  j["iterations"] = r.iterations;
  j["final_loss"] = r.final_loss;
  j["error"] = r.error;
  return j;
}

inline TrialRecord trial_record_from_json(const nlohmann::json& j) {
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key))
      throw std::invalid_argument(std::string("trial record: missing field '") + key + "'");
    return j.at(key);
  };
  TrialRecord r;
  r.trial = need("trial").get<int>();
  r.seed = need("seed").get<std::uint64_t>();
  const auto xi = need("xi").get<std::vector<double>>();
  if (xi.empty()) throw std::invalid_argument("trial record: field 'xi' must not be empty");
  r.theta_hat.xi = Eigen::Map<const Eigen::VectorXd>(xi.data(), static_cast<Eigen::Index>(xi.size()));
  r.theta_hat.sigma = need("sigma").get<double>();
  r.theta_hat.hurst = need("hurst").get<double>();
  r.contrast = need("contrast").get<double>();
  r.iterations = need("iterations").get<int>();
  r.final_loss = need("final_loss").get<double>();
  r.error = need("error").get<std::string>();
  return r;
}

// --- dataset generation and persistence -------------------------------------

namespace detail {

inline DriftModel data_drift(const ExperimentConfig& cfg) {
  const double lo = std::min(cfg.box.xi.lo, cfg.theta_true.xi(0));
  const double hi = std::max(cfg.box.xi.hi, cfg.theta_true.xi(0));
  return cfg.model == ModelName::ou ? make_ou_drift(lo, hi)
                                    : make_perturbed_ou_drift(lo, hi, cfg.lambda);
}

inline DriftModel model_drift(const ExperimentConfig& cfg) {
  return cfg.model == ModelName::ou ? make_ou_drift(cfg.box.xi.lo, cfg.box.xi.hi)
                                    : make_perturbed_ou_drift(cfg.box.xi.lo, cfg.box.xi.hi, cfg.lambda);
}

inline std::string csv_num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + file.string() + "'");
  return out;
}

}  // namespace detail

// Fine Euler path at theta_true, burn-in discarded, subsampled by k0 and
// increment-augmented; sized so exactly cfg.n rows come out.
inline AugmentedPath generate_dataset(const ExperimentConfig& cfg, std::uint64_t trial) {
  const DriftModel drift = detail::data_drift(cfg);
  const long k0 = cfg.subsample_k0;
  const long stride = detail::lag_stride(cfg);
  const long coarse_points = static_cast<long>(cfg.n) + static_cast<long>(cfg.q) * stride;
  const long span_increments = (coarse_points - 1) * k0;
  long burn_steps = static_cast<long>(std::ceil(burn_in_duration(drift) / cfg.fine_step));
  burn_steps = ((burn_steps + k0 - 1) / k0) * k0;
  const long total_increments = burn_steps + span_increments;
  if (total_increments > std::numeric_limits<int>::max() / 2)
    throw std::invalid_argument("config: n: fine grid too large, reduce n or subsample_k0");

  FbmGrid noise = sample_fbm(cfg.theta_true.hurst, cfg.fine_step, static_cast<int>(total_increments),
                             RngStream{cfg.master_seed, trial});
  Path fine = euler_simulate(drift, cfg.theta_true, noise);
  if (burn_steps > 0)
    fine = discard_initial(fine, (static_cast<double>(burn_steps) + 0.5) * cfg.fine_step);
  return augment(subsample(fine, static_cast<int>(k0)), cfg.q, cfg.effective_lag());
}

inline void write_augmented_csv(const std::filesystem::path& file, const AugmentedPath& data,
                                double coarse_step) {
  std::ofstream out = detail::open_output(file);
  out << "t";
  for (int i = 0; i <= data.q; ++i) out << ",x" << i;
  out << "\n";
  for (Eigen::Index k = 0; k < data.rows.rows(); ++k) {
    out << detail::csv_num(static_cast<double>(k) * coarse_step);
    for (int i = 0; i <= data.q; ++i) out << "," << detail::csv_num(data.rows(k, i));
    out << "\n";
  }
}

inline AugmentedPath read_augmented_csv(const std::string& file, int q, double lag_h) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::invalid_argument("data: cannot open '" + file + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("data: '" + file + "' is empty");

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(detail::trim_copy(tok));
    return out;
  };
  const std::vector<std::string> header = split(line);
  if (header.size() < 2 || header[0] != "t")
    throw std::invalid_argument("data: '" + file + "' header must be t,x0,...,xq");
  for (std::size_t i = 1; i < header.size(); ++i)
    if (header[i] != "x" + std::to_string(i - 1))
      throw std::invalid_argument("data: '" + file + "' header must be t,x0,...,xq");
  const int file_q = static_cast<int>(header.size()) - 2;
  if (file_q != q)
    throw std::invalid_argument("data: '" + file + "' has q = " + std::to_string(file_q) +
                                " but the config says q = " + std::to_string(q));

  std::vector<double> values;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim_copy(line).empty()) continue;
    const std::vector<std::string> fields = split(line);
    if (fields.size() != header.size())
      throw std::invalid_argument("data file line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields");
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0.0;
      const char* first = fields[i].data();
      const char* last = first + fields[i].size();
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc{} || ptr != last)
        throw std::invalid_argument("data file line " + std::to_string(line_no) + ": invalid number '" +
                                    fields[i] + "'");
      values.push_back(v);
    }
  }
  if (values.empty()) throw std::invalid_argument("data: '" + file + "' has no rows");

  AugmentedPath out;
  out.q = file_q;
  out.lag_h = lag_h;
  const Eigen::Index rows = static_cast<Eigen::Index>(values.size()) / (file_q + 1);
  out.rows.resize(rows, file_q + 1);
  for (Eigen::Index k = 0; k < rows; ++k)
    for (int i = 0; i <= file_q; ++i) out.rows(k, i) = values[static_cast<std::size_t>(k) * (file_q + 1) + i];
  return out;
}

// --- trial execution --------------------------------------------------------

namespace detail {

inline EstimatorKind resolved_estimator(const ExperimentConfig& cfg) {
  if (cfg.estimator != EstimatorKind::automatic) return cfg.estimator;
  if (cfg.n_free() == 1) return EstimatorKind::search;
  return cfg.model == ModelName::ou ? EstimatorKind::sgd : EstimatorKind::simulated;
}

inline void run_pool(int count, int threads, const std::function<void(int)>& job) {
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = 0; (i = next.fetch_add(1)) < count;) job(i);
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline EstimationProblem make_problem(const ExperimentConfig& cfg, AugmentedPath data,
                                      std::uint64_t trial) {
  EstimationProblem p;
  p.observations = std::move(data);
  p.box = cfg.box;
  p.theta_init = cfg.init;
  p.free_mask = cfg.free_mask;
  const EstimatorKind kind = detail::resolved_estimator(cfg);
  const bool general = kind == EstimatorKind::simulated || cfg.model == ModelName::perturbed_ou;
  p.model = general ? ModelKind::general_drift : ModelKind::ou_analytic;
  if (general) p.drift = detail::model_drift(cfg);
  p.distance = cfg.distance;
  p.cf = make_cf_config(cfg.q + 1, cfg.cf_p, cfg.cf_mc_samples,
                        RngStream{cfg.master_seed, detail::stream_cf + trial});
  p.fine_step = cfg.fine_step;
  p.sim_rows = cfg.sim_rows > 0 ? cfg.sim_rows : cfg.n;
  p.sim_replicas = cfg.sim_replicas;
  p.sim_noise = RngStream{cfg.master_seed, detail::stream_sim + trial};
  return p;
}

inline SGDConfig make_sgd_config(const ExperimentConfig& cfg, std::uint64_t trial) {
  SGDConfig sc;
  sc.init = cfg.init;
  sc.batch_size = cfg.sgd_batch;
  sc.iterations = cfg.sgd_iterations;
  sc.initial_fraction = cfg.sgd_initial_fraction;
  sc.tau = cfg.sgd_tau;
  sc.phi_stream = RngStream{cfg.master_seed, detail::stream_phi + trial};
  sc.h_sweep_every = cfg.sgd_h_sweep_every;
  sc.h_sweep_evals = cfg.sgd_h_sweep_evals;
  return sc;
}

// One estimation trial: simulate (or reuse) the dataset, run the resolved
// estimator, capture failures in the record instead of throwing.
inline TrialRecord run_trial(const ExperimentConfig& cfg, int trial,
                             const AugmentedPath* fixed_data = nullptr) {
  TrialRecord rec;
  rec.trial = trial;
  rec.seed = cfg.master_seed;
  rec.theta_hat = cfg.init;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    AugmentedPath data =
        fixed_data ? *fixed_data : generate_dataset(cfg, static_cast<std::uint64_t>(trial));
    const EstimationProblem p = make_problem(cfg, std::move(data), static_cast<std::uint64_t>(trial));
    const EstimatorKind kind = detail::resolved_estimator(cfg);
    if (p.model == ModelKind::ou_analytic && kind == EstimatorKind::search) {
      const ScalarEstimate est = estimate_1d(p);
      rec.theta_hat = est.theta_hat;
      rec.contrast = est.contrast;
      rec.final_loss = est.contrast;
    } else if (p.model == ModelKind::ou_analytic) {
      const SGDTrace trace = estimate_sgd(p, make_sgd_config(cfg, static_cast<std::uint64_t>(trial)));
      rec.theta_hat = trace.thetas.back();
      rec.contrast = trace.losses.back();
      rec.iterations = static_cast<int>(trace.losses.size()) - 1;
      rec.final_loss = trace.losses.back();
    } else {
      const SimulatedEstimate est =
          estimate_simulated(p, make_sgd_config(cfg, static_cast<std::uint64_t>(trial)));
      rec.theta_hat = est.theta_hat;
      rec.contrast = est.contrast;
      rec.iterations = est.trace.losses.empty() ? 0 : static_cast<int>(est.trace.losses.size()) - 1;
      rec.final_loss = est.trace.losses.empty() ? est.contrast : est.trace.losses.back();
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// --- output files -----------------------------------------------------------

inline void write_records_jsonl(const std::filesystem::path& file,
                                const std::vector<TrialRecord>& records) {
  std::ofstream out = detail::open_output(file);
  for (const TrialRecord& r : records) out << trial_record_json(r).dump() << "\n";
}

// mean, bias and population variance of each coordinate over successful trials
inline void write_summary_csv(const std::filesystem::path& file,
                              const std::vector<TrialRecord>& records, const ThetaVector& truth) {
  std::ofstream out = detail::open_output(file);
  out << "parameter,mean,bias,variance\n";
  static constexpr std::array<const char*, 3> names{{"xi", "sigma", "hurst"}};
  for (int i = 0; i < 3; ++i) {
    double mean = 0.0;
    long count = 0;
    for (const TrialRecord& r : records) {
      if (!r.ok()) continue;
      mean += detail::theta_get(r.theta_hat, i);
      ++count;
    }
    mean /= std::max<long>(count, 1);
    double var = 0.0;
    for (const TrialRecord& r : records) {
      if (!r.ok()) continue;
      const double d = detail::theta_get(r.theta_hat, i) - mean;
      var += d * d;
    }
    var /= std::max<long>(count, 1);
    out << names[static_cast<std::size_t>(i)] << "," << detail::csv_num(mean) << ","
        << detail::csv_num(mean - detail::theta_get(truth, i)) << "," << detail::csv_num(var) << "\n";
  }
}

inline void write_histogram_csv(const std::filesystem::path& file, std::vector<double> values,
                                int bins = 20) {
  std::ofstream out = detail::open_output(file);
  out << "bin_lo,bin_hi,count\n";
  if (values.empty()) return;
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  if (!(hi - lo > 1e-12)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / bins;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    auto idx = static_cast<long>((v - lo) / width);
    idx = std::clamp<long>(idx, 0, bins - 1);
    ++counts[static_cast<std::size_t>(idx)];
  }
  for (int b = 0; b < bins; ++b)
    out << detail::csv_num(lo + b * width) << "," << detail::csv_num(lo + (b + 1) * width) << ","
        << counts[static_cast<std::size_t>(b)] << "\n";
}

inline void write_loss_csv(const std::filesystem::path& file, const SGDTrace& trace) {
  std::ofstream out = detail::open_output(file);
  out << "iteration,loss,xi,sigma,hurst\n";
  for (std::size_t k = 0; k < trace.losses.size(); ++k) {
    const ThetaVector& t = trace.thetas[k];
    out << k << "," << detail::csv_num(trace.losses[k]) << "," << detail::csv_num(t.xi(0)) << ","
        << detail::csv_num(t.sigma) << "," << detail::csv_num(t.hurst) << "\n";
  }
}

// --- commands ---------------------------------------------------------------

inline int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const AugmentedPath data = generate_dataset(cfg, 0);
  const std::filesystem::path file = std::filesystem::path(out_dir) / "path.csv";
  write_augmented_csv(file, data, cfg.fine_step * cfg.subsample_k0);
  std::printf("wrote %s (%ld rows, q = %d, lag = %g)\n", file.string().c_str(),
              static_cast<long>(data.rows.rows()), data.q, cfg.effective_lag());
  return 0;
}

inline int cmd_estimate(const ExperimentConfig& cfg, const std::string& out_dir, int threads) {
  std::filesystem::create_directories(out_dir);
  std::vector<TrialRecord> records;
  if (!cfg.data_file.empty()) {
    const AugmentedPath data = read_augmented_csv(cfg.data_file, cfg.q, cfg.effective_lag());
    records.push_back(run_trial(cfg, 0, &data));
  } else {
    records.resize(static_cast<std::size_t>(cfg.trials));
    detail::run_pool(cfg.trials, threads,
                     [&](int t) { records[static_cast<std::size_t>(t)] = run_trial(cfg, t); });
  }

  const std::filesystem::path dir(out_dir);
  write_records_jsonl(dir / "trials.jsonl", records);
  write_summary_csv(dir / "summary.csv", records, cfg.theta_true);

  long failures = 0;
  double elapsed = 0.0;
  for (const TrialRecord& r : records) {
    if (!r.ok()) ++failures;
    elapsed += r.wall_time;
  }
  std::printf("estimate: %zu trials, %ld failed, %.1f s estimation time\n", records.size(), failures,
              elapsed);
  return failures * 10 > static_cast<long>(records.size()) ? 3 : 0;
}

namespace detail {

struct InjectivityScan {
  double gap = std::numeric_limits<double>::infinity();  // min |f(a)-f(b)| / |a-b|
  long failures = 0;                                     // grid points where quadrature threw
};

// worst-case separation of the (variance, lag covariance) map over a grid in
// the two free coordinates of the case, the third held at its known value
inline InjectivityScan injectivity_scan(IdentCase which, const ExperimentConfig& cfg, int points) {
  GridSpec a{cfg.ident_xi_lo, cfg.ident_xi_hi, points};       // xi axis when free
  GridSpec b{cfg.ident_hurst_lo, cfg.ident_hurst_hi, points}; // hurst axis when free
  if (which == IdentCase::sigma_hurst) a = GridSpec{cfg.box.sigma.lo, cfg.box.sigma.hi, points};
  if (which == IdentCase::xi_sigma) b = GridSpec{cfg.box.sigma.lo, cfg.box.sigma.hi, points};

  InjectivityScan out;
  std::vector<Eigen::Vector2d> params;
  std::vector<Eigen::Vector2d> images;
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      const double u = grid_value(a, i);
      const double v = grid_value(b, j);
      OuParams p;
      p.xi = cfg.theta_true.xi(0);
      p.sigma = cfg.theta_true.sigma;
      p.hurst = cfg.theta_true.hurst;
      p.lag_h = cfg.ident_lag;
      switch (which) {
        case IdentCase::sigma_hurst: p.sigma = u; p.hurst = v; break;
        case IdentCase::xi_hurst: p.xi = u; p.hurst = v; break;
        case IdentCase::xi_sigma: p.xi = u; p.sigma = v; break;
      }
      try {
        images.push_back(injectivity_map(p));
        params.emplace_back(u, v);
      } catch (const std::exception&) {
        ++out.failures;
      }
    }
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      const double dp = (params[i] - params[j]).norm();
      if (!(dp > 0.0)) continue;
      out.gap = std::min(out.gap, (images[i] - images[j]).norm() / dp);
    }
  }
  return out;
}

}  // namespace detail

inline int cmd_identifiability(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  MarginInputs in;
  in.xi_grid = GridSpec{cfg.ident_xi_lo, cfg.ident_xi_hi, cfg.ident_points};
  in.hurst_grid = GridSpec{cfg.ident_hurst_lo, cfg.ident_hurst_hi, cfg.ident_points};
  in.xi_fixed = cfg.theta_true.xi(0);
  in.hurst_fixed = cfg.theta_true.hurst;
  in.lag_h = cfg.ident_lag;

  static constexpr std::array<IdentCase, 3> cases{
      {IdentCase::sigma_hurst, IdentCase::xi_hurst, IdentCase::xi_sigma}};
  static constexpr std::array<const char*, 3> names{{"sigma_hurst", "xi_hurst", "xi_sigma"}};

  std::ofstream out = detail::open_output(std::filesystem::path(out_dir) / "identifiability.csv");
  out << "case,worst_slope,worst_xi,worst_hurst,margin_ok,injectivity_gap,grid_failures,"
         "xi_outside_critical_band,critical_band_lo,critical_band_hi,pass\n";
  bool all_pass = true;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const MarginReport rep = identifiability_margin(cases[c], in);
    const detail::InjectivityScan scan = detail::injectivity_scan(cases[c], cfg, 12);
    const bool pass = rep.margin_ok && scan.gap > 0.0 && scan.failures == 0;
    all_pass = all_pass && pass;
    out << names[c] << "," << detail::csv_num(rep.worst_slope) << "," << detail::csv_num(rep.worst_xi)
        << "," << detail::csv_num(rep.worst_hurst) << "," << (rep.margin_ok ? 1 : 0) << ","
        << detail::csv_num(scan.gap) << "," << scan.failures << ","
        << (rep.xi_outside_critical_band ? 1 : 0) << "," << detail::csv_num(rep.critical_band_lo)
        << "," << detail::csv_num(rep.critical_band_hi) << "," << (pass ? 1 : 0) << "\n";
    std::printf("%s: slope %.4g at (xi = %.3g, H = %.3g), gap %.4g, %s\n", names[c], rep.worst_slope,
                rep.worst_xi, rep.worst_hurst, scan.gap, pass ? "pass" : "fail");
  }
  std::printf("identifiability: %s\n", all_pass ? "all cases pass" : "some cases fail");
  return 0;
}

inline int cmd_benchmark(const ExperimentConfig& cfg, const std::string& out_dir, int threads) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  long failures = 0;
  long total = 0;

  // single-parameter histogram study: per-trial independent datasets, the
  // mean-reversion and diffusion coordinates searched on the quantile
  // contrast, the memory coordinate on the characteristic-function contrast
  struct HistCase {
    int coord;
    const char* name;
    DistanceKind dist;
  };
  static constexpr std::array<HistCase, 3> hist_cases{
      {{0, "xi", DistanceKind::w1}, {1, "sigma", DistanceKind::w1}, {2, "hurst", DistanceKind::cf}}};

  std::array<std::vector<TrialRecord>, 3> hist_records;
  for (auto& v : hist_records) v.resize(static_cast<std::size_t>(cfg.trials));
  detail::run_pool(cfg.trials, threads, [&](int t) {
    AugmentedPath data;
    std::string data_error;
    try {
      data = generate_dataset(cfg, static_cast<std::uint64_t>(t));
    } catch (const std::exception& e) {
      data_error = e.what();
    }
    for (std::size_t c = 0; c < hist_cases.size(); ++c) {
      ExperimentConfig sub = cfg;
      sub.free_mask = {{false, false, false}};
      sub.free_mask[static_cast<std::size_t>(hist_cases[c].coord)] = true;
      sub.init = cfg.theta_true;  // non-free coordinates pinned at their true values
      sub.distance = hist_cases[c].dist;
      sub.estimator = EstimatorKind::search;
      if (!data_error.empty()) {
        TrialRecord rec;
        rec.trial = t;
        rec.seed = cfg.master_seed;
        rec.theta_hat = sub.init;
        rec.error = data_error;
        hist_records[c][static_cast<std::size_t>(t)] = rec;
      } else {
        hist_records[c][static_cast<std::size_t>(t)] = run_trial(sub, t, &data);
      }
    }
  });

  for (std::size_t c = 0; c < hist_cases.size(); ++c) {
    const std::string name = hist_cases[c].name;
    std::vector<double> estimates;
    std::ofstream est_out = detail::open_output(dir / ("estimates_" + name + ".csv"));
    est_out << "trial,estimate\n";
    for (const TrialRecord& r : hist_records[c]) {
      ++total;
      if (!r.ok()) {
        ++failures;
        continue;
      }
      const double v = detail::theta_get(r.theta_hat, hist_cases[c].coord);
      estimates.push_back(v);
      est_out << r.trial << "," << detail::csv_num(v) << "\n";
    }
    write_histogram_csv(dir / ("hist_" + name + ".csv"), estimates);
  }

  // gradient-descent study on one shared dataset: three two-parameter runs
  // and the full three-parameter run, loss traces written per iteration
  struct SgdCase {
    std::array<bool, 3> mask;
    const char* file;
    int iterations;
  };
  const std::array<SgdCase, 4> sgd_cases{{{{{false, true, true}}, "loss2d_sigma_hurst.csv", cfg.sgd_iterations},
                                          {{{true, false, true}}, "loss2d_xi_hurst.csv", cfg.sgd_iterations},
                                          {{{true, true, false}}, "loss2d_xi_sigma.csv", cfg.sgd_iterations},
                                          {{{true, true, true}}, "loss3d.csv", cfg.sgd_iterations_3d}}};

  AugmentedPath shared;
  std::string shared_error;
  try {
    shared = generate_dataset(cfg, 0);
  } catch (const std::exception& e) {
    shared_error = e.what();
  }
  for (std::size_t c = 0; c < sgd_cases.size(); ++c) {
    ++total;
    ExperimentConfig sub = cfg;
    sub.free_mask = sgd_cases[c].mask;
    sub.distance = DistanceKind::cf;
    sub.estimator = cfg.model == ModelName::ou ? EstimatorKind::sgd : EstimatorKind::simulated;
    for (int i = 0; i < 3; ++i)
      if (!sub.free_mask[static_cast<std::size_t>(i)])
        detail::theta_set(sub.init, i, detail::theta_get(cfg.theta_true, i));
    SGDConfig sc = make_sgd_config(sub, 0);
    sc.iterations = sgd_cases[c].iterations;
    sc.phi_stream = RngStream{cfg.master_seed, detail::stream_phi + c};
    sc.have_truth = true;
    sc.truth = cfg.theta_true;
    SGDTrace trace;
    try {
      if (shared_error.empty()) {
        const EstimationProblem p = make_problem(sub, shared, 0);
        trace = sub.estimator == EstimatorKind::sgd ? estimate_sgd(p, sc)
                                                    : estimate_simulated(p, sc).trace;
      } else {
        throw std::runtime_error(shared_error);
      }
    } catch (const std::exception& e) {
      ++failures;
      std::printf("benchmark case %s failed: %s\n", sgd_cases[c].file, e.what());
    }
    write_loss_csv(dir / sgd_cases[c].file, trace);
    if (!trace.losses.empty())
      std::printf("%s: loss %.4g -> %.4g over %zu iterations\n", sgd_cases[c].file,
                  trace.losses.front(), trace.losses.back(), trace.losses.size() - 1);
  }

  std::printf("benchmark: %ld of %ld runs failed\n", failures, total);
  return failures * 10 > total ? 3 : 0;
}

}  // namespace fracsde

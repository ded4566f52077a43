#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "epipomdp/ape_v.hpp"
#include "epipomdp/mdp.hpp"

namespace epipomdp {

// Parsed environment spec string:
//   chain:n=5[,boundary=reflect|hold]
//   locked_doors[:gamma=0.98,horizon=50]
//   corridor[:gamma=0.98,horizon=50]
//   city_nav[:main=10,side=6,delay=1,p_blocked=0.5]
//   json:<path>
// Throws ConfigError on anything else.
struct EnvInstance {
  std::string spec;
  MdpPosterior posterior;
  int horizon = 50;
};

EnvInstance make_env(const std::string& spec);

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods = {"ape_v", "markov_q", "lcb", "mean_ensemble",
                                                   "static_belief", "eval_only", "bayes_optimal"};
  return methods;
}

// One experiment. JSON layout:
// {"env": "chain:n=5", "method": "ape_v", "params": {...}, "seeds": [0],
//  "output_dir": "runs",
//  "dataset": {"episodes": 1000, "behavior": "uniform", "horizon": null},
//  "eval": {"episodes": 1000, "horizon": null, "mode": "mc" | "exact"},
//  "members_curve": null | {"members": 5, "beta": 1.0, "temperature": 1.0}}
// A null horizon means the environment's default.
struct ExperimentConfig {
  std::string env = "chain:n=5";
  std::string method = "bayes_optimal";
  nlohmann::json params = nlohmann::json::object();
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "runs";
  int dataset_episodes = 1000;
  std::string behavior = "uniform";
  std::optional<int> dataset_horizon;
  int eval_episodes = 1000;
  std::optional<int> eval_horizon;
  std::string eval_mode = "mc";
  nlohmann::json members_curve = nullptr;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::string hash() const;
};

// Applies `key=value` with dotted keys ("eval.episodes=200",
// "params.temperature=10"). Values parse as JSON when possible, otherwise as
// strings; "seeds=1,2,3" becomes a list.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Reads the JSON file (empty path: defaults), applies overrides, validates.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

// Checks env, method and parameter names/types without running anything.
void validate_config(const ExperimentConfig& config);

// Generates the config's dataset for `seed` and trains APE-V on it with the
// ape_v / static_belief params. Throws ConfigError for other methods.
struct TrainedAgent {
  OfflineDataset dataset;
  AdaptiveAgent agent;
};
TrainedAgent train_from_config(const ExperimentConfig& config, std::uint64_t seed);

struct EpisodeRow {
  int episode = 0;
  double ret = 0.0;  // discounted return
  bool success = false;
  int steps = 0;
  std::vector<double> final_belief;  // empty for methods without a belief
};

struct RunMetrics {
  std::string run_id;
  std::string env;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<EpisodeRow> rows;
  std::optional<double> j_bayes;
  double mean_return = 0.0;
  double success_rate = 0.0;
  double std_error = 0.0;  // sample std of returns / sqrt(episodes)
  std::string config_hash;
};

// Fills mean_return, success_rate and std_error from rows.
void aggregate(RunMetrics& metrics);

inline constexpr const char* kMetricsHeader = "run_id,env,method,seed,episode,return,success,steps";

// For each seed: build env, generate data, train or solve, evaluate, write
// <output_dir>/<run_id>/{config.json, metrics.csv, summary.json, beliefs.csv,
// traces.csv}. beliefs.csv holds each episode's final belief, traces.csv the
// step-by-step beliefs of the first 20 episodes.
// Validation happens before anything is written.
std::vector<RunMetrics> run_experiment(const ExperimentConfig& config, bool write = true);

// One row per (env, method): mean +- stderr over seeds of the per-seed means.
struct ReportRow {
  std::string env;
  std::string method;
  int seeds = 0;
  double mean_return = 0.0;
  double stderr_return = 0.0;
  double success_rate = 0.0;
  double stderr_success = 0.0;
  std::optional<double> j_bayes;
};

std::vector<ReportRow> build_report(const std::vector<RunMetrics>& runs);
void write_report(const std::vector<ReportRow>& rows, std::ostream& text, std::ostream* csv);

// Loads every run directory (one containing metrics.csv and summary.json)
// under `root`, in sorted order.
std::vector<RunMetrics> read_runs(const std::string& root);
RunMetrics read_run(const std::string& run_dir);

// Recomputes summary.json aggregates from metrics.csv; returns the mismatches.
std::vector<std::string> verify_run(const std::string& run_dir);

// Success of mean_ensemble, lcb and eval_only on the true hypothesis when the
// ensemble is m exact per-hypothesis optimal Q tables, grouped by the number
// of members that match the truth. Every assignment of hypotheses to members
// is enumerated and each (assignment, truth) pair rolled out once, which is
// exact for deterministic environments.
struct MembersCurvePoint {
  std::string method;
  int correct = 0;
  int cases = 0;
  double success_rate = 0.0;
};

std::vector<MembersCurvePoint> members_curve(const MdpPosterior& posterior, int members, int horizon, double beta,
                                             double temperature);
void write_members_csv(const std::vector<MembersCurvePoint>& curve, std::ostream& out);

}  // namespace epipomdp

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epipomdp/epistemic_pomdp.hpp"
#include "epipomdp/error.hpp"
#include "epipomdp/harness.hpp"
#include "epipomdp/io.hpp"

using namespace epipomdp;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;
constexpr int kVerifyFailed = 4;

const char* kFooter =
    "Exit codes:\n"
    "  0  ok\n"
    "  2  configuration error (bad config file, override, env spec, method or parameter;\n"
    "     nothing is written)\n"
    "  3  runtime error (impossible transition, node budget exceeded, missing data, I/O)\n"
    "  4  verification failure (summary.json disagrees with metrics.csv)\n";

void print_runs(const std::vector<RunMetrics>& runs) {
  for (const auto& r : runs) {
    std::cout << r.run_id << ": mean_return " << format_double(r.mean_return) << " success_rate "
              << format_double(r.success_rate) << " stderr " << format_double(r.std_error);
    if (r.j_bayes) std::cout << " j_bayes " << format_double(*r.j_bayes);
    std::cout << "\n";
  }
}

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ';') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian offline RL over finite posteriors of tabular MDPs"};
  app.footer(kFooter);
  app.require_subcommand(1);

  // solve
  std::string solve_env;
  int solve_horizon = 0;
  long node_budget = 1'000'000;
  std::string solve_out;
  auto* solve = app.add_subcommand("solve", "Exact Bayes-optimal planning on an environment posterior");
  solve->add_option("--env", solve_env, "Environment spec, e.g. chain:n=5")->required();
  solve->add_option("--horizon", solve_horizon, "Planning horizon (default: the environment's)");
  solve->add_option("--node-budget", node_budget, "Maximum number of belief nodes");
  solve->add_option("--out", solve_out, "Write the solution table as JSON");

  // shared config options
  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config JSON (optional)");
    sub->add_option("--set", overrides, "key=value override, dotted keys allowed (repeatable)");
  };

  std::string agent_out;
  std::string dataset_out;
  auto* train = app.add_subcommand("train", "Train an APE-V agent for the first seed and save it");
  add_config(train);
  train->add_option("--out", agent_out, "Agent JSON output path")->required();
  train->add_option("--dataset-out", dataset_out, "Also write the generated dataset as CSV");

  auto* eval = app.add_subcommand("eval", "Run an experiment: data, training or solving, evaluation, run files");
  add_config(eval);

  std::string sweep_key;
  std::string sweep_values;
  auto* sweep = app.add_subcommand("sweep", "Run an experiment once per value of one config key");
  add_config(sweep);
  sweep->add_option("--key", sweep_key, "Config key to vary, e.g. env or params.temperature")->required();
  sweep->add_option("--values", sweep_values, "Values separated by ';', e.g. \"chain:n=3;chain:n=5\"")->required();

  std::string runs_root;
  std::string report_csv;
  auto* report = app.add_subcommand("report", "Summarize run directories as a method x env table");
  report->add_option("--runs", runs_root, "Directory holding run directories")->required();
  report->add_option("--csv", report_csv, "Also write the table as CSV");

  std::vector<std::string> verify_dirs;
  auto* verify = app.add_subcommand("verify", "Recompute summary.json from metrics.csv for run directories");
  verify->add_option("dirs", verify_dirs, "Run directories, or a root containing them")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*solve) {
      const EnvInstance env = make_env(solve_env);
      if (node_budget <= 0) throw ConfigError("--node-budget must be positive");
      const int horizon = solve_horizon > 0 ? solve_horizon : env.horizon;
      SolveOptions opt;
      opt.node_budget = static_cast<std::size_t>(node_budget);
      const BayesOptimalSolution sol = solve_bayes_optimal(env.posterior, horizon, opt);
      std::cout << "j_bayes " << format_double(sol.j_bayes) << "\n"
                << "tail_bound " << format_double(sol.tail_bound) << "\n"
                << "nodes " << sol.nodes.size() << "\n";
      if (!solve_out.empty()) {
        std::ofstream out(solve_out);
        if (!out) throw Error("cannot write " + solve_out);
        out << solution_to_json(sol).dump(2) << "\n";
      }
    } else if (*train) {
      const ExperimentConfig cfg = load_config(config_path, overrides);
      const TrainedAgent trained = train_from_config(cfg, cfg.seeds.front());
      std::ofstream out(agent_out);
      if (!out) throw Error("cannot write " + agent_out);
      out << agent_to_json(trained.agent).dump() << "\n";
      if (!dataset_out.empty()) {
        std::ofstream d(dataset_out);
        if (!d) throw Error("cannot write " + dataset_out);
        write_dataset_csv(trained.dataset, d);
      }
      std::cout << "trained on " << trained.dataset.transitions.size() << " transitions, wrote " << agent_out << "\n";
    } else if (*eval) {
      const ExperimentConfig cfg = load_config(config_path, overrides);
      print_runs(run_experiment(cfg));
    } else if (*sweep) {
      // validate every point before running any of them
      std::vector<ExperimentConfig> points;
      for (const auto& v : split_values(sweep_values)) {
        auto o = overrides;
        o.push_back(sweep_key + "=" + v);
        points.push_back(load_config(config_path, o));
      }
      std::vector<RunMetrics> all;
      for (const auto& cfg : points) {
        auto runs = run_experiment(cfg);
        print_runs(runs);
        all.insert(all.end(), runs.begin(), runs.end());
      }
      write_report(build_report(all), std::cout, nullptr);
    } else if (*report) {
      const auto runs = read_runs(runs_root);
      if (runs.empty()) throw ConfigError("no run directories under " + runs_root);
      if (report_csv.empty()) {
        write_report(build_report(runs), std::cout, nullptr);
      } else {
        std::ofstream csv(report_csv);
        if (!csv) throw Error("cannot write " + report_csv);
        write_report(build_report(runs), std::cout, &csv);
      }
      for (const auto& entry : std::filesystem::directory_iterator(runs_root)) {
        const std::string name = entry.path().filename().string();
        if (name.ends_with("members_curve.csv")) {
          std::ifstream in(entry.path());
          std::cout << "\n" << name << "\n" << in.rdbuf();
        }
      }
    } else if (*verify) {
      std::vector<std::string> dirs;
      for (const auto& d : verify_dirs) {
        if (std::filesystem::exists(std::filesystem::path(d) / "summary.json")) {
          dirs.push_back(d);
        } else {
          for (const auto& r : read_runs(d)) dirs.push_back((std::filesystem::path(d) / r.run_id).string());
        }
      }
      if (dirs.empty()) throw ConfigError("no run directories to verify");
      bool ok = true;
      for (const auto& d : dirs) {
        const auto problems = verify_run(d);
        if (problems.empty()) {
          std::cout << "OK   " << d << "\n";
        } else {
          ok = false;
          for (const auto& p : problems) std::cout << "FAIL " << d << ": " << p << "\n";
        }
      }
      return ok ? kOk : kVerifyFailed;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

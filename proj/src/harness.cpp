#include "epipomdp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "epipomdp/ape_v.hpp"
#include "epipomdp/baselines.hpp"
#include "epipomdp/environments.hpp"
#include "epipomdp/epistemic_pomdp.hpp"
#include "epipomdp/error.hpp"
#include "epipomdp/io.hpp"
#include "epipomdp/simulate.hpp"

namespace epipomdp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::map<std::string, std::string> parse_kv(const std::string& spec, const std::string& body,
                                             const std::set<std::string>& allowed) {
  std::map<std::string, std::string> kv;
  if (body.empty()) return kv;
  for (const auto& item : split(body, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("env '" + spec + "': expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    if (!allowed.count(key)) throw ConfigError("env '" + spec + "': unknown option '" + key + "'");
    kv[key] = item.substr(eq + 1);
  }
  return kv;
}

int to_int(const std::string& spec, const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("env '" + spec + "': " + key + " must be an integer");
  }
}

double to_double(const std::string& spec, const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("env '" + spec + "': " + key + " must be a number");
  }
}

EnvInstance doors_env(const std::string& spec, LockedDoorsSpec d, const std::string& body) {
  const auto kv = parse_kv(spec, body, {"gamma", "horizon"});
  if (kv.count("gamma")) d.gamma = to_double(spec, "gamma", kv.at("gamma"));
  if (kv.count("horizon")) d.horizon = to_int(spec, "horizon", kv.at("horizon"));
  if (!(d.gamma > 0.0 && d.gamma <= 1.0)) throw ConfigError("env '" + spec + "': gamma must be in (0, 1]");
  if (d.horizon <= 0) throw ConfigError("env '" + spec + "': horizon must be positive");
  return {spec, make_locked_doors(d), d.horizon};
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

// ---- typed parameter access -------------------------------------------------

template <class T>
T param(const json& p, const char* key, T fallback) {
  if (!p.contains(key)) return fallback;
  const json& v = p.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(std::string("params.") + key + " must be a boolean");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(std::string("params.") + key + " must be a string");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(std::string("params.") + key + " must be an integer");
  } else {
    if (!v.is_number()) throw ConfigError(std::string("params.") + key + " must be a number");
  }
  return v.get<T>();
}

const std::set<std::string>& allowed_params(const std::string& method) {
  static const std::set<std::string> ape = {"steps", "learning_rate", "belief_alpha", "grid_resolution",
                                            "ensemble_mode", "temperature", "update_rule", "empirical_fraction",
                                            "empirical_refresh", "target_refresh", "quantize_beliefs",
                                            "policy_form", "tau"};
  static const std::map<std::string, std::set<std::string>> table = [] {
    std::map<std::string, std::set<std::string>> t;
    t["ape_v"] = ape;
    t["static_belief"] = ape;
    t["static_belief"].insert("member");
    t["markov_q"] = {"steps", "learning_rate"};
    t["mean_ensemble"] = {"steps", "learning_rate", "ensemble_mode"};
    t["lcb"] = {"steps", "learning_rate", "ensemble_mode", "beta"};
    t["eval_only"] = {"steps", "learning_rate", "ensemble_mode", "temperature"};
    t["bayes_optimal"] = {"node_budget"};
    return t;
  }();
  const auto it = table.find(method);
  if (it == table.end()) throw ConfigError("unknown method '" + method + "'");
  return it->second;
}

EnsembleMode parse_mode(const json& p) {
  const auto s = param<std::string>(p, "ensemble_mode", "partitioned");
  if (s == "partitioned") return EnsembleMode::partitioned;
  if (s == "bootstrap") return EnsembleMode::bootstrap;
  throw ConfigError("params.ensemble_mode must be partitioned or bootstrap");
}

TrainConfig train_config(const json& p, std::uint64_t seed) {
  TrainConfig c;
  c.steps = param<long>(p, "steps", c.steps);
  c.learning_rate = param<double>(p, "learning_rate", c.learning_rate);
  c.belief_alpha = param<double>(p, "belief_alpha", c.belief_alpha);
  c.grid_resolution = param<int>(p, "grid_resolution", c.grid_resolution);
  c.ensemble_mode = parse_mode(p);
  c.temperature = param<double>(p, "temperature", c.temperature);
  const auto rule = param<std::string>(p, "update_rule", "surrogate");
  if (rule == "surrogate") {
    c.update_rule = UpdateRule::surrogate;
  } else if (rule == "exact") {
    c.update_rule = UpdateRule::exact;
  } else {
    throw ConfigError("params.update_rule must be surrogate or exact");
  }
  c.empirical_fraction = param<double>(p, "empirical_fraction", c.empirical_fraction);
  c.empirical_refresh = param<long>(p, "empirical_refresh", c.empirical_refresh);
  c.target_refresh = param<long>(p, "target_refresh", c.target_refresh);
  c.quantize_beliefs = param<bool>(p, "quantize_beliefs", c.quantize_beliefs);
  const auto form = param<std::string>(p, "policy_form", "greedy");
  if (form == "greedy") {
    c.actor.form = PolicyForm::greedy;
  } else if (form == "softmax") {
    c.actor.form = PolicyForm::softmax;
  } else {
    throw ConfigError("params.policy_form must be greedy or softmax");
  }
  c.actor.tau = param<double>(p, "tau", c.actor.tau);
  c.seed = seed;
  if (c.steps <= 0) throw ConfigError("params.steps must be positive");
  if (!(c.learning_rate > 0.0 && c.learning_rate <= 1.0)) throw ConfigError("params.learning_rate must be in (0, 1]");
  if (!(c.belief_alpha > 0.0)) throw ConfigError("params.belief_alpha must be positive");
  if (c.grid_resolution <= 0) throw ConfigError("params.grid_resolution must be positive");
  if (!(c.temperature > 0.0)) throw ConfigError("params.temperature must be positive");
  if (!(c.empirical_fraction >= 0.0 && c.empirical_fraction <= 1.0))
    throw ConfigError("params.empirical_fraction must be in [0, 1]");
  if (c.empirical_refresh <= 0) throw ConfigError("params.empirical_refresh must be positive");
  if (c.target_refresh < 0) throw ConfigError("params.target_refresh must be non-negative");
  if (!(c.actor.tau > 0.0)) throw ConfigError("params.tau must be positive");
  return c;
}

QLearningConfig q_config(const json& p, std::uint64_t seed) {
  QLearningConfig c;
  c.steps = param<long>(p, "steps", c.steps);
  c.learning_rate = param<double>(p, "learning_rate", c.learning_rate);
  if (p.contains("ensemble_mode")) c.ensemble_mode = parse_mode(p);
  c.seed = seed;
  if (c.steps <= 0) throw ConfigError("params.steps must be positive");
  if (!(c.learning_rate > 0.0 && c.learning_rate <= 1.0)) throw ConfigError("params.learning_rate must be in (0, 1]");
  return c;
}

void check_params(const ExperimentConfig& c, int members) {
  const auto& allowed = allowed_params(c.method);
  if (!c.params.is_object()) throw ConfigError("params must be an object");
  for (const auto& [key, value] : c.params.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError("unknown parameter '" + key + "' for method " + c.method);
  }
  if (c.method == "ape_v" || c.method == "static_belief") {
    const auto t = train_config(c.params, 0);
    if (t.update_rule == UpdateRule::exact && c.method == "ape_v" && members <= 0) throw ConfigError("empty posterior");
  } else if (c.method == "bayes_optimal") {
    if (param<long>(c.params, "node_budget", 1) <= 0) throw ConfigError("params.node_budget must be positive");
  } else {
    q_config(c.params, 0);
    if (!(param<double>(c.params, "temperature", 1.0) >= 0.0))
      throw ConfigError("params.temperature must be non-negative");
    if (!(param<double>(c.params, "beta", 1.0) >= 0.0)) throw ConfigError("params.beta must be non-negative");
  }
  if (c.method == "static_belief") {
    const int k = param<int>(c.params, "member", 0);
    if (k < 0 || k >= members) throw ConfigError("params.member out of range");
  }
}

int json_int(const json& j, const char* where) {
  if (!j.is_number_integer()) throw ConfigError(std::string(where) + " must be an integer");
  return j.get<int>();
}

std::optional<int> json_opt_int(const json& obj, const char* key, const char* where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return json_int(obj.at(key), where);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

// ---- building and evaluating a method ---------------------------------------

struct BuiltMethod {
  std::unique_ptr<BayesOptimalSolution> solution;
  std::unique_ptr<AdaptiveAgent> agent;
  std::unique_ptr<Policy> policy;
  bool belief_memory = false;  // memory starts with a belief over hypotheses
};

BuiltMethod build_method(const ExperimentConfig& c, const EnvInstance& env, std::uint64_t seed, int eval_horizon) {
  const MdpPosterior& post = env.posterior;
  const EnvShape shape{post.num_states(), post.num_actions(), post.discount(), static_cast<int>(post.size())};
  BuiltMethod m;
  if (c.method == "bayes_optimal") {
    SolveOptions opt;
    opt.node_budget = static_cast<std::size_t>(param<long>(c.params, "node_budget", 1'000'000));
    m.solution = std::make_unique<BayesOptimalSolution>(solve_bayes_optimal(post, eval_horizon, opt));
    m.policy = std::make_unique<BayesOptimalPolicy>(*m.solution, post);
    m.belief_memory = true;
    return m;
  }

  const int data_horizon = c.dataset_horizon.value_or(env.horizon);
  const MarkovPolicy behavior = MarkovPolicy::uniform(post.num_states(), post.num_actions());
  const OfflineDataset data =
      generate_offline_dataset(post, behavior, c.dataset_episodes, data_horizon, derive_seed(seed, "dataset"));
  const std::uint64_t train_seed = derive_seed(seed, "train");

  if (c.method == "ape_v" || c.method == "static_belief") {
    const TrainConfig tc = train_config(c.params, train_seed);
    m.agent = std::make_unique<AdaptiveAgent>(train_ape_v(data, &post, tc, shape));
    if (c.method == "ape_v") {
      m.policy = std::make_unique<AdaptivePolicy>(*m.agent, &post);
      m.belief_memory = true;
    } else {
      const int k = param<int>(c.params, "member", 0);
      m.policy = std::make_unique<MarkovPolicyAdapter>(static_belief_policy(m.agent->critic, k));
    }
    return m;
  }

  const QLearningConfig qc = q_config(c.params, train_seed);
  if (c.method == "markov_q") {
    m.policy = std::make_unique<MarkovPolicyAdapter>(train_markov_q(data, qc, shape));
    return m;
  }
  EnsembleCritic members = train_member_q(data, qc, shape);
  if (c.method == "lcb") {
    m.policy = std::make_unique<MarkovPolicyAdapter>(lcb_policy(members, param<double>(c.params, "beta", 1.0)));
  } else if (c.method == "mean_ensemble") {
    m.policy = std::make_unique<MarkovPolicyAdapter>(mean_ensemble_policy(members));
  } else {
    m.agent = std::make_unique<AdaptiveAgent>(
        make_eval_only_adaptive(std::move(members), param<double>(c.params, "temperature", 1.0)));
    m.policy = std::make_unique<AdaptivePolicy>(*m.agent, &post);
    m.belief_memory = true;
  }
  return m;
}

struct TraceRow {
  int episode;
  int step;
  int state;
  std::vector<double> belief;
};

constexpr int kTracedEpisodes = 20;

double discounted(const std::vector<Transition>& traj, double gamma) {
  double g = 1.0;
  double total = 0.0;
  for (const auto& t : traj) {
    total += g * t.reward;
    g *= gamma;
  }
  return total;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

json summary_json(const RunMetrics& m) {
  json s;
  s["run_id"] = m.run_id;
  s["env"] = m.env;
  s["method"] = m.method;
  s["seed"] = m.seed;
  s["episodes"] = m.rows.size();
  s["mean_return"] = m.mean_return;
  s["success_rate"] = m.success_rate;
  s["stderr"] = m.std_error;
  s["j_bayes"] = m.j_bayes ? json(*m.j_bayes) : json(nullptr);
  s["config_hash"] = m.config_hash;
  return s;
}

std::string csv_double(double v) { return format_double(v); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace

// ---- environments -------------------------------------------------------------

EnvInstance make_env(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  const std::string body = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (name == "chain") {
    const auto kv = parse_kv(spec, body, {"n", "boundary"});
    ChainSpec c;
    if (kv.count("n")) c.n = to_int(spec, "n", kv.at("n"));
    if (kv.count("boundary")) {
      const auto& b = kv.at("boundary");
      if (b == "reflect") {
        c.boundary = BoundaryRule::reflect;
      } else if (b == "hold") {
        c.boundary = BoundaryRule::hold;
      } else {
        throw ConfigError("env '" + spec + "': boundary must be reflect or hold");
      }
    }
    if (c.n < 1) throw ConfigError("env '" + spec + "': n must be >= 1");
    return {spec, make_chain(c), std::max(50, 4 * c.n)};
  }
  if (name == "locked_doors") return doors_env(spec, LockedDoorsSpec::room(), body);
  if (name == "corridor") return doors_env(spec, LockedDoorsSpec::corridor(), body);
  if (name == "city_nav") {
    const auto kv = parse_kv(spec, body, {"main", "side", "delay", "p_blocked", "gamma"});
    CityNavSpec c;
    if (kv.count("main")) c.main_road_length = to_int(spec, "main", kv.at("main"));
    if (kv.count("side")) c.side_street_length = to_int(spec, "side", kv.at("side"));
    if (kv.count("delay")) c.block_delay = to_int(spec, "delay", kv.at("delay"));
    if (kv.count("p_blocked")) c.p_blocked = to_double(spec, "p_blocked", kv.at("p_blocked"));
    if (kv.count("gamma")) c.gamma = to_double(spec, "gamma", kv.at("gamma"));
    if (c.main_road_length < 1 || c.side_street_length < 1 || c.block_delay < 0)
      throw ConfigError("env '" + spec + "': lengths must be positive");
    if (!(c.p_blocked > 0.0 && c.p_blocked < 1.0)) throw ConfigError("env '" + spec + "': p_blocked must be in (0, 1)");
    if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ConfigError("env '" + spec + "': gamma must be in (0, 1]");
    return {spec, make_city_nav(c), 50};
  }
  if (name == "json") {
    if (body.empty()) throw ConfigError("env 'json:' needs a path");
    return {spec, load_posterior(body), 50};
  }
  throw ConfigError("unknown env '" + spec + "'");
}

// ---- config -------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j, {"env", "method", "params", "seeds", "output_dir", "dataset", "eval", "members_curve"}, "config");
  ExperimentConfig c;
  auto str = [&](const char* key, std::string& dst) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_string()) throw ConfigError(std::string(key) + " must be a string");
    dst = j.at(key).get<std::string>();
  };
  str("env", c.env);
  str("method", c.method);
  str("output_dir", c.output_dir);
  if (j.contains("params")) {
    if (!j.at("params").is_object()) throw ConfigError("params must be an object");
    c.params = j.at("params");
  }
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    c.seeds.clear();
    if (s.is_number_unsigned() || s.is_number_integer()) {
      if (s.is_number_integer() && s.get<long long>() < 0) throw ConfigError("seeds must be non-negative");
      c.seeds.push_back(s.get<std::uint64_t>());
    } else if (s.is_array()) {
      for (const auto& v : s) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
          throw ConfigError("seeds must be non-negative integers");
        c.seeds.push_back(v.get<std::uint64_t>());
      }
    } else {
      throw ConfigError("seeds must be an integer or a list of integers");
    }
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, {"episodes", "behavior", "horizon"}, "dataset");
    if (d.contains("episodes")) c.dataset_episodes = json_int(d.at("episodes"), "dataset.episodes");
    if (d.contains("behavior")) {
      if (!d.at("behavior").is_string()) throw ConfigError("dataset.behavior must be a string");
      c.behavior = d.at("behavior").get<std::string>();
    }
    c.dataset_horizon = json_opt_int(d, "horizon", "dataset.horizon");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"episodes", "horizon", "mode"}, "eval");
    if (e.contains("episodes")) c.eval_episodes = json_int(e.at("episodes"), "eval.episodes");
    c.eval_horizon = json_opt_int(e, "horizon", "eval.horizon");
    if (e.contains("mode")) {
      if (!e.at("mode").is_string()) throw ConfigError("eval.mode must be a string");
      c.eval_mode = e.at("mode").get<std::string>();
    }
  }
  if (j.contains("members_curve") && !j.at("members_curve").is_null()) {
    const json& m = j.at("members_curve");
    check_keys(m, {"members", "beta", "temperature"}, "members_curve");
    c.members_curve = m;
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["env"] = env;
  j["method"] = method;
  j["params"] = params;
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  j["dataset"] = {{"episodes", dataset_episodes},
                  {"behavior", behavior},
                  {"horizon", dataset_horizon ? json(*dataset_horizon) : json(nullptr)}};
  j["eval"] = {{"episodes", eval_episodes},
               {"horizon", eval_horizon ? json(*eval_horizon) : json(nullptr)},
               {"mode", eval_mode}};
  j["members_curve"] = members_curve;
  return j;
}

std::string ExperimentConfig::hash() const {
  // FNV-1a over the canonical dump (json objects keep keys sorted)
  json j = to_json();
  j.erase("output_dir");
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  static const std::set<std::string> string_keys = {"env", "method", "output_dir", "dataset.behavior", "eval.mode"};

  json value;
  if (string_keys.count(key)) {
    value = text;
  } else {
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      if (text.find(',') != std::string::npos) {
        value = json::array();
        for (const auto& piece : split(text, ',')) {
          try {
            value.push_back(json::parse(piece));
          } catch (const json::exception&) {
            value.push_back(piece);
          }
        }
      } else {
        value = text;
      }
    }
  }

  json* node = &config;
  const auto parts = split(key, '.');
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (parts[i].empty()) throw ConfigError("override '" + assignment + "': empty key");
    if (!node->is_object()) throw ConfigError("override '" + assignment + "': " + parts[i] + " is not an object");
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    node = &next;
  }
  if (!node->is_object() || parts.back().empty()) throw ConfigError("override '" + assignment + "': bad key");
  (*node)[parts.back()] = value;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json j = path.empty() ? json::object() : read_json_file(path);
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig c = ExperimentConfig::from_json(j);
  validate_config(c);
  return c;
}

void validate_config(const ExperimentConfig& c) {
  const EnvInstance env = make_env(c.env);
  const auto& methods = known_methods();
  if (std::find(methods.begin(), methods.end(), c.method) == methods.end())
    throw ConfigError("unknown method '" + c.method + "'");
  check_params(c, static_cast<int>(env.posterior.size()));
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (c.dataset_episodes <= 0) throw ConfigError("dataset.episodes must be positive");
  if (c.behavior != "uniform") throw ConfigError("dataset.behavior must be 'uniform'");
  if (c.dataset_horizon && *c.dataset_horizon <= 0) throw ConfigError("dataset.horizon must be positive");
  if (c.eval_episodes <= 0) throw ConfigError("eval.episodes must be positive");
  if (c.eval_horizon && *c.eval_horizon <= 0) throw ConfigError("eval.horizon must be positive");
  if (c.eval_mode != "mc" && c.eval_mode != "exact") throw ConfigError("eval.mode must be mc or exact");
  if (!c.members_curve.is_null()) {
    const json& m = c.members_curve;
    if (!m.contains("members") || !m.at("members").is_number_integer() || m.at("members").get<int>() < 1 ||
        m.at("members").get<int>() > 8)
      throw ConfigError("members_curve.members must be an integer in [1, 8]");
    for (const char* key : {"beta", "temperature"}) {
      if (m.contains(key) && (!m.at(key).is_number() || m.at(key).get<double>() < 0.0))
        throw ConfigError(std::string("members_curve.") + key + " must be a non-negative number");
    }
  }
}

TrainedAgent train_from_config(const ExperimentConfig& config, std::uint64_t seed) {
  validate_config(config);
  if (config.method != "ape_v" && config.method != "static_belief")
    throw ConfigError("train needs method ape_v or static_belief, got " + config.method);
  const EnvInstance env = make_env(config.env);
  const MdpPosterior& post = env.posterior;
  const EnvShape shape{post.num_states(), post.num_actions(), post.discount(), static_cast<int>(post.size())};
  OfflineDataset data =
      generate_offline_dataset(post, MarkovPolicy::uniform(post.num_states(), post.num_actions()),
                               config.dataset_episodes, config.dataset_horizon.value_or(env.horizon),
                               derive_seed(seed, "dataset"));
  AdaptiveAgent agent = train_ape_v(data, &post, train_config(config.params, derive_seed(seed, "train")), shape);
  return {std::move(data), std::move(agent)};
}

// ---- running --------------------------------------------------------------------

void aggregate(RunMetrics& m) {
  const double n = static_cast<double>(m.rows.size());
  if (m.rows.empty()) {
    m.mean_return = m.success_rate = m.std_error = 0.0;
    return;
  }
  double sum = 0.0;
  double wins = 0.0;
  for (const auto& r : m.rows) {
    sum += r.ret;
    wins += r.success ? 1.0 : 0.0;
  }
  m.mean_return = sum / n;
  m.success_rate = wins / n;
  double ss = 0.0;
  for (const auto& r : m.rows) ss += (r.ret - m.mean_return) * (r.ret - m.mean_return);
  m.std_error = m.rows.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
}

std::vector<RunMetrics> run_experiment(const ExperimentConfig& config, bool write) {
  validate_config(config);
  const EnvInstance env = make_env(config.env);
  const MdpPosterior& post = env.posterior;
  const int eval_horizon = config.eval_horizon.value_or(env.horizon);
  const std::string hash = config.hash();

  std::vector<RunMetrics> runs;
  for (const std::uint64_t seed : config.seeds) {
    BuiltMethod built = build_method(config, env, seed, eval_horizon);

    RunMetrics m;
    m.run_id = sanitize(config.env) + "__" + config.method + "__seed" + std::to_string(seed);
    m.env = config.env;
    m.method = config.method;
    m.seed = seed;
    m.config_hash = hash;

    std::vector<TraceRow> traces;
    Rng rng = make_rng(seed, "eval");
    for (int e = 0; e < config.eval_episodes; ++e) {
      const auto k = sample_categorical(post.weights, rng);
      const TabularMdp& mdp = post.hypotheses[k];
      std::vector<Transition> traj;
      std::vector<double> final_belief;
      if (built.belief_memory) {
        // step by step so the beliefs can be logged
        PolicyMemory mem = built.policy->initial_memory();
        std::vector<double> probs(static_cast<std::size_t>(mdp.num_actions));
        int s = static_cast<int>(sample_categorical(mdp.initial_dist, rng));
        const auto nb = static_cast<long>(post.size());
        for (int step = 0;; ++step) {
          if (e < kTracedEpisodes) traces.push_back({e, step, s, std::vector<double>(mem.begin(), mem.begin() + nb)});
          if (step == eval_horizon || mdp.is_terminal(s)) break;
          built.policy->action_probs(s, mem, probs);
          const int a = static_cast<int>(sample_categorical(probs, rng));
          const int next = sample_next_state(mdp, s, a, rng);
          const Transition t{s, a, mdp.r(s, a), next, mdp.is_terminal(next), std::nullopt};
          traj.push_back(t);
          mem = built.policy->observe(mem, t);
          s = next;
        }
        final_belief.assign(mem.begin(), mem.begin() + nb);
      } else {
        traj = sample_trajectory(mdp, *built.policy, eval_horizon, rng);
      }
      EpisodeRow row;
      row.episode = e;
      row.ret = discounted(traj, post.discount());
      row.success = !traj.empty() && traj.back().done;
      row.steps = static_cast<int>(traj.size());
      row.final_belief = std::move(final_belief);
      m.rows.push_back(row);
    }
    aggregate(m);
    if (built.solution) {
      m.j_bayes = built.solution->j_bayes;
    } else if (config.eval_mode == "exact") {
      m.j_bayes = evaluate_j_bayes_exact(post, *built.policy, eval_horizon).value;
    }

    if (write) {
      const fs::path dir = fs::path(config.output_dir) / m.run_id;
      fs::create_directories(dir);
      json cfg = config.to_json();
      cfg["seeds"] = json::array({seed});
      write_text(dir / "config.json", cfg.dump(2) + "\n");
      std::ostringstream metrics;
      metrics << kMetricsHeader << "\n";
      for (const auto& r : m.rows) {
        metrics << m.run_id << ',' << m.env << ',' << m.method << ',' << m.seed << ',' << r.episode << ','
                << csv_double(r.ret) << ',' << (r.success ? 1 : 0) << ',' << r.steps << "\n";
      }
      write_text(dir / "metrics.csv", metrics.str());
      write_text(dir / "summary.json", summary_json(m).dump(2) + "\n");
      std::ostringstream fb;
      fb << "episode";
      for (std::size_t k = 0; k < post.size(); ++k) fb << ",b_" << k;
      fb << "\n";
      for (const auto& r : m.rows) {
        if (r.final_belief.empty()) continue;
        fb << r.episode;
        for (double b : r.final_belief) fb << ',' << csv_double(b);
        fb << "\n";
      }
      write_text(dir / "beliefs.csv", fb.str());
      std::ostringstream tr;
      tr << "episode,step,state";
      for (std::size_t k = 0; k < post.size(); ++k) tr << ",b_" << k;
      tr << "\n";
      for (const auto& row : traces) {
        tr << row.episode << ',' << row.step << ',' << row.state;
        for (double b : row.belief) tr << ',' << csv_double(b);
        tr << "\n";
      }
      write_text(dir / "traces.csv", tr.str());
    }
    runs.push_back(std::move(m));
  }

  if (write && !config.members_curve.is_null()) {
    const json& mc = config.members_curve;
    const auto curve = members_curve(post, mc.at("members").get<int>(), eval_horizon, mc.value("beta", 1.0),
                                     mc.value("temperature", 1.0));
    fs::create_directories(config.output_dir);
    std::ofstream out(fs::path(config.output_dir) / (sanitize(config.env) + "__members_curve.csv"));
    write_members_csv(curve, out);
  }
  return runs;
}

// ---- reports --------------------------------------------------------------------

std::vector<ReportRow> build_report(const std::vector<RunMetrics>& runs) {
  std::map<std::pair<std::string, std::string>, std::vector<const RunMetrics*>> groups;
  for (const auto& r : runs) groups[{r.env, r.method}].push_back(&r);

  auto mean_se = [](const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double se = xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
    return std::pair{mean, se};
  };

  std::vector<ReportRow> rows;
  for (const auto& [key, members] : groups) {
    ReportRow row;
    row.env = key.first;
    row.method = key.second;
    row.seeds = static_cast<int>(members.size());
    std::vector<double> rets, wins, jb;
    for (const auto* m : members) {
      rets.push_back(m->mean_return);
      wins.push_back(m->success_rate);
      if (m->j_bayes) jb.push_back(*m->j_bayes);
    }
    std::tie(row.mean_return, row.stderr_return) = mean_se(rets);
    std::tie(row.success_rate, row.stderr_success) = mean_se(wins);
    if (jb.size() == members.size()) row.j_bayes = mean_se(jb).first;
    rows.push_back(row);
  }
  return rows;
}

void write_report(const std::vector<ReportRow>& rows, std::ostream& text, std::ostream* csv) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %-14s %5s %22s %18s %12s\n", "env", "method", "seeds", "return", "success",
                "j_bayes");
  text << buf;
  for (const auto& r : rows) {
    char ret[64], suc[64], jb[32];
    std::snprintf(ret, sizeof ret, "%.4f +- %.4f", r.mean_return, r.stderr_return);
    std::snprintf(suc, sizeof suc, "%.3f +- %.3f", r.success_rate, r.stderr_success);
    if (r.j_bayes) {
      std::snprintf(jb, sizeof jb, "%.4f", *r.j_bayes);
    } else {
      std::snprintf(jb, sizeof jb, "-");
    }
    std::snprintf(buf, sizeof buf, "%-28s %-14s %5d %22s %18s %12s\n", r.env.c_str(), r.method.c_str(), r.seeds, ret,
                  suc, jb);
    text << buf;
  }
  if (csv) {
    *csv << "env,method,seeds,mean_return,stderr_return,success_rate,stderr_success,j_bayes\n";
    for (const auto& r : rows) {
      *csv << r.env << ',' << r.method << ',' << r.seeds << ',' << csv_double(r.mean_return) << ','
           << csv_double(r.stderr_return) << ',' << csv_double(r.success_rate) << ','
           << csv_double(r.stderr_success) << ',' << (r.j_bayes ? csv_double(*r.j_bayes) : "") << "\n";
    }
  }
}

RunMetrics read_run(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const json s = read_json_file(dir / "summary.json");
  RunMetrics m;
  try {
    m.run_id = s.at("run_id").get<std::string>();
    m.env = s.at("env").get<std::string>();
    m.method = s.at("method").get<std::string>();
    m.seed = s.at("seed").get<std::uint64_t>();
    m.mean_return = s.at("mean_return").get<double>();
    m.success_rate = s.at("success_rate").get<double>();
    m.std_error = s.at("stderr").get<double>();
    if (!s.at("j_bayes").is_null()) m.j_bayes = s.at("j_bayes").get<double>();
    m.config_hash = s.at("config_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError((dir / "summary.json").string() + ": " + e.what());
  }

  std::ifstream in(dir / "metrics.csv");
  if (!in) throw ConfigError("cannot read " + (dir / "metrics.csv").string());
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw ConfigError((dir / "metrics.csv").string() + ": unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) throw ConfigError((dir / "metrics.csv").string() + ": bad row '" + line + "'");
    try {
      EpisodeRow r;
      r.episode = std::stoi(f[4]);
      r.ret = std::stod(f[5]);
      r.success = f[6] == "1";
      r.steps = std::stoi(f[7]);
      m.rows.push_back(r);
    } catch (const std::exception&) {
      throw ConfigError((dir / "metrics.csv").string() + ": bad row '" + line + "'");
    }
  }
  return m;
}

std::vector<RunMetrics> read_runs(const std::string& root) {
  if (!fs::is_directory(root)) throw ConfigError("not a directory: " + root);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "metrics.csv") && fs::exists(entry.path() / "summary.json"))
      dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<RunMetrics> runs;
  for (const auto& d : dirs) runs.push_back(read_run(d.string()));
  return runs;
}

std::vector<std::string> verify_run(const std::string& run_dir) {
  std::vector<std::string> problems;
  const RunMetrics stored = read_run(run_dir);
  RunMetrics recomputed = stored;
  aggregate(recomputed);
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };
  if (stored.rows.empty()) problems.push_back("metrics.csv has no rows");
  if (!close(stored.mean_return, recomputed.mean_return))
    problems.push_back("mean_return " + format_double(stored.mean_return) + " != " + format_double(recomputed.mean_return));
  if (!close(stored.success_rate, recomputed.success_rate))
    problems.push_back("success_rate " + format_double(stored.success_rate) + " != " +
                       format_double(recomputed.success_rate));
  if (!close(stored.std_error, recomputed.std_error))
    problems.push_back("stderr " + format_double(stored.std_error) + " != " + format_double(recomputed.std_error));
  for (std::size_t i = 0; i < stored.rows.size(); ++i) {
    if (stored.rows[i].episode != static_cast<int>(i)) {
      problems.push_back("episode numbering broken at row " + std::to_string(i));
      break;
    }
  }
  const fs::path cfg = fs::path(run_dir) / "config.json";
  if (fs::exists(cfg)) {
    try {
      if (ExperimentConfig::from_json(read_json_file(cfg)).hash() != stored.config_hash)
        problems.push_back("config_hash does not match config.json");
    } catch (const ConfigError& e) {
      problems.push_back(std::string("config.json: ") + e.what());
    }
  } else {
    problems.push_back("config.json missing");
  }
  return problems;
}

// ---- members curve ------------------------------------------------------------

std::vector<MembersCurvePoint> members_curve(const MdpPosterior& posterior, int members, int horizon, double beta,
                                             double temperature) {
  if (members < 1) throw ConfigError("members must be positive");
  const int h = static_cast<int>(posterior.size());
  const int S = posterior.num_states();
  const int A = posterior.num_actions();
  std::vector<std::vector<double>> q;
  for (const auto& mdp : posterior.hypotheses) q.push_back(q_value_iteration(mdp, horizon));

  const std::vector<std::string> names = {"mean_ensemble", "lcb", "eval_only"};
  std::vector<std::vector<int>> wins(names.size(), std::vector<int>(members + 1, 0));
  std::vector<int> cases(members + 1, 0);

  std::vector<int> assign(members, 0);
  Rng rng(0);
  while (true) {
    EnsembleCritic critic(members, S, A, posterior.discount(), std::nullopt);
    for (int k = 0; k < members; ++k) {
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) critic.q(k, s, 0, a) = q[assign[k]][static_cast<std::size_t>(s) * A + a];
      }
    }
    const MarkovPolicyAdapter mean_pi(mean_ensemble_policy(critic));
    const MarkovPolicyAdapter lcb_pi(lcb_policy(critic, beta));
    const AdaptiveAgent agent = make_eval_only_adaptive(critic, temperature);
    const AdaptivePolicy eval_pi(agent);
    const Policy* policies[] = {&mean_pi, &lcb_pi, &eval_pi};

    for (int truth = 0; truth < h; ++truth) {
      const int correct = static_cast<int>(std::count(assign.begin(), assign.end(), truth));
      ++cases[correct];
      for (std::size_t p = 0; p < names.size(); ++p) {
        const auto traj = sample_trajectory(posterior.hypotheses[truth], *policies[p], horizon, rng);
        if (!traj.empty() && traj.back().done) ++wins[p][correct];
      }
    }

    int pos = 0;
    while (pos < members && ++assign[pos] == h) assign[pos++] = 0;
    if (pos == members) break;
  }

  std::vector<MembersCurvePoint> curve;
  for (std::size_t p = 0; p < names.size(); ++p) {
    for (int c = 0; c <= members; ++c) {
      if (cases[c] == 0) continue;
      curve.push_back({names[p], c, cases[c], static_cast<double>(wins[p][c]) / cases[c]});
    }
  }
  return curve;
}

void write_members_csv(const std::vector<MembersCurvePoint>& curve, std::ostream& out) {
  out << "method,correct_members,cases,success_rate\n";
  for (const auto& p : curve)
    out << p.method << ',' << p.correct << ',' << p.cases << ',' << format_double(p.success_rate) << "\n";
}

}  // namespace epipomdp

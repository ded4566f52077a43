#include "epipomdp/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "epipomdp/error.hpp"

namespace epipomdp {

using nlohmann::json;

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad field '") + key + "': " + e.what());
  }
}

void expect_schema(const json& j, const char* schema) {
  const auto got = field<std::string>(j, "schema");
  if (got != schema) throw ConfigError("unsupported schema '" + got + "', expected '" + schema + "'");
}

}  // namespace

json posterior_to_json(const MdpPosterior& posterior) {
  json hyps = json::array();
  for (const TabularMdp& m : posterior.hypotheses) {
    std::vector<int> terminal(m.terminal.begin(), m.terminal.end());
    hyps.push_back({{"transition", m.transition},
                    {"reward", m.reward},
                    {"initial", m.initial_dist},
                    {"terminal", terminal}});
  }
  return {{"schema", kMdpSchema},
          {"num_states", posterior.num_states()},
          {"num_actions", posterior.num_actions()},
          {"discount", posterior.discount()},
          {"weights", posterior.weights},
          {"hypotheses", hyps}};
}

MdpPosterior posterior_from_json(const json& j) {
  expect_schema(j, kMdpSchema);
  const int num_states = field<int>(j, "num_states");
  const int num_actions = field<int>(j, "num_actions");
  const double discount = field<double>(j, "discount");
  if (num_states < 1 || num_actions < 1) throw ConfigError("num_states and num_actions must be positive");
  MdpPosterior posterior;
  posterior.weights = field<std::vector<double>>(j, "weights");
  const auto hyps = field<json>(j, "hypotheses");
  if (!hyps.is_array() || hyps.empty()) throw ConfigError("'hypotheses' must be a non-empty array");
  for (const json& h : hyps) {
    TabularMdp m = TabularMdp::zeros(num_states, num_actions, discount);
    m.transition = field<std::vector<double>>(h, "transition");
    m.reward = field<std::vector<double>>(h, "reward");
    m.initial_dist = field<std::vector<double>>(h, "initial");
    std::vector<int> terminal;
    if (h.contains("terminal")) {
      for (const json& t : h.at("terminal")) terminal.push_back(t.is_boolean() ? t.get<bool>() : t.get<int>());
    }
    if (!terminal.empty() && terminal.size() != static_cast<std::size_t>(num_states)) {
      throw ConfigError("'terminal' needs one flag per state");
    }
    for (std::size_t s = 0; s < terminal.size(); ++s) m.terminal[s] = terminal[s] != 0;
    posterior.hypotheses.push_back(std::move(m));
  }
  const auto report = validate_posterior(posterior);
  if (!report.empty()) {
    const Violation& v = report.front();
    throw ConfigError("invalid posterior: " + v.rule + " at " + v.where + ": " + v.detail);
  }
  return posterior;
}

MdpPosterior load_posterior(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return posterior_from_json(j);
}

void save_posterior(const MdpPosterior& posterior, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << posterior_to_json(posterior).dump(1) << "\n";
}

void write_dataset_csv(const OfflineDataset& dataset, std::ostream& out) {
  out << kDatasetHeader << "\n";
  for (std::size_t e = 0; e < dataset.num_episodes(); ++e) {
    const auto episode = dataset.episode(e);
    for (std::size_t i = 0; i < episode.size(); ++i) {
      const Transition& t = episode[i];
      out << e << "," << i << "," << t.state << "," << t.action << "," << format_double(t.reward) << ","
          << t.next_state << "," << (t.done ? 1 : 0) << ",";
      if (t.source_hypothesis) out << *t.source_hypothesis;
      out << "\n";
    }
  }
}

OfflineDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kDatasetHeader) throw ConfigError("dataset CSV: unexpected header");
  OfflineDataset dataset;
  long current = -1;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 8) throw ConfigError("dataset CSV row " + std::to_string(row) + ": expected 8 fields");
    try {
      const long episode = std::stol(cells[0]);
      if (episode != current) {
        if (episode < current) throw ConfigError("dataset CSV: episodes must be contiguous and ascending");
        dataset.episode_offsets.push_back(dataset.transitions.size());
        current = episode;
      }
      Transition t;
      t.state = std::stoi(cells[2]);
      t.action = std::stoi(cells[3]);
      t.reward = std::stod(cells[4]);
      t.next_state = std::stoi(cells[5]);
      t.done = std::stoi(cells[6]) != 0;
      if (!cells[7].empty()) t.source_hypothesis = std::stoi(cells[7]);
      dataset.transitions.push_back(t);
    } catch (const std::logic_error&) {
      throw ConfigError("dataset CSV row " + std::to_string(row) + ": malformed number");
    }
  }
  dataset.metadata.episodes = static_cast<int>(dataset.episode_offsets.size());
  return dataset;
}

void write_belief_trace_csv(const std::vector<Belief>& trace, std::ostream& out) {
  out << "step";
  const std::size_t n = trace.empty() ? 0 : trace.front().size();
  for (std::size_t k = 0; k < n; ++k) out << ",b_" << k;
  out << "\n";
  for (std::size_t t = 0; t < trace.size(); ++t) {
    out << t;
    for (std::size_t k = 0; k < n; ++k) out << "," << format_double(trace[t][k]);
    out << "\n";
  }
}

json agent_to_json(const AdaptiveAgent& agent) {
  const EnsembleCritic& c = agent.critic;
  json grid = nullptr;
  if (c.grid()) grid = {{"dimension", c.grid()->dimension()}, {"resolution", c.grid()->resolution()}};
  return {{"schema", kAgentSchema},
          {"members", c.members()},
          {"num_states", c.num_states()},
          {"num_actions", c.num_actions()},
          {"gamma", c.gamma()},
          {"grid", grid},
          {"member_weights", c.member_weights()},
          {"q", c.values()},
          {"update_rule", agent.update_rule == UpdateRule::exact ? "exact" : "surrogate"},
          {"temperature", agent.temperature},
          {"policy_form", agent.actor.form == PolicyForm::greedy ? "greedy" : "softmax"},
          {"tau", agent.actor.tau}};
}

AdaptiveAgent agent_from_json(const json& j) {
  expect_schema(j, kAgentSchema);
  std::optional<BeliefGrid> grid;
  const json g = field<json>(j, "grid");
  if (!g.is_null()) grid.emplace(field<int>(g, "dimension"), field<int>(g, "resolution"));
  EnsembleCritic critic(field<int>(j, "members"), field<int>(j, "num_states"), field<int>(j, "num_actions"),
                        field<double>(j, "gamma"), std::move(grid), field<std::vector<double>>(j, "member_weights"));
  auto q = field<std::vector<double>>(j, "q");
  if (q.size() != critic.values().size()) throw ConfigError("agent: q tensor has the wrong size");
  critic.values() = std::move(q);
  const auto rule = field<std::string>(j, "update_rule");
  const auto form = field<std::string>(j, "policy_form");
  if (rule != "exact" && rule != "surrogate") throw ConfigError("agent: unknown update_rule '" + rule + "'");
  if (form != "greedy" && form != "softmax") throw ConfigError("agent: unknown policy_form '" + form + "'");
  return AdaptiveAgent{std::move(critic), rule == "exact" ? UpdateRule::exact : UpdateRule::surrogate,
                       field<double>(j, "temperature"),
                       ActorConfig{form == "greedy" ? PolicyForm::greedy : PolicyForm::softmax, field<double>(j, "tau")}};
}

json solution_to_json(const BayesOptimalSolution& solution) {
  json nodes = json::array();
  for (const SolutionNode& n : solution.nodes) {
    nodes.push_back({{"state", n.node.state},
                     {"belief", n.node.belief.vec()},
                     {"depth", n.node.depth},
                     {"value", n.value},
                     {"action", n.action}});
  }
  json tail = std::isfinite(solution.tail_bound) ? json(solution.tail_bound) : json("inf");
  return {{"schema", kSolutionSchema},
          {"horizon", solution.horizon},
          {"j_bayes", solution.j_bayes},
          {"tail_bound", tail},
          {"nodes", nodes}};
}

}  // namespace epipomdp

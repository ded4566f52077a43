#include "epipomdp/epistemic_pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "epipomdp/error.hpp"
#include "epipomdp/simulate.hpp"

namespace epipomdp {

namespace {

constexpr double kMergeScale = 1e12;
constexpr double kTieTolerance = 1e-12;

void check_budget(std::size_t count, std::size_t budget) {
  if (count > budget) {
    throw NodeBudgetExceeded("reachable node count exceeds budget of " + std::to_string(budget));
  }
}

// Successor lists for one hypothesis: (next_state, probability) pairs with
// positive mass, indexed by (s, a).
struct Successors {
  int num_actions = 0;
  std::vector<std::vector<std::pair<int, double>>> lists;

  explicit Successors(const TabularMdp& m) : num_actions(m.num_actions) {
    lists.resize(static_cast<std::size_t>(m.num_states) * m.num_actions);
    for (int s = 0; s < m.num_states; ++s) {
      for (int a = 0; a < m.num_actions; ++a) {
        for (int next = 0; next < m.num_states; ++next) {
          const double q = m.p(s, a, next);
          if (q > 0.0) lists[static_cast<std::size_t>(s) * m.num_actions + a].emplace_back(next, q);
        }
      }
    }
  }

  const std::vector<std::pair<int, double>>& of(int s, int a) const {
    return lists[static_cast<std::size_t>(s) * num_actions + a];
  }
};

struct Edge {
  double prob;
  double reward;
  std::size_t child;  // index within the next level
};

struct WorkNode {
  int state;
  std::vector<double> belief;
  std::vector<std::vector<Edge>> edges;  // per action
  double value = 0.0;
  int action = 0;
};

struct Level {
  std::vector<WorkNode> nodes;
  std::unordered_map<NodeKey, std::size_t, NodeKeyHash> index;

  std::size_t insert(int depth, int state, std::vector<double> belief, bool& created) {
    NodeKey key = make_node_key(depth, state, belief);
    auto [it, inserted] = index.try_emplace(std::move(key), nodes.size());
    created = inserted;
    if (inserted) nodes.push_back(WorkNode{state, std::move(belief), {}, 0.0, 0});
    return it->second;
  }
};

// Probability mass sitting on a (state, policy memory) node of a forward pass.
struct MassNode {
  int hidden;
  PolicyMemory memory;
  double mass;
};

}  // namespace

// ---------------------------------------------------------------------------

std::size_t NodeKeyHash::operator()(const NodeKey& key) const noexcept {
  std::size_t h = std::hash<int>{}(key.depth) * 0x9e3779b97f4a7c15ULL ^ std::hash<int>{}(key.state);
  for (std::int64_t c : key.coords) {
    h ^= std::hash<std::int64_t>{}(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

NodeKey make_node_key(int depth, int state, std::span<const double> coords) {
  NodeKey key{depth, state, {}};
  key.coords.reserve(coords.size());
  for (double c : coords) key.coords.push_back(std::llround(c * kMergeScale));
  return key;
}

EpistemicPomdp::EpistemicPomdp(MdpPosterior posterior) : posterior_(std::move(posterior)) {
  require_valid(posterior_);
}

EpistemicPomdp build_epistemic_pomdp(const MdpPosterior& posterior) { return EpistemicPomdp(posterior); }

double EpistemicPomdp::transition(int hidden, int a, int hidden_next) const {
  if (hypothesis(hidden) != hypothesis(hidden_next)) return 0.0;
  const auto& m = posterior_.hypotheses[static_cast<std::size_t>(hypothesis(hidden))];
  return m.p(observation(hidden), a, observation(hidden_next));
}

double EpistemicPomdp::reward(int hidden, int a) const {
  return posterior_.hypotheses[static_cast<std::size_t>(hypothesis(hidden))].r(observation(hidden), a);
}

double EpistemicPomdp::initial(int hidden) const {
  return posterior_.weights[static_cast<std::size_t>(hypothesis(hidden))] *
         posterior_.initial_dist()[static_cast<std::size_t>(observation(hidden))];
}

bool EpistemicPomdp::is_terminal(int hidden) const {
  return posterior_.hypotheses[static_cast<std::size_t>(hypothesis(hidden))].is_terminal(observation(hidden));
}

// ---------------------------------------------------------------------------

void BayesOptimalSolution::index_nodes() {
  index_.clear();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i].node;
    index_.emplace(make_node_key(n.depth, n.state, n.belief.probs()), i);
  }
}

const SolutionNode* BayesOptimalSolution::find(int state, std::span<const double> belief, int depth) const {
  const auto it = index_.find(make_node_key(depth, state, belief));
  return it == index_.end() ? nullptr : &nodes[it->second];
}

BayesOptimalSolution solve_bayes_optimal(const MdpPosterior& posterior, int horizon, SolveOptions options) {
  require_valid(posterior);
  if (horizon < 1) throw std::invalid_argument("solve_bayes_optimal: horizon must be positive");
  const int A = posterior.num_actions();
  const std::size_t n = posterior.size();
  const double gamma = posterior.discount();

  std::vector<Successors> successors;
  for (const auto& m : posterior.hypotheses) successors.emplace_back(m);

  std::vector<Level> levels(static_cast<std::size_t>(horizon) + 1);
  std::size_t total_nodes = 0;
  bool created = false;
  for (int s = 0; s < posterior.num_states(); ++s) {
    if (posterior.initial_dist()[static_cast<std::size_t>(s)] > 0.0) {
      levels[0].insert(0, s, posterior.weights, created);
      ++total_nodes;
    }
  }

  // Forward: enumerate reachable nodes under every action.
  for (int d = 0; d < horizon; ++d) {
    Level& level = levels[static_cast<std::size_t>(d)];
    Level& next = levels[static_cast<std::size_t>(d) + 1];
    for (std::size_t i = 0; i < level.nodes.size(); ++i) {
      const int s = level.nodes[i].state;
      const std::vector<double> belief = level.nodes[i].belief;
      std::vector<std::vector<Edge>> edges(static_cast<std::size_t>(A));
      for (int a = 0; a < A; ++a) {
        for (std::size_t k = 0; k < n; ++k) {
          if (belief[k] <= 0.0) continue;
          const TabularMdp& m = posterior.hypotheses[k];
          const double r = m.r(s, a);
          for (const auto& [s_next, q] : successors[k].of(s, a)) {
            const Transition t{s, a, r, s_next, m.is_terminal(s_next), std::nullopt};
            Belief updated = exact_belief_update(Belief(belief), posterior, t);
            const std::size_t child = next.insert(d + 1, s_next, updated.vec(), created);
            if (created) check_budget(++total_nodes, options.node_budget);
            edges[static_cast<std::size_t>(a)].push_back({belief[k] * q, r, child});
          }
        }
      }
      level.nodes[i].edges = std::move(edges);
    }
  }

  // Backward: V_H = 0, V_d = max_a sum_edges prob * (r + gamma V_{d+1}).
  for (int d = horizon - 1; d >= 0; --d) {
    Level& level = levels[static_cast<std::size_t>(d)];
    const Level& next = levels[static_cast<std::size_t>(d) + 1];
    for (WorkNode& node : level.nodes) {
      double best = -std::numeric_limits<double>::infinity();
      int best_action = 0;
      for (int a = 0; a < A; ++a) {
        double q = 0.0;
        for (const Edge& e : node.edges[static_cast<std::size_t>(a)]) {
          q += e.prob * (e.reward + gamma * next.nodes[e.child].value);
        }
        if (q > best + kTieTolerance) {
          best = q;
          best_action = a;
        }
      }
      node.value = best;
      node.action = best_action;
    }
  }

  BayesOptimalSolution solution;
  solution.horizon = horizon;
  for (const auto& node : levels[0].nodes) {
    solution.j_bayes += posterior.initial_dist()[static_cast<std::size_t>(node.state)] * node.value;
  }

  if (gamma < 1.0) {
    double r_max = 0.0;
    for (const auto& m : posterior.hypotheses) {
      for (double r : m.reward) r_max = std::max(r_max, std::abs(r));
    }
    solution.tail_bound = std::pow(gamma, horizon) * r_max / (1.0 - gamma);
  } else {
    // Follow the greedy actions forward and check every live hypothesis has
    // terminated by depth H.
    std::vector<std::vector<bool>> on_path(levels.size());
    for (std::size_t d = 0; d < levels.size(); ++d) on_path[d].assign(levels[d].nodes.size(), d == 0);
    for (std::size_t d = 0; d + 1 < levels.size(); ++d) {
      for (std::size_t i = 0; i < levels[d].nodes.size(); ++i) {
        if (!on_path[d][i]) continue;
        const WorkNode& node = levels[d].nodes[i];
        for (const Edge& e : node.edges[static_cast<std::size_t>(node.action)]) on_path[d + 1][e.child] = true;
      }
    }
    const auto& last = levels.back();
    for (std::size_t i = 0; i < last.nodes.size(); ++i) {
      if (!on_path.back()[i]) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (last.nodes[i].belief[k] > 0.0 && !posterior.hypotheses[k].is_terminal(last.nodes[i].state)) {
          solution.tail_bound = std::numeric_limits<double>::infinity();
        }
      }
    }
  }

  solution.nodes.reserve(total_nodes);
  for (std::size_t d = 0; d < levels.size(); ++d) {
    for (auto& node : levels[d].nodes) {
      solution.nodes.push_back(
          SolutionNode{BeliefNode{node.state, Belief(std::move(node.belief)), static_cast<int>(d)}, node.value, node.action});
    }
  }
  solution.index_nodes();
  return solution;
}

// ---------------------------------------------------------------------------

PolicyMemory BayesOptimalPolicy::initial_memory() const {
  PolicyMemory memory = posterior_->weights;
  memory.push_back(0.0);
  return memory;
}

void BayesOptimalPolicy::action_probs(int state, const PolicyMemory& memory, std::span<double> out) const {
  const std::span<const double> belief(memory.data(), memory.size() - 1);
  const int depth = static_cast<int>(memory.back());
  const SolutionNode* node = solution_->find(state, belief, depth);
  one_hot(out, node ? node->action : 0);
}

PolicyMemory BayesOptimalPolicy::observe(const PolicyMemory& memory, const Transition& t) const {
  Belief b(std::vector<double>(memory.begin(), memory.end() - 1));
  PolicyMemory next = exact_belief_update(b, *posterior_, t).vec();
  next.push_back(memory.back() + 1.0);
  return next;
}

// ---------------------------------------------------------------------------

namespace {

// One forward pass for a single observable MDP (used per hypothesis).
double forward_return(const TabularMdp& m, const Successors& succ, const Policy& policy, int horizon,
                      std::size_t budget, std::size_t& seen) {
  std::vector<MassNode> level;
  for (int s = 0; s < m.num_states; ++s) {
    const double rho = m.initial_dist[static_cast<std::size_t>(s)];
    if (rho > 0.0 && !m.is_terminal(s)) level.push_back({s, policy.initial_memory(), rho});
  }
  std::vector<double> probs(static_cast<std::size_t>(m.num_actions));
  double total = 0.0;
  double discount = 1.0;
  for (int t = 0; t < horizon && !level.empty(); ++t) {
    std::vector<MassNode> next;
    std::unordered_map<NodeKey, std::size_t, NodeKeyHash> index;
    for (const MassNode& node : level) {
      policy.action_probs(node.hidden, node.memory, probs);
      for (int a = 0; a < m.num_actions; ++a) {
        const double pa = probs[static_cast<std::size_t>(a)];
        if (pa <= 0.0) continue;
        const double r = m.r(node.hidden, a);
        total += discount * node.mass * pa * r;
        for (const auto& [s_next, q] : succ.of(node.hidden, a)) {
          if (m.is_terminal(s_next)) continue;
          const Transition tr{node.hidden, a, r, s_next, false, std::nullopt};
          PolicyMemory child = policy.observe(node.memory, tr);
          NodeKey key = make_node_key(0, s_next, child);
          auto [it, inserted] = index.try_emplace(std::move(key), next.size());
          if (inserted) {
            next.push_back({s_next, std::move(child), 0.0});
            check_budget(++seen, budget);
          }
          next[it->second].mass += node.mass * pa * q;
        }
      }
    }
    level = std::move(next);
    discount *= m.discount;
  }
  return total;
}

}  // namespace

ReturnEstimate evaluate_j_bayes_exact(const MdpPosterior& posterior, const Policy& policy, int horizon,
                                      std::size_t node_budget) {
  require_valid(posterior);
  double value = 0.0;
  std::size_t seen = 0;
  for (std::size_t k = 0; k < posterior.size(); ++k) {
    if (posterior.weights[k] == 0.0) continue;
    const Successors succ(posterior.hypotheses[k]);
    value += posterior.weights[k] * forward_return(posterior.hypotheses[k], succ, policy, horizon, node_budget, seen);
  }
  return {value, 0.0};
}

ReturnEstimate evaluate_j_bayes_mc(const MdpPosterior& posterior, const Policy& policy, int horizon,
                                   const MonteCarlo& mc) {
  require_valid(posterior);
  if (mc.episodes < 2) throw std::invalid_argument("evaluate_j_bayes_mc: need at least 2 episodes");
  Rng rng(mc.seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int e = 0; e < mc.episodes; ++e) {
    const auto k = sample_categorical(posterior.weights, rng);
    const TabularMdp& m = posterior.hypotheses[k];
    const auto trajectory = sample_trajectory(m, policy, horizon, rng);
    double ret = 0.0;
    double discount = 1.0;
    for (const auto& t : trajectory) {
      ret += discount * t.reward;
      discount *= m.discount;
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  const double count = mc.episodes;
  const double mean = sum / count;
  const double var = std::max(0.0, (sum_sq - count * mean * mean) / (count - 1.0));
  return {mean, std::sqrt(var / count)};
}

double evaluate_in_product_pomdp(const EpistemicPomdp& pomdp, const Policy& policy, int horizon,
                                 std::size_t node_budget) {
  const int H = pomdp.num_hidden_states();
  const int A = pomdp.num_actions();
  std::vector<MassNode> level;
  for (int h = 0; h < H; ++h) {
    const double rho = pomdp.initial(h);
    if (rho > 0.0 && !pomdp.is_terminal(h)) level.push_back({h, policy.initial_memory(), rho});
  }
  std::vector<double> probs(static_cast<std::size_t>(A));
  double total = 0.0;
  double discount = 1.0;
  std::size_t seen = level.size();
  for (int t = 0; t < horizon && !level.empty(); ++t) {
    std::vector<MassNode> next;
    std::unordered_map<NodeKey, std::size_t, NodeKeyHash> index;
    for (const MassNode& node : level) {
      const int obs = pomdp.observation(node.hidden);
      policy.action_probs(obs, node.memory, probs);
      for (int a = 0; a < A; ++a) {
        const double pa = probs[static_cast<std::size_t>(a)];
        if (pa <= 0.0) continue;
        const double r = pomdp.reward(node.hidden, a);
        total += discount * node.mass * pa * r;
        for (int h_next = 0; h_next < H; ++h_next) {
          const double q = pomdp.transition(node.hidden, a, h_next);
          if (q <= 0.0 || pomdp.is_terminal(h_next)) continue;
          const Transition tr{obs, a, r, pomdp.observation(h_next), false, std::nullopt};
          PolicyMemory child = policy.observe(node.memory, tr);
          NodeKey key = make_node_key(0, h_next, child);
          auto [it, inserted] = index.try_emplace(std::move(key), next.size());
          if (inserted) {
            next.push_back({h_next, std::move(child), 0.0});
            check_budget(++seen, node_budget);
          }
          next[it->second].mass += node.mass * pa * q;
        }
      }
    }
    level = std::move(next);
    discount *= pomdp.discount();
  }
  return total;
}

// ---------------------------------------------------------------------------

double markov_j_bayes(const MdpPosterior& posterior, const MarkovPolicy& policy, int horizon) {
  const int S = posterior.num_states();
  const int A = posterior.num_actions();
  double value = 0.0;
  for (std::size_t k = 0; k < posterior.size(); ++k) {
    if (posterior.weights[k] == 0.0) continue;
    const TabularMdp& m = posterior.hypotheses[k];
    const Successors succ(m);
    std::vector<double> dist = m.initial_dist;
    std::vector<double> next(static_cast<std::size_t>(S));
    double ret = 0.0;
    double discount = 1.0;
    for (int t = 0; t < horizon; ++t) {
      std::fill(next.begin(), next.end(), 0.0);
      bool live = false;
      for (int s = 0; s < S; ++s) {
        const double mass = dist[static_cast<std::size_t>(s)];
        if (mass == 0.0 || m.is_terminal(s)) continue;
        live = true;
        for (int a = 0; a < A; ++a) {
          const double pa = policy.prob(s, a);
          if (pa == 0.0) continue;
          ret += discount * mass * pa * m.r(s, a);
          for (const auto& [s_next, q] : succ.of(s, a)) next[static_cast<std::size_t>(s_next)] += mass * pa * q;
        }
      }
      if (!live) break;
      dist.swap(next);
      discount *= m.discount;
    }
    value += posterior.weights[k] * ret;
  }
  return value;
}

namespace {

// Compositions of `units` into `parts`, as probability rows.
std::vector<std::vector<double>> simplex_points(int parts, int units) {
  std::vector<std::vector<double>> points;
  std::vector<int> current(static_cast<std::size_t>(parts), 0);
  auto emit = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == parts - 1) {
      current[static_cast<std::size_t>(pos)] = remaining;
      std::vector<double> row(current.size());
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<double>(current[i]) / units;
      points.push_back(std::move(row));
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      current[static_cast<std::size_t>(pos)] = v;
      self(self, pos + 1, remaining - v);
    }
  };
  emit(emit, 0, units);
  return points;
}

}  // namespace

MarkovSearchResult best_markov_policy_search(const MdpPosterior& posterior, int horizon,
                                             const MarkovSearch& search) {
  require_valid(posterior);
  const int S = posterior.num_states();
  const int A = posterior.num_actions();

  std::vector<int> decision_states;
  for (int s = 0; s < S; ++s) {
    bool all_terminal = true;
    for (const auto& m : posterior.hypotheses) all_terminal = all_terminal && m.is_terminal(s);
    if (!all_terminal) decision_states.push_back(s);
  }

  MarkovSearchResult result;
  MarkovPolicy policy = MarkovPolicy::uniform(S, A);
  auto consider = [&] {
    const double j = markov_j_bayes(posterior, policy, horizon);
    result.values.push_back(j);
    if (result.values.size() == 1 || j > result.j_bayes) {
      result.j_bayes = j;
      result.best = policy;
    }
  };
  auto set_row = [&](int s, const std::vector<double>& row) {
    std::copy(row.begin(), row.end(), policy.action_probs.begin() + static_cast<std::ptrdiff_t>(s) * A);
  };

  if (search.kind == MarkovSearch::Kind::grid) {
    const int units = static_cast<int>(std::lround(1.0 / search.grid_step));
    if (units < 1) throw std::invalid_argument("best_markov_policy_search: grid_step must be in (0, 1]");
    const auto points = simplex_points(A, units);
    double product = 1.0;
    for (std::size_t i = 0; i < decision_states.size(); ++i) product *= static_cast<double>(points.size());
    if (product <= static_cast<double>(search.max_grid_policies)) {
      std::vector<std::size_t> digits(decision_states.size(), 0);
      for (;;) {
        for (std::size_t i = 0; i < digits.size(); ++i) set_row(decision_states[i], points[digits[i]]);
        consider();
        std::size_t pos = 0;
        while (pos < digits.size() && ++digits[pos] == points.size()) digits[pos++] = 0;
        if (pos == digits.size()) break;
      }
    } else {
      for (const auto& row : points) {
        for (int s : decision_states) set_row(s, row);
        consider();
      }
    }
  } else {
    Rng rng(search.seed);
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> row(static_cast<std::size_t>(A));
    for (std::size_t i = 0; i < search.samples; ++i) {
      for (int s : decision_states) {
        double total = 0.0;
        for (double& v : row) total += (v = expo(rng));
        for (double& v : row) v /= total;
        set_row(s, row);
      }
      consider();
    }
  }
  return result;
}

}  // namespace epipomdp

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epipomdp/rng.hpp"

namespace epipomdp {

// Finite MDP with dense tensors. Terminal states absorb with zero reward.
// Treated as immutable once built; constructors in environments.hpp and the
// JSON loader are the usual sources.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> transition;  // (s, a, s') row-major
  std::vector<double> reward;      // (s, a)
  std::vector<double> initial_dist;
  double discount = 1.0;
  std::vector<bool> terminal;      // per-state flag

  static TabularMdp zeros(int num_states, int num_actions, double discount);

  double p(int s, int a, int next) const {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + next];
  }
  double& p(int s, int a, int next) {
    return transition[(static_cast<std::size_t>(s) * num_actions + a) * num_states + next];
  }
  double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * num_actions + a]; }
  double& r(int s, int a) { return reward[static_cast<std::size_t>(s) * num_actions + a]; }

  std::span<const double> row(int s, int a) const {
    return {transition.data() + (static_cast<std::size_t>(s) * num_actions + a) * num_states,
            static_cast<std::size_t>(num_states)};
  }

  bool is_terminal(int s) const { return terminal[static_cast<std::size_t>(s)]; }
  std::vector<int> terminals() const;

  // Marks s terminal and rewrites its rows into a zero-reward self-loop.
  void make_terminal(int s);

  friend bool operator==(const TabularMdp&, const TabularMdp&) = default;
};

// Weighted finite set of hypotheses over a shared state/action space.
struct MdpPosterior {
  std::vector<TabularMdp> hypotheses;
  std::vector<double> weights;

  std::size_t size() const { return hypotheses.size(); }
  int num_states() const { return hypotheses.front().num_states; }
  int num_actions() const { return hypotheses.front().num_actions; }
  double discount() const { return hypotheses.front().discount; }
  const std::vector<double>& initial_dist() const { return hypotheses.front().initial_dist; }
};

struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
  bool done = false;
  std::optional<int> source_hypothesis;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct DatasetMetadata {
  std::string behavior = "uniform";
  int episodes = 0;
  std::uint64_t seed = 0;
};

// Transitions are stored episode by episode; episode_offsets[i] is the index
// of the first transition of episode i.
struct OfflineDataset {
  std::vector<Transition> transitions;
  std::vector<std::size_t> episode_offsets;
  DatasetMetadata metadata;

  std::size_t num_episodes() const { return episode_offsets.size(); }
  std::span<const Transition> episode(std::size_t i) const;
};

// Stationary stochastic policy pi(a|s).
struct MarkovPolicy {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> action_probs;  // (s, a)

  static MarkovPolicy uniform(int num_states, int num_actions);
  static MarkovPolicy deterministic(std::span<const int> actions, int num_actions);

  double prob(int s, int a) const {
    return action_probs[static_cast<std::size_t>(s) * num_actions + a];
  }
  std::span<const double> row(int s) const {
    return {action_probs.data() + static_cast<std::size_t>(s) * num_actions,
            static_cast<std::size_t>(num_actions)};
  }
};

struct Violation {
  std::string rule;  // "row-sum", "negative-prob", "terminal", "divergent-return", ...
  std::string where;
  std::string detail;
};

using ValidationReport = std::vector<Violation>;

ValidationReport validate_mdp(const TabularMdp& mdp);
ValidationReport validate_posterior(const MdpPosterior& posterior);

// Throws std::invalid_argument carrying the first violation, if any.
void require_valid(const TabularMdp& mdp);
void require_valid(const MdpPosterior& posterior);

// Solves V = r_pi + gamma P_pi V. Terminal states are pinned to zero.
// Throws SingularSystem when gamma == 1 and some state cannot reach a terminal
// under the policy.
std::vector<double> evaluate_markov_policy_exact(const TabularMdp& mdp,
                                                 const MarkovPolicy& policy);

// J_M(pi) = sum_s rho(s) V(s).
double markov_policy_return(const TabularMdp& mdp, const MarkovPolicy& policy);

// Optimal Q after `horizon` Bellman backups from zero, flat (s, a); terminal
// rows stay 0.
std::vector<double> q_value_iteration(const TabularMdp& mdp, int horizon);

}  // namespace epipomdp

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_map>
#include <vector>

#include "epipomdp/belief.hpp"
#include "epipomdp/mdp.hpp"
#include "epipomdp/policy.hpp"
#include "epipomdp/rng.hpp"

namespace epipomdp {

// Product POMDP whose hidden state is (s, hypothesis). Views are computed
// from the stored posterior on every query.
class EpistemicPomdp {
 public:
  explicit EpistemicPomdp(MdpPosterior posterior);

  const MdpPosterior& posterior() const { return posterior_; }
  int num_states() const { return posterior_.num_states(); }
  int num_hypotheses() const { return static_cast<int>(posterior_.size()); }
  int num_hidden_states() const { return num_states() * num_hypotheses(); }
  int num_actions() const { return posterior_.num_actions(); }
  double discount() const { return posterior_.discount(); }

  int hidden_index(int s, int k) const { return k * num_states() + s; }
  int observation(int hidden) const { return hidden % num_states(); }
  int hypothesis(int hidden) const { return hidden / num_states(); }

  double transition(int hidden, int a, int hidden_next) const;
  double reward(int hidden, int a) const;
  double initial(int hidden) const;
  bool is_terminal(int hidden) const;

 private:
  MdpPosterior posterior_;
};

EpistemicPomdp build_epistemic_pomdp(const MdpPosterior& posterior);

struct BeliefNode {
  int state = 0;
  Belief belief;
  int depth = 0;
};

struct SolutionNode {
  BeliefNode node;
  double value = 0.0;
  int action = 0;
};

// Key under which numerically identical beliefs merge: coordinates rounded to
// 12 decimals.
struct NodeKey {
  int depth = 0;
  int state = 0;
  std::vector<std::int64_t> coords;
  friend bool operator==(const NodeKey&, const NodeKey&) = default;
};

struct NodeKeyHash {
  std::size_t operator()(const NodeKey& key) const noexcept;
};

NodeKey make_node_key(int depth, int state, std::span<const double> coords);

struct SolveOptions {
  std::size_t node_budget = 1'000'000;
};

class BayesOptimalSolution {
 public:
  std::vector<SolutionNode> nodes;
  int horizon = 0;
  // gamma^H R_max / (1 - gamma); for gamma = 1 it is 0 when the greedy policy
  // terminates under every live hypothesis within the horizon, +inf otherwise.
  double tail_bound = 0.0;
  // sum_s rho(s) V_0(s, weights).
  double j_bayes = 0.0;

  void index_nodes();
  const SolutionNode* find(int state, std::span<const double> belief, int depth) const;

 private:
  std::unordered_map<NodeKey, std::size_t, NodeKeyHash> index_;
};

// Backward induction over every (state, belief) node reachable from the
// initial nodes within `horizon` steps, beliefs from exact Bayes updates
// starting at the posterior weights. Ties go to the lowest action index.
// Throws NodeBudgetExceeded past options.node_budget nodes.
BayesOptimalSolution solve_bayes_optimal(const MdpPosterior& posterior, int horizon,
                                         SolveOptions options = {});

// Follows a solution: memory is (belief..., depth). Off-table nodes (beyond the
// solved horizon) fall back to action 0.
class BayesOptimalPolicy final : public Policy {
 public:
  BayesOptimalPolicy(const BayesOptimalSolution& solution, const MdpPosterior& posterior)
      : solution_(&solution), posterior_(&posterior) {}

  PolicyMemory initial_memory() const override;
  void action_probs(int state, const PolicyMemory& memory, std::span<double> out) const override;
  PolicyMemory observe(const PolicyMemory& memory, const Transition& t) const override;

 private:
  const BayesOptimalSolution* solution_;
  const MdpPosterior* posterior_;
};

struct ReturnEstimate {
  double value = 0.0;
  double std_error = 0.0;  // 0 for exact evaluation
};

struct MonteCarlo {
  int episodes = 1000;
  std::uint64_t seed = 0;
};

// J_Bayes(pi) = sum_k w_k J_{M_k}(pi) truncated at `horizon`, by forward
// dynamic programming over reachable (state, memory) nodes per hypothesis.
ReturnEstimate evaluate_j_bayes_exact(const MdpPosterior& posterior, const Policy& policy,
                                      int horizon, std::size_t node_budget = 1'000'000);

// Same quantity by sampling M ~ weights and rolling out.
ReturnEstimate evaluate_j_bayes_mc(const MdpPosterior& posterior, const Policy& policy,
                                   int horizon, const MonteCarlo& mc);

// Expected discounted return in the product POMDP itself: forward dynamic
// programming over (hidden state, policy memory) with the policy seeing only
// observations.
double evaluate_in_product_pomdp(const EpistemicPomdp& pomdp, const Policy& policy, int horizon,
                                 std::size_t node_budget = 1'000'000);

// Truncated J_Bayes of a Markov policy via state-distribution propagation.
double markov_j_bayes(const MdpPosterior& posterior, const MarkovPolicy& policy, int horizon);

struct MarkovSearch {
  enum class Kind { grid, random };
  Kind kind = Kind::grid;
  double grid_step = 0.1;
  // Per-state product grids larger than this fall back to the homogeneous
  // family (same action distribution in every state).
  std::size_t max_grid_policies = 100'000;
  std::size_t samples = 1000;  // random search: Dirichlet(1) per state
  std::uint64_t seed = 0;
};

struct MarkovSearchResult {
  MarkovPolicy best;
  double j_bayes = -std::numeric_limits<double>::infinity();
  std::vector<double> values;  // J_Bayes of every searched policy, in search order
};

MarkovSearchResult best_markov_policy_search(const MdpPosterior& posterior, int horizon,
                                             const MarkovSearch& search);

}  // namespace epipomdp

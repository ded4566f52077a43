#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "epipomdp/belief.hpp"
#include "epipomdp/mdp.hpp"
#include "epipomdp/policy.hpp"
#include "epipomdp/rng.hpp"

namespace epipomdp {

// n tabular value functions Q_k(s, cell(b), a). Without a grid the belief
// input is collapsed to a single cell (belief-agnostic members).
//
// member_weights are the posterior weights of the members; the actor scores
// actions with sum_k w_k b_k Q_k, which for the usual equally weighted
// ensemble is the plain b-weighted average.
class EnsembleCritic {
 public:
  EnsembleCritic(int members, int num_states, int num_actions, double gamma,
                 std::optional<BeliefGrid> grid, std::vector<double> member_weights = {});

  int members() const { return members_; }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  double gamma() const { return gamma_; }
  const std::optional<BeliefGrid>& grid() const { return grid_; }
  const std::vector<double>& member_weights() const { return member_weights_; }
  std::size_t num_cells() const { return grid_ ? grid_->size() : 1; }

  std::size_t cell_of(std::span<const double> belief) const { return grid_ ? grid_->snap(belief) : 0; }

  double q(int k, int s, std::size_t c, int a) const { return values_[offset(k, s, c) + static_cast<std::size_t>(a)]; }
  double& q(int k, int s, std::size_t c, int a) { return values_[offset(k, s, c) + static_cast<std::size_t>(a)]; }
  std::span<const double> row(int k, int s, std::size_t c) const {
    return {values_.data() + offset(k, s, c), static_cast<std::size_t>(num_actions_)};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  // Training-time visit counts per (k, s, c, a); diagnostics only, not serialized.
  std::vector<std::uint32_t>& visits() { return visits_; }
  const std::vector<std::uint32_t>& visits() const { return visits_; }

  std::size_t offset(int k, int s, std::size_t c) const {
    return ((static_cast<std::size_t>(k) * num_states_ + static_cast<std::size_t>(s)) * num_cells() + c) *
           static_cast<std::size_t>(num_actions_);
  }

 private:
  int members_;
  int num_states_;
  int num_actions_;
  double gamma_;
  std::optional<BeliefGrid> grid_;
  std::vector<double> member_weights_;
  std::vector<double> values_;
  std::vector<std::uint32_t> visits_;
};

enum class PolicyForm { greedy, softmax };
enum class UpdateRule { exact, surrogate };
enum class EnsembleMode { partitioned, bootstrap };

struct ActorConfig {
  PolicyForm form = PolicyForm::greedy;
  double tau = 1.0;  // softmax temperature
};

// Scores sum_k w_k b_k Q_k(s, cell(b), a) for every action.
void mixed_action_values(const EnsembleCritic& critic, int s, std::span<const double> belief,
                         std::span<double> out);

// argmax of the mixed values, lowest index on ties.
int actor_action(const EnsembleCritic& critic, int s, std::span<const double> belief);

// pi(.|s, b): one-hot for the greedy form, softmax(mixed / tau) otherwise.
void actor_distribution(const EnsembleCritic& critic, int s, std::span<const double> belief,
                        const ActorConfig& actor, std::span<double> out);

// Surrogate filtering step: member k's squared TD error on t, with the old
// belief b on both sides, acts as its negative log-likelihood.
//   delta_k = Q_k(s, b, a) - (r + gamma (1 - done) E_{a' ~ pi(.|s', b)} Q_k(s', b, a'))
//   b'_k proportional to b_k exp(-temperature delta_k^2)
Belief surrogate_belief_update(const Belief& b, const EnsembleCritic& critic, const ActorConfig& actor,
                               const Transition& t, double temperature);


// One TD step on member k at cell(b):
//   Q_k(s, c, a) += lr [r + gamma (1 - done) E_{a' ~ pi(.|s', b')} Q_k(s', c', a') - Q_k(s, c, a)]
void critic_update(EnsembleCritic& critic, int k, const Transition& t, const Belief& b, const Belief& b_next,
                   double lr, const ActorConfig& actor = {});

// Same step with the bootstrap term read from a separate (lagged) critic.
void critic_update(EnsembleCritic& critic, const EnsembleCritic& target_critic, int k, const Transition& t,
                   const Belief& b, const Belief& b_next, double lr, const ActorConfig& actor = {});


struct AdaptiveAgent {
  EnsembleCritic critic;
  UpdateRule update_rule = UpdateRule::surrogate;
  double temperature = 1.0;
  ActorConfig actor;
};

// Applies the agent's belief update rule. `posterior` is required for the
// exact rule (oracle mode) and ignored otherwise.
Belief agent_belief_update(const AdaptiveAgent& agent, const MdpPosterior* posterior, const Belief& b,
                           const Transition& t);

struct EnvShape {
  int num_states = 0;
  int num_actions = 0;
  double discount = 1.0;
  int members = 1;
};

struct TrainConfig {
  long steps = 200'000;
  double learning_rate = 0.5;
  double belief_alpha = 0.1;  // symmetric Dirichlet p(b)
  int grid_resolution = 10;
  EnsembleMode ensemble_mode = EnsembleMode::partitioned;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  UpdateRule update_rule = UpdateRule::surrogate;
  ActorConfig actor;
  // Share of p(b) draws taken from beliefs the filter actually produces when
  // replaying dataset episodes from the uniform belief (0 = pure Dirichlet).
  double empirical_fraction = 0.0;
  long empirical_refresh = 10'000;
  // Snap sampled training beliefs to their grid point.
  bool quantize_beliefs = true;
  // When positive, b' and the bootstrap term come from a copy of the critic
  // refreshed every target_refresh steps.
  long target_refresh = 0;
};

// Algorithm: repeat `steps` times: draw b ~ p(b); for each member k draw a
// transition from its data (partitioned: source_hypothesis == k; bootstrap:
// its own resample), compute b' with the configured rule and apply
// critic_update. Deterministic per seed.
// Throws EmptyDataset, or MissingHypothesisData when a partition is empty.
AdaptiveAgent train_ape_v(const OfflineDataset& dataset, const MdpPosterior* posterior, const TrainConfig& config,
                          const EnvShape& shape);

// The agent as a policy callback. Memory is the relative belief, starting
// uniform. A frozen belief turns it into a static-belief policy.
class AdaptivePolicy final : public Policy {
 public:
  AdaptivePolicy(const AdaptiveAgent& agent, const MdpPosterior* posterior = nullptr,
                 std::optional<Belief> frozen = std::nullopt);

  PolicyMemory initial_memory() const override;
  void action_probs(int state, const PolicyMemory& memory, std::span<double> out) const override;
  PolicyMemory observe(const PolicyMemory& memory, const Transition& t) const override;

 private:
  const AdaptiveAgent* agent_;
  const MdpPosterior* posterior_;
  std::optional<Belief> frozen_;
};

struct TestTimeResult {
  std::vector<Transition> trajectory;
  std::vector<Belief> beliefs;  // b_0 .. b_T
  double undiscounted_return = 0.0;
  double discounted_return = 0.0;
  bool success = false;  // reached a terminal state within the horizon
};

// Test-time adaptation: b_0 uniform, act with the actor, filter with the
// agent's rule, stop at a terminal state or the horizon.
TestTimeResult run_test_time(const AdaptiveAgent& agent, const TabularMdp& true_mdp, const MdpPosterior* posterior,
                             int horizon, Rng& rng, std::optional<Belief> frozen = std::nullopt);

// Largest |Q_k(s,c,a) - (r + gamma E Q_k(s', c', a'))| over the cells visited
// at least `min_visits` times and the member's training transitions, with b
// pinned to the grid point of c.
double max_bellman_residual(const AdaptiveAgent& agent, const OfflineDataset& dataset, const MdpPosterior* posterior,
                            std::uint32_t min_visits = 1);

}  // namespace epipomdp

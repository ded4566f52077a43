#pragma once

#include <span>

#include "epipomdp/ape_v.hpp"
#include "epipomdp/mdp.hpp"

namespace epipomdp {

enum class BaselineKind { markov_q, lcb, mean_ensemble, static_belief, eval_only_adaptive };

struct BaselineSpec {
  BaselineKind kind = BaselineKind::mean_ensemble;
  double beta = 1.0;         // lcb
  int member = 0;            // static_belief
  double temperature = 1.0;  // eval_only_adaptive
};

// Tabular Q-learning with max targets:
//   Q(s, a) += lr [r + gamma (1 - done) max_a' Q(s', a') - Q(s, a)]
// over transitions drawn uniformly from the data. Uses steps, learning_rate,
// ensemble_mode and seed of the config.
struct QLearningConfig {
  long steps = 200'000;
  double learning_rate = 0.5;
  EnsembleMode ensemble_mode = EnsembleMode::partitioned;
  std::uint64_t seed = 0;
};

// One pooled table over all transitions (source tags ignored); returns the
// greedy policy, lowest-index ties. Throws EmptyDataset.
MarkovPolicy train_markov_q(const OfflineDataset& dataset, const QLearningConfig& config, const EnvShape& shape);

// Per-member Markov Q tables stored as a grid-less ensemble critic (the belief
// dimension is a single cell). Member k learns from source_hypothesis == k in
// partitioned mode, from its own bootstrap resample otherwise.
// Throws EmptyDataset, MissingHypothesisData.
EnsembleCritic train_member_q(const OfflineDataset& dataset, const QLearningConfig& config, const EnvShape& shape);

// argmax_a mean_k Q_k(s, a) - beta * std_k Q_k(s, a), population std.
int lcb_action(const EnsembleCritic& members, int s, double beta);
int mean_ensemble_action(const EnsembleCritic& members, int s);

// Deterministic Markov policies of the two rules above, evaluated at cell 0.
MarkovPolicy lcb_policy(const EnsembleCritic& members, double beta);
MarkovPolicy mean_ensemble_policy(const EnsembleCritic& members);

// Greedy policy of member k at the cell of the vertex belief e_k.
MarkovPolicy static_belief_policy(const EnsembleCritic& critic, int k);

// Wraps adaptation-agnostic members into an agent whose actor weights them by
// b and whose belief follows the surrogate rule.
AdaptiveAgent make_eval_only_adaptive(EnsembleCritic members, double temperature);

}  // namespace epipomdp

#include "epipomdp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "epipomdp/error.hpp"

namespace epipomdp {

namespace {

void check_config(const QLearningConfig& config) {
  if (config.steps < 0) throw std::invalid_argument("q-learning: steps must be non-negative");
  if (!(config.learning_rate >= 0.0 && config.learning_rate <= 1.0)) {
    throw std::invalid_argument("q-learning: learning_rate must lie in [0, 1]");
  }
}

void q_step(EnsembleCritic& q, int k, const Transition& t, double lr) {
  double target = t.reward;
  if (!t.done) {
    const auto row = q.row(k, t.next_state, 0);
    target += q.gamma() * *std::max_element(row.begin(), row.end());
  }
  double& v = q.q(k, t.state, 0, t.action);
  v += lr * (target - v);
  ++q.visits()[q.offset(k, t.state, 0) + static_cast<std::size_t>(t.action)];
}

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (int a = 1; a < static_cast<int>(values.size()); ++a) {
    if (values[a] > values[best] + 1e-12) best = a;
  }
  return best;
}

template <typename Rule>
MarkovPolicy markov_from(const EnsembleCritic& critic, Rule rule) {
  std::vector<int> actions(static_cast<std::size_t>(critic.num_states()));
  for (int s = 0; s < critic.num_states(); ++s) actions[s] = rule(s);
  return MarkovPolicy::deterministic(actions, critic.num_actions());
}

}  // namespace

MarkovPolicy train_markov_q(const OfflineDataset& dataset, const QLearningConfig& config, const EnvShape& shape) {
  if (dataset.transitions.empty()) throw EmptyDataset("train_markov_q: dataset has no transitions");
  check_config(config);
  EnsembleCritic q(1, shape.num_states, shape.num_actions, shape.discount, std::nullopt);
  Rng rng = make_rng(config.seed, "markov-q/data");
  for (long step = 0; step < config.steps; ++step) {
    q_step(q, 0, dataset.transitions[sample_index(dataset.transitions.size(), rng)], config.learning_rate);
  }
  return markov_from(q, [&](int s) { return argmax_lowest(q.row(0, s, 0)); });
}

EnsembleCritic train_member_q(const OfflineDataset& dataset, const QLearningConfig& config, const EnvShape& shape) {
  if (dataset.transitions.empty()) throw EmptyDataset("train_member_q: dataset has no transitions");
  check_config(config);
  const int n = shape.members;
  Rng rng = make_rng(config.seed, "member-q/data");
  std::vector<std::vector<std::size_t>> data(static_cast<std::size_t>(n));
  const std::size_t total = dataset.transitions.size();
  if (config.ensemble_mode == EnsembleMode::partitioned) {
    for (std::size_t i = 0; i < total; ++i) {
      const auto& src = dataset.transitions[i].source_hypothesis;
      if (!src || *src < 0 || *src >= n) {
        throw MissingHypothesisData("partitioned members need a valid source_hypothesis on every transition");
      }
      data[static_cast<std::size_t>(*src)].push_back(i);
    }
    for (int k = 0; k < n; ++k) {
      if (data[k].empty()) throw MissingHypothesisData("no transitions for member " + std::to_string(k));
    }
  } else {
    for (auto& d : data) {
      d.resize(total);
      for (auto& idx : d) idx = sample_index(total, rng);
    }
  }
  EnsembleCritic q(n, shape.num_states, shape.num_actions, shape.discount, std::nullopt);
  for (long step = 0; step < config.steps; ++step) {
    for (int k = 0; k < n; ++k) {
      const auto& idx = data[static_cast<std::size_t>(k)];
      q_step(q, k, dataset.transitions[idx[sample_index(idx.size(), rng)]], config.learning_rate);
    }
  }
  return q;
}

int lcb_action(const EnsembleCritic& members, int s, double beta) {
  if (beta < 0.0) throw std::invalid_argument("lcb_action: beta must be non-negative");
  const int n = members.members();
  std::vector<double> score(static_cast<std::size_t>(members.num_actions()));
  for (int a = 0; a < members.num_actions(); ++a) {
    double mean = 0.0;
    for (int k = 0; k < n; ++k) mean += members.q(k, s, 0, a);
    mean /= n;
    double var = 0.0;
    for (int k = 0; k < n; ++k) var += (members.q(k, s, 0, a) - mean) * (members.q(k, s, 0, a) - mean);
    score[a] = mean - beta * std::sqrt(var / n);
  }
  return argmax_lowest(score);
}

int mean_ensemble_action(const EnsembleCritic& members, int s) { return lcb_action(members, s, 0.0); }

MarkovPolicy lcb_policy(const EnsembleCritic& members, double beta) {
  return markov_from(members, [&](int s) { return lcb_action(members, s, beta); });
}

MarkovPolicy mean_ensemble_policy(const EnsembleCritic& members) {
  return markov_from(members, [&](int s) { return mean_ensemble_action(members, s); });
}

MarkovPolicy static_belief_policy(const EnsembleCritic& critic, int k) {
  if (k < 0 || k >= critic.members()) throw std::invalid_argument("static_belief_policy: member out of range");
  const Belief vertex = Belief::vertex(static_cast<std::size_t>(critic.members()), static_cast<std::size_t>(k));
  const std::size_t c = critic.cell_of(vertex.probs());
  return markov_from(critic, [&](int s) { return argmax_lowest(critic.row(k, s, c)); });
}

AdaptiveAgent make_eval_only_adaptive(EnsembleCritic members, double temperature) {
  if (members.grid()) throw std::invalid_argument("make_eval_only_adaptive: members must not be belief-conditioned");
  if (temperature < 0.0) throw std::invalid_argument("make_eval_only_adaptive: temperature must be non-negative");
  return AdaptiveAgent{std::move(members), UpdateRule::surrogate, temperature, ActorConfig{}};
}

}  // namespace epipomdp

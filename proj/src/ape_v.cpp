#include "epipomdp/ape_v.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>

#include "epipomdp/error.hpp"
#include "epipomdp/simulate.hpp"

namespace epipomdp {

EnsembleCritic::EnsembleCritic(int members, int num_states, int num_actions, double gamma,
                               std::optional<BeliefGrid> grid, std::vector<double> member_weights)
    : members_(members),
      num_states_(num_states),
      num_actions_(num_actions),
      gamma_(gamma),
      grid_(std::move(grid)),
      member_weights_(std::move(member_weights)) {
  if (members < 1 || num_states < 1 || num_actions < 1) {
    throw std::invalid_argument("EnsembleCritic: members, states and actions must be positive");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("EnsembleCritic: gamma must lie in [0, 1]");
  if (grid_ && grid_->dimension() != members) {
    throw std::invalid_argument("EnsembleCritic: grid dimension must equal the number of members");
  }
  if (member_weights_.empty()) member_weights_.assign(static_cast<std::size_t>(members), 1.0 / members);
  if (member_weights_.size() != static_cast<std::size_t>(members) || !is_valid_belief(member_weights_)) {
    throw std::invalid_argument("EnsembleCritic: member weights must be a distribution over members");
  }
  const std::size_t total = static_cast<std::size_t>(members) * num_states * num_cells() * num_actions;
  values_.assign(total, 0.0);
  visits_.assign(total, 0);
}

void mixed_action_values(const EnsembleCritic& critic, int s, std::span<const double> belief,
                         std::span<double> out) {
  const std::size_t c = critic.cell_of(belief);
  std::fill(out.begin(), out.end(), 0.0);
  double mass = 0.0;
  for (int k = 0; k < critic.members(); ++k) mass += critic.member_weights()[k] * belief[k];
  if (mass <= 0.0) throw std::invalid_argument("mixed_action_values: belief has no mass on weighted members");
  for (int k = 0; k < critic.members(); ++k) {
    const double w = critic.member_weights()[k] * belief[k] / mass;
    if (w == 0.0) continue;
    const auto row = critic.row(k, s, c);
    for (int a = 0; a < critic.num_actions(); ++a) out[a] += w * row[a];
  }
}

namespace {

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (int a = 1; a < static_cast<int>(values.size()); ++a) {
    if (values[a] > values[best] + 1e-12) best = a;
  }
  return best;
}

// E_{a' ~ pi(.|s', b)} Q_k(s', cell, a') for every member at once.
void expected_next_values(const EnsembleCritic& critic, int s_next, std::span<const double> belief,
                          const ActorConfig& actor, std::span<double> out) {
  std::vector<double> pi(static_cast<std::size_t>(critic.num_actions()));
  actor_distribution(critic, s_next, belief, actor, pi);
  const std::size_t c = critic.cell_of(belief);
  for (int k = 0; k < critic.members(); ++k) {
    const auto row = critic.row(k, s_next, c);
    double v = 0.0;
    for (int a = 0; a < critic.num_actions(); ++a) v += pi[a] * row[a];
    out[k] = v;
  }
}

}  // namespace

int actor_action(const EnsembleCritic& critic, int s, std::span<const double> belief) {
  std::vector<double> mixed(static_cast<std::size_t>(critic.num_actions()));
  mixed_action_values(critic, s, belief, mixed);
  return argmax_lowest(mixed);
}

void actor_distribution(const EnsembleCritic& critic, int s, std::span<const double> belief,
                        const ActorConfig& actor, std::span<double> out) {
  std::vector<double> mixed(static_cast<std::size_t>(critic.num_actions()));
  mixed_action_values(critic, s, belief, mixed);
  if (actor.form == PolicyForm::greedy) {
    one_hot(out, argmax_lowest(mixed));
    return;
  }
  if (!(actor.tau > 0.0)) throw std::invalid_argument("actor_distribution: softmax tau must be positive");
  const double top = *std::max_element(mixed.begin(), mixed.end());
  double total = 0.0;
  for (std::size_t a = 0; a < mixed.size(); ++a) {
    out[a] = std::exp((mixed[a] - top) / actor.tau);
    total += out[a];
  }
  for (double& p : out) p /= total;
}

Belief surrogate_belief_update(const Belief& b, const EnsembleCritic& critic, const ActorConfig& actor,
                               const Transition& t, double temperature) {
  if (b.size() != static_cast<std::size_t>(critic.members())) {
    throw std::invalid_argument("surrogate_belief_update: belief size differs from ensemble size");
  }
  const std::size_t c = critic.cell_of(b.probs());
  std::vector<double> next(b.size(), 0.0);
  if (!t.done) expected_next_values(critic, t.next_state, b.probs(), actor, next);
  std::vector<double> td(b.size());
  for (int k = 0; k < critic.members(); ++k) {
    const double target = t.reward + (t.done ? 0.0 : critic.gamma() * next[k]);
    td[k] = critic.q(k, t.state, c, t.action) - target;
  }
  return reweight_by_td_errors(b, td, temperature);
}

void critic_update(EnsembleCritic& critic, int k, const Transition& t, const Belief& b, const Belief& b_next,
                   double lr, const ActorConfig& actor) {
  critic_update(critic, critic, k, t, b, b_next, lr, actor);
}

void critic_update(EnsembleCritic& critic, const EnsembleCritic& target_critic, int k, const Transition& t,
                   const Belief& b, const Belief& b_next, double lr, const ActorConfig& actor) {
  double target = t.reward;
  if (!t.done) {
    std::vector<double> pi(static_cast<std::size_t>(critic.num_actions()));
    actor_distribution(target_critic, t.next_state, b_next.probs(), actor, pi);
    const auto row = target_critic.row(k, t.next_state, target_critic.cell_of(b_next.probs()));
    double v = 0.0;
    for (int a = 0; a < critic.num_actions(); ++a) v += pi[a] * row[a];
    target += critic.gamma() * v;
  }
  const std::size_t c = critic.cell_of(b.probs());
  double& q = critic.q(k, t.state, c, t.action);
  q += lr * (target - q);
  auto& count = critic.visits()[critic.offset(k, t.state, c) + static_cast<std::size_t>(t.action)];
  if (count < std::numeric_limits<std::uint32_t>::max()) ++count;
}

Belief agent_belief_update(const AdaptiveAgent& agent, const MdpPosterior* posterior, const Belief& b,
                           const Transition& t) {
  if (agent.update_rule == UpdateRule::exact) {
    if (posterior == nullptr) throw std::invalid_argument("exact belief update needs the posterior");
    return exact_belief_update(b, *posterior, t);
  }
  return surrogate_belief_update(b, agent.critic, agent.actor, t, agent.temperature);
}

namespace {

// Indices of the transitions each member trains on.
std::vector<std::vector<std::size_t>> member_data(const OfflineDataset& dataset, EnsembleMode mode, int members,
                                                  Rng& rng) {
  std::vector<std::vector<std::size_t>> data(static_cast<std::size_t>(members));
  const std::size_t n = dataset.transitions.size();
  if (mode == EnsembleMode::partitioned) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& src = dataset.transitions[i].source_hypothesis;
      if (!src) throw MissingHypothesisData("partitioned ensemble needs source_hypothesis on every transition");
      if (*src < 0 || *src >= members) {
        throw MissingHypothesisData("source_hypothesis " + std::to_string(*src) + " outside the ensemble");
      }
      data[static_cast<std::size_t>(*src)].push_back(i);
    }
    for (int k = 0; k < members; ++k) {
      if (data[k].empty()) throw MissingHypothesisData("no transitions for member " + std::to_string(k));
    }
  } else {
    for (auto& d : data) {
      d.resize(n);
      for (auto& idx : d) idx = sample_index(n, rng);
    }
  }
  return data;
}

}  // namespace

AdaptiveAgent train_ape_v(const OfflineDataset& dataset, const MdpPosterior* posterior, const TrainConfig& config,
                          const EnvShape& shape) {
  if (dataset.transitions.empty()) throw EmptyDataset("train_ape_v: dataset has no transitions");
  if (config.steps < 0) throw std::invalid_argument("train_ape_v: steps must be non-negative");
  if (!(config.learning_rate > 0.0 && config.learning_rate <= 1.0)) {
    throw std::invalid_argument("train_ape_v: learning_rate must lie in (0, 1]");
  }
  if (config.grid_resolution < 1) throw std::invalid_argument("train_ape_v: grid_resolution must be >= 1");
  if (!(config.belief_alpha > 0.0)) throw std::invalid_argument("train_ape_v: belief_alpha must be positive");
  if (!(config.temperature > 0.0)) throw std::invalid_argument("train_ape_v: temperature must be positive");
  if (!(config.empirical_fraction >= 0.0 && config.empirical_fraction <= 1.0)) {
    throw std::invalid_argument("train_ape_v: empirical_fraction must lie in [0, 1]");
  }
  if (config.update_rule == UpdateRule::exact) {
    if (posterior == nullptr) throw std::invalid_argument("train_ape_v: the exact rule needs the posterior");
    if (posterior->size() != static_cast<std::size_t>(shape.members)) {
      throw std::invalid_argument("train_ape_v: posterior size differs from ensemble size");
    }
  }
  for (const Transition& t : dataset.transitions) {
    if (t.state < 0 || t.state >= shape.num_states || t.next_state < 0 || t.next_state >= shape.num_states ||
        t.action < 0 || t.action >= shape.num_actions) {
      throw std::invalid_argument("train_ape_v: transition outside the state/action space");
    }
  }

  std::vector<double> weights;
  if (posterior != nullptr && posterior->size() == static_cast<std::size_t>(shape.members)) {
    weights = posterior->weights;
  }
  AdaptiveAgent agent{EnsembleCritic(shape.members, shape.num_states, shape.num_actions, shape.discount,
                                     BeliefGrid(shape.members, config.grid_resolution), std::move(weights)),
                      config.update_rule, config.temperature, config.actor};
  EnsembleCritic& critic = agent.critic;
  const BeliefGrid& grid = *critic.grid();

  Rng data_rng = make_rng(config.seed, "ape-v/data");
  Rng belief_rng = make_rng(config.seed, "ape-v/belief");
  Rng pool_rng = make_rng(config.seed, "ape-v/pool");
  const auto data = member_data(dataset, config.ensemble_mode, shape.members, data_rng);
  const BeliefSampler sampler{config.belief_alpha, shape.members};

  std::vector<Belief> pool;
  auto refresh_pool = [&] {
    pool.clear();
    const std::size_t episodes = dataset.num_episodes();
    const std::size_t take = std::min<std::size_t>(episodes, 256);
    for (std::size_t e = 0; e < take; ++e) {
      const auto episode = dataset.episode(take == episodes ? e : sample_index(episodes, pool_rng));
      Belief b = Belief::uniform(static_cast<std::size_t>(shape.members));
      pool.push_back(b);
      for (const Transition& t : episode) {
        try {
          b = agent_belief_update(agent, posterior, b, t);
        } catch (const ImpossibleTransition&) {
          break;
        }
        pool.push_back(b);
      }
    }
  };

  const bool lagged = config.target_refresh > 0;
  std::optional<AdaptiveAgent> target;
  for (long step = 0; step < config.steps; ++step) {
    if (lagged && step % config.target_refresh == 0) target = agent;
    const AdaptiveAgent& frozen = lagged ? *target : agent;
    Belief b;
    if (config.empirical_fraction > 0.0 && uniform01(belief_rng) < config.empirical_fraction) {
      if (pool.empty() || step % std::max(1L, config.empirical_refresh) == 0) refresh_pool();
      b = pool[sample_index(pool.size(), belief_rng)];
    } else {
      b = sample_belief(sampler, belief_rng);
    }
    if (config.quantize_beliefs) b = grid.belief(grid.snap(b.probs()));

    for (int k = 0; k < shape.members; ++k) {
      const auto& idx = data[static_cast<std::size_t>(k)];
      const Transition& t = dataset.transitions[idx[sample_index(idx.size(), data_rng)]];
      Belief b_next;
      try {
        b_next = agent_belief_update(frozen, posterior, b, t);
      } catch (const ImpossibleTransition&) {
        continue;  // b rules this transition out; nothing to learn here
      }
      critic_update(critic, frozen.critic, k, t, b, b_next, config.learning_rate, config.actor);
    }
  }
  return agent;
}

AdaptivePolicy::AdaptivePolicy(const AdaptiveAgent& agent, const MdpPosterior* posterior, std::optional<Belief> frozen)
    : agent_(&agent), posterior_(posterior), frozen_(std::move(frozen)) {
  if (frozen_ && frozen_->size() != static_cast<std::size_t>(agent.critic.members())) {
    throw std::invalid_argument("AdaptivePolicy: frozen belief size differs from ensemble size");
  }
}

PolicyMemory AdaptivePolicy::initial_memory() const {
  if (frozen_) return frozen_->vec();
  return Belief::uniform(static_cast<std::size_t>(agent_->critic.members())).vec();
}

void AdaptivePolicy::action_probs(int state, const PolicyMemory& memory, std::span<double> out) const {
  actor_distribution(agent_->critic, state, memory, agent_->actor, out);
}

PolicyMemory AdaptivePolicy::observe(const PolicyMemory& memory, const Transition& t) const {
  if (frozen_) return memory;
  return agent_belief_update(*agent_, posterior_, Belief(memory), t).vec();
}

TestTimeResult run_test_time(const AdaptiveAgent& agent, const TabularMdp& true_mdp, const MdpPosterior* posterior,
                             int horizon, Rng& rng, std::optional<Belief> frozen) {
  if (true_mdp.num_states != agent.critic.num_states() || true_mdp.num_actions != agent.critic.num_actions()) {
    throw std::invalid_argument("run_test_time: MDP shape differs from the agent");
  }
  const AdaptivePolicy policy(agent, posterior, std::move(frozen));
  TestTimeResult result;
  result.trajectory = sample_trajectory(true_mdp, policy, horizon, rng);
  PolicyMemory memory = policy.initial_memory();
  result.beliefs.emplace_back(memory);
  double discount = 1.0;
  for (const Transition& t : result.trajectory) {
    memory = policy.observe(memory, t);
    result.beliefs.emplace_back(memory);
    result.undiscounted_return += t.reward;
    result.discounted_return += discount * t.reward;
    discount *= true_mdp.discount;
  }
  result.success = !result.trajectory.empty() && result.trajectory.back().done;
  return result;
}

double max_bellman_residual(const AdaptiveAgent& agent, const OfflineDataset& dataset, const MdpPosterior* posterior,
                            std::uint32_t min_visits) {
  const EnsembleCritic& critic = agent.critic;
  if (!critic.grid()) throw std::invalid_argument("max_bellman_residual: critic has no belief grid");
  const BeliefGrid& grid = *critic.grid();

  // Distinct transitions per member and (s, a), with multiplicities.
  using Key = std::tuple<int, int, int, double, int, bool>;  // k, s, a, r, s', done
  std::map<Key, std::size_t> counts;
  for (const Transition& t : dataset.transitions) {
    for (int k = 0; k < critic.members(); ++k) {
      if (t.source_hypothesis && *t.source_hypothesis != k) continue;
      ++counts[{k, t.state, t.action, t.reward, t.next_state, t.done}];
    }
  }

  double worst = 0.0;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const Belief b = grid.belief(c);
    // Mean target per (k, s, a) at this cell.
    std::map<std::tuple<int, int, int>, std::pair<double, double>> targets;
    for (const auto& [key, n] : counts) {
      const auto& [k, s, a, r, s_next, done] = key;
      if (critic.visits()[critic.offset(k, s, c) + static_cast<std::size_t>(a)] < min_visits) continue;
      const Transition t{s, a, r, s_next, done, k};
      Belief b_next;
      try {
        b_next = agent_belief_update(agent, posterior, b, t);
      } catch (const ImpossibleTransition&) {
        continue;
      }
      double target = r;
      if (!done) {
        std::vector<double> pi(static_cast<std::size_t>(critic.num_actions()));
        actor_distribution(critic, s_next, b_next.probs(), agent.actor, pi);
        const auto row = critic.row(k, s_next, critic.cell_of(b_next.probs()));
        for (int a2 = 0; a2 < critic.num_actions(); ++a2) target += critic.gamma() * pi[a2] * row[a2];
      }
      auto& acc = targets[{k, s, a}];
      acc.first += static_cast<double>(n) * target;
      acc.second += static_cast<double>(n);
    }
    for (const auto& [key, acc] : targets) {
      const auto& [k, s, a] = key;
      worst = std::max(worst, std::abs(critic.q(k, s, c, a) - acc.first / acc.second));
    }
  }
  return worst;
}

}  // namespace epipomdp

#include "epipomdp/simulate.hpp"

#include "epipomdp/error.hpp"

namespace epipomdp {

int sample_next_state(const TabularMdp& mdp, int s, int a, Rng& rng) {
  return static_cast<int>(sample_categorical(mdp.row(s, a), rng));
}

std::vector<Transition> sample_trajectory(const TabularMdp& mdp, const Policy& policy,
                                          int horizon, Rng& rng) {
  std::vector<Transition> trajectory;
  if (horizon <= 0) return trajectory;
  trajectory.reserve(static_cast<std::size_t>(horizon));

  std::vector<double> probs(static_cast<std::size_t>(mdp.num_actions));
  int s = static_cast<int>(sample_categorical(mdp.initial_dist, rng));
  PolicyMemory memory = policy.initial_memory();
  for (int t = 0; t < horizon && !mdp.is_terminal(s); ++t) {
    policy.action_probs(s, memory, probs);
    const int a = static_cast<int>(sample_categorical(probs, rng));
    const int next = sample_next_state(mdp, s, a, rng);
    Transition step{s, a, mdp.r(s, a), next, mdp.is_terminal(next), std::nullopt};
    memory = policy.observe(memory, step);
    trajectory.push_back(step);
    s = next;
  }
  return trajectory;
}

OfflineDataset generate_offline_dataset(const MdpPosterior& posterior,
                                        const MarkovPolicy& behavior, int episodes,
                                        int horizon, std::uint64_t seed) {
  if (episodes <= 0) throw EmptyDataset("generate_offline_dataset: episodes must be positive");
  require_valid(posterior);
  Rng rng(seed);
  const MarkovPolicyAdapter policy(behavior);

  OfflineDataset dataset;
  dataset.metadata = {"markov", episodes, seed};
  for (int e = 0; e < episodes; ++e) {
    const int k = static_cast<int>(sample_categorical(posterior.weights, rng));
    auto trajectory = sample_trajectory(posterior.hypotheses[static_cast<std::size_t>(k)],
                                        policy, horizon, rng);
    dataset.episode_offsets.push_back(dataset.transitions.size());
    for (auto& t : trajectory) {
      t.source_hypothesis = k;
      dataset.transitions.push_back(t);
    }
  }
  return dataset;
}

}  // namespace epipomdp

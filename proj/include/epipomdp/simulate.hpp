#pragma once

#include <vector>

#include "epipomdp/mdp.hpp"
#include "epipomdp/policy.hpp"
#include "epipomdp/rng.hpp"

namespace epipomdp {

// Rolls out `policy` from s0 ~ rho until a terminal state or `horizon` steps.
// Transitions carry done = next_state is terminal. Deterministic given rng state.
std::vector<Transition> sample_trajectory(const TabularMdp& mdp, const Policy& policy,
                                          int horizon, Rng& rng);

// Samples one (s', r) step of mdp from (s, a).
int sample_next_state(const TabularMdp& mdp, int s, int a, Rng& rng);

// Each episode draws M ~ weights, rolls out the behavior policy and tags every
// transition with the hypothesis index. Throws EmptyDataset when episodes <= 0.
OfflineDataset generate_offline_dataset(const MdpPosterior& posterior,
                                        const MarkovPolicy& behavior, int episodes,
                                        int horizon, std::uint64_t seed);

}  // namespace epipomdp

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "epipomdp/ape_v.hpp"
#include "epipomdp/belief.hpp"
#include "epipomdp/epistemic_pomdp.hpp"
#include "epipomdp/mdp.hpp"

namespace epipomdp {

inline constexpr const char* kMdpSchema = "epipomdp/mdp/1";
inline constexpr const char* kAgentSchema = "epipomdp/agent/1";
inline constexpr const char* kSolutionSchema = "epipomdp/solution/1";

// Posterior JSON: {"schema", "num_states", "num_actions", "discount",
// "weights", "hypotheses": [{"transition", "reward", "initial", "terminal"}]}.
// Tensors are flat row-major arrays. Loading validates the result and throws
// ConfigError on malformed input.
nlohmann::json posterior_to_json(const MdpPosterior& posterior);
MdpPosterior posterior_from_json(const nlohmann::json& j);
MdpPosterior load_posterior(const std::string& path);
void save_posterior(const MdpPosterior& posterior, const std::string& path);

inline constexpr const char* kDatasetHeader = "episode,step,state,action,reward,next_state,done,source_hypothesis";

// One row per transition; source_hypothesis is empty when unknown.
void write_dataset_csv(const OfflineDataset& dataset, std::ostream& out);
OfflineDataset read_dataset_csv(std::istream& in);

// Header step,b_0,...,b_{n-1}.
void write_belief_trace_csv(const std::vector<Belief>& trace, std::ostream& out);

nlohmann::json agent_to_json(const AdaptiveAgent& agent);
AdaptiveAgent agent_from_json(const nlohmann::json& j);

// {"schema", "horizon", "j_bayes", "tail_bound",
//  "nodes": [{"state", "belief", "depth", "value", "action"}]}
nlohmann::json solution_to_json(const BayesOptimalSolution& solution);

// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace epipomdp

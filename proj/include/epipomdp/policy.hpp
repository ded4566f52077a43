#pragma once

#include <span>
#include <vector>

#include "epipomdp/mdp.hpp"

namespace epipomdp {

// Whatever a policy carries between steps: empty for Markov policies, the
// relative belief for adaptive ones, belief + depth for the exact planner.
using PolicyMemory = std::vector<double>;

// Callback interface shared by every method. Implementations are pure: memory
// is threaded through by the caller.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual PolicyMemory initial_memory() const { return {}; }

  // Writes pi(.|state, memory) into `out` (size num_actions).
  virtual void action_probs(int state, const PolicyMemory& memory, std::span<double> out) const = 0;

  virtual PolicyMemory observe(const PolicyMemory& memory, const Transition& t) const {
    (void)t;
    return memory;
  }
};

class MarkovPolicyAdapter final : public Policy {
 public:
  explicit MarkovPolicyAdapter(MarkovPolicy policy) : policy_(std::move(policy)) {}

  void action_probs(int state, const PolicyMemory&, std::span<double> out) const override {
    const auto row = policy_.row(state);
    std::copy(row.begin(), row.end(), out.begin());
  }

  const MarkovPolicy& policy() const { return policy_; }

 private:
  MarkovPolicy policy_;
};

// Writes a one-hot distribution.
inline void one_hot(std::span<double> out, int action) {
  std::fill(out.begin(), out.end(), 0.0);
  out[static_cast<std::size_t>(action)] = 1.0;
}

}  // namespace epipomdp

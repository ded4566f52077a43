#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "epipomdp/mdp.hpp"
#include "epipomdp/rng.hpp"

namespace epipomdp {

inline constexpr double kBeliefTolerance = 1e-9;
// Rewards are deterministic per (s, a); an observed reward "matches" a
// hypothesis when it is within this distance of r_k(s, a).
inline constexpr double kRewardMatchTolerance = 1e-9;

bool is_valid_belief(std::span<const double> probs);

// Point on the probability simplex over posterior members. Stored normalized;
// the ratio form P(M|h,D) / P(M|D) is probs[k] / weights[k] up to a constant.
class Belief {
 public:
  Belief() = default;
  // Throws std::invalid_argument unless probs is a valid distribution.
  explicit Belief(std::vector<double> probs);

  static Belief uniform(std::size_t n);
  static Belief vertex(std::size_t n, std::size_t k);
  // Normalizes non-negative weights; throws std::invalid_argument on zero mass.
  static Belief from_weights(std::vector<double> weights);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t k) const { return probs_[k]; }
  std::span<const double> probs() const { return probs_; }
  const std::vector<double>& vec() const { return probs_; }

  friend bool operator==(const Belief&, const Belief&) = default;

 private:
  std::vector<double> probs_;
};

// All compositions (k_1..k_n) of G, sorted lexicographically; cell i stands for
// the belief (k_1/G, ..., k_n/G).
class BeliefGrid {
 public:
  BeliefGrid(int dimension, int resolution);

  int dimension() const { return n_; }
  int resolution() const { return resolution_; }
  std::size_t size() const { return count_; }

  std::span<const int> cell(std::size_t i) const {
    return {cells_.data() + i * static_cast<std::size_t>(n_), static_cast<std::size_t>(n_)};
  }
  Belief belief(std::size_t i) const;

  // Lexicographic rank of a composition of G.
  std::size_t index_of(std::span<const int> composition) const;

  // Nearest cell in Euclidean distance, lowest lexicographic cell on ties.
  std::size_t snap(std::span<const double> probs) const;

 private:
  std::size_t compositions(int total, int parts) const;

  int n_;
  int resolution_;
  std::size_t count_;
  std::vector<int> cells_;
  std::vector<std::size_t> binom_;  // C(t + m - 1, m - 1) table, (t, m) row-major
};

inline std::size_t snap_to_grid(const Belief& b, const BeliefGrid& grid) {
  return grid.snap(b.probs());
}

// Symmetric Dirichlet p(b).
struct BeliefSampler {
  double alpha = 0.1;
  int n = 1;
};

Belief sample_belief(const BeliefSampler& sampler, Rng& rng);

// T_k(s'|s,a) * [r == r_k(s,a)].
double transition_likelihood(const TabularMdp& mdp, const Transition& t);

// b'_k proportional to likelihood_k * b_k. Throws ImpossibleTransition when
// every hypothesis with positive belief assigns the transition zero probability.
Belief exact_belief_update(const Belief& b, const MdpPosterior& posterior, const Transition& t);

// b'_k proportional to b_k * exp(-temperature * delta_k^2), with |delta_k|
// clamped to 1e6. Members with b_k > 0 stay strictly positive (floored at
// 1e-300 before normalizing). This is the filtering step behind the surrogate update; the
// critic-aware wrapper lives with the ensemble critic.
Belief reweight_by_td_errors(const Belief& b, std::span<const double> td_errors, double temperature);

// weights_k proportional to prior_k * prod_t likelihood_k(t), in log space.
// Throws AllHypothesesRejected when every hypothesis has zero likelihood.
MdpPosterior posterior_from_dataset(std::vector<TabularMdp> hypotheses,
                                    std::span<const double> prior,
                                    std::span<const Transition> data);

inline MdpPosterior posterior_from_dataset(std::vector<TabularMdp> hypotheses,
                                           std::span<const double> prior,
                                           const OfflineDataset& dataset) {
  return posterior_from_dataset(std::move(hypotheses), prior, dataset.transitions);
}

}  // namespace epipomdp

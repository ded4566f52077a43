#include "epipomdp/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "epipomdp/error.hpp"

namespace epipomdp {

bool is_valid_belief(std::span<const double> probs) {
  if (probs.empty()) return false;
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    total += p;
  }
  return std::abs(total - 1.0) <= kBeliefTolerance;
}

Belief::Belief(std::vector<double> probs) : probs_(std::move(probs)) {
  if (!is_valid_belief(probs_)) throw std::invalid_argument("Belief: not a distribution");
}

Belief Belief::uniform(std::size_t n) {
  return Belief(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Belief Belief::vertex(std::size_t n, std::size_t k) {
  std::vector<double> probs(n, 0.0);
  probs.at(k) = 1.0;
  return Belief(std::move(probs));
}

Belief Belief::from_weights(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("Belief: negative or non-finite weight");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("Belief: weights have zero mass");
  for (double& w : weights) w /= total;
  return Belief(std::move(weights));
}

// ---------------------------------------------------------------------------

BeliefGrid::BeliefGrid(int dimension, int resolution) : n_(dimension), resolution_(resolution) {
  if (n_ < 1 || resolution_ < 1) throw std::invalid_argument("BeliefGrid: dimension and resolution must be positive");
  const int rows = resolution_ + 1;
  const int cols = n_ + 1;
  binom_.assign(static_cast<std::size_t>(rows) * cols, 0);
  // compositions of t into m parts: 1 for m = 1, and sum over the first part otherwise.
  for (int t = 0; t < rows; ++t) {
    binom_[static_cast<std::size_t>(t) * cols] = t == 0 ? 1 : 0;
    for (int m = 1; m < cols; ++m) {
      std::size_t total = 0;
      for (int first = 0; first <= t; ++first) {
        total += binom_[static_cast<std::size_t>(t - first) * cols + static_cast<std::size_t>(m - 1)];
      }
      binom_[static_cast<std::size_t>(t) * cols + static_cast<std::size_t>(m)] = total;
    }
  }
  count_ = compositions(resolution_, n_);

  cells_.reserve(count_ * static_cast<std::size_t>(n_));
  std::vector<int> current(static_cast<std::size_t>(n_), 0);
  auto emit = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == n_ - 1) {
      current[static_cast<std::size_t>(pos)] = remaining;
      cells_.insert(cells_.end(), current.begin(), current.end());
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      current[static_cast<std::size_t>(pos)] = v;
      self(self, pos + 1, remaining - v);
    }
  };
  emit(emit, 0, resolution_);
}

std::size_t BeliefGrid::compositions(int total, int parts) const {
  return binom_[static_cast<std::size_t>(total) * static_cast<std::size_t>(n_ + 1) + static_cast<std::size_t>(parts)];
}

Belief BeliefGrid::belief(std::size_t i) const {
  const auto c = cell(i);
  std::vector<double> probs(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) probs[k] = static_cast<double>(c[k]) / resolution_;
  return Belief(std::move(probs));
}

std::size_t BeliefGrid::index_of(std::span<const int> composition) const {
  if (composition.size() != static_cast<std::size_t>(n_)) throw std::invalid_argument("BeliefGrid: dimension mismatch");
  std::size_t rank = 0;
  int remaining = resolution_;
  for (int i = 0; i + 1 < n_; ++i) {
    const int v = composition[static_cast<std::size_t>(i)];
    for (int smaller = 0; smaller < v; ++smaller) rank += compositions(remaining - smaller, n_ - i - 1);
    remaining -= v;
  }
  return rank;
}

std::size_t BeliefGrid::snap(std::span<const double> probs) const {
  if (probs.size() != static_cast<std::size_t>(n_)) throw std::invalid_argument("snap: dimension mismatch");
  // The nearest lattice point with coordinates summing to G rounds every
  // coordinate down and hands the leftover units to the largest remainders.
  std::vector<int> comp(static_cast<std::size_t>(n_));
  std::vector<long long> remainder_key(static_cast<std::size_t>(n_));
  int assigned = 0;
  for (std::size_t i = 0; i < comp.size(); ++i) {
    const double x = std::max(0.0, probs[i]) * resolution_;
    const double fl = std::floor(x);
    comp[i] = static_cast<int>(fl);
    remainder_key[i] = std::llround((x - fl) * 1e12);
    assigned += comp[i];
  }
  std::vector<std::size_t> order(comp.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  int leftover = resolution_ - assigned;
  if (leftover >= 0) {
    // Ties go to later coordinates, which keeps the result lexicographically lowest.
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (remainder_key[a] != remainder_key[b]) return remainder_key[a] > remainder_key[b];
      return a > b;
    });
    for (std::size_t i = 0; leftover > 0; i = (i + 1) % order.size(), --leftover) ++comp[order[i]];
  } else {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (remainder_key[a] != remainder_key[b]) return remainder_key[a] < remainder_key[b];
      return a < b;
    });
    for (std::size_t i = 0; leftover < 0; i = (i + 1) % order.size()) {
      if (comp[order[i]] > 0) {
        --comp[order[i]];
        ++leftover;
      }
    }
  }
  return index_of(comp);
}

// ---------------------------------------------------------------------------

Belief sample_belief(const BeliefSampler& sampler, Rng& rng) {
  if (!(sampler.alpha > 0.0) || sampler.n < 1) throw std::invalid_argument("BeliefSampler: alpha > 0 and n >= 1 required");
  if (sampler.n == 1) return Belief::uniform(1);
  std::gamma_distribution<double> gamma(sampler.alpha, 1.0);
  std::vector<double> draw(static_cast<std::size_t>(sampler.n));
  for (;;) {
    double total = 0.0;
    for (double& g : draw) {
      g = gamma(rng);
      total += g;
    }
    if (total > 0.0 && std::isfinite(total)) {
      for (double& g : draw) g /= total;
      return Belief(std::move(draw));
    }
  }
}

double transition_likelihood(const TabularMdp& mdp, const Transition& t) {
  if (std::abs(t.reward - mdp.r(t.state, t.action)) > kRewardMatchTolerance) return 0.0;
  return mdp.p(t.state, t.action, t.next_state);
}

Belief exact_belief_update(const Belief& b, const MdpPosterior& posterior, const Transition& t) {
  if (b.size() != posterior.size()) throw std::invalid_argument("exact_belief_update: dimension mismatch");
  if (t.state < 0 || t.state >= posterior.num_states() || t.next_state < 0 ||
      t.next_state >= posterior.num_states() || t.action < 0 || t.action >= posterior.num_actions()) {
    throw std::invalid_argument("exact_belief_update: transition index out of range");
  }
  std::vector<double> next(b.size());
  double total = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    next[k] = b[k] * transition_likelihood(posterior.hypotheses[k], t);
    total += next[k];
  }
  if (!(total > 0.0)) {
    throw ImpossibleTransition("transition (" + std::to_string(t.state) + "," + std::to_string(t.action) + "," +
                               std::to_string(t.next_state) + ") has zero likelihood under every live hypothesis");
  }
  for (double& v : next) v /= total;
  return Belief(std::move(next));
}

Belief reweight_by_td_errors(const Belief& b, std::span<const double> td_errors, double temperature) {
  if (td_errors.size() != b.size()) throw std::invalid_argument("reweight_by_td_errors: dimension mismatch");
  constexpr double kClamp = 1e6;
  constexpr double kLiveFloor = 1e-300;
  // Work in log space relative to the smallest penalty so at least one live
  // member keeps an exp(0) factor.
  std::vector<double> penalty(b.size());
  double min_penalty = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < b.size(); ++k) {
    double d = td_errors[k];
    if (!std::isfinite(d)) d = kClamp;
    d = std::clamp(d, -kClamp, kClamp);
    penalty[k] = temperature * d * d;
    if (b[k] > 0.0) min_penalty = std::min(min_penalty, penalty[k]);
  }
  std::vector<double> next(b.size());
  double total = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    // Floored so a live member never underflows to an exact zero.
    next[k] = b[k] > 0.0 ? std::max(b[k] * std::exp(-(penalty[k] - min_penalty)), kLiveFloor) : 0.0;
    total += next[k];
  }
  for (double& v : next) v /= total;
  return Belief(std::move(next));
}

MdpPosterior posterior_from_dataset(std::vector<TabularMdp> hypotheses,
                                    std::span<const double> prior,
                                    std::span<const Transition> data) {
  if (hypotheses.empty() || prior.size() != hypotheses.size()) {
    throw std::invalid_argument("posterior_from_dataset: one prior weight per hypothesis required");
  }
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> log_w(hypotheses.size());
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    log_w[k] = prior[k] > 0.0 ? std::log(prior[k]) : neg_inf;
    for (const Transition& t : data) {
      if (log_w[k] == neg_inf) break;
      const double lik = transition_likelihood(hypotheses[k], t);
      log_w[k] = lik > 0.0 ? log_w[k] + std::log(lik) : neg_inf;
    }
  }
  const double top = *std::max_element(log_w.begin(), log_w.end());
  if (top == neg_inf) throw AllHypothesesRejected("every hypothesis assigns the dataset zero likelihood");
  std::vector<double> weights(hypotheses.size());
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] = log_w[k] == neg_inf ? 0.0 : std::exp(log_w[k] - top);
    total += weights[k];
  }
  for (double& w : weights) w /= total;
  return MdpPosterior{std::move(hypotheses), std::move(weights)};
}

}  // namespace epipomdp

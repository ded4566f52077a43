#include "epipomdp/birth_death.hpp"

#include <stdexcept>
#include <string>

#include "epipomdp/error.hpp"

namespace epipomdp {

namespace {

void check_rates(std::span<const double> p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0 && p[i] < 1.0)) {
      throw DegenerateRate("birth-death rate p_" + std::to_string(i) + " must lie strictly in (0, 1)");
    }
  }
}

double odds(std::span<const double> p, int i) {
  const double pi = p[static_cast<std::size_t>(i)];
  return pi / (1.0 - pi);
}

// Expected steps i -> i+1:
//   hold:    tau_i = sum_{j=0}^{i} (1/p_j) prod_{m=j+1}^{i} l_m^{-1}
//   reflect: tau_i = prod_{m=1}^{i} l_m^{-1} + sum_{j=1}^{i} (1/p_j) prod_{m=j+1}^{i} l_m^{-1}
double step_up(std::span<const double> p, int i, BoundaryRule boundary) {
  double total = 0.0;
  const int first = boundary == BoundaryRule::hold ? 0 : 1;
  for (int j = first; j <= i; ++j) {
    double prod = 1.0;
    for (int m = j + 1; m <= i; ++m) prod /= odds(p, m);
    total += prod / p[static_cast<std::size_t>(j)];
  }
  if (boundary == BoundaryRule::reflect) {
    double prod = 1.0;
    for (int m = 1; m <= i; ++m) prod /= odds(p, m);
    total += prod;
  }
  return total;
}

// Expected steps i -> i-1 with the boundary at n:
//   hold:    sigma_i = sum_{j=i}^{n} (1/q_j) prod_{m=i}^{j-1} l_m
//   reflect: sigma_i = prod_{m=i}^{n-1} l_m + sum_{j=i}^{n-1} (1/q_j) prod_{m=i}^{j-1} l_m
double step_down(std::span<const double> p, int i, int n, BoundaryRule boundary) {
  double total = 0.0;
  const int last = boundary == BoundaryRule::hold ? n : n - 1;
  for (int j = i; j <= last; ++j) {
    double prod = 1.0;
    for (int m = i; m < j; ++m) prod *= odds(p, m);
    total += prod / (1.0 - p[static_cast<std::size_t>(j)]);
  }
  if (boundary == BoundaryRule::reflect) {
    double prod = 1.0;
    for (int m = i; m < n; ++m) prod *= odds(p, m);
    total += prod;
  }
  return total;
}

}  // namespace

double birth_death_time_up(std::span<const double> right_probs, int from, int to,
                           BoundaryRule boundary) {
  if (from < 0 || to <= from || static_cast<std::size_t>(to) > right_probs.size()) {
    throw std::invalid_argument("birth_death_time_up: need 0 <= from < to <= right_probs.size()");
  }
  check_rates(right_probs.first(static_cast<std::size_t>(to)));
  double total = 0.0;
  for (int i = from; i < to; ++i) total += step_up(right_probs, i, boundary);
  return total;
}

double birth_death_time_down(std::span<const double> right_probs, int from, int to, int n,
                             BoundaryRule boundary) {
  if (to < 0 || from <= to || from > n || static_cast<std::size_t>(n) >= right_probs.size()) {
    throw std::invalid_argument("birth_death_time_down: need 0 <= to < from <= n < right_probs.size()");
  }
  check_rates(right_probs.first(static_cast<std::size_t>(n) + 1));
  double total = 0.0;
  for (int i = to + 1; i <= from; ++i) total += step_down(right_probs, i, n, boundary);
  return total;
}

PassageTimes birth_death_hitting_times(std::span<const double> right_probs, int n,
                                       BoundaryRule boundary) {
  if (n < 1 || right_probs.size() != static_cast<std::size_t>(n) + 1) {
    throw std::invalid_argument("birth_death_hitting_times: need n >= 1 and n + 1 rates");
  }
  check_rates(right_probs);
  return {birth_death_time_up(right_probs, 0, n, boundary),
          birth_death_time_down(right_probs, n, 0, n, boundary)};
}

}  // namespace epipomdp

#pragma once

#include <span>

namespace epipomdp {

// How the walk behaves when it tries to leave {0, ..., n}.
//   hold:    the outward move is a self-loop (costs a step, stays put).
//   reflect: the boundary state always steps inward.
enum class BoundaryRule { hold, reflect };

struct PassageTimes {
  double up = 0.0;    // expected steps 0 -> n
  double down = 0.0;  // expected steps n -> 0
};

// Birth-death walk on {0, ..., n}: from state i it moves right with
// probability right_probs[i] and left otherwise (right_probs has n + 1
// entries). Passage times are the closed-form sums over products of the
// odds ratios l_i = p_i / q_i. Throws DegenerateRate if any p_i is 0 or 1.
PassageTimes birth_death_hitting_times(std::span<const double> right_probs, int n,
                                       BoundaryRule boundary = BoundaryRule::hold);

// Expected steps to first reach `to` starting from `from` (from < to), same
// chain and boundary rule at 0.
double birth_death_time_up(std::span<const double> right_probs, int from, int to,
                           BoundaryRule boundary = BoundaryRule::hold);

// Expected steps to first reach `to` starting from `from` (from > to) with
// the boundary rule applied at `n`.
double birth_death_time_down(std::span<const double> right_probs, int from, int to, int n,
                             BoundaryRule boundary = BoundaryRule::hold);

}  // namespace epipomdp

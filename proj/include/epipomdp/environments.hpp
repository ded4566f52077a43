#pragma once

#include <vector>

#include "epipomdp/birth_death.hpp"
#include "epipomdp/mdp.hpp"

namespace epipomdp {

// Two chains on {-n..n} (indexed 0..2n), start at 0, reward -1 per step,
// discount 1. Hypothesis 0 terminates on entering +n, hypothesis 1 on
// entering -n. Moving outward at the other (non-terminal) end follows
// `boundary`: reflect steps back inward, hold stays put.
struct ChainSpec {
  int n = 5;
  BoundaryRule boundary = BoundaryRule::reflect;
};

namespace chain_action {
inline constexpr int left = 0;
inline constexpr int right = 1;
}  // namespace chain_action

MdpPosterior make_chain(const ChainSpec& spec);

// Actions of the room: the four cardinal moves.
enum class Direction : int { north = 0, east = 1, south = 2, west = 3 };

struct Door {
  int x = 0;
  int y = 0;
  Direction outward = Direction::north;
};

// Grid room with one hypothesis per door: in hypothesis d door d opens onto a
// shared terminal exit (that step costs 0), every other door is a self-loop
// bump. All other moves cost -1; walls bump in place.
// Cell (x, y) is state y * width + x with y = 0 the north row; the exit is
// state width * height.
struct LockedDoorsSpec {
  int width = 5;
  int height = 5;
  std::vector<Door> doors;
  int start_x = 2;
  int start_y = 4;
  int horizon = 50;
  double gamma = 0.98;

  // 5x5 room, four doors on the north wall (every column except the middle
  // one), start at the bottom centre.
  static LockedDoorsSpec room();
  // 1x4 corridor, doors at both ends, start one cell from the west door.
  static LockedDoorsSpec corridor();
};

MdpPosterior make_locked_doors(const LockedDoorsSpec& spec);
int locked_doors_exit_state(const LockedDoorsSpec& spec);

// Fork with a main road (main_road_length steps to the goal in both
// hypotheses) and a side street (side_street_length steps when clear). When
// blocked, the side action leads into a dead end that reveals the blockage
// immediately; walking back to the fork takes block_delay steps.
//
// With blocked weight w, trying the side street first is worth
//   (1 - w) * side + w * (1 + block_delay + main)
// expected steps, so an adaptive policy strictly beats every Markov policy
// whenever that is below main (e.g. 6 + 2 < 10 at w = 1/2).
struct CityNavSpec {
  int main_road_length = 10;
  int side_street_length = 6;
  int block_delay = 1;
  double p_blocked = 0.5;
  double gamma = 1.0;
};

namespace city_action {
inline constexpr int advance = 0;
inline constexpr int side = 1;
inline constexpr int back = 2;
}  // namespace city_action

// Hypothesis 0: side street clear. Hypothesis 1: blocked.
MdpPosterior make_city_nav(const CityNavSpec& spec);

struct CityNavLayout {
  int fork = 0;
  int goal = 0;
  int dead_end = 0;
  int first_side_cell = 0;  // equals goal when side_street_length == 1
};
CityNavLayout city_nav_layout(const CityNavSpec& spec);

}  // namespace epipomdp

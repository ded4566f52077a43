#include "epipomdp/environments.hpp"

#include <set>
#include <stdexcept>
#include <tuple>

namespace epipomdp {

namespace {

void set_move(TabularMdp& m, int s, int a, int next, double reward) {
  for (int t = 0; t < m.num_states; ++t) m.p(s, a, t) = 0.0;
  m.p(s, a, next) = 1.0;
  m.r(s, a) = reward;
}

}  // namespace

// ---------------------------------------------------------------------------
// Chain

MdpPosterior make_chain(const ChainSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("make_chain: n must be >= 1");
  const int num_states = 2 * spec.n + 1;
  const int last = num_states - 1;

  auto build = [&](int terminal_state) {
    TabularMdp m = TabularMdp::zeros(num_states, 2, 1.0);
    m.initial_dist[static_cast<std::size_t>(spec.n)] = 1.0;
    for (int s = 0; s < num_states; ++s) {
      int left = s - 1;
      int right = s + 1;
      if (left < 0) left = spec.boundary == BoundaryRule::reflect ? s + 1 : s;
      if (right > last) right = spec.boundary == BoundaryRule::reflect ? s - 1 : s;
      set_move(m, s, chain_action::left, left, -1.0);
      set_move(m, s, chain_action::right, right, -1.0);
    }
    m.make_terminal(terminal_state);
    return m;
  };

  MdpPosterior posterior;
  posterior.hypotheses.push_back(build(last));
  posterior.hypotheses.push_back(build(0));
  posterior.weights = {0.5, 0.5};
  return posterior;
}

// ---------------------------------------------------------------------------
// Locked doors

LockedDoorsSpec LockedDoorsSpec::room() {
  LockedDoorsSpec spec;
  spec.width = 5;
  spec.height = 5;
  spec.doors = {{0, 0, Direction::north},
                {1, 0, Direction::north},
                {3, 0, Direction::north},
                {4, 0, Direction::north}};
  spec.start_x = 2;
  spec.start_y = 4;
  return spec;
}

LockedDoorsSpec LockedDoorsSpec::corridor() {
  LockedDoorsSpec spec;
  spec.width = 4;
  spec.height = 1;
  spec.doors = {{0, 0, Direction::west}, {3, 0, Direction::east}};
  spec.start_x = 1;
  spec.start_y = 0;
  return spec;
}

int locked_doors_exit_state(const LockedDoorsSpec& spec) { return spec.width * spec.height; }

MdpPosterior make_locked_doors(const LockedDoorsSpec& spec) {
  if (spec.width < 1 || spec.height < 1) throw std::invalid_argument("make_locked_doors: empty room");
  if (spec.doors.empty()) throw std::invalid_argument("make_locked_doors: at least one door required");
  if (spec.start_x < 0 || spec.start_x >= spec.width || spec.start_y < 0 || spec.start_y >= spec.height) {
    throw std::invalid_argument("make_locked_doors: start must be inside the room");
  }
  std::set<std::tuple<int, int, int>> seen;
  for (const Door& d : spec.doors) {
    const bool on_wall = (d.outward == Direction::north && d.y == 0) ||
                         (d.outward == Direction::south && d.y == spec.height - 1) ||
                         (d.outward == Direction::west && d.x == 0) ||
                         (d.outward == Direction::east && d.x == spec.width - 1);
    if (d.x < 0 || d.x >= spec.width || d.y < 0 || d.y >= spec.height || !on_wall) {
      throw std::invalid_argument("make_locked_doors: door must sit on the boundary facing outward");
    }
    if (!seen.insert({d.x, d.y, static_cast<int>(d.outward)}).second) {
      throw std::invalid_argument("make_locked_doors: doors must be distinct");
    }
  }

  const int cells = spec.width * spec.height;
  const int exit_state = cells;
  auto cell = [&](int x, int y) { return y * spec.width + x; };

  auto build = [&](std::size_t open_door) {
    TabularMdp m = TabularMdp::zeros(cells + 1, 4, spec.gamma);
    m.initial_dist[static_cast<std::size_t>(cell(spec.start_x, spec.start_y))] = 1.0;
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const int s = cell(x, y);
        for (int a = 0; a < 4; ++a) {
          int nx = x;
          int ny = y;
          switch (static_cast<Direction>(a)) {
            case Direction::north: --ny; break;
            case Direction::east: ++nx; break;
            case Direction::south: ++ny; break;
            case Direction::west: --nx; break;
          }
          if (nx >= 0 && nx < spec.width && ny >= 0 && ny < spec.height) {
            set_move(m, s, a, cell(nx, ny), -1.0);
            continue;
          }
          set_move(m, s, a, s, -1.0);
          const Door& door = spec.doors[open_door];
          if (door.x == x && door.y == y && static_cast<int>(door.outward) == a) {
            set_move(m, s, a, exit_state, 0.0);
          }
        }
      }
    }
    m.make_terminal(exit_state);
    return m;
  };

  MdpPosterior posterior;
  for (std::size_t d = 0; d < spec.doors.size(); ++d) posterior.hypotheses.push_back(build(d));
  posterior.weights.assign(spec.doors.size(), 1.0 / static_cast<double>(spec.doors.size()));
  return posterior;
}

// ---------------------------------------------------------------------------
// City navigation

CityNavLayout city_nav_layout(const CityNavSpec& spec) {
  CityNavLayout layout;
  layout.fork = 0;
  layout.goal = spec.main_road_length;
  layout.first_side_cell = spec.side_street_length == 1 ? layout.goal : spec.main_road_length + 1;
  layout.dead_end = spec.main_road_length + spec.side_street_length;
  return layout;
}

MdpPosterior make_city_nav(const CityNavSpec& spec) {
  if (spec.side_street_length < 1 || spec.main_road_length <= spec.side_street_length) {
    throw std::invalid_argument("make_city_nav: need 1 <= side_street_length < main_road_length");
  }
  if (spec.block_delay < 1) throw std::invalid_argument("make_city_nav: block_delay must be >= 1");
  if (!(spec.p_blocked >= 0.0 && spec.p_blocked <= 1.0)) {
    throw std::invalid_argument("make_city_nav: p_blocked must lie in [0, 1]");
  }
  const int main = spec.main_road_length;
  const int side = spec.side_street_length;
  const int delay = spec.block_delay;
  const int num_states = main + side + delay;
  const auto layout = city_nav_layout(spec);
  const int fork = layout.fork;
  const int goal = layout.goal;
  const int dead_end = layout.dead_end;

  auto main_cell = [&](int i) { return i >= main ? goal : i; };                // i-th step along the main road
  auto side_cell = [&](int j) { return j >= side ? goal : main + j; };         // j-th step along the side street
  auto return_cell = [&](int j) { return j >= delay ? fork : dead_end + j; };  // j-th step back from the dead end

  auto build = [&](bool blocked) {
    TabularMdp m = TabularMdp::zeros(num_states, 3, spec.gamma);
    m.initial_dist[static_cast<std::size_t>(fork)] = 1.0;
    for (int s = 0; s < num_states; ++s) {
      for (int a = 0; a < 3; ++a) set_move(m, s, a, s, -1.0);
    }
    set_move(m, fork, city_action::advance, main_cell(1), -1.0);
    set_move(m, fork, city_action::side, blocked ? dead_end : side_cell(1), -1.0);
    for (int i = 1; i < main; ++i) set_move(m, main_cell(i), city_action::advance, main_cell(i + 1), -1.0);
    for (int j = 1; j < side; ++j) set_move(m, side_cell(j), city_action::advance, side_cell(j + 1), -1.0);
    for (int j = 0; j < delay; ++j) set_move(m, return_cell(j), city_action::back, return_cell(j + 1), -1.0);
    m.make_terminal(goal);
    return m;
  };

  MdpPosterior posterior;
  posterior.hypotheses.push_back(build(false));
  posterior.hypotheses.push_back(build(true));
  posterior.weights = {1.0 - spec.p_blocked, spec.p_blocked};
  return posterior;
}

}  // namespace epipomdp

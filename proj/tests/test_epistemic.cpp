#include <doctest.h>

#include <cmath>
#include <random>

#include "epipomdp/environments.hpp"
#include "epipomdp/epistemic_pomdp.hpp"
#include "epipomdp/error.hpp"
#include "epipomdp/simulate.hpp"
#include "oracles.hpp"

using namespace epipomdp;

namespace {

// Right for n steps, then left forever.
class RightThenLeft final : public Policy {
 public:
  explicit RightThenLeft(int n) : n_(n) {}
  PolicyMemory initial_memory() const override { return {0.0}; }
  void action_probs(int, const PolicyMemory& m, std::span<double> out) const override {
    one_hot(out, m[0] < n_ ? chain_action::right : chain_action::left);
  }
  PolicyMemory observe(const PolicyMemory& m, const Transition&) const override { return {m[0] + 1.0}; }

 private:
  int n_;
};

MdpPosterior single(const MdpPosterior& post, std::size_t k) { return {{post.hypotheses[k]}, {1.0}}; }

}  // namespace

TEST_CASE("product pomdp structure") {
  const auto chain = make_chain({5, BoundaryRule::reflect});
  const auto pomdp = build_epistemic_pomdp(chain);
  CHECK(pomdp.num_hidden_states() == 2 * chain.num_states());
  CHECK(pomdp.initial(pomdp.hidden_index(5, 0)) == doctest::Approx(0.5));
  CHECK(pomdp.transition(pomdp.hidden_index(4, 0), 1, pomdp.hidden_index(5, 1)) == 0.0);

  const auto one = build_epistemic_pomdp(single(chain, 0));
  CHECK(one.num_hidden_states() == chain.num_states());
  const auto& m = chain.hypotheses[0];
  for (int s = 0; s < m.num_states; ++s) {
    CHECK(one.observation(s) == s);
    for (int a = 0; a < 2; ++a) {
      CHECK(one.reward(s, a) == m.r(s, a));
      for (int s2 = 0; s2 < m.num_states; ++s2) CHECK(one.transition(s, a, s2) == m.p(s, a, s2));
    }
  }
}

TEST_CASE("bayes-optimal value on the chain is -2n") {
  CHECK(solve_bayes_optimal(make_chain({1, BoundaryRule::reflect}), 10).j_bayes == -2.0);
  CHECK(solve_bayes_optimal(make_chain({5, BoundaryRule::reflect}), 30).j_bayes == -10.0);
  const auto sol = solve_bayes_optimal(make_chain({8, BoundaryRule::reflect}), 48);
  CHECK(sol.j_bayes == -16.0);
  CHECK(sol.tail_bound == 0.0);
}

TEST_CASE("solver matches a plain history-tree recursion") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 6; ++trial) {
    const auto post = oracle::random_posterior(gen, 4, 2, 2 + trial % 2, 0.9);
    const int horizon = 4;
    const double expected = oracle::history_tree_j_bayes(post, horizon);
    CHECK(std::abs(solve_bayes_optimal(post, horizon).j_bayes - expected) < 1e-9);
  }
}

TEST_CASE("single hypothesis solution is finite-horizon value iteration") {
  std::mt19937_64 gen(5);
  const auto post = oracle::random_posterior(gen, 5, 3, 1, 0.9);
  const int horizon = 7;
  const auto q = q_value_iteration(post.hypotheses[0], horizon);
  const double v0 = *std::max_element(q.begin(), q.begin() + 3);
  CHECK(solve_bayes_optimal(post, horizon).j_bayes == doctest::Approx(v0).epsilon(1e-12));
}

TEST_CASE("node budget") {
  CHECK_THROWS_AS(solve_bayes_optimal(make_chain({5, BoundaryRule::reflect}), 30, {10}), NodeBudgetExceeded);
}

TEST_CASE("exact evaluation of policies") {
  const auto chain = make_chain({5, BoundaryRule::reflect});
  const MarkovPolicyAdapter uniform(MarkovPolicy::uniform(chain.num_states(), 2));
  // truncation tail of the uniform walk is far below the tolerance at 2000 steps
  CHECK(evaluate_j_bayes_exact(chain, uniform, 2000).value == doctest::Approx(-75.0).epsilon(1e-6));
  CHECK(evaluate_j_bayes_exact(chain, RightThenLeft(5), 30).value == -10.0);

  std::mt19937_64 gen(3);
  const auto post = oracle::random_posterior(gen, 6, 2, 1, 0.9);
  const auto pi = oracle::random_markov_policy(gen, 6, 2);
  const double expected = markov_policy_return(post.hypotheses[0], pi);
  CHECK(evaluate_j_bayes_exact(post, MarkovPolicyAdapter(pi), 400).value == doctest::Approx(expected).epsilon(1e-9));
  CHECK(markov_j_bayes(post, pi, 400) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("monte carlo evaluation brackets the exact value") {
  const auto chain = make_chain({3, BoundaryRule::reflect});
  const RightThenLeft pi(3);
  const auto mc = evaluate_j_bayes_mc(chain, pi, 30, {4000, 1});
  CHECK(std::abs(mc.value + 6.0) < 3.0 * mc.std_error + 1e-12);
}

TEST_CASE("product pomdp evaluation equals the posterior average") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 5; ++trial) {
    const auto post = oracle::random_posterior(gen, 5, 2, 3, 0.9);
    const oracle::PreviousStatePolicy pi(5, 2, gen);
    const double a = evaluate_in_product_pomdp(build_epistemic_pomdp(post), pi, 8);
    const double b = evaluate_j_bayes_exact(post, pi, 8).value;
    CHECK(std::abs(a - b) < 1e-9);
  }
}

TEST_CASE("markov search") {
  const auto chain = make_chain({5, BoundaryRule::reflect});
  MarkovSearch grid;
  const auto res = best_markov_policy_search(single(chain, 0), 200, grid);
  CHECK(res.j_bayes == doctest::Approx(-5.0).epsilon(1e-9));

  const auto both = best_markov_policy_search(chain, 2000, grid);
  for (double v : both.values) CHECK(v <= -12.5);
}

TEST_CASE("homogeneous p = 0.5 is the best homogeneous chain policy") {
  const auto chain = make_chain({5, BoundaryRule::reflect});
  double best = -1e300;
  int best_i = 0;
  for (int i = 1; i <= 9; ++i) {
    MarkovPolicy pi = MarkovPolicy::uniform(chain.num_states(), 2);
    for (int s = 0; s < chain.num_states(); ++s) {
      pi.action_probs[static_cast<std::size_t>(2 * s)] = 1.0 - i / 10.0;
      pi.action_probs[static_cast<std::size_t>(2 * s + 1)] = i / 10.0;
    }
    const double j = markov_j_bayes(chain, pi, 5000);
    if (i == 5) CHECK(std::abs(j + 75.0) < 1e-6);
    if (j > best) {
      best = j;
      best_i = i;
    }
  }
  CHECK(best_i == 5);
}

TEST_CASE("chain construction") {
  for (int n : {1, 3, 5}) {
    const auto chain = make_chain({n, BoundaryRule::reflect});
    CHECK(chain.num_states() == 2 * n + 1);
    CHECK(validate_posterior(chain).empty());
    const auto& a = chain.hypotheses[0];
    const auto& b = chain.hypotheses[1];
    for (int s = 0; s < a.num_states; ++s) {
      for (int act = 0; act < 2; ++act) {
        bool same = a.r(s, act) == b.r(s, act);
        for (int s2 = 0; s2 < a.num_states; ++s2) same = same && a.p(s, act, s2) == b.p(s, act, s2);
        if (!same) CHECK((s == 0 || s == 2 * n));
      }
    }
  }
}

TEST_CASE("locked doors construction") {
  for (const auto& spec : {LockedDoorsSpec::room(), LockedDoorsSpec::corridor()}) {
    const auto post = make_locked_doors(spec);
    CHECK(post.size() == spec.doors.size());
    CHECK(validate_posterior(post).empty());
    for (std::size_t d = 0; d < spec.doors.size(); ++d) {
      const Door& door = spec.doors[d];
      const int s = door.y * spec.width + door.x;
      const int a = static_cast<int>(door.outward);
      CHECK(post.hypotheses[d].p(s, a, s) == 0.0);
      CHECK(post.hypotheses[d].p(s, a, locked_doors_exit_state(spec)) == 1.0);
    }
  }
}

TEST_CASE("corridor optimum: nearest door first") {
  const auto spec = LockedDoorsSpec::corridor();
  const auto post = make_locked_doors(spec);
  const auto sol = solve_bayes_optimal(post, spec.horizon);
  const double g = spec.gamma;
  // west open: one step then exit; east open: step, bump, three steps back, exit
  const double expected = 0.5 * -1.0 + 0.5 * -(1 + g + g * g + g * g * g + g * g * g * g);
  CHECK(sol.j_bayes == doctest::Approx(expected).epsilon(1e-12));
  const int start = spec.start_y * spec.width + spec.start_x;
  CHECK(sol.find(start, post.weights, 0)->action == static_cast<int>(Direction::west));
}

TEST_CASE("room optimum walks to a nearest door first") {
  const auto spec = LockedDoorsSpec::room();
  const auto post = make_locked_doors(spec);
  const auto sol = solve_bayes_optimal(post, spec.horizon);
  const BayesOptimalPolicy pi(sol, post);
  for (std::size_t truth = 0; truth < post.size(); ++truth) {
    Rng rng(0);
    const auto traj = sample_trajectory(post.hypotheses[truth], pi, spec.horizon, rng);
    REQUIRE(!traj.empty());
    CHECK(traj.back().done);
    // the first door touched is one of the two closest to the start column
    for (const auto& t : traj) {
      bool at_door = false;
      for (const Door& d : spec.doors) at_door = at_door || (t.state == d.y * spec.width + d.x && t.action == static_cast<int>(d.outward));
      if (at_door) {
        const int x = t.state % spec.width;
        CHECK(std::abs(x - spec.start_x) == 1);
        break;
      }
    }
  }
}

TEST_CASE("city navigation") {
  CityNavSpec spec;
  const auto post = make_city_nav(spec);
  CHECK(validate_posterior(post).empty());
  CHECK(solve_bayes_optimal(post, 50).j_bayes == -9.0);

  CityNavSpec clear = spec;
  clear.p_blocked = 0.0;
  CHECK(solve_bayes_optimal(make_city_nav(clear), 50).j_bayes == -6.0);

  // always taking the side street never arrives when it is blocked
  const auto layout = city_nav_layout(spec);
  std::vector<int> side(static_cast<std::size_t>(post.num_states()), city_action::side);
  const MarkovPolicy pi = MarkovPolicy::deterministic(side, post.num_actions());
  Rng rng(0);
  const auto traj = sample_trajectory(post.hypotheses[1], MarkovPolicyAdapter(pi), 50, rng);
  CHECK(traj.size() == 50);
  CHECK(traj.back().next_state != layout.goal);
}

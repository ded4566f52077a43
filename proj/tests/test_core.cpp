#include <doctest.h>

#include <cmath>
#include <random>

#include "epipomdp/birth_death.hpp"
#include "epipomdp/environments.hpp"
#include "epipomdp/error.hpp"
#include "epipomdp/mdp.hpp"
#include "epipomdp/simulate.hpp"
#include "oracles.hpp"

using namespace epipomdp;

namespace {

TabularMdp two_state() {
  TabularMdp m = TabularMdp::zeros(2, 1, 0.9);
  m.initial_dist[0] = 1.0;
  m.p(0, 0, 1) = 1.0;
  m.r(0, 0) = -1.0;
  m.make_terminal(1);
  return m;
}

TabularMdp self_loop(double reward, double gamma) {
  TabularMdp m = TabularMdp::zeros(1, 1, gamma);
  m.initial_dist[0] = 1.0;
  m.p(0, 0, 0) = 1.0;
  m.r(0, 0) = reward;
  return m;
}

}  // namespace

TEST_CASE("validate_mdp accepts a well-formed mdp") { CHECK(validate_mdp(two_state()).empty()); }

TEST_CASE("validate_mdp flags a short row") {
  TabularMdp m = two_state();
  m.p(0, 0, 1) = 0.9;
  const auto report = validate_mdp(m);
  REQUIRE(report.size() == 1);
  CHECK(report[0].rule == "row-sum");
}

TEST_CASE("validate_mdp flags undiscounted mdp with no reachable terminal") {
  const auto report = validate_mdp(self_loop(-1.0, 1.0));
  REQUIRE(report.size() == 1);
  CHECK(report[0].rule == "divergent-return");
  CHECK_THROWS_AS(require_valid(self_loop(-1.0, 1.0)), std::invalid_argument);
}

TEST_CASE("policy evaluation on single-state loops") {
  const auto pi = MarkovPolicy::uniform(1, 1);
  CHECK(evaluate_markov_policy_exact(self_loop(0.0, 0.9), pi)[0] == doctest::Approx(0.0));
  CHECK(evaluate_markov_policy_exact(self_loop(1.0, 0.5), pi)[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("uniform walk on the chain costs 75 steps") {
  const auto post = make_chain({5, BoundaryRule::reflect});
  const auto pi = MarkovPolicy::uniform(post.num_states(), post.num_actions());
  // reflected walk of length L from distance m: L^2 - m^2
  const double expected = 10.0 * 10.0 - 5.0 * 5.0;
  CHECK(std::abs(markov_policy_return(post.hypotheses[0], pi) + expected) < 1e-9);
  CHECK(std::abs(markov_policy_return(post.hypotheses[1], pi) + expected) < 1e-9);
}

TEST_CASE("exact policy evaluation agrees with Monte Carlo") {
  std::mt19937_64 gen(7);
  const auto post = oracle::random_posterior(gen, 5, 2, 1, 0.9);
  const auto& m = post.hypotheses[0];
  const auto pi = oracle::random_markov_policy(gen, 5, 2);
  const double exact = markov_policy_return(m, pi);
  Rng rng(3);
  const MarkovPolicyAdapter policy(pi);
  const int episodes = 100000;
  double sum = 0.0, sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const auto traj = sample_trajectory(m, policy, 400, rng);
    double g = 0.0, disc = 1.0;
    for (const auto& t : traj) {
      g += disc * t.reward;
      disc *= m.discount;
    }
    sum += g;
    sq += g * g;
  }
  const double mean = sum / episodes;
  const double se = std::sqrt((sq / episodes - mean * mean) / episodes);
  CHECK(std::abs(mean - exact) < 3.0 * se + 1e-6);
}

TEST_CASE("q_value_iteration on a loop approaches the geometric sum") {
  const auto q = q_value_iteration(self_loop(1.0, 0.5), 60);
  CHECK(q[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("sample_trajectory basics") {
  Rng rng(1);
  const MarkovPolicyAdapter pi(MarkovPolicy::uniform(2, 1));
  const auto traj = sample_trajectory(two_state(), pi, 10, rng);
  REQUIRE(traj.size() == 1);
  CHECK(traj[0].done);
  CHECK(sample_trajectory(two_state(), pi, 0, rng).empty());

  const auto chain = make_chain({5, BoundaryRule::reflect});
  std::vector<int> right(static_cast<std::size_t>(chain.num_states()), chain_action::right);
  const MarkovPolicyAdapter always_right(MarkovPolicy::deterministic(right, 2));
  const auto walk = sample_trajectory(chain.hypotheses[0], always_right, 20, rng);
  CHECK(walk.size() == 5);
  double total = 0.0;
  for (const auto& t : walk) total += t.reward;
  CHECK(total == -5.0);
}

TEST_CASE("offline dataset tags and counts") {
  MdpPosterior single{{two_state()}, {1.0}};
  const auto d = generate_offline_dataset(single, MarkovPolicy::uniform(2, 1), 3, 10, 0);
  CHECK(d.num_episodes() == 3);
  for (const auto& t : d.transitions) CHECK(t.source_hypothesis == 0);

  const auto chain = make_chain({2, BoundaryRule::reflect});
  const auto big = generate_offline_dataset(chain, MarkovPolicy::uniform(chain.num_states(), 2), 10000, 1, 5);
  int zeros = 0;
  for (std::size_t e = 0; e < big.num_episodes(); ++e) zeros += big.episode(e)[0].source_hypothesis == 0;
  CHECK(std::abs(zeros - 5000) < 3 * 50);

  CHECK_THROWS_AS(generate_offline_dataset(single, MarkovPolicy::uniform(2, 1), 0, 10, 0), EmptyDataset);
}

TEST_CASE("same seed gives the same dataset") {
  const auto chain = make_chain({3, BoundaryRule::reflect});
  const auto pi = MarkovPolicy::uniform(chain.num_states(), 2);
  CHECK(generate_offline_dataset(chain, pi, 50, 20, 9).transitions ==
        generate_offline_dataset(chain, pi, 50, 20, 9).transitions);
}

TEST_CASE("birth-death closed forms match a linear solve") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 7;
    std::vector<double> p(static_cast<std::size_t>(n) + 1);
    for (double& x : p) x = u(gen);
    for (const auto rule : {BoundaryRule::hold, BoundaryRule::reflect}) {
      const bool reflect = rule == BoundaryRule::reflect;
      const auto t = birth_death_hitting_times(p, n, rule);
      CHECK(t.up == doctest::Approx(oracle::walk_absorption_time(p, n, 0, reflect)).epsilon(1e-10));
      // walking down is walking up in the mirrored chain
      std::vector<double> mirrored(p.size());
      for (int i = 0; i <= n; ++i) mirrored[static_cast<std::size_t>(i)] = 1.0 - p[static_cast<std::size_t>(n - i)];
      CHECK(t.down == doctest::Approx(oracle::walk_absorption_time(mirrored, n, 0, reflect)).epsilon(1e-10));
    }
  }
}

TEST_CASE("reflected symmetric walk absorbs in L^2 - m^2") {
  for (int L : {3, 6, 10}) {
    std::vector<double> p(static_cast<std::size_t>(L) + 1, 0.5);
    for (int m = 0; m < L; ++m) {
      const double t = birth_death_time_up(p, m, L, BoundaryRule::reflect);
      CHECK(t == doctest::Approx(static_cast<double>(L * L - m * m)).epsilon(1e-12));
    }
  }
}

TEST_CASE("n = 1 passage time agrees with Monte Carlo") {
  const std::vector<double> p = {0.5, 0.5};
  const double up = birth_death_hitting_times(p, 1, BoundaryRule::hold).up;
  std::mt19937_64 gen(5);
  std::bernoulli_distribution coin(0.5);
  const int runs = 200000;
  double sum = 0.0, sq = 0.0;
  for (int r = 0; r < runs; ++r) {
    int steps = 1;
    while (!coin(gen)) ++steps;
    sum += steps;
    sq += static_cast<double>(steps) * steps;
  }
  const double mean = sum / runs;
  const double se = std::sqrt((sq / runs - mean * mean) / runs);
  CHECK(up == doctest::Approx(2.0));
  CHECK(std::abs(mean - up) < 3.0 * se);
}

TEST_CASE("unit odds ratio minimizes the round trip among homogeneous rates") {
  const int n = 6;
  double best = 1e300;
  double best_p = 0.0;
  for (int i = 1; i <= 9; ++i) {
    const double p = i / 10.0;
    const std::vector<double> probs(static_cast<std::size_t>(n) + 1, p);
    const auto t = birth_death_hitting_times(probs, n, BoundaryRule::reflect);
    if (t.up + t.down < best) {
      best = t.up + t.down;
      best_p = p;
    }
  }
  CHECK(best_p == doctest::Approx(0.5));
}

TEST_CASE("degenerate rates are rejected") {
  const std::vector<double> p = {0.5, 1.0, 0.5};
  CHECK_THROWS_AS(birth_death_hitting_times(p, 2), DegenerateRate);
}

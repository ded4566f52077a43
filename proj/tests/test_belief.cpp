#include <doctest.h>

#include <cmath>
#include <random>

#include "epipomdp/belief.hpp"
#include "epipomdp/environments.hpp"
#include "epipomdp/error.hpp"
#include "oracles.hpp"

using namespace epipomdp;

namespace {

// Two hypotheses over 2 states that differ only in where (0, 0) leads.
MdpPosterior split_posterior(double p1, double p2) {
  MdpPosterior post;
  for (double p : {p1, p2}) {
    TabularMdp m = TabularMdp::zeros(2, 1, 0.9);
    m.initial_dist[0] = 1.0;
    m.p(0, 0, 1) = p;
    m.p(0, 0, 0) = 1.0 - p;
    m.r(0, 0) = -1.0;
    m.make_terminal(1);
    post.hypotheses.push_back(m);
  }
  post.weights = {0.5, 0.5};
  return post;
}

}  // namespace

TEST_CASE("exact update with equal likelihoods keeps the belief") {
  const auto post = split_posterior(0.3, 0.3);
  const Belief b({0.25, 0.75});
  const auto out = exact_belief_update(b, post, {0, 0, -1.0, 1, true, std::nullopt});
  CHECK(out[0] == doctest::Approx(0.25));
  CHECK(out[1] == doctest::Approx(0.75));
}

TEST_CASE("exact update weights by likelihood") {
  const auto post = split_posterior(0.8, 0.2);
  const auto out = exact_belief_update(Belief::uniform(2), post, {0, 0, -1.0, 1, true, std::nullopt});
  CHECK(out[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("a bump against a door rules out the hypothesis where it is open") {
  const auto spec = LockedDoorsSpec::room();
  const auto post = make_locked_doors(spec);
  const Door& d = spec.doors[2];
  const int s = d.y * spec.width + d.x;
  const int a = static_cast<int>(d.outward);
  // in every other hypothesis the door is a self-loop costing -1
  const Transition bump{s, a, -1.0, s, false, std::nullopt};
  const auto out = exact_belief_update(Belief::uniform(4), post, bump);
  CHECK(out[0] == doctest::Approx(1.0 / 3));
  CHECK(out[1] == doctest::Approx(1.0 / 3));
  CHECK(out[2] == 0.0);
  CHECK(out[3] == doctest::Approx(1.0 / 3));
}

TEST_CASE("transition impossible under every live hypothesis") {
  const auto post = split_posterior(0.8, 0.2);
  CHECK_THROWS_AS(exact_belief_update(Belief::uniform(2), post, {0, 0, -5.0, 1, true, std::nullopt}),
                  ImpossibleTransition);
  CHECK_THROWS_AS(exact_belief_update(Belief::vertex(2, 0), split_posterior(0.0, 0.5),
                                      {0, 0, -1.0, 1, true, std::nullopt}),
                  ImpossibleTransition);
}

TEST_CASE("surrogate reweighting") {
  const std::vector<double> same = {0.7, 0.7, -0.7};
  const Belief b({0.2, 0.3, 0.5});
  const auto kept = reweight_by_td_errors(b, same, 2.0);
  for (std::size_t k = 0; k < 3; ++k) CHECK(kept[k] == doctest::Approx(b[k]).epsilon(1e-12));

  const std::vector<double> delta = {0.0, 1.0};
  const auto out = reweight_by_td_errors(Belief::uniform(2), delta, 1.0);
  CHECK(out[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(out[1] == doctest::Approx(0.2689).epsilon(1e-4));
}

TEST_CASE("surrogate ratio law on random inputs") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.05, 1.0), d(-2.0, 2.0), temp(0.1, 3.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + trial % 4;
    std::vector<double> w(n), delta(n);
    for (auto& x : w) x = u(gen);
    for (auto& x : delta) x = d(gen);
    const Belief b = Belief::from_weights(w);
    const double T = temp(gen);
    const auto out = reweight_by_td_errors(b, delta, T);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double lhs = out[i] / out[j];
        const double rhs = b[i] / b[j] * std::exp(T * (delta[j] * delta[j] - delta[i] * delta[i]));
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("dirichlet sampler") {
  Rng rng(4);
  CHECK(sample_belief({0.1, 1}, rng)[0] == 1.0);

  const int draws = 100000;
  double sum = 0.0, sq = 0.0;
  int near_vertex = 0;
  for (int i = 0; i < draws; ++i) {
    const auto b = sample_belief({0.1, 3}, rng);
    sum += b[0];
    sq += b[0] * b[0];
    near_vertex += std::max({b[0], b[1], b[2]}) > 0.9;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sq / draws - mean * mean) / draws);
  CHECK(std::abs(mean - 1.0 / 3) < 3.0 * se);
  CHECK(near_vertex > draws / 2);
}

TEST_CASE("grid snapping") {
  const BeliefGrid g2(2, 2);
  const std::vector<double> b = {0.6, 0.4};
  const auto c = g2.cell(g2.snap(b));
  CHECK(c[0] == 1);
  CHECK(c[1] == 1);

  const BeliefGrid g(3, 6);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.snap(g.belief(i).probs()) == i);
  const auto uniform = Belief::uniform(3);
  const auto cu = g.cell(g.snap(uniform.probs()));
  CHECK((cu[0] == 2 && cu[1] == 2 && cu[2] == 2));

  Rng rng(8);
  for (int n : {2, 3, 4}) {
    for (int G : {1, 3, 10}) {
      const BeliefGrid grid(n, G);
      for (int i = 0; i < 300; ++i) {
        const auto x = sample_belief({1.0, n}, rng);
        CHECK(grid.snap(x.probs()) == oracle::brute_force_snap(grid, x.vec()));
      }
    }
  }
}

TEST_CASE("grid enumerates compositions in lexicographic order") {
  const BeliefGrid g(3, 4);
  CHECK(g.size() == 15);
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    const auto a = g.cell(i), b = g.cell(i + 1);
    CHECK(std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end()));
    CHECK(g.index_of(a) == i);
  }
}

TEST_CASE("posterior from data") {
  const auto post = split_posterior(0.8, 0.2);
  const std::vector<Transition> none;
  const std::vector<double> prior = {0.3, 0.7};
  auto out = posterior_from_dataset(post.hypotheses, prior, none);
  CHECK(out.weights[0] == doctest::Approx(0.3));

  const std::vector<Transition> one = {{0, 0, -1.0, 1, true, std::nullopt}};
  out = posterior_from_dataset(post.hypotheses, post.weights, one);
  CHECK(out.weights[0] == doctest::Approx(0.8));
  CHECK(out.weights[1] == doctest::Approx(0.2));

  const auto only_first = split_posterior(0.5, 0.0);
  out = posterior_from_dataset(only_first.hypotheses, only_first.weights, one);
  CHECK(out.weights[0] == 1.0);
  CHECK(out.weights[1] == 0.0);

  const std::vector<Transition> bad = {{0, 0, -9.0, 1, true, std::nullopt}};
  CHECK_THROWS_AS(posterior_from_dataset(post.hypotheses, post.weights, bad), AllHypothesesRejected);
}

// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <algorithm>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "epipomdp/ape_v.hpp"
#include "epipomdp/baselines.hpp"
#include "epipomdp/belief.hpp"
#include "epipomdp/environments.hpp"
#include "epipomdp/epistemic_pomdp.hpp"
#include "epipomdp/simulate.hpp"
#include "oracles.hpp"

using namespace epipomdp;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what) {
  std::printf("%s  criterion %d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& what) {
  std::printf("INFO  %s\n", what.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

EnvShape shape_of(const MdpPosterior& post) {
  return {post.num_states(), post.num_actions(), post.discount(), static_cast<int>(post.size())};
}

OfflineDataset uniform_data(const MdpPosterior& post, int episodes, int horizon, std::uint64_t seed) {
  return generate_offline_dataset(post, MarkovPolicy::uniform(post.num_states(), post.num_actions()), episodes,
                                  horizon, derive_seed(seed, "dataset"));
}

struct Outcome {
  double success = 0.0;
  double mean_return = 0.0;  // undiscounted
};

Outcome rollouts(const MdpPosterior& post, const Policy& pi, int horizon, int episodes, std::uint64_t seed) {
  Rng rng = make_rng(seed, "eval");
  Outcome out;
  for (int e = 0; e < episodes; ++e) {
    const auto k = sample_categorical(post.weights, rng);
    const auto traj = sample_trajectory(post.hypotheses[k], pi, horizon, rng);
    out.success += (!traj.empty() && traj.back().done) ? 1.0 : 0.0;
    for (const auto& t : traj) out.mean_return += t.reward;
  }
  out.success /= episodes;
  out.mean_return /= episodes;
  return out;
}

double success_rate(const MdpPosterior& post, const Policy& pi, int horizon, int episodes, std::uint64_t seed) {
  return rollouts(post, pi, horizon, episodes, seed).success;
}

void chain_adaptive() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (int n : {1, 3, 5, 8}) {
    const double j = solve_bayes_optimal(make_chain({n, BoundaryRule::reflect}), 3 * n).j_bayes;
    ok = ok && j == -2.0 * n;
    detail += " n=" + std::to_string(n) + ":" + fmt("%g", j);
  }
  const double secs = seconds_since(t0);
  report(1, ok && secs < 5.0, "Bayes-optimal chain value equals -2n exactly;" + detail + fmt(" (%.2f s)", secs));
}

void chain_markov() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto chain = make_chain({5, BoundaryRule::reflect});
  const int horizon = 3000;
  double worst_gap = -1e300;
  std::size_t searched = 0;
  MarkovSearch grid;
  grid.kind = MarkovSearch::Kind::grid;
  MarkovSearch random;
  random.kind = MarkovSearch::Kind::random;
  random.samples = 1000;
  random.seed = 1;
  double best = -1e300;
  for (const auto& search : {grid, random}) {
    const auto res = best_markov_policy_search(chain, horizon, search);
    for (double v : res.values) worst_gap = std::max(worst_gap, v);
    searched += res.values.size();
    best = std::max(best, res.j_bayes);
  }
  // homogeneous p = 0.5 by linear solve, against the reflected-walk formula L^2 - m^2
  const auto pi = MarkovPolicy::uniform(chain.num_states(), 2);
  const double j = 0.5 * markov_policy_return(chain.hypotheses[0], pi) + 0.5 * markov_policy_return(chain.hypotheses[1], pi);
  const double oracle_value = -(10.0 * 10.0 - 5.0 * 5.0);
  const double secs = seconds_since(t0);
  const bool ok = worst_gap <= -12.5 && std::abs(j - oracle_value) < 1e-6 && secs < 30.0;
  report(2, ok,
         std::to_string(searched) + " searched Markov policies on Chain(5), best " + fmt("%.6g", best) +
             " <= -12.5; uniform policy " + fmt("%.9g", j) + " vs -75" + fmt(" (%.2f s)", secs));
}

void oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    std::string name;
    MdpPosterior post;
    int horizon;
  };
  std::vector<Case> cases;
  cases.push_back({"city_nav(main=10,side=6)", make_city_nav({}), 50});
  const auto corridor = LockedDoorsSpec::corridor();
  cases.push_back({"corridor", make_locked_doors(corridor), corridor.horizon});

  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const double optimum = solve_bayes_optimal(c.post, c.horizon).j_bayes;
    TrainConfig cfg;
    cfg.steps = 300'000;
    cfg.grid_resolution = 10;
    cfg.update_rule = UpdateRule::exact;
    cfg.empirical_fraction = 0.5;
    cfg.seed = derive_seed(0, "train");
    const auto data = uniform_data(c.post, 1000, c.horizon, 0);
    const AdaptiveAgent agent = train_ape_v(data, &c.post, cfg, shape_of(c.post));
    const AdaptivePolicy pi(agent, &c.post);
    const double j = evaluate_j_bayes_exact(c.post, pi, c.horizon).value;
    const double rel = std::abs(j - optimum) / std::abs(optimum);
    ok = ok && rel <= 0.05;
    char buf[160];
    std::snprintf(buf, sizeof buf, " %s: APE-V %.4f vs optimum %.4f (%.2f%%);", c.name.c_str(), j, optimum, 100 * rel);
    detail += buf;
  }
  const double secs = seconds_since(t0);
  report(3, ok && secs < 120.0,
         "exact-mode APE-V (G=10, 3e5 steps) within 5% of the Bayes optimum;" + detail + fmt(" (%.1f s)", secs));
}

void locked_doors_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = LockedDoorsSpec::room();
  const auto post = make_locked_doors(spec);
  const int episodes = 1000;
  const std::vector<std::uint64_t> seeds = {0, 1, 2, 3};

  double ape = 0.0, ape_exact = 0.0, eval_only = 0.0, mean = 0.0;
  std::vector<double> statics(post.size(), 0.0);
  std::vector<double> static_returns(post.size(), 0.0);
  double ape_return = 0.0;
  std::string per_seed;
  for (const auto seed : seeds) {
    const auto data = uniform_data(post, 1000, spec.horizon, seed);

    TrainConfig cfg;
    cfg.steps = 1'000'000;
    cfg.temperature = 30.0;
    cfg.empirical_fraction = 0.9;
    cfg.target_refresh = 50'000;
    cfg.seed = derive_seed(seed, "train");
    const AdaptiveAgent agent = train_ape_v(data, &post, cfg, shape_of(post));
    const Outcome o = rollouts(post, AdaptivePolicy(agent, &post), spec.horizon, episodes, seed);
    const double a = o.success;
    ape += a / seeds.size();
    ape_return += o.mean_return / seeds.size();
    per_seed += fmt(" %.3f", a);
    for (std::size_t k = 0; k < post.size(); ++k) {
      const MarkovPolicyAdapter frozen(static_belief_policy(agent.critic, static_cast<int>(k)));
      const Outcome so = rollouts(post, frozen, spec.horizon, episodes, seed);
      statics[k] += so.success / seeds.size();
      static_returns[k] += so.mean_return / seeds.size();
    }

    TrainConfig exact_cfg;
    exact_cfg.steps = 1'000'000;
    exact_cfg.update_rule = UpdateRule::exact;
    exact_cfg.empirical_fraction = 0.5;
    exact_cfg.seed = derive_seed(seed, "train");
    const AdaptiveAgent oracle_agent = train_ape_v(data, &post, exact_cfg, shape_of(post));
    ape_exact += success_rate(post, AdaptivePolicy(oracle_agent, &post), spec.horizon, episodes, seed) / seeds.size();

    QLearningConfig q;
    q.seed = derive_seed(seed, "train");
    const EnsembleCritic members = train_member_q(data, q, shape_of(post));
    const AdaptiveAgent eval_agent = make_eval_only_adaptive(members, 10.0);
    eval_only += success_rate(post, AdaptivePolicy(eval_agent), spec.horizon, episodes, seed) / seeds.size();
    mean += success_rate(post, MarkovPolicyAdapter(mean_ensemble_policy(members)), spec.horizon, episodes, seed) /
            seeds.size();
  }
  double worst_static = 0.0;
  std::string statics_text;
  for (double s : statics) {
    worst_static = std::max(worst_static, s);
    statics_text += fmt(" %.3f", s);
  }
  const double secs = seconds_since(t0);
  const bool ok = ape >= eval_only && eval_only >= mean && ape >= 0.95 && worst_static <= 0.30;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "room success, 4 seeds x 1000 episodes: APE-V %.3f (per seed%s) >= eval-only %.3f >= mean %.3f, "
                "APE-V >= 0.95, static <=0.30:%s",
                ape, per_seed.c_str(), eval_only, mean, statics_text.c_str());
  report(4, ok, buf + fmt(" (%.1f s)", secs));
  const double best_static = *std::max_element(static_returns.begin(), static_returns.end());
  std::snprintf(buf, sizeof buf, "adaptation dominance: APE-V mean return %.3f %s best static-belief mean return %.3f",
                ape_return, ape_return > best_static ? ">" : "<=", best_static);
  info(buf);
  info(fmt("criterion 4 companion: APE-V trained and filtered with exact Bayes updates reaches success %.3f", ape_exact));
}

void belief_correctness() {
  std::mt19937_64 gen(2024);
  double max_err = 0.0;
  int histories = 0;
  while (histories < 1000) {
    std::uniform_int_distribution<int> size(2, 6), hyp(2, 4), len(1, 25);
    const int S = size(gen);
    const int H = hyp(gen);
    const auto post = oracle::random_posterior(gen, S, 2, H, 0.9);
    for (int rep = 0; rep < 10; ++rep, ++histories) {
      // history generated by one hypothesis, so it is consistent with at least one
      Rng rng(gen());
      const auto k = sample_categorical(post.weights, rng);
      const MarkovPolicyAdapter pi(oracle::random_markov_policy(gen, S, 2));
      const auto h = sample_trajectory(post.hypotheses[k], pi, len(gen), rng);
      Belief b = Belief::from_weights(post.weights);
      for (const auto& t : h) b = exact_belief_update(b, post, t);
      const auto batch = posterior_from_dataset(post.hypotheses, post.weights, h);
      for (std::size_t i = 0; i < post.size(); ++i) max_err = std::max(max_err, std::abs(b[i] - batch.weights[i]));
    }
  }

  std::uniform_real_distribution<double> u(0.01, 1.0), d(-3.0, 3.0), temp(0.05, 5.0);
  double max_ratio_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + trial % 5;
    std::vector<double> w(n), delta(n);
    for (auto& x : w) x = u(gen);
    for (auto& x : delta) x = d(gen);
    const Belief b = Belief::from_weights(w);
    const double T = temp(gen);
    const auto out = reweight_by_td_errors(b, delta, T);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double lhs = std::log(out[i] / out[j]);
        const double rhs = std::log(b[i] / b[j]) + T * (delta[j] * delta[j] - delta[i] * delta[i]);
        max_ratio_err = std::max(max_ratio_err, std::abs(lhs - rhs));
      }
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "path independence over %d histories, max error %.2e < 1e-9; surrogate ratio law, max log-ratio "
                "error %.2e over 1000 draws",
                histories, max_err, max_ratio_err);
  report(5, max_err < 1e-9 && max_ratio_err < 1e-9, buf);
}

void product_equivalence() {
  std::mt19937_64 gen(77);
  double max_err = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    std::uniform_int_distribution<int> size(2, 8), hyp(1, 3), acts(2, 3);
    const int S = size(gen);
    const int A = acts(gen);
    const auto post = oracle::random_posterior(gen, S, A, hyp(gen), 0.9);
    const auto pomdp = build_epistemic_pomdp(post);
    const int horizon = 6;
    const MarkovPolicyAdapter markov(oracle::random_markov_policy(gen, S, A));
    const oracle::PreviousStatePolicy history(S, A, gen);
    for (const Policy* pi : {static_cast<const Policy*>(&markov), static_cast<const Policy*>(&history)}) {
      const double a = evaluate_in_product_pomdp(pomdp, *pi, horizon);
      const double b = evaluate_j_bayes_exact(post, *pi, horizon).value;
      max_err = std::max(max_err, std::abs(a - b));
    }
  }
  report(6, max_err < 1e-9,
         "product-POMDP return equals the posterior-averaged return on 20 random instances, max error " +
             fmt("%.2e", max_err));
}

}  // namespace

int main() {
  chain_adaptive();
  chain_markov();
  oracle_equivalence();
  locked_doors_ordering();
  belief_correctness();
  product_equivalence();
  std::printf("EXCLUDED  criterion 7: large-scale benchmark tables and image-based curves are not reproduced "
              "(see README)\n");
  return failures == 0 ? 0 : 1;
}

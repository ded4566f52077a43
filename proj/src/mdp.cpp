#include "epipomdp/mdp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

#include "epipomdp/error.hpp"

namespace epipomdp {

namespace {

constexpr double kRowTolerance = 1e-12;

std::string at(int s, int a) {
  std::ostringstream os;
  os << "(" << s << "," << a << ")";
  return os.str();
}

// States from which some terminal is reachable along edges with positive
// weight under `edge(s, next)`.
template <typename Edge>
std::vector<bool> can_reach_terminal(const TabularMdp& mdp, Edge edge) {
  const int n = mdp.num_states;
  std::vector<std::vector<int>> reverse(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    for (int next = 0; next < n; ++next) {
      if (edge(s, next)) reverse[static_cast<std::size_t>(next)].push_back(s);
    }
  }
  std::vector<bool> reach(static_cast<std::size_t>(n), false);
  std::deque<int> frontier;
  for (int s = 0; s < n; ++s) {
    if (mdp.is_terminal(s)) {
      reach[static_cast<std::size_t>(s)] = true;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    for (int prev : reverse[static_cast<std::size_t>(s)]) {
      if (!reach[static_cast<std::size_t>(prev)]) {
        reach[static_cast<std::size_t>(prev)] = true;
        frontier.push_back(prev);
      }
    }
  }
  return reach;
}

}  // namespace

TabularMdp TabularMdp::zeros(int num_states, int num_actions, double discount) {
  TabularMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.transition.assign(static_cast<std::size_t>(num_states) * num_actions * num_states, 0.0);
  mdp.reward.assign(static_cast<std::size_t>(num_states) * num_actions, 0.0);
  mdp.initial_dist.assign(static_cast<std::size_t>(num_states), 0.0);
  mdp.discount = discount;
  mdp.terminal.assign(static_cast<std::size_t>(num_states), false);
  return mdp;
}

std::vector<int> TabularMdp::terminals() const {
  std::vector<int> out;
  for (int s = 0; s < num_states; ++s) {
    if (is_terminal(s)) out.push_back(s);
  }
  return out;
}

void TabularMdp::make_terminal(int s) {
  terminal[static_cast<std::size_t>(s)] = true;
  for (int a = 0; a < num_actions; ++a) {
    for (int next = 0; next < num_states; ++next) p(s, a, next) = next == s ? 1.0 : 0.0;
    r(s, a) = 0.0;
  }
}

std::span<const Transition> OfflineDataset::episode(std::size_t i) const {
  const std::size_t begin = episode_offsets.at(i);
  const std::size_t end =
      i + 1 < episode_offsets.size() ? episode_offsets[i + 1] : transitions.size();
  return {transitions.data() + begin, end - begin};
}

MarkovPolicy MarkovPolicy::uniform(int num_states, int num_actions) {
  MarkovPolicy pi;
  pi.num_states = num_states;
  pi.num_actions = num_actions;
  pi.action_probs.assign(static_cast<std::size_t>(num_states) * num_actions,
                         1.0 / num_actions);
  return pi;
}

MarkovPolicy MarkovPolicy::deterministic(std::span<const int> actions, int num_actions) {
  MarkovPolicy pi;
  pi.num_states = static_cast<int>(actions.size());
  pi.num_actions = num_actions;
  pi.action_probs.assign(actions.size() * static_cast<std::size_t>(num_actions), 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    pi.action_probs[s * static_cast<std::size_t>(num_actions) + static_cast<std::size_t>(actions[s])] = 1.0;
  }
  return pi;
}

ValidationReport validate_mdp(const TabularMdp& mdp) {
  ValidationReport report;
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  if (S <= 0 || A <= 0) {
    report.push_back({"shape", "mdp", "num_states and num_actions must be positive"});
    return report;
  }
  const auto SA = static_cast<std::size_t>(S) * A;
  if (mdp.transition.size() != SA * S || mdp.reward.size() != SA ||
      mdp.initial_dist.size() != static_cast<std::size_t>(S) ||
      mdp.terminal.size() != static_cast<std::size_t>(S)) {
    report.push_back({"shape", "mdp", "tensor sizes do not match num_states/num_actions"});
    return report;
  }
  if (!(mdp.discount >= 0.0 && mdp.discount <= 1.0)) {
    report.push_back({"discount", "mdp", "discount must lie in [0, 1]"});
  }
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double sum = 0.0;
      bool negative = false;
      for (int next = 0; next < S; ++next) {
        const double q = mdp.p(s, a, next);
        if (q < 0.0 || !std::isfinite(q)) negative = true;
        sum += q;
      }
      if (negative) report.push_back({"negative-prob", at(s, a), "transition row has a negative or non-finite entry"});
      if (std::abs(sum - 1.0) > kRowTolerance) {
        report.push_back({"row-sum", at(s, a), "row sums to " + std::to_string(sum)});
      }
      if (!std::isfinite(mdp.r(s, a))) report.push_back({"reward", at(s, a), "non-finite reward"});
      if (mdp.is_terminal(s) && (mdp.p(s, a, s) != 1.0 || mdp.r(s, a) != 0.0)) {
        report.push_back({"terminal", at(s, a), "terminal state must self-loop with reward 0"});
      }
    }
  }
  double init_sum = 0.0;
  for (double q : mdp.initial_dist) {
    if (q < 0.0) report.push_back({"initial-dist", "rho", "negative initial probability"});
    init_sum += q;
  }
  if (std::abs(init_sum - 1.0) > kRowTolerance) {
    report.push_back({"initial-dist", "rho", "initial distribution sums to " + std::to_string(init_sum)});
  }

  if (mdp.discount == 1.0 && report.empty()) {
    // Under the uniform policy every state reachable from rho must keep a path
    // to some terminal, otherwise returns diverge.
    auto edge = [&](int s, int next) {
      for (int a = 0; a < A; ++a) {
        if (mdp.p(s, a, next) > 0.0) return true;
      }
      return false;
    };
    const auto reach_terminal = can_reach_terminal(mdp, edge);
    std::vector<bool> seen(static_cast<std::size_t>(S), false);
    std::deque<int> frontier;
    for (int s = 0; s < S; ++s) {
      if (mdp.initial_dist[static_cast<std::size_t>(s)] > 0.0) {
        seen[static_cast<std::size_t>(s)] = true;
        frontier.push_back(s);
      }
    }
    int stuck = -1;
    while (!frontier.empty() && stuck < 0) {
      const int s = frontier.front();
      frontier.pop_front();
      if (!reach_terminal[static_cast<std::size_t>(s)]) stuck = s;
      for (int next = 0; next < S; ++next) {
        if (!seen[static_cast<std::size_t>(next)] && edge(s, next)) {
          seen[static_cast<std::size_t>(next)] = true;
          frontier.push_back(next);
        }
      }
    }
    if (stuck >= 0) {
      report.push_back({"divergent-return", "state " + std::to_string(stuck),
                        "discount is 1 but no terminal is reachable from a reachable state"});
    }
  }
  return report;
}

ValidationReport validate_posterior(const MdpPosterior& posterior) {
  ValidationReport report;
  if (posterior.hypotheses.empty()) {
    report.push_back({"posterior", "hypotheses", "posterior has no hypotheses"});
    return report;
  }
  if (posterior.weights.size() != posterior.hypotheses.size()) {
    report.push_back({"posterior", "weights", "one weight per hypothesis required"});
    return report;
  }
  double total = 0.0;
  for (double w : posterior.weights) {
    if (w < 0.0) report.push_back({"posterior", "weights", "negative weight"});
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    report.push_back({"posterior", "weights", "weights sum to " + std::to_string(total)});
  }
  const TabularMdp& first = posterior.hypotheses.front();
  for (std::size_t k = 0; k < posterior.hypotheses.size(); ++k) {
    const TabularMdp& m = posterior.hypotheses[k];
    const std::string where = "hypothesis " + std::to_string(k);
    if (m.num_states != first.num_states || m.num_actions != first.num_actions ||
        m.discount != first.discount || m.initial_dist != first.initial_dist) {
      report.push_back({"posterior", where, "hypotheses must share S, A, discount and rho"});
    }
    for (Violation v : validate_mdp(m)) {
      v.where = where + " " + v.where;
      report.push_back(std::move(v));
    }
  }
  return report;
}

void require_valid(const TabularMdp& mdp) {
  const auto report = validate_mdp(mdp);
  if (!report.empty()) {
    throw std::invalid_argument("invalid mdp: " + report.front().rule + " at " +
                                report.front().where + ": " + report.front().detail);
  }
}

void require_valid(const MdpPosterior& posterior) {
  const auto report = validate_posterior(posterior);
  if (!report.empty()) {
    throw std::invalid_argument("invalid posterior: " + report.front().rule + " at " +
                                report.front().where + ": " + report.front().detail);
  }
}

std::vector<double> evaluate_markov_policy_exact(const TabularMdp& mdp,
                                                 const MarkovPolicy& policy) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  if (policy.num_states != S || policy.num_actions != A) {
    throw std::invalid_argument("evaluate_markov_policy_exact: policy shape mismatch");
  }

  if (mdp.discount == 1.0) {
    auto edge = [&](int s, int next) {
      for (int a = 0; a < A; ++a) {
        if (policy.prob(s, a) > 0.0 && mdp.p(s, a, next) > 0.0) return true;
      }
      return false;
    };
    const auto reach = can_reach_terminal(mdp, edge);
    for (int s = 0; s < S; ++s) {
      if (!reach[static_cast<std::size_t>(s)]) {
        throw SingularSystem("policy-induced chain has a recurrent class without a terminal (state " +
                             std::to_string(s) + ")");
      }
    }
  }

  // Unknowns are the non-terminal states; terminals contribute V = 0.
  std::vector<int> index(static_cast<std::size_t>(S), -1);
  std::vector<int> live;
  for (int s = 0; s < S; ++s) {
    if (!mdp.is_terminal(s)) {
      index[static_cast<std::size_t>(s)] = static_cast<int>(live.size());
      live.push_back(s);
    }
  }
  const auto n = static_cast<Eigen::Index>(live.size());
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int s = live[static_cast<std::size_t>(i)];
    for (int a = 0; a < A; ++a) {
      const double pa = policy.prob(s, a);
      if (pa == 0.0) continue;
      rhs(i) += pa * mdp.r(s, a);
      for (int next = 0; next < S; ++next) {
        const int j = index[static_cast<std::size_t>(next)];
        if (j >= 0) system(i, j) -= mdp.discount * pa * mdp.p(s, a, next);
      }
    }
  }
  Eigen::VectorXd solution = system.fullPivLu().solve(rhs);
  if (!solution.allFinite() || (system * solution - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) {
    throw SingularSystem("linear policy-evaluation system is singular");
  }
  std::vector<double> values(static_cast<std::size_t>(S), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) values[static_cast<std::size_t>(live[static_cast<std::size_t>(i)])] = solution(i);
  return values;
}

double markov_policy_return(const TabularMdp& mdp, const MarkovPolicy& policy) {
  const auto values = evaluate_markov_policy_exact(mdp, policy);
  double j = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) j += mdp.initial_dist[static_cast<std::size_t>(s)] * values[static_cast<std::size_t>(s)];
  return j;
}

}  // namespace epipomdp

namespace epipomdp {

std::vector<double> q_value_iteration(const TabularMdp& mdp, int horizon) {
  if (horizon < 0) throw std::invalid_argument("q_value_iteration: horizon must be non-negative");
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  std::vector<double> q(static_cast<std::size_t>(S) * A, 0.0);
  std::vector<double> v(static_cast<std::size_t>(S), 0.0);
  for (int it = 0; it < horizon; ++it) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double total = 0.0;
        if (!mdp.is_terminal(s)) {
          total = mdp.r(s, a);
          const auto row = mdp.row(s, a);
          for (int next = 0; next < S; ++next) total += mdp.discount * row[next] * v[next];
        }
        q[static_cast<std::size_t>(s) * A + a] = total;
      }
    }
    for (int s = 0; s < S; ++s) {
      const auto* row = q.data() + static_cast<std::size_t>(s) * A;
      v[s] = *std::max_element(row, row + A);
    }
  }
  return q;
}

}  // namespace epipomdp

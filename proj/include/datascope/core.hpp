#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace datascope {

/// Thrown when a numerical invariant that the library itself guarantees is
/// violated (e.g. the two entropy computation routes disagree). The CLI maps
/// this to exit code 3.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbTolerance = 1e-12;
inline constexpr double kOccupancyTolerance = 1e-10;

/// One dynamics entry: p(next, rewards[reward] | s, a) = prob.
struct Outcome {
  std::uint32_t next = 0;
  std::uint32_t reward = 0;  // index into FiniteMDP::rewards
  double prob = 0.0;

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

/// Tabular MDP with a finite reward value set. Dynamics are stored sparsely
/// per (state, action) row, sorted by (next, reward) so that structurally
/// equal MDPs compare equal. Terminal states self-loop with reward 0.
/// Immutable by convention after construction; all operations are pure.
class FiniteMDP {
 public:
  std::uint32_t n_states = 0;
  std::uint32_t n_actions = 0;
  std::vector<double> rewards;  // distinct reward values
  std::vector<std::vector<Outcome>> dynamics;  // [s * n_actions + a]
  double gamma = 0.99;
  std::vector<double> initial_dist;
  std::vector<std::uint8_t> terminal;
  std::uint32_t horizon = 100;

  const std::vector<Outcome>& row(std::uint32_t s, std::uint32_t a) const {
    return dynamics[static_cast<std::size_t>(s) * n_actions + a];
  }
  std::vector<Outcome>& row(std::uint32_t s, std::uint32_t a) {
    return dynamics[static_cast<std::size_t>(s) * n_actions + a];
  }
  bool is_terminal(std::uint32_t s) const { return terminal[s] != 0; }

  /// Index of the reward value 0, required for terminal self-loops.
  std::uint32_t zero_reward_index() const {
    for (std::uint32_t i = 0; i < rewards.size(); ++i)
      if (rewards[i] == 0.0) return i;
    throw std::invalid_argument("FiniteMDP: reward value 0 not present");
  }

  bool deterministic() const {
    for (const auto& r : dynamics)
      for (const Outcome& o : r)
        if (o.prob > 0.0 && o.prob < 1.0) return false;
    return true;
  }

  void validate() const {
    if (n_states == 0 || n_actions == 0)
      throw std::invalid_argument("FiniteMDP: empty state or action space");
    if (!(gamma >= 0.0 && gamma < 1.0))
      throw std::invalid_argument("FiniteMDP: gamma must lie in [0, 1)");
    if (horizon == 0) throw std::invalid_argument("FiniteMDP: horizon must be >= 1");
    if (rewards.empty()) throw std::invalid_argument("FiniteMDP: empty reward set");
    for (double r : rewards)
      if (!std::isfinite(r)) throw std::invalid_argument("FiniteMDP: non-finite reward");
    if (dynamics.size() != static_cast<std::size_t>(n_states) * n_actions)
      throw std::invalid_argument("FiniteMDP: dynamics table size mismatch");
    if (initial_dist.size() != n_states || terminal.size() != n_states)
      throw std::invalid_argument("FiniteMDP: per-state vector size mismatch");

    double init_sum = 0.0;
    for (double p : initial_dist) {
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("FiniteMDP: initial probability outside [0,1]");
      init_sum += p;
    }
    if (std::abs(init_sum - 1.0) > kProbTolerance)
      throw std::invalid_argument("FiniteMDP: initial distribution does not sum to 1");

    for (std::uint32_t s = 0; s < n_states; ++s) {
      for (std::uint32_t a = 0; a < n_actions; ++a) {
        const auto& outs = row(s, a);
        double sum = 0.0;
        for (std::size_t i = 0; i < outs.size(); ++i) {
          const Outcome& o = outs[i];
          if (o.next >= n_states || o.reward >= rewards.size())
            throw std::invalid_argument("FiniteMDP: outcome index out of range");
          if (!(o.prob >= 0.0 && o.prob <= 1.0))
            throw std::invalid_argument("FiniteMDP: outcome probability outside [0,1]");
          if (i > 0) {
            const Outcome& prev = outs[i - 1];
            if (std::pair(prev.next, prev.reward) >= std::pair(o.next, o.reward))
              throw std::invalid_argument("FiniteMDP: dynamics row not in canonical order");
          }
          sum += o.prob;
        }
        if (std::abs(sum - 1.0) > kProbTolerance)
          throw std::invalid_argument("FiniteMDP: dynamics row does not sum to 1");
        if (is_terminal(s)) {
          if (outs.size() != 1 || outs[0].next != s || outs[0].prob != 1.0 ||
              rewards[outs[0].reward] != 0.0)
            throw std::invalid_argument(
                "FiniteMDP: terminal state must self-loop with reward 0");
        }
      }
    }
  }

  friend bool operator==(const FiniteMDP&, const FiniteMDP&) = default;
};

/// Sorts every dynamics row into the canonical (next, reward) order and
/// merges duplicate entries. Builders call this before validate().
inline void canonicalize_dynamics(FiniteMDP& mdp) {
  for (auto& r : mdp.dynamics) {
    std::sort(r.begin(), r.end(), [](const Outcome& x, const Outcome& y) {
      return std::pair(x.next, x.reward) < std::pair(y.next, y.reward);
    });
    std::vector<Outcome> merged;
    for (const Outcome& o : r) {
      if (o.prob == 0.0) continue;
      if (!merged.empty() && merged.back().next == o.next &&
          merged.back().reward == o.reward) {
        merged.back().prob += o.prob;
      } else {
        merged.push_back(o);
      }
    }
    r = std::move(merged);
  }
}

// ---------------------------------------------------------------------------
// Dataset types
// ---------------------------------------------------------------------------

struct Transition {
  std::uint64_t s = 0;
  std::uint32_t a = 0;
  double r = 0.0;
  std::uint64_t s_next = 0;
  bool terminal = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Trajectory {
  std::uint64_t episode_id = 0;
  std::vector<Transition> transitions;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct Manifest {
  std::string env;
  std::string scheme;
  std::uint64_t seed = 0;
  std::uint64_t n = 0;
  std::uint64_t n_states = 0;
  std::uint32_t n_actions = 0;
  double gamma = 1.0;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Ordered collection of trajectories plus its manifest. The manifest's
/// sample count must equal the total number of transitions.
struct Dataset {
  std::vector<Trajectory> trajectories;
  Manifest manifest;

  std::uint64_t n_transitions() const {
    std::uint64_t n = 0;
    for (const auto& t : trajectories) n += t.transitions.size();
    return n;
  }

  void validate() const {
    for (const auto& traj : trajectories) {
      if (traj.transitions.empty())
        throw std::invalid_argument("Dataset: empty trajectory");
      for (std::size_t i = 0; i < traj.transitions.size(); ++i) {
        const Transition& tr = traj.transitions[i];
        if (i + 1 < traj.transitions.size()) {
          if (tr.terminal)
            throw std::invalid_argument("Dataset: terminal transition before trajectory end");
          if (tr.s_next != traj.transitions[i + 1].s)
            throw std::invalid_argument("Dataset: trajectory not state-contiguous");
        }
        if (manifest.n_states > 0 &&
            (tr.s >= manifest.n_states || tr.s_next >= manifest.n_states))
          throw std::invalid_argument("Dataset: state id outside manifest range");
        if (manifest.n_actions > 0 && tr.a >= manifest.n_actions)
          throw std::invalid_argument("Dataset: action id outside manifest range");
      }
    }
    if (manifest.n != 0 && manifest.n != n_transitions())
      throw std::invalid_argument("Dataset: manifest sample count mismatch");
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// ---------------------------------------------------------------------------
// Policies and occupancies
// ---------------------------------------------------------------------------

/// Per-state action distribution, row-major. Rows sum to 1.
class PolicyTable {
 public:
  PolicyTable() = default;
  PolicyTable(std::uint32_t n_states, std::uint32_t n_actions)
      : n_states_(n_states),
        n_actions_(n_actions),
        probs_(static_cast<std::size_t>(n_states) * n_actions, 0.0) {}

  static PolicyTable uniform(std::uint32_t n_states, std::uint32_t n_actions) {
    PolicyTable t(n_states, n_actions);
    const double p = 1.0 / n_actions;
    std::fill(t.probs_.begin(), t.probs_.end(), p);
    return t;
  }

  /// One-hot policy from an action choice per state.
  static PolicyTable greedy(std::span<const std::uint32_t> actions,
                            std::uint32_t n_actions) {
    PolicyTable t(static_cast<std::uint32_t>(actions.size()), n_actions);
    for (std::uint32_t s = 0; s < actions.size(); ++s) t.at(s, actions[s]) = 1.0;
    return t;
  }

  std::uint32_t n_states() const { return n_states_; }
  std::uint32_t n_actions() const { return n_actions_; }

  double& at(std::uint32_t s, std::uint32_t a) {
    return probs_[static_cast<std::size_t>(s) * n_actions_ + a];
  }
  double at(std::uint32_t s, std::uint32_t a) const {
    return probs_[static_cast<std::size_t>(s) * n_actions_ + a];
  }
  std::span<const double> prob_row(std::uint32_t s) const {
    return {probs_.data() + static_cast<std::size_t>(s) * n_actions_, n_actions_};
  }
  std::span<double> prob_row(std::uint32_t s) {
    return {probs_.data() + static_cast<std::size_t>(s) * n_actions_, n_actions_};
  }

  void validate() const {
    for (std::uint32_t s = 0; s < n_states_; ++s) {
      double sum = 0.0;
      for (double p : prob_row(s)) {
        if (!(p >= 0.0))
          throw std::invalid_argument("PolicyTable: negative probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kProbTolerance)
        throw std::invalid_argument("PolicyTable: row does not sum to 1");
    }
  }

  friend bool operator==(const PolicyTable&, const PolicyTable&) = default;

 private:
  std::uint32_t n_states_ = 0;
  std::uint32_t n_actions_ = 0;
  std::vector<double> probs_;
};

/// Probability table over (s, a). Either computed exactly from an MDP and a
/// policy, or estimated from dataset counts.
struct OccupancyTable {
  enum class Derivation { exact, empirical };

  std::uint32_t n_states = 0;
  std::uint32_t n_actions = 0;
  std::vector<double> rho;  // row-major, sums to 1
  Derivation derivation = Derivation::exact;

  double at(std::uint32_t s, std::uint32_t a) const {
    return rho[static_cast<std::size_t>(s) * n_actions + a];
  }
  double& at(std::uint32_t s, std::uint32_t a) {
    return rho[static_cast<std::size_t>(s) * n_actions + a];
  }

  /// Marginal state occupancy.
  std::vector<double> state_marginal() const {
    std::vector<double> m(n_states, 0.0);
    for (std::uint32_t s = 0; s < n_states; ++s)
      for (std::uint32_t a = 0; a < n_actions; ++a) m[s] += at(s, a);
    return m;
  }

  void validate() const {
    double sum = 0.0;
    for (double p : rho) {
      if (!(p >= 0.0)) throw std::invalid_argument("OccupancyTable: negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kOccupancyTolerance)
      throw std::invalid_argument("OccupancyTable: does not sum to 1");
  }
};

namespace detail {

inline void check_policy_match(const FiniteMDP& mdp, const PolicyTable& policy) {
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions)
    throw std::invalid_argument("policy dimensions do not match the MDP");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exact evaluation
// ---------------------------------------------------------------------------

/// Expected discounted return of `policy` from the MDP's initial distribution,
/// by backward induction over the finite horizon. Pass `gamma` to override the
/// MDP's discount (e.g. 1 - eps for undiscounted-style reporting).
inline double evaluate_policy_exact(const FiniteMDP& mdp, const PolicyTable& policy,
                                    std::optional<double> gamma = std::nullopt) {
  detail::check_policy_match(mdp, policy);
  const double g = gamma.value_or(mdp.gamma);
  const std::uint32_t S = mdp.n_states;
  std::vector<double> value(S, 0.0), next_value(S, 0.0);
  for (std::uint32_t t = mdp.horizon; t-- > 0;) {
    for (std::uint32_t s = 0; s < S; ++s) {
      if (mdp.is_terminal(s)) {
        value[s] = 0.0;
        continue;
      }
      double v = 0.0;
      for (std::uint32_t a = 0; a < mdp.n_actions; ++a) {
        const double pa = policy.at(s, a);
        if (pa == 0.0) continue;
        double q = 0.0;
        for (const Outcome& o : mdp.row(s, a))
          q += o.prob * (mdp.rewards[o.reward] + g * next_value[o.next]);
        v += pa * q;
      }
      value[s] = v;
    }
    std::swap(value, next_value);
  }
  double ret = 0.0;
  for (std::uint32_t s = 0; s < S; ++s) ret += mdp.initial_dist[s] * next_value[s];
  return ret;
}

/// Expected visitation frequencies of (s, a) pairs over an episode:
/// undiscounted visit counts up to the horizon, normalized to sum 1.
/// Mass entering a terminal state is absorbed and never counted, matching the
/// empirical frequencies of logged transitions.
inline OccupancyTable occupancy_exact(const FiniteMDP& mdp, const PolicyTable& policy) {
  detail::check_policy_match(mdp, policy);
  const std::uint32_t S = mdp.n_states, A = mdp.n_actions;
  std::vector<double> cur = mdp.initial_dist;
  std::vector<double> next(S, 0.0);
  OccupancyTable occ;
  occ.n_states = S;
  occ.n_actions = A;
  occ.rho.assign(static_cast<std::size_t>(S) * A, 0.0);
  occ.derivation = OccupancyTable::Derivation::exact;

  for (std::uint32_t t = 0; t < mdp.horizon; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    double live = 0.0;
    for (std::uint32_t s = 0; s < S; ++s) {
      if (cur[s] == 0.0 || mdp.is_terminal(s)) continue;
      live += cur[s];
      for (std::uint32_t a = 0; a < A; ++a) {
        const double w = cur[s] * policy.at(s, a);
        if (w == 0.0) continue;
        occ.at(s, a) += w;
        for (const Outcome& o : mdp.row(s, a)) next[o.next] += w * o.prob;
      }
    }
    if (live == 0.0) break;
    std::swap(cur, next);
  }

  const double total = std::accumulate(occ.rho.begin(), occ.rho.end(), 0.0);
  if (total <= 0.0)
    throw std::invalid_argument(
        "occupancy_exact: no visitable state-action mass (all-terminal start?)");
  for (double& p : occ.rho) p /= total;
  return occ;
}

/// Mean discounted trajectory return of a dataset.
inline double average_trajectory_return(const Dataset& ds, double gamma) {
  if (ds.trajectories.empty())
    throw std::invalid_argument("average_trajectory_return: empty dataset");
  double sum = 0.0;
  for (const Trajectory& traj : ds.trajectories) {
    double g = 0.0, w = 1.0;
    for (const Transition& tr : traj.transitions) {
      g += w * tr.r;
      w *= gamma;
    }
    sum += g;
  }
  return sum / static_cast<double>(ds.trajectories.size());
}

}  // namespace datascope

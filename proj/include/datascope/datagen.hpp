#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "datascope/core.hpp"
#include "datascope/rng.hpp"

namespace datascope {

namespace detail {

inline std::uint32_t argmax_row(std::span<const double> values) {
  std::uint32_t best = 0;
  for (std::uint32_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

/// Q-table with row access; zero-initialized.
struct QTable {
  std::uint32_t n_actions = 0;
  std::vector<double> q;

  QTable(std::uint32_t n_states, std::uint32_t n_actions_)
      : n_actions(n_actions_),
        q(static_cast<std::size_t>(n_states) * n_actions_, 0.0) {}

  double& at(std::uint32_t s, std::uint32_t a) {
    return q[static_cast<std::size_t>(s) * n_actions + a];
  }
  std::span<const double> row(std::uint32_t s) const {
    return {q.data() + static_cast<std::size_t>(s) * n_actions, n_actions};
  }
};

inline std::uint32_t sample_state(std::span<const double> dist, Rng& rng) {
  return static_cast<std::uint32_t>(rng.categorical(dist, 1.0));
}

struct Step {
  std::uint32_t next;
  double reward;
  bool terminal;
};

inline Step env_step(const FiniteMDP& mdp, std::uint32_t s, std::uint32_t a, Rng& rng) {
  const auto& outcomes = mdp.row(s, a);
  double u = rng.next_double();
  for (const Outcome& o : outcomes) {
    if (u < o.prob) return {o.next, mdp.rewards[o.reward], mdp.is_terminal(o.next)};
    u -= o.prob;
  }
  const Outcome& last = outcomes.back();
  return {last.next, mdp.rewards[last.reward], mdp.is_terminal(last.next)};
}

inline std::uint32_t sample_action(const PolicyTable& policy, std::uint32_t s, Rng& rng) {
  return static_cast<std::uint32_t>(rng.categorical(policy.prob_row(s), 1.0));
}

/// Mean undiscounted return of `policy` over rollout episodes.
inline double rollout_return(const FiniteMDP& mdp, const PolicyTable& policy,
                             std::uint32_t episodes, Rng& rng) {
  double total = 0.0;
  for (std::uint32_t e = 0; e < episodes; ++e) {
    std::uint32_t s = sample_state(mdp.initial_dist, rng);
    for (std::uint32_t t = 0; t < mdp.horizon && !mdp.is_terminal(s); ++t) {
      const std::uint32_t a = sample_action(policy, s, rng);
      const Step st = env_step(mdp, s, a, rng);
      total += st.reward;
      s = st.next;
    }
  }
  return total / episodes;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Online training
// ---------------------------------------------------------------------------

struct OnlineTrainerConfig {
  std::uint64_t steps = 20000;
  double alpha = 0.2;
  std::optional<double> gamma;  // defaults to the MDP's discount
  double eps_initial = 1.0;
  double eps_final = 0.05;
  std::uint64_t eps_decay_steps = 10000;
  std::uint64_t eval_every = 1000;
  std::uint32_t eval_episodes = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(eps_initial >= eps_final && eps_final >= 0.0 && eps_initial <= 1.0))
      throw std::invalid_argument("OnlineTrainerConfig: need eps_initial >= eps_final >= 0");
    if (steps < eps_decay_steps)
      throw std::invalid_argument("OnlineTrainerConfig: steps must cover the decay period");
    if (steps == 0 || eval_every == 0 || eval_episodes == 0)
      throw std::invalid_argument("OnlineTrainerConfig: zero steps/eval settings");
  }
};

struct EvalPoint {
  std::uint64_t step = 0;
  double mean_return = 0.0;
};

struct OnlineResult {
  PolicyTable expert;    // greedy policy of the final Q-table
  Dataset replay_log;    // every environment transition seen during training
  std::vector<EvalPoint> eval_history;

  double best_eval_return() const {
    double best = -std::numeric_limits<double>::infinity();
    for (const EvalPoint& e : eval_history) best = std::max(best, e.mean_return);
    return best;
  }
};

/// Tabular Q-learning with a linear epsilon decay. The replay log keeps every
/// transition in episode order; greedy evaluation runs every eval_every steps
/// on an independent substream so it never perturbs the training stream.
inline OnlineResult train_online(const FiniteMDP& mdp, const OnlineTrainerConfig& cfg,
                                 std::string_view env_name = "") {
  cfg.validate();
  mdp.validate();
  const double gamma = cfg.gamma.value_or(mdp.gamma);
  detail::QTable q(mdp.n_states, mdp.n_actions);
  Rng rng(derive_seed(cfg.seed, "online"));

  OnlineResult out;
  Dataset& log = out.replay_log;
  log.manifest.env = std::string(env_name);
  log.manifest.scheme = "replay";
  log.manifest.seed = cfg.seed;
  log.manifest.n_states = mdp.n_states;
  log.manifest.n_actions = mdp.n_actions;
  log.manifest.gamma = mdp.gamma;

  std::uint64_t episode = 0;
  std::uint32_t s = detail::sample_state(mdp.initial_dist, rng);
  std::uint32_t ep_len = 0;
  log.trajectories.push_back({episode, {}});

  auto reset = [&] {
    if (log.trajectories.back().transitions.empty()) return;
    log.trajectories.push_back({++episode, {}});
    s = detail::sample_state(mdp.initial_dist, rng);
    ep_len = 0;
  };

  for (std::uint64_t t = 0; t < cfg.steps; ++t) {
    const double frac =
        cfg.eps_decay_steps == 0
            ? 1.0
            : std::min(1.0, static_cast<double>(t) / cfg.eps_decay_steps);
    const double eps = cfg.eps_initial + frac * (cfg.eps_final - cfg.eps_initial);

    const std::uint32_t a = rng.next_double() < eps
                                ? rng.next_below(mdp.n_actions)
                                : detail::argmax_row(q.row(s));
    const detail::Step st = detail::env_step(mdp, s, a, rng);
    log.trajectories.back().transitions.push_back(
        {s, a, st.reward, st.next, st.terminal});

    const double bootstrap = st.terminal ? 0.0 : *std::max_element(q.row(st.next).begin(),
                                                                   q.row(st.next).end());
    q.at(s, a) += cfg.alpha * (st.reward + gamma * bootstrap - q.at(s, a));

    ++ep_len;
    if (st.terminal || ep_len >= mdp.horizon) {
      reset();
    } else {
      s = st.next;
    }

    if ((t + 1) % cfg.eval_every == 0) {
      std::vector<std::uint32_t> greedy(mdp.n_states);
      for (std::uint32_t gs = 0; gs < mdp.n_states; ++gs)
        greedy[gs] = detail::argmax_row(q.row(gs));
      const PolicyTable pol = PolicyTable::greedy(greedy, mdp.n_actions);
      Rng eval_rng(derive_seed(cfg.seed, "online-eval", t + 1));
      out.eval_history.push_back(
          {t + 1, detail::rollout_return(mdp, pol, cfg.eval_episodes, eval_rng)});
    }
  }
  if (log.trajectories.back().transitions.empty()) log.trajectories.pop_back();
  log.manifest.n = log.n_transitions();

  std::vector<std::uint32_t> greedy(mdp.n_states);
  for (std::uint32_t gs = 0; gs < mdp.n_states; ++gs)
    greedy[gs] = detail::argmax_row(q.row(gs));
  out.expert = PolicyTable::greedy(greedy, mdp.n_actions);
  return out;
}

// ---------------------------------------------------------------------------
// Generation schemes
// ---------------------------------------------------------------------------

struct GenerationScheme {
  enum class Kind { random, expert, mixed, noisy, replay };
  Kind kind = Kind::random;
  double epsilon = 0.2;       // noisy
  double mix_fraction = 0.8;  // mixed: fraction drawn from the random policy
  std::uint64_t n_samples = 0;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
      throw std::invalid_argument("GenerationScheme: epsilon outside [0, 1]");
    if (!(mix_fraction >= 0.0 && mix_fraction <= 1.0))
      throw std::invalid_argument("GenerationScheme: mix_fraction outside [0, 1]");
    if (n_samples == 0) throw std::invalid_argument("GenerationScheme: n_samples == 0");
  }

  std::string label() const {
    switch (kind) {
      case Kind::random: return "random";
      case Kind::expert: return "expert";
      case Kind::mixed: return "mixed";
      case Kind::noisy: return "noisy";
      case Kind::replay: return "replay";
    }
    return "?";
  }

  static Kind parse_kind(std::string_view name) {
    if (name == "random") return Kind::random;
    if (name == "expert") return Kind::expert;
    if (name == "mixed") return Kind::mixed;
    if (name == "noisy") return Kind::noisy;
    if (name == "replay") return Kind::replay;
    throw std::invalid_argument("unknown scheme: " + std::string(name));
  }
};

/// Rolls out `policy` until exactly n transitions are logged. Episodes cut at
/// the MDP horizon; a partial final trajectory is kept.
inline Dataset sample_policy_dataset(const FiniteMDP& mdp, const PolicyTable& policy,
                                     std::uint64_t n, std::uint64_t seed,
                                     std::string_view env_name = "",
                                     std::string_view scheme_label = "") {
  detail::check_policy_match(mdp, policy);
  Dataset ds;
  ds.manifest.env = std::string(env_name);
  ds.manifest.scheme = std::string(scheme_label);
  ds.manifest.seed = seed;
  ds.manifest.n_states = mdp.n_states;
  ds.manifest.n_actions = mdp.n_actions;
  ds.manifest.gamma = mdp.gamma;

  Rng rng(derive_seed(seed, "sample"));
  std::uint64_t produced = 0, episode = 0;
  while (produced < n) {
    Trajectory traj{episode++, {}};
    std::uint32_t s = detail::sample_state(mdp.initial_dist, rng);
    for (std::uint32_t t = 0; t < mdp.horizon && produced < n; ++t) {
      const std::uint32_t a = detail::sample_action(policy, s, rng);
      const detail::Step st = detail::env_step(mdp, s, a, rng);
      traj.transitions.push_back({s, a, st.reward, st.next, st.terminal});
      ++produced;
      if (st.terminal) break;
      s = st.next;
    }
    ds.trajectories.push_back(std::move(traj));
  }
  ds.manifest.n = produced;
  return ds;
}

namespace detail {

inline PolicyTable epsilon_mix(const PolicyTable& expert, double epsilon) {
  PolicyTable out = expert;
  const double u = epsilon / expert.n_actions();
  for (std::uint32_t s = 0; s < out.n_states(); ++s)
    for (std::uint32_t a = 0; a < out.n_actions(); ++a)
      out.at(s, a) = (1.0 - epsilon) * expert.at(s, a) + u;
  return out;
}

}  // namespace detail

/// The five generation schemes. `expert` is required for expert/noisy/mixed;
/// `replay_log` for replay. Deterministic given (mdp, scheme, seed).
inline Dataset generate(const FiniteMDP& mdp, const GenerationScheme& scheme,
                        const PolicyTable* expert, const Dataset* replay_log,
                        std::uint64_t seed, std::string_view env_name = "") {
  scheme.validate();
  using Kind = GenerationScheme::Kind;
  const std::uint64_t n = scheme.n_samples;

  switch (scheme.kind) {
    case Kind::random:
      return sample_policy_dataset(mdp, PolicyTable::uniform(mdp.n_states, mdp.n_actions),
                                   n, seed, env_name, "random");
    case Kind::expert: {
      if (!expert) throw std::invalid_argument("generate: expert policy required");
      return sample_policy_dataset(mdp, detail::epsilon_mix(*expert, 0.0), n, seed,
                                   env_name, "expert");
    }
    case Kind::noisy: {
      if (!expert) throw std::invalid_argument("generate: expert policy required");
      return sample_policy_dataset(mdp, detail::epsilon_mix(*expert, scheme.epsilon), n,
                                   seed, env_name, "noisy");
    }
    case Kind::mixed: {
      if (!expert) throw std::invalid_argument("generate: expert policy required");
      const auto n_random = static_cast<std::uint64_t>(
          std::floor(scheme.mix_fraction * static_cast<double>(n)));
      Dataset ds;
      if (n_random > 0)
        ds = sample_policy_dataset(mdp, PolicyTable::uniform(mdp.n_states, mdp.n_actions),
                                   n_random, derive_seed(seed, "mixed-random"), env_name,
                                   "mixed");
      if (n - n_random > 0) {
        Dataset expert_part = sample_policy_dataset(
            mdp, detail::epsilon_mix(*expert, 0.0), n - n_random,
            derive_seed(seed, "mixed-expert"), env_name, "mixed");
        for (Trajectory& traj : expert_part.trajectories)
          ds.trajectories.push_back(std::move(traj));
      }
      for (std::uint64_t i = 0; i < ds.trajectories.size(); ++i)
        ds.trajectories[i].episode_id = i;
      ds.manifest.env = std::string(env_name);
      ds.manifest.scheme = "mixed";
      ds.manifest.seed = seed;
      ds.manifest.n = n;
      ds.manifest.n_states = mdp.n_states;
      ds.manifest.n_actions = mdp.n_actions;
      ds.manifest.gamma = mdp.gamma;
      return ds;
    }
    case Kind::replay: {
      if (!replay_log) throw std::invalid_argument("generate: replay log required");
      if (replay_log->n_transitions() < n)
        throw std::invalid_argument("generate: replay log shorter than n_samples");
      Dataset ds;
      std::uint64_t taken = 0;
      for (const Trajectory& traj : replay_log->trajectories) {
        if (taken == n) break;
        Trajectory cut{ds.trajectories.size(), {}};
        for (const Transition& tr : traj.transitions) {
          if (taken == n) break;
          cut.transitions.push_back(tr);
          ++taken;
        }
        ds.trajectories.push_back(std::move(cut));
      }
      ds.manifest = replay_log->manifest;
      if (!env_name.empty()) ds.manifest.env = std::string(env_name);
      ds.manifest.scheme = "replay";
      ds.manifest.seed = seed;
      ds.manifest.n = n;
      return ds;
    }
  }
  throw std::invalid_argument("generate: unknown scheme");
}

}  // namespace datascope

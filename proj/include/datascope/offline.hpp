#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "datascope/core.hpp"
#include "datascope/datagen.hpp"
#include "datascope/io.hpp"
#include "datascope/rng.hpp"

namespace datascope {

enum class OfflineAlgo { bc, mce, bve, qlearn, bcq, cql };

inline OfflineAlgo parse_offline_algo(std::string_view name) {
  if (name == "bc") return OfflineAlgo::bc;
  if (name == "mce") return OfflineAlgo::mce;
  if (name == "bve") return OfflineAlgo::bve;
  if (name == "qlearn") return OfflineAlgo::qlearn;
  if (name == "bcq") return OfflineAlgo::bcq;
  if (name == "cql") return OfflineAlgo::cql;
  throw std::invalid_argument("unknown offline algorithm: " + std::string(name));
}

inline std::string offline_algo_name(OfflineAlgo a) {
  switch (a) {
    case OfflineAlgo::bc: return "bc";
    case OfflineAlgo::mce: return "mce";
    case OfflineAlgo::bve: return "bve";
    case OfflineAlgo::qlearn: return "qlearn";
    case OfflineAlgo::bcq: return "bcq";
    case OfflineAlgo::cql: return "cql";
  }
  return "?";
}

struct OfflineConfig {
  OfflineAlgo algorithm = OfflineAlgo::qlearn;
  std::uint32_t iterations = 60;  // sweeps over the dataset
  double alpha_lr = 0.2;
  double gamma = 0.99;
  double tau = 0.3;        // BCQ eligibility threshold
  double cql_alpha = 0.1;  // CQL penalty weight
  std::uint32_t eval_every = 10;  // in sweeps
  std::uint32_t eval_episodes = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(tau >= 0.0 && tau <= 1.0))
      throw std::invalid_argument("OfflineConfig: tau outside [0, 1]");
    if (!(cql_alpha >= 0.0))
      throw std::invalid_argument("OfflineConfig: cql_alpha must be >= 0");
    if (iterations == 0 || eval_every == 0 || eval_episodes == 0)
      throw std::invalid_argument("OfflineConfig: zero iterations/eval settings");
  }
};

struct ReturnRefs {
  double min_return = 0.0;
  double expert_return = 1.0;
};

/// Best-policy return normalized between the minimal and expert references.
inline double omega(double best_return, double d_min_return, double d_expert_return) {
  if (!(d_expert_return > d_min_return))
    throw std::invalid_argument("omega: expert reference must exceed min reference");
  return (best_return - d_min_return) / (d_expert_return - d_min_return);
}

struct OfflineEvalPoint {
  std::uint32_t sweep = 0;
  double mean_return = 0.0;
};

struct OfflineResult {
  double best_eval_return = 0.0;
  std::vector<OfflineEvalPoint> eval_history;
  double omega = std::numeric_limits<double>::quiet_NaN();
  PolicyTable learned_policy;  // snapshot at the best evaluation
};

inline nlohmann::json offline_result_to_json(const OfflineResult& r) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : r.eval_history)
    hist.push_back({{"sweep", e.sweep}, {"mean_return", e.mean_return}});
  nlohmann::json j{{"best_eval_return", r.best_eval_return}, {"eval_history", hist}};
  if (std::isnan(r.omega))
    j["omega"] = nullptr;
  else
    j["omega"] = r.omega;
  return j;
}

namespace detail {

struct FlatTransition {
  std::uint32_t s, a;
  double r;
  std::uint32_t s_next;
  bool terminal;
  bool has_next_action;      // a following step exists in the same trajectory
  std::uint32_t next_action;  // its action (BVE bootstrap)
  double return_to_go;        // discounted return from this step (MCE target)
};

struct FlatDataset {
  std::vector<FlatTransition> steps;
  std::vector<std::uint64_t> sa_counts;  // [s * A + a]
  std::vector<char> covered;             // state appears in the dataset
  std::uint32_t n_states, n_actions;
};

inline FlatDataset flatten(const Dataset& ds, const FiniteMDP& mdp, double gamma) {
  FlatDataset out;
  out.n_states = mdp.n_states;
  out.n_actions = mdp.n_actions;
  out.sa_counts.assign(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0);
  out.covered.assign(mdp.n_states, 0);
  for (const Trajectory& traj : ds.trajectories) {
    std::vector<double> rtg(traj.transitions.size());
    double g = 0.0;
    for (std::size_t i = traj.transitions.size(); i-- > 0;) {
      g = traj.transitions[i].r + gamma * g;
      rtg[i] = g;
    }
    for (std::size_t i = 0; i < traj.transitions.size(); ++i) {
      const Transition& tr = traj.transitions[i];
      if (tr.s >= mdp.n_states || tr.s_next >= mdp.n_states || tr.a >= mdp.n_actions)
        throw std::invalid_argument("run_offline: dataset ids exceed the MDP's spaces");
      FlatTransition ft;
      ft.s = static_cast<std::uint32_t>(tr.s);
      ft.a = tr.a;
      ft.r = tr.r;
      ft.s_next = static_cast<std::uint32_t>(tr.s_next);
      ft.terminal = tr.terminal;
      ft.has_next_action = i + 1 < traj.transitions.size();
      ft.next_action = ft.has_next_action ? traj.transitions[i + 1].a : 0;
      ft.return_to_go = rtg[i];
      out.steps.push_back(ft);
      ++out.sa_counts[static_cast<std::size_t>(ft.s) * mdp.n_actions + ft.a];
      out.covered[ft.s] = 1;
    }
  }
  return out;
}

/// Greedy policy over a Q-table restricted to per-state eligible actions.
/// States never observed in the dataset fall back to a uniform row.
inline PolicyTable greedy_policy(const QTable& q, const FlatDataset& data,
                                 const std::vector<std::vector<std::uint32_t>>* eligible) {
  PolicyTable pol(data.n_states, data.n_actions);
  for (std::uint32_t s = 0; s < data.n_states; ++s) {
    if (!data.covered[s]) {
      for (std::uint32_t a = 0; a < data.n_actions; ++a)
        pol.at(s, a) = 1.0 / data.n_actions;
      continue;
    }
    const auto row = q.row(s);
    std::uint32_t best = 0;
    bool first = true;
    if (eligible) {
      for (const std::uint32_t a : (*eligible)[s]) {
        if (first || row[a] > row[best]) best = a;
        first = false;
      }
    } else {
      best = argmax_row(row);
    }
    pol.at(s, best) = 1.0;
  }
  return pol;
}

}  // namespace detail

/// Trains a tabular offline algorithm on the dataset and scores it by greedy
/// environment rollouts at fixed intervals. The environment is used for
/// evaluation only, never for training updates. Unseen (s, a) keep Q = 0.
inline OfflineResult run_offline(const Dataset& ds, const FiniteMDP& mdp,
                                 const OfflineConfig& cfg,
                                 const std::optional<ReturnRefs>& refs = std::nullopt) {
  cfg.validate();
  if (ds.trajectories.empty()) throw std::invalid_argument("run_offline: empty dataset");

  const detail::FlatDataset data = detail::flatten(ds, mdp, cfg.gamma);
  const std::uint32_t S = data.n_states, A = data.n_actions;
  detail::QTable q(S, A);

  // Behavioral counts drive BC's policy and BCQ's action filter.
  std::vector<std::vector<std::uint32_t>> eligible;
  const bool is_bcq = cfg.algorithm == OfflineAlgo::bcq;
  if (is_bcq) {
    eligible.resize(S);
    for (std::uint32_t s = 0; s < S; ++s) {
      std::uint64_t max_count = 0;
      for (std::uint32_t a = 0; a < A; ++a)
        max_count = std::max(max_count, data.sa_counts[std::size_t(s) * A + a]);
      for (std::uint32_t a = 0; a < A; ++a) {
        const double count = static_cast<double>(data.sa_counts[std::size_t(s) * A + a]);
        if (count >= cfg.tau * static_cast<double>(max_count)) eligible[s].push_back(a);
      }
    }
  }

  OfflineResult out;
  out.best_eval_return = -std::numeric_limits<double>::infinity();

  auto evaluate = [&](std::uint32_t sweep, const PolicyTable& pol) {
    Rng eval_rng(derive_seed(cfg.seed, "offline-eval", sweep));
    const double ret = detail::rollout_return(mdp, pol, cfg.eval_episodes, eval_rng);
    out.eval_history.push_back({sweep, ret});
    if (ret > out.best_eval_return) {
      out.best_eval_return = ret;
      out.learned_policy = pol;
    }
  };

  switch (cfg.algorithm) {
    case OfflineAlgo::bc: {
      // majority action of the empirical behavioral policy; converges in one
      // pass, so a single evaluation suffices
      PolicyTable pol(S, A);
      for (std::uint32_t s = 0; s < S; ++s) {
        if (!data.covered[s]) {
          for (std::uint32_t a = 0; a < A; ++a) pol.at(s, a) = 1.0 / A;
          continue;
        }
        std::uint32_t best = 0;
        for (std::uint32_t a = 1; a < A; ++a)
          if (data.sa_counts[std::size_t(s) * A + a] >
              data.sa_counts[std::size_t(s) * A + best])
            best = a;
        pol.at(s, best) = 1.0;
      }
      evaluate(1, pol);
      break;
    }
    case OfflineAlgo::mce: {
      // all-visit Monte-Carlo estimate of the behavioral action-values
      std::vector<double> sums(static_cast<std::size_t>(S) * A, 0.0);
      for (const auto& ft : data.steps)
        sums[std::size_t(ft.s) * A + ft.a] += ft.return_to_go;
      for (std::uint32_t s = 0; s < S; ++s)
        for (std::uint32_t a = 0; a < A; ++a) {
          const std::uint64_t c = data.sa_counts[std::size_t(s) * A + a];
          if (c > 0) q.at(s, a) = sums[std::size_t(s) * A + a] / static_cast<double>(c);
        }
      evaluate(1, detail::greedy_policy(q, data, nullptr));
      break;
    }
    case OfflineAlgo::bve:
    case OfflineAlgo::qlearn:
    case OfflineAlgo::bcq:
    case OfflineAlgo::cql: {
      for (std::uint32_t sweep = 1; sweep <= cfg.iterations; ++sweep) {
        for (const auto& ft : data.steps) {
          double bootstrap = 0.0;
          if (!ft.terminal) {
            switch (cfg.algorithm) {
              case OfflineAlgo::bve:
                bootstrap = ft.has_next_action ? q.at(ft.s_next, ft.next_action) : 0.0;
                break;
              case OfflineAlgo::bcq: {
                const auto& el = eligible[ft.s_next];
                if (!el.empty()) {
                  double best = q.at(ft.s_next, el[0]);
                  for (const std::uint32_t a : el)
                    best = std::max(best, q.at(ft.s_next, a));
                  bootstrap = best;
                }
                break;
              }
              default: {
                const auto row = q.row(ft.s_next);
                bootstrap = *std::max_element(row.begin(), row.end());
                break;
              }
            }
          }
          q.at(ft.s, ft.a) += cfg.alpha_lr * (ft.r + cfg.gamma * bootstrap - q.at(ft.s, ft.a));

          if (cfg.algorithm == OfflineAlgo::cql && cfg.cql_alpha > 0.0) {
            // exact gradient of alpha * (logsumexp_a Q(s,a) - Q(s, a_data))
            const auto row = q.row(ft.s);
            const double m = *std::max_element(row.begin(), row.end());
            double z = 0.0;
            for (std::uint32_t a = 0; a < A; ++a) z += std::exp(row[a] - m);
            for (std::uint32_t a = 0; a < A; ++a) {
              const double soft = std::exp(row[a] - m) / z;
              const double indicator = a == ft.a ? 1.0 : 0.0;
              q.at(ft.s, a) -= cfg.alpha_lr * cfg.cql_alpha * (soft - indicator);
            }
          }
        }
        if (sweep % cfg.eval_every == 0 || sweep == cfg.iterations)
          evaluate(sweep, detail::greedy_policy(q, data, is_bcq ? &eligible : nullptr));
      }
      break;
    }
  }

  if (refs) out.omega = omega(out.best_eval_return, refs->min_return, refs->expert_return);
  return out;
}

}  // namespace datascope

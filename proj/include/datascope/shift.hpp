#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "datascope/core.hpp"

namespace datascope {

/// Count-based maximum-likelihood estimates of the four factors of the
/// empirical transition distribution:
///   p(r | s, a, s') * p(s' | s, a) * pi(a | s) * rho(s).
/// Keys are ordered maps so iteration and serialization are deterministic;
/// only observed support is stored.
struct FactorEstimates {
  using SA = std::pair<std::uint64_t, std::uint32_t>;
  using SAS = std::tuple<std::uint64_t, std::uint32_t, std::uint64_t>;

  std::map<std::uint64_t, double> state_occupancy;          // rho(s)
  std::map<SA, double> sa_occupancy;                        // rho(s, a), used as weights
  std::map<std::uint64_t, std::map<std::uint32_t, double>> policy;  // pi(a | s)
  std::map<SA, std::map<std::uint64_t, double>> state_dynamics;     // p(s' | s, a)
  std::map<SAS, std::map<double, double>> reward_dynamics;          // p(r | s, a, s')
  std::uint64_t n_transitions = 0;
};

inline FactorEstimates estimate_factors(const Dataset& ds) {
  if (ds.trajectories.empty())
    throw std::invalid_argument("estimate_factors: empty dataset");

  FactorEstimates f;
  std::map<std::uint64_t, std::uint64_t> n_s;
  std::map<FactorEstimates::SA, std::uint64_t> n_sa;
  std::map<FactorEstimates::SAS, std::uint64_t> n_sas;
  std::map<std::uint64_t, std::map<std::uint32_t, std::uint64_t>> n_s_a;
  std::map<FactorEstimates::SA, std::map<std::uint64_t, std::uint64_t>> n_sa_s;
  std::map<FactorEstimates::SAS, std::map<double, std::uint64_t>> n_sas_r;

  for (const Trajectory& traj : ds.trajectories)
    for (const Transition& tr : traj.transitions) {
      ++f.n_transitions;
      ++n_s[tr.s];
      ++n_sa[{tr.s, tr.a}];
      ++n_sas[{tr.s, tr.a, tr.s_next}];
      ++n_s_a[tr.s][tr.a];
      ++n_sa_s[{tr.s, tr.a}][tr.s_next];
      ++n_sas_r[{tr.s, tr.a, tr.s_next}][tr.r];
    }

  const auto total = static_cast<double>(f.n_transitions);
  for (const auto& [s, c] : n_s) f.state_occupancy[s] = static_cast<double>(c) / total;
  for (const auto& [sa, c] : n_sa) f.sa_occupancy[sa] = static_cast<double>(c) / total;
  for (const auto& [s, row] : n_s_a) {
    const auto denom = static_cast<double>(n_s.at(s));
    for (const auto& [a, c] : row) f.policy[s][a] = static_cast<double>(c) / denom;
  }
  for (const auto& [sa, row] : n_sa_s) {
    const auto denom = static_cast<double>(n_sa.at(sa));
    for (const auto& [sn, c] : row)
      f.state_dynamics[sa][sn] = static_cast<double>(c) / denom;
  }
  for (const auto& [sas, row] : n_sas_r) {
    const auto denom = static_cast<double>(n_sas.at(sas));
    for (const auto& [r, c] : row)
      f.reward_dynamics[sas][r] = static_cast<double>(c) / denom;
  }
  return f;
}

struct ShiftReport {
  double tv_reward = std::numeric_limits<double>::quiet_NaN();
  double tv_state_dyn = std::numeric_limits<double>::quiet_NaN();
  double tv_policy = std::numeric_limits<double>::quiet_NaN();
  double tv_occupancy = std::numeric_limits<double>::quiet_NaN();
  bool reward_comparable = false;
  bool state_dyn_comparable = false;
  bool policy_comparable = false;
  bool flag_reward = false;
  bool flag_state_dyn = false;
  bool flag_policy = false;
  bool flag_occupancy = false;
  bool comparable = false;  // at least one shared (s, a)
  double threshold = 0.05;
  std::string label;
};

namespace detail {

template <typename K>
double row_tv(const std::map<K, double>& a, const std::map<K, double>& b) {
  double tv = 0.0;
  for (const auto& [k, pa] : a) {
    auto it = b.find(k);
    tv += std::abs(pa - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [k, pb] : b)
    if (!a.count(k)) tv += pb;
  return 0.5 * tv;
}

/// Occupancy-weighted mean of per-row TV distances over the shared
/// conditioning support. Weights are the averaged occupancies of the two
/// datasets, renormalized over the shared keys.
template <typename K, typename V>
std::pair<double, bool> weighted_conditional_tv(
    const std::map<K, std::map<V, double>>& rows_a,
    const std::map<K, std::map<V, double>>& rows_b,
    const std::map<K, double>& weight_a, const std::map<K, double>& weight_b) {
  double tv = 0.0, wsum = 0.0;
  for (const auto& [k, row_a] : rows_a) {
    auto it = rows_b.find(k);
    if (it == rows_b.end()) continue;
    const double w = 0.5 * (weight_a.at(k) + weight_b.at(k));
    tv += w * row_tv(row_a, it->second);
    wsum += w;
  }
  if (wsum == 0.0) return {std::numeric_limits<double>::quiet_NaN(), false};
  return {tv / wsum, true};
}

}  // namespace detail

/// Per-factor total-variation distances on shared support, flagged at the
/// threshold, with a composite shift label. Disjoint (s, a) supports are
/// reported as incomparable rather than as zero shift.
inline ShiftReport compare(const FactorEstimates& a, const FactorEstimates& b,
                           double threshold = 0.05) {
  ShiftReport rep;
  rep.threshold = threshold;

  bool any_shared_sa = false;
  for (const auto& [sa, w] : a.sa_occupancy)
    if (b.sa_occupancy.count(sa)) {
      any_shared_sa = true;
      break;
    }
  rep.comparable = any_shared_sa;
  if (!rep.comparable) {
    rep.label = "incomparable";
    return rep;
  }

  // policy rows are conditioned on s, weighted by state occupancy
  std::tie(rep.tv_policy, rep.policy_comparable) = detail::weighted_conditional_tv(
      a.policy, b.policy, a.state_occupancy, b.state_occupancy);
  std::tie(rep.tv_state_dyn, rep.state_dyn_comparable) = detail::weighted_conditional_tv(
      a.state_dynamics, b.state_dynamics, a.sa_occupancy, b.sa_occupancy);

  // reward rows are conditioned on (s, a, s'); weight by the joint mass of
  // the conditioning triple
  std::map<FactorEstimates::SAS, double> wa, wb;
  for (const auto& [sas, row] : a.reward_dynamics) {
    const auto& [s, act, sn] = sas;
    wa[sas] = a.sa_occupancy.at({s, act}) * a.state_dynamics.at({s, act}).at(sn);
  }
  for (const auto& [sas, row] : b.reward_dynamics) {
    const auto& [s, act, sn] = sas;
    wb[sas] = b.sa_occupancy.at({s, act}) * b.state_dynamics.at({s, act}).at(sn);
  }
  std::tie(rep.tv_reward, rep.reward_comparable) =
      detail::weighted_conditional_tv(a.reward_dynamics, b.reward_dynamics, wa, wb);

  rep.tv_occupancy = detail::row_tv(a.state_occupancy, b.state_occupancy);

  rep.flag_reward = rep.reward_comparable && rep.tv_reward > threshold;
  rep.flag_state_dyn = rep.state_dyn_comparable && rep.tv_state_dyn > threshold;
  rep.flag_policy = rep.policy_comparable && rep.tv_policy > threshold;
  rep.flag_occupancy = rep.tv_occupancy > threshold;

  std::vector<std::string> parts;
  if (rep.flag_reward) parts.push_back("reward-dynamics");
  if (rep.flag_state_dyn) parts.push_back("state-dynamics");
  if (rep.flag_policy) parts.push_back("policy");
  if (rep.flag_occupancy) parts.push_back("occupancy");
  if (parts.empty()) {
    rep.label = "none";
  } else if (parts.size() == 4) {
    rep.label = "general";
  } else {
    rep.label = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) rep.label += "+" + parts[i];
  }
  return rep;
}

inline nlohmann::json shift_report_to_json(const ShiftReport& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  return nlohmann::json{{"tv_reward", num(r.tv_reward)},
                        {"tv_state_dyn", num(r.tv_state_dyn)},
                        {"tv_policy", num(r.tv_policy)},
                        {"tv_occupancy", num(r.tv_occupancy)},
                        {"flags",
                         {{"reward_dynamics", r.flag_reward},
                          {"state_dynamics", r.flag_state_dyn},
                          {"policy", r.flag_policy},
                          {"occupancy", r.flag_occupancy}}},
                        {"comparable", r.comparable},
                        {"threshold", r.threshold},
                        {"label", r.label}};
}

}  // namespace datascope

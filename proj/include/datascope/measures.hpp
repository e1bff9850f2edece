#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "datascope/core.hpp"
#include "datascope/io.hpp"
#include "datascope/sketch.hpp"

namespace datascope {

/// Shannon entropy in nats of a (sub-)probability vector; zero entries are
/// skipped. All entropies in this library are natural-log entropies.
inline double entropy_nats(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

// ---------------------------------------------------------------------------
// Transition-entropy
// ---------------------------------------------------------------------------

struct TransitionEntropy {
  double direct = 0.0;      // entropy of the joint p(s, a, r, s')
  double factorized = 0.0;  // sum_sa rho * H(p(r,s'|s,a)) + H(rho)
  double occupancy_entropy = 0.0;
  double weighted_dynamics_entropy = 0.0;
};

/// Entropy of the joint transition distribution induced by a policy
/// interacting with the MDP, computed along two routes: directly on the
/// joint, and as the occupancy-weighted sum of dynamics entropies plus the
/// occupancy entropy. The two must agree to 1e-10.
inline TransitionEntropy transition_entropy_detail(const FiniteMDP& mdp,
                                                   const PolicyTable& policy) {
  const OccupancyTable occ = occupancy_exact(mdp, policy);

  TransitionEntropy out;
  std::vector<double> row_probs;
  for (std::uint32_t s = 0; s < mdp.n_states; ++s) {
    for (std::uint32_t a = 0; a < mdp.n_actions; ++a) {
      const double rho = occ.at(s, a);
      if (rho == 0.0) continue;
      row_probs.clear();
      for (const Outcome& o : mdp.row(s, a)) row_probs.push_back(o.prob);
      const double h_dyn = entropy_nats(row_probs);
      out.weighted_dynamics_entropy += rho * h_dyn;
      for (double p : row_probs) {
        const double joint = rho * p;
        if (joint > 0.0) out.direct -= joint * std::log(joint);
      }
    }
  }
  out.occupancy_entropy = entropy_nats(occ.rho);
  out.factorized = out.weighted_dynamics_entropy + out.occupancy_entropy;
  if (std::abs(out.direct - out.factorized) > 1e-10)
    throw ValidationError("transition entropy: direct and factorized routes disagree by " +
                          format_double(std::abs(out.direct - out.factorized)));
  return out;
}

inline double transition_entropy_exact(const FiniteMDP& mdp, const PolicyTable& policy) {
  return transition_entropy_detail(mdp, policy).direct;
}

/// Entropy of an occupancy table. For deterministic MDPs this equals the
/// transition-entropy.
inline double occupancy_entropy(const OccupancyTable& occ) {
  occ.validate();
  return entropy_nats(occ.rho);
}

// ---------------------------------------------------------------------------
// Empirical measures
// ---------------------------------------------------------------------------

/// Normalized average trajectory return. References: a minimal-performance
/// return and an expert return observed in the same MDP.
inline double tq(const Dataset& ds, double d_min_return, double d_expert_return,
                 double gamma) {
  if (!(d_expert_return > d_min_return))
    throw std::invalid_argument("tq: expert reference must exceed min reference");
  return (average_trajectory_return(ds, gamma) - d_min_return) /
         (d_expert_return - d_min_return);
}

/// Unique state-action pairs normalized by a reference dataset's count.
inline double saco(std::uint64_t u_ds, std::uint64_t u_ref) {
  if (u_ref == 0) throw std::invalid_argument("saco: reference count is zero");
  return static_cast<double>(u_ds) / static_cast<double>(u_ref);
}

/// log-scaled variant: log(u_ds) / log(u_ref).
inline double lsaco(std::uint64_t u_ds, std::uint64_t u_ref) {
  if (u_ds < 2 || u_ref < 2)
    throw std::invalid_argument("lsaco: counts must be >= 2");
  return std::log(static_cast<double>(u_ds)) / std::log(static_cast<double>(u_ref));
}

namespace detail {

inline std::map<std::pair<std::uint64_t, std::uint32_t>, std::uint64_t> sa_counts(
    const Dataset& ds) {
  std::map<std::pair<std::uint64_t, std::uint32_t>, std::uint64_t> counts;
  for (const Trajectory& traj : ds.trajectories)
    for (const Transition& tr : traj.transitions) ++counts[{tr.s, tr.a}];
  return counts;
}

}  // namespace detail

/// Plug-in entropy of empirical pair frequencies n_i / N.
inline double entropy_of_counts(std::span<const std::uint64_t> counts) {
  std::uint64_t n = 0;
  for (std::uint64_t c : counts) n += c;
  if (n == 0) throw std::invalid_argument("entropy_of_counts: no observations");
  double h = 0.0;
  for (std::uint64_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

/// Plug-in entropy estimate of the dataset's state-action distribution.
inline double naive_entropy(const Dataset& ds) {
  if (ds.trajectories.empty()) throw std::invalid_argument("naive_entropy: empty dataset");
  std::vector<std::uint64_t> counts;
  for (const auto& [key, c] : detail::sa_counts(ds)) counts.push_back(c);
  return entropy_of_counts(counts);
}

inline double naive_entropy_ratio(const Dataset& ds, const Dataset& ds_ref) {
  const double h_ref = naive_entropy(ds_ref);
  if (h_ref == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return naive_entropy(ds) / h_ref;
}

// ---------------------------------------------------------------------------
// Bias of the plug-in estimator
// ---------------------------------------------------------------------------

/// Second-order bias of the plug-in entropy estimator over a distribution
/// with K visitable outcomes, and the support-size threshold beyond which the
/// log-unique-count estimator is equally or less biased.
struct BiasTerms {
  double z = 0.0;                   // E[H] - E[H_hat], O(N^-3) term dropped
  double regime_k_threshold = 0.0;  // 2 N ln N + 1
  bool less_biased_flag = false;    // K >= threshold
};

inline BiasTerms naive_bias(std::uint64_t k, std::uint64_t n,
                            std::span<const double> p) {
  if (n < 2) throw std::invalid_argument("naive_bias: need N >= 2");
  if (p.size() != k) throw std::invalid_argument("naive_bias: K does not match p");
  double sum = 0.0, inv_sum = 0.0;
  for (double pk : p) {
    if (!(pk > 0.0 && pk <= 1.0))
      throw std::invalid_argument("naive_bias: probabilities must lie in (0, 1]");
    sum += pk;
    inv_sum += 1.0 / pk;
  }
  if (std::abs(sum - 1.0) > kProbTolerance)
    throw std::invalid_argument("naive_bias: p does not sum to 1");

  const auto kd = static_cast<double>(k);
  const auto nd = static_cast<double>(n);
  BiasTerms out;
  out.z = (kd - 1.0) / (2.0 * nd) + (inv_sum - 1.0) / (12.0 * nd * nd);
  out.regime_k_threshold = 2.0 * nd * std::log(nd) + 1.0;
  out.less_biased_flag = kd >= out.regime_k_threshold;
  return out;
}

// ---------------------------------------------------------------------------
// Full characterization
// ---------------------------------------------------------------------------

struct CounterChoice {
  enum class Kind { exact, hll };
  Kind kind = Kind::exact;
  int precision = 14;
  std::uint64_t hash_seed = kDefaultHashSeed;

  static CounterChoice exact() { return {}; }
  static CounterChoice hll(int precision = 14,
                           std::uint64_t seed = kDefaultHashSeed) {
    return {Kind::hll, precision, seed};
  }

  /// Parses "exact" or "hll[:precision]".
  static CounterChoice parse(std::string_view text) {
    if (text == "exact") return exact();
    if (text == "hll") return hll();
    if (text.rfind("hll:", 0) == 0) {
      const int p = std::stoi(std::string(text.substr(4)));
      return hll(p);
    }
    throw std::invalid_argument("unknown counter: " + std::string(text));
  }
};

inline std::uint64_t unique_count(const Dataset& ds, const CounterChoice& counter) {
  return counter.kind == CounterChoice::Kind::exact
             ? exact_unique_count(ds)
             : hll_unique_count(ds, counter.precision, counter.hash_seed);
}

struct CharacterizeRefs {
  const Dataset* d_ref = nullptr;  // coverage reference (typically replay)
  double d_min_return = 0.0;
  double d_expert_return = 1.0;
  std::string ref_name = "replay";
  std::string min_name = "random";
  std::string expert_name = "online-best";
};

struct MeasureReport {
  double tq = 0.0;
  double saco = 0.0;
  double lsaco = 0.0;
  double naive_entropy_ratio = 0.0;
  std::uint64_t unique_sa = 0;
  double avg_return = 0.0;
  std::uint64_t n_transitions = 0;
  std::string ref_name, min_name, expert_name;
};

inline nlohmann::json measure_report_to_json(const MeasureReport& r) {
  return nlohmann::json{{"tq", r.tq},
                        {"saco", r.saco},
                        {"lsaco", r.lsaco},
                        {"naive_entropy_ratio", r.naive_entropy_ratio},
                        {"unique_sa", r.unique_sa},
                        {"avg_return", r.avg_return},
                        {"n_transitions", r.n_transitions},
                        {"references",
                         {{"d_ref", r.ref_name},
                          {"d_min", r.min_name},
                          {"d_expert", r.expert_name}}}};
}

inline std::string measure_report_csv_header() {
  return "tq,saco,lsaco,naive_entropy_ratio,unique_sa,avg_return,n_transitions,"
         "d_ref,d_min,d_expert";
}

inline std::string measure_report_to_csv(const MeasureReport& r) {
  return format_double(r.tq) + "," + format_double(r.saco) + "," +
         format_double(r.lsaco) + "," + format_double(r.naive_entropy_ratio) + "," +
         std::to_string(r.unique_sa) + "," + format_double(r.avg_return) + "," +
         std::to_string(r.n_transitions) + "," + r.ref_name + "," + r.min_name +
         "," + r.expert_name;
}

/// Bundles TQ, SACo, lSACo and the entropy ratio for one dataset against a
/// set of references.
inline MeasureReport characterize(const Dataset& ds, const CharacterizeRefs& refs,
                                  const CounterChoice& counter = CounterChoice::exact(),
                                  double gamma = 1.0) {
  if (!refs.d_ref) throw std::invalid_argument("characterize: missing reference dataset");
  MeasureReport out;
  out.n_transitions = ds.n_transitions();
  out.avg_return = average_trajectory_return(ds, gamma);
  out.tq = tq(ds, refs.d_min_return, refs.d_expert_return, gamma);
  out.unique_sa = unique_count(ds, counter);
  const std::uint64_t u_ref = unique_count(*refs.d_ref, counter);
  out.saco = saco(out.unique_sa, u_ref);
  out.lsaco = lsaco(out.unique_sa, u_ref);
  out.naive_entropy_ratio = naive_entropy_ratio(ds, *refs.d_ref);
  out.ref_name = refs.ref_name;
  out.min_name = refs.min_name;
  out.expert_name = refs.expert_name;
  return out;
}

}  // namespace datascope

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "datascope/core.hpp"
#include "datascope/envs.hpp"
#include "datascope/measures.hpp"
#include "datascope/rng.hpp"

namespace datascope {

/// Surjective abstraction of a ground MDP onto an abstract MDP: a total state
/// map phi and a per-ground-state action map psi_s. The preimages of phi
/// partition the ground states.
struct Homomorphism {
  std::vector<std::uint32_t> phi;               // ground state -> abstract state
  std::vector<std::vector<std::uint32_t>> psi;  // [ground state][ground action]
  FiniteMDP ground;
  FiniteMDP abstract_mdp;
};

inline Homomorphism make_homomorphism(FiniteMDP ground, FiniteMDP abstract_mdp,
                                      MappingRecord mapping) {
  return Homomorphism{std::move(mapping.phi), std::move(mapping.psi),
                      std::move(ground), std::move(abstract_mdp)};
}

inline nlohmann::json homomorphism_to_json(const Homomorphism& h) {
  return nlohmann::json{{"phi", h.phi},
                        {"psi", h.psi},
                        {"abstract_env",
                         {{"n_states", h.abstract_mdp.n_states},
                          {"n_actions", h.abstract_mdp.n_actions}}}};
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct HomomorphismViolation {
  std::string condition;  // which aggregation condition failed
  std::uint32_t s = 0, a = 0;
  std::uint32_t abstract_next = 0;
  double expected = 0.0;
  double actual = 0.0;
};

struct HomomorphismReport {
  bool valid = true;
  std::vector<HomomorphismViolation> violations;
  std::string structural_error;  // non-empty when maps are malformed
};

namespace detail {

/// Reward-conditional p(r | s, a, s') restricted to abstract next-state
/// classes: mass per (abstract s', reward value).
inline std::map<std::pair<std::uint32_t, double>, double> class_reward_mass(
    const std::vector<Outcome>& row, const std::vector<double>& values,
    const std::vector<std::uint32_t>& phi) {
  std::map<std::pair<std::uint32_t, double>, double> mass;
  for (const Outcome& o : row) mass[{phi[o.next], values[o.reward]}] += o.prob;
  return mass;
}

}  // namespace detail

/// Checks the aggregation conditions of a homomorphism: for all ground
/// (s, a, s', r),
///   p_hat(r | phi(s), psi_s(a), phi(s')) = p(r | s, a, s')   and
///   p_hat(phi(s') | phi(s), psi_s(a)) = sum over the phi-class of s'
/// of p(s-bar' | s, a), each to 1e-10. Terminal states must map to terminal
/// states so that episode structure corresponds.
inline HomomorphismReport validate_homomorphism(const Homomorphism& h,
                                                double tol = 1e-10) {
  HomomorphismReport report;
  const FiniteMDP& g = h.ground;
  const FiniteMDP& ab = h.abstract_mdp;

  auto fail = [&](const std::string& msg) {
    report.valid = false;
    report.structural_error = msg;
    return report;
  };

  if (h.phi.size() != g.n_states) return fail("phi is not total on ground states");
  if (h.psi.size() != g.n_states) return fail("psi is not total on ground states");
  std::vector<char> state_hit(ab.n_states, 0);
  for (std::uint32_t s = 0; s < g.n_states; ++s) {
    if (h.phi[s] >= ab.n_states) return fail("phi maps outside the abstract states");
    state_hit[h.phi[s]] = 1;
    if (h.psi[s].size() != g.n_actions)
      return fail("psi_s is not total on ground actions");
    std::vector<char> action_hit(ab.n_actions, 0);
    for (std::uint32_t a = 0; a < g.n_actions; ++a) {
      if (h.psi[s][a] >= ab.n_actions)
        return fail("psi_s maps outside the abstract actions");
      action_hit[h.psi[s][a]] = 1;
    }
    for (std::uint32_t ah = 0; ah < ab.n_actions; ++ah)
      if (!action_hit[ah]) return fail("psi_s is not surjective");
  }
  for (std::uint32_t sh = 0; sh < ab.n_states; ++sh)
    if (!state_hit[sh]) return fail("phi is not surjective");
  for (std::uint32_t s = 0; s < g.n_states; ++s)
    if (g.is_terminal(s) != ab.is_terminal(h.phi[s]))
      return fail("terminal structure not preserved by phi");
  if (g.gamma != ab.gamma || g.horizon != ab.horizon)
    return fail("discount or horizon differs between ground and abstract MDP");

  for (std::uint32_t s = 0; s < g.n_states; ++s) {
    for (std::uint32_t a = 0; a < g.n_actions; ++a) {
      const auto ground_mass = detail::class_reward_mass(g.row(s, a), g.rewards, h.phi);
      std::vector<std::uint32_t> id_phi(ab.n_states);
      for (std::uint32_t i = 0; i < ab.n_states; ++i) id_phi[i] = i;
      const auto abstract_mass = detail::class_reward_mass(
          ab.row(h.phi[s], h.psi[s][a]), ab.rewards, id_phi);

      // transition aggregation per abstract next state
      std::map<std::uint32_t, double> ground_next, abstract_next;
      for (const auto& [key, p] : ground_mass) ground_next[key.first] += p;
      for (const auto& [key, p] : abstract_mass) abstract_next[key.first] += p;
      for (std::uint32_t sh = 0; sh < ab.n_states; ++sh) {
        const double pg = ground_next.count(sh) ? ground_next.at(sh) : 0.0;
        const double pa = abstract_next.count(sh) ? abstract_next.at(sh) : 0.0;
        if (std::abs(pg - pa) > tol) {
          report.valid = false;
          report.violations.push_back({"transition", s, a, sh, pa, pg});
        }
      }

      // reward conditional per reachable abstract (s', r)
      for (const auto& [key, p] : ground_mass) {
        const double class_p = ground_next.at(key.first);
        if (class_p <= 0.0) continue;
        const double cond_ground = p / class_p;
        const double abs_class = abstract_next.count(key.first) ? abstract_next.at(key.first) : 0.0;
        double cond_abstract = 0.0;
        if (abs_class > 0.0) {
          for (const auto& [akey, ap] : abstract_mass)
            if (akey.first == key.first && std::abs(akey.second - key.second) <= 1e-12)
              cond_abstract += ap / abs_class;
        }
        if (std::abs(cond_ground - cond_abstract) > tol) {
          report.valid = false;
          report.violations.push_back({"reward", s, a, key.first, cond_abstract, cond_ground});
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Policy lifting
// ---------------------------------------------------------------------------

enum class SplitRule { uniform, first };

/// A ground policy obtained from an abstract one. Pushing the ground policy
/// back through (phi, psi) recovers the abstract rows exactly.
struct LiftedPolicy {
  PolicyTable abstract_policy;
  PolicyTable ground_policy;
  SplitRule split_rule = SplitRule::uniform;
};

/// pi(a | s) = pi_hat(psi_s(a) | phi(s)) * split(a), where split distributes
/// abstract-action mass over the psi_s-preimage (uniformly, or all on the
/// lowest-index ground action).
inline LiftedPolicy lift_policy(const Homomorphism& h, const PolicyTable& abstract_policy,
                                SplitRule split = SplitRule::uniform) {
  if (abstract_policy.n_states() != h.abstract_mdp.n_states ||
      abstract_policy.n_actions() != h.abstract_mdp.n_actions)
    throw std::invalid_argument("lift_policy: abstract policy dimension mismatch");

  PolicyTable ground(h.ground.n_states, h.ground.n_actions);
  for (std::uint32_t s = 0; s < h.ground.n_states; ++s) {
    std::vector<std::uint32_t> preimage_size(h.abstract_mdp.n_actions, 0);
    std::vector<std::uint32_t> first_of(h.abstract_mdp.n_actions, h.ground.n_actions);
    for (std::uint32_t a = 0; a < h.ground.n_actions; ++a) {
      const std::uint32_t ah = h.psi[s][a];
      if (preimage_size[ah]++ == 0) first_of[ah] = a;
    }
    for (std::uint32_t ah = 0; ah < h.abstract_mdp.n_actions; ++ah)
      if (preimage_size[ah] == 0)
        throw std::invalid_argument("lift_policy: psi_s has an empty action preimage");
    for (std::uint32_t a = 0; a < h.ground.n_actions; ++a) {
      const std::uint32_t ah = h.psi[s][a];
      const double mass = abstract_policy.at(h.phi[s], ah);
      if (split == SplitRule::uniform)
        ground.at(s, a) = mass / preimage_size[ah];
      else
        ground.at(s, a) = (a == first_of[ah]) ? mass : 0.0;
    }
  }
  ground.validate();
  return LiftedPolicy{abstract_policy, std::move(ground), split};
}

/// Pushforward of a ground policy row through (phi, psi). Throws if two
/// ground states of one phi-class disagree, i.e. the policy does not
/// correspond to any abstract policy.
inline PolicyTable pushforward_policy(const Homomorphism& h, const PolicyTable& ground,
                                      double tol = 1e-12) {
  PolicyTable abstract(h.abstract_mdp.n_states, h.abstract_mdp.n_actions);
  std::vector<char> seen(h.abstract_mdp.n_states, 0);
  for (std::uint32_t s = 0; s < h.ground.n_states; ++s) {
    std::vector<double> row(h.abstract_mdp.n_actions, 0.0);
    for (std::uint32_t a = 0; a < h.ground.n_actions; ++a)
      row[h.psi[s][a]] += ground.at(s, a);
    const std::uint32_t sh = h.phi[s];
    if (!seen[sh]) {
      for (std::uint32_t ah = 0; ah < row.size(); ++ah) abstract.at(sh, ah) = row[ah];
      seen[sh] = 1;
    } else {
      for (std::uint32_t ah = 0; ah < row.size(); ++ah)
        if (std::abs(abstract.at(sh, ah) - row[ah]) > tol)
          throw std::invalid_argument(
              "pushforward_policy: ground rows disagree within a phi-class");
    }
  }
  return abstract;
}

/// Pushforward of the ground initial distribution onto abstract states.
inline std::vector<double> pushforward_initial(const Homomorphism& h) {
  std::vector<double> init(h.abstract_mdp.n_states, 0.0);
  for (std::uint32_t s = 0; s < h.ground.n_states; ++s)
    init[h.phi[s]] += h.ground.initial_dist[s];
  return init;
}

// ---------------------------------------------------------------------------
// Theorem checks
// ---------------------------------------------------------------------------

struct ReturnPreservationReport {
  double g1 = 0.0;
  double g2 = 0.0;
  double difference = 0.0;
  bool equal = false;
};

namespace detail {

inline void check_shared_abstract(const Homomorphism& h1, const Homomorphism& h2) {
  if (!(h1.abstract_mdp == h2.abstract_mdp))
    throw std::invalid_argument("homomorphisms do not share an abstract MDP");
}

inline void check_consistent_initial(const Homomorphism& h1, const Homomorphism& h2,
                                     double tol = 1e-12) {
  const auto i1 = pushforward_initial(h1);
  const auto i2 = pushforward_initial(h2);
  for (std::size_t s = 0; s < i1.size(); ++s)
    if (std::abs(i1[s] - i2[s]) > tol)
      throw std::invalid_argument(
          "initial distributions have different pushforwards onto the abstract MDP");
}

}  // namespace detail

/// Corresponding policies of two homomorphic images of one abstract MDP must
/// have equal expected return. Both sides are evaluated exactly.
inline ReturnPreservationReport check_return_preservation(const Homomorphism& h1,
                                                          const Homomorphism& h2,
                                                          const PolicyTable& abstract_policy,
                                                          double tol = 1e-9) {
  detail::check_shared_abstract(h1, h2);
  detail::check_consistent_initial(h1, h2);
  ReturnPreservationReport r;
  r.g1 = evaluate_policy_exact(h1.ground, lift_policy(h1, abstract_policy).ground_policy);
  r.g2 = evaluate_policy_exact(h2.ground, lift_policy(h2, abstract_policy).ground_policy);
  r.difference = std::abs(r.g1 - r.g2);
  r.equal = r.difference <= tol;
  return r;
}

struct EntropyBoundReport {
  double h_ground1 = 0.0;
  double h_ground2 = 0.0;
  double h_abstract = 0.0;
  bool lower_bound_holds = false;  // both ground entropies >= abstract entropy
  bool difference_bound_holds = false;  // |H1 - H2| <= max(H1, H2) - H_hat
};

/// Transition-entropies of two homomorphic images are bounded below by the
/// abstract transition-entropy, and their absolute difference is bounded by
/// max(H1, H2) - H_hat.
inline EntropyBoundReport check_entropy_bounds(const Homomorphism& h1,
                                               const Homomorphism& h2,
                                               const PolicyTable& abstract_policy,
                                               double tol = 1e-10) {
  detail::check_shared_abstract(h1, h2);
  detail::check_consistent_initial(h1, h2);
  EntropyBoundReport r;
  r.h_ground1 =
      transition_entropy_exact(h1.ground, lift_policy(h1, abstract_policy).ground_policy);
  r.h_ground2 =
      transition_entropy_exact(h2.ground, lift_policy(h2, abstract_policy).ground_policy);
  r.h_abstract = transition_entropy_exact(h1.abstract_mdp, abstract_policy);
  r.lower_bound_holds =
      r.h_ground1 >= r.h_abstract - tol && r.h_ground2 >= r.h_abstract - tol;
  r.difference_bound_holds =
      std::abs(r.h_ground1 - r.h_ground2) <=
      std::max(r.h_ground1, r.h_ground2) - r.h_abstract + tol;
  return r;
}

// ---------------------------------------------------------------------------
// Random generation (valid by construction)
// ---------------------------------------------------------------------------

struct RandomMdpParams {
  std::uint32_t min_states = 2, max_states = 6;
  std::uint32_t min_actions = 2, max_actions = 4;
  std::uint32_t min_rewards = 1, max_rewards = 3;
  double terminal_prob = 0.25;  // per non-initial state
  bool deterministic = false;
  double gamma = 0.9;
  std::uint32_t horizon = 12;
};

/// Samples a random MDP. Rows draw a support over (s', r) pairs and
/// exponential weights; deterministic mode picks a single outcome per row.
inline FiniteMDP random_mdp(Rng& rng, const RandomMdpParams& params = {}) {
  FiniteMDP m;
  m.n_states = params.min_states + rng.next_below(params.max_states - params.min_states + 1);
  m.n_actions =
      params.min_actions + rng.next_below(params.max_actions - params.min_actions + 1);
  const std::uint32_t n_rewards =
      params.min_rewards + rng.next_below(params.max_rewards - params.min_rewards + 1);
  m.rewards.push_back(0.0);
  for (std::uint32_t i = 1; i < n_rewards; ++i)
    m.rewards.push_back(std::round((rng.next_double() * 4.0 - 2.0) * 64.0) / 64.0);
  std::sort(m.rewards.begin(), m.rewards.end());
  m.rewards.erase(std::unique(m.rewards.begin(), m.rewards.end()), m.rewards.end());
  m.gamma = params.gamma;
  m.horizon = params.horizon;

  m.terminal.assign(m.n_states, 0);
  for (std::uint32_t s = 1; s < m.n_states; ++s)
    if (rng.next_double() < params.terminal_prob) m.terminal[s] = 1;

  m.initial_dist.assign(m.n_states, 0.0);
  double init_total = 0.0;
  for (std::uint32_t s = 0; s < m.n_states; ++s) {
    if (m.terminal[s]) continue;
    m.initial_dist[s] = rng.next_exponential();
    init_total += m.initial_dist[s];
  }
  for (double& p : m.initial_dist) p /= init_total;

  const auto nr = static_cast<std::uint32_t>(m.rewards.size());
  m.dynamics.assign(static_cast<std::size_t>(m.n_states) * m.n_actions, {});
  for (std::uint32_t s = 0; s < m.n_states; ++s) {
    for (std::uint32_t a = 0; a < m.n_actions; ++a) {
      auto& row = m.row(s, a);
      if (m.terminal[s]) {
        row.push_back({s, m.zero_reward_index(), 1.0});
        continue;
      }
      if (params.deterministic) {
        row.push_back({rng.next_below(m.n_states), rng.next_below(nr), 1.0});
        continue;
      }
      const std::uint32_t support = 1 + rng.next_below(std::min(3u, m.n_states * nr));
      double total = 0.0;
      for (std::uint32_t i = 0; i < support; ++i) {
        const double w = rng.next_exponential();
        row.push_back({rng.next_below(m.n_states), rng.next_below(nr), w});
        total += w;
      }
      for (Outcome& o : row) o.prob /= total;
    }
  }
  canonicalize_dynamics(m);
  // merging duplicates can change row sums only by rounding; renormalize
  for (auto& row : m.dynamics) {
    double total = 0.0;
    for (const Outcome& o : row) total += o.prob;
    for (Outcome& o : row) o.prob /= total;
  }
  m.validate();
  return m;
}

inline PolicyTable random_policy(Rng& rng, const FiniteMDP& m) {
  PolicyTable t(m.n_states, m.n_actions);
  for (std::uint32_t s = 0; s < m.n_states; ++s) {
    double total = 0.0;
    for (std::uint32_t a = 0; a < m.n_actions; ++a) {
      t.at(s, a) = rng.next_exponential();
      total += t.at(s, a);
    }
    for (std::uint32_t a = 0; a < m.n_actions; ++a) t.at(s, a) /= total;
  }
  return t;
}

struct RandomHomomorphismParams {
  std::uint32_t max_state_copies = 3;
  std::uint32_t max_extra_actions = 2;
};

/// Expands an abstract MDP into a random homomorphic image: each abstract
/// state becomes 1..max_state_copies ground states, each ground state gets a
/// random surjective action map with up to max_extra_actions duplicates, and
/// abstract transition mass is split across target copies with random
/// weights. The construction satisfies the aggregation conditions exactly.
inline Homomorphism expand_random(const FiniteMDP& abstract_mdp, Rng& rng,
                                  const RandomHomomorphismParams& params = {}) {
  const std::uint32_t na_abstract = abstract_mdp.n_actions;
  const std::uint32_t n_ground_actions =
      na_abstract + rng.next_below(params.max_extra_actions + 1);

  std::vector<std::uint32_t> copies(abstract_mdp.n_states);
  std::vector<std::uint32_t> offset(abstract_mdp.n_states + 1, 0);
  for (std::uint32_t sh = 0; sh < abstract_mdp.n_states; ++sh) {
    copies[sh] = 1 + rng.next_below(params.max_state_copies);
    offset[sh + 1] = offset[sh] + copies[sh];
  }
  const std::uint32_t n_ground_states = offset.back();

  Homomorphism h;
  h.abstract_mdp = abstract_mdp;
  h.phi.resize(n_ground_states);
  for (std::uint32_t sh = 0; sh < abstract_mdp.n_states; ++sh)
    for (std::uint32_t c = 0; c < copies[sh]; ++c) h.phi[offset[sh] + c] = sh;

  FiniteMDP& g = h.ground;
  g.n_states = n_ground_states;
  g.n_actions = n_ground_actions;
  g.rewards = abstract_mdp.rewards;
  g.gamma = abstract_mdp.gamma;
  g.horizon = abstract_mdp.horizon;
  g.dynamics.assign(static_cast<std::size_t>(g.n_states) * g.n_actions, {});
  g.initial_dist.assign(g.n_states, 0.0);
  g.terminal.assign(g.n_states, 0);

  // random split of the abstract initial mass over copies
  for (std::uint32_t sh = 0; sh < abstract_mdp.n_states; ++sh) {
    const double mass = abstract_mdp.initial_dist[sh];
    std::vector<double> w(copies[sh]);
    double total = 0.0;
    for (double& x : w) total += (x = rng.next_exponential());
    for (std::uint32_t c = 0; c < copies[sh]; ++c)
      g.initial_dist[offset[sh] + c] = mass * w[c] / total;
  }

  h.psi.assign(n_ground_states, {});
  for (std::uint32_t s = 0; s < n_ground_states; ++s) {
    const std::uint32_t sh = h.phi[s];
    g.terminal[s] = abstract_mdp.terminal[sh];

    // surjective action map: a shuffled identity block plus random extras
    std::vector<std::uint32_t> map(n_ground_actions);
    std::vector<std::uint32_t> block(na_abstract);
    for (std::uint32_t i = 0; i < na_abstract; ++i) block[i] = i;
    for (std::uint32_t i = na_abstract; i-- > 1;)
      std::swap(block[i], block[rng.next_below(i + 1)]);
    for (std::uint32_t a = 0; a < n_ground_actions; ++a)
      map[a] = a < na_abstract ? block[a] : rng.next_below(na_abstract);
    h.psi[s] = map;

    for (std::uint32_t a = 0; a < n_ground_actions; ++a) {
      auto& row = g.row(s, a);
      if (g.terminal[s]) {
        row.push_back({s, g.zero_reward_index(), 1.0});
        continue;
      }
      // One split per target class, shared by every reward value of that
      // class; reward conditionals within a class must stay intact.
      std::map<std::uint32_t, std::vector<double>> split;
      for (const Outcome& o : abstract_mdp.row(sh, map[a])) {
        auto [it, inserted] = split.try_emplace(o.next);
        if (inserted) {
          it->second.resize(copies[o.next]);
          double total = 0.0;
          for (double& x : it->second) total += (x = rng.next_exponential());
          for (double& x : it->second) x /= total;
        }
        for (std::uint32_t c = 0; c < copies[o.next]; ++c)
          row.push_back({offset[o.next] + c, o.reward, o.prob * it->second[c]});
      }
    }
  }
  canonicalize_dynamics(g);
  for (auto& row : g.dynamics) {
    double total = 0.0;
    for (const Outcome& o : row) total += o.prob;
    for (Outcome& o : row) o.prob /= total;
  }
  g.validate();
  return h;
}

/// Identity homomorphism of an MDP onto itself.
inline Homomorphism identity_homomorphism(const FiniteMDP& m) {
  return make_homomorphism(m, m, detail::identity_mapping(m.n_states, m.n_actions));
}

struct HomomorphismPair {
  FiniteMDP abstract_mdp;
  Homomorphism h1;
  Homomorphism h2;
};

/// Two random homomorphic images of one random abstract MDP, with matched
/// initial pushforwards by construction.
inline HomomorphismPair sample_homomorphism_pair(Rng& rng,
                                                 const RandomMdpParams& mdp_params = {},
                                                 const RandomHomomorphismParams& params = {}) {
  HomomorphismPair pair;
  pair.abstract_mdp = random_mdp(rng, mdp_params);
  pair.h1 = expand_random(pair.abstract_mdp, rng, params);
  pair.h2 = expand_random(pair.abstract_mdp, rng, params);
  return pair;
}

}  // namespace datascope

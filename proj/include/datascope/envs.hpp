#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "datascope/core.hpp"

namespace datascope {

// ---------------------------------------------------------------------------
// Gridworld
// ---------------------------------------------------------------------------

/// Rectangular gridworld description. Cells are indexed y * width + x.
/// Goal and lava cells end the episode; walls are impassable (bumping stays
/// in place and still costs step_reward). slip_prob is the probability that
/// the executed action is replaced by a uniformly random one.
struct GridSpec {
  std::uint32_t width = 5;
  std::uint32_t height = 5;
  std::set<std::uint32_t> walls;
  std::set<std::uint32_t> lava;
  std::uint32_t start = 0;
  std::uint32_t goal = 24;
  double step_reward = -1.0;
  double goal_reward = 0.0;
  double lava_reward = -40.0;
  double slip_prob = 0.0;
  double gamma = 0.99;
  std::uint32_t horizon = 60;

  std::uint32_t cell(std::uint32_t x, std::uint32_t y) const { return y * width + x; }
};

inline GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec g;
  g.width = j.value("width", 5u);
  g.height = j.value("height", 5u);
  auto cell_of = [&](const nlohmann::json& xy) {
    return g.cell(xy.at(0).get<std::uint32_t>(), xy.at(1).get<std::uint32_t>());
  };
  if (j.contains("walls"))
    for (const auto& xy : j.at("walls")) g.walls.insert(cell_of(xy));
  if (j.contains("lava"))
    for (const auto& xy : j.at("lava")) g.lava.insert(cell_of(xy));
  g.start = j.contains("start") ? cell_of(j.at("start")) : g.cell(0, 0);
  g.goal = j.contains("goal") ? cell_of(j.at("goal")) : g.cell(g.width - 1, g.height - 1);
  g.step_reward = j.value("step_reward", -1.0);
  g.goal_reward = j.value("goal_reward", 0.0);
  g.lava_reward = j.value("lava_reward", -40.0);
  g.slip_prob = j.value("slip_prob", 0.0);
  g.gamma = j.value("gamma", 0.99);
  g.horizon = j.value("horizon", 60u);
  return g;
}

/// Gridworld build result with the cell <-> state maps (wall cells are not
/// states, so ids are compacted).
struct GridBuild {
  FiniteMDP mdp;
  std::vector<std::int32_t> state_of_cell;  // -1 for walls
  std::vector<std::uint32_t> cell_of_state;
};

namespace detail {

inline void check_grid(const GridSpec& g) {
  const std::uint32_t n_cells = g.width * g.height;
  if (g.width == 0 || g.height == 0)
    throw std::invalid_argument("GridSpec: zero-sized grid");
  if (g.start >= n_cells || g.goal >= n_cells)
    throw std::invalid_argument("GridSpec: start or goal outside the grid");
  if (g.start == g.goal) throw std::invalid_argument("GridSpec: start == goal");
  if (g.walls.count(g.start) || g.walls.count(g.goal))
    throw std::invalid_argument("GridSpec: start or goal is a wall");
  if (g.lava.count(g.start) || g.lava.count(g.goal))
    throw std::invalid_argument("GridSpec: start or goal is lava");
  if (!(g.slip_prob >= 0.0 && g.slip_prob <= 1.0))
    throw std::invalid_argument("GridSpec: slip_prob outside [0, 1]");

  // goal must be reachable from start without crossing walls or lava
  std::vector<char> seen(n_cells, 0);
  std::deque<std::uint32_t> queue{g.start};
  seen[g.start] = 1;
  while (!queue.empty()) {
    const std::uint32_t c = queue.front();
    queue.pop_front();
    if (c == g.goal) return;
    const std::uint32_t x = c % g.width, y = c / g.width;
    const std::int64_t nbs[4][2] = {{x, std::int64_t(y) - 1},
                                    {x, std::int64_t(y) + 1},
                                    {std::int64_t(x) - 1, y},
                                    {std::int64_t(x) + 1, y}};
    for (const auto& nb : nbs) {
      if (nb[0] < 0 || nb[1] < 0 || nb[0] >= g.width || nb[1] >= g.height) continue;
      const auto cc = static_cast<std::uint32_t>(nb[1] * g.width + nb[0]);
      if (seen[cc] || g.walls.count(cc) || g.lava.count(cc)) continue;
      seen[cc] = 1;
      queue.push_back(cc);
    }
  }
  throw std::invalid_argument("GridSpec: goal not reachable from start");
}

inline std::uint32_t reward_index(std::vector<double>& values, double v) {
  for (std::uint32_t i = 0; i < values.size(); ++i)
    if (values[i] == v) return i;
  values.push_back(v);
  return static_cast<std::uint32_t>(values.size() - 1);
}

}  // namespace detail

/// Actions: 0 = up, 1 = down, 2 = left, 3 = right.
inline GridBuild build_gridworld_mapped(const GridSpec& g) {
  detail::check_grid(g);
  const std::uint32_t n_cells = g.width * g.height;

  GridBuild out;
  out.state_of_cell.assign(n_cells, -1);
  for (std::uint32_t c = 0; c < n_cells; ++c) {
    if (g.walls.count(c)) continue;
    out.state_of_cell[c] = static_cast<std::int32_t>(out.cell_of_state.size());
    out.cell_of_state.push_back(c);
  }

  FiniteMDP& m = out.mdp;
  m.n_states = static_cast<std::uint32_t>(out.cell_of_state.size());
  m.n_actions = 4;
  m.gamma = g.gamma;
  m.horizon = g.horizon;
  m.dynamics.assign(static_cast<std::size_t>(m.n_states) * 4, {});
  m.initial_dist.assign(m.n_states, 0.0);
  m.terminal.assign(m.n_states, 0);
  m.initial_dist[out.state_of_cell[g.start]] = 1.0;

  std::vector<double> values;
  const std::uint32_t r_zero = detail::reward_index(values, 0.0);

  auto move = [&](std::uint32_t cell, std::uint32_t action) -> std::uint32_t {
    const std::int64_t x = cell % g.width, y = cell / g.width;
    std::int64_t nx = x, ny = y;
    switch (action) {
      case 0: ny = y - 1; break;
      case 1: ny = y + 1; break;
      case 2: nx = x - 1; break;
      case 3: nx = x + 1; break;
    }
    if (nx < 0 || ny < 0 || nx >= g.width || ny >= g.height) return cell;
    const auto nc = static_cast<std::uint32_t>(ny * g.width + nx);
    return g.walls.count(nc) ? cell : nc;
  };
  auto reward_of_landing = [&](std::uint32_t cell) {
    if (cell == g.goal) return g.goal_reward;
    if (g.lava.count(cell)) return g.lava_reward;
    return g.step_reward;
  };

  for (std::uint32_t sidx = 0; sidx < m.n_states; ++sidx) {
    const std::uint32_t cell = out.cell_of_state[sidx];
    const bool term = (cell == g.goal) || g.lava.count(cell) > 0;
    m.terminal[sidx] = term ? 1 : 0;
    for (std::uint32_t a = 0; a < 4; ++a) {
      auto& row = m.row(sidx, a);
      if (term) {
        row.push_back({sidx, r_zero, 1.0});
        continue;
      }
      for (std::uint32_t e = 0; e < 4; ++e) {
        double p = (e == a) ? (1.0 - g.slip_prob) : 0.0;
        p += g.slip_prob / 4.0;
        if (p == 0.0) continue;
        const std::uint32_t nc = move(cell, e);
        const auto next = static_cast<std::uint32_t>(out.state_of_cell[nc]);
        row.push_back({next, detail::reward_index(values, reward_of_landing(nc)), p});
      }
    }
  }
  m.rewards = values;
  canonicalize_dynamics(m);
  m.validate();
  return out;
}

inline FiniteMDP build_gridworld(const GridSpec& g) {
  return build_gridworld_mapped(g).mdp;
}

// ---------------------------------------------------------------------------
// Chain
// ---------------------------------------------------------------------------

/// n-state left/right chain; reward 1 on entering the right end (terminal).
/// With `noise`, the executed action is flipped with that probability.
inline FiniteMDP build_chain(std::uint32_t n, double noise) {
  if (n < 2) throw std::invalid_argument("build_chain: need at least 2 states");
  if (!(noise >= 0.0 && noise <= 1.0))
    throw std::invalid_argument("build_chain: noise outside [0, 1]");

  FiniteMDP m;
  m.n_states = n;
  m.n_actions = 2;  // 0 = left, 1 = right
  m.rewards = {0.0, 1.0};
  m.gamma = 0.99;
  m.horizon = 5 * n;
  m.dynamics.assign(static_cast<std::size_t>(n) * 2, {});
  m.initial_dist.assign(n, 0.0);
  m.initial_dist[0] = 1.0;
  m.terminal.assign(n, 0);
  m.terminal[n - 1] = 1;

  auto dest = [&](std::uint32_t s, std::uint32_t a) -> std::uint32_t {
    return a == 1 ? std::min(s + 1, n - 1) : (s == 0 ? 0 : s - 1);
  };
  for (std::uint32_t s = 0; s < n; ++s) {
    for (std::uint32_t a = 0; a < 2; ++a) {
      auto& row = m.row(s, a);
      if (m.terminal[s]) {
        row.push_back({s, 0, 1.0});
        continue;
      }
      for (std::uint32_t e = 0; e < 2; ++e) {
        const double p = (e == a) ? 1.0 - noise : noise;
        if (p == 0.0) continue;
        const std::uint32_t next = dest(s, e);
        row.push_back({next, next == n - 1 ? 1u : 0u, p});
      }
    }
  }
  canonicalize_dynamics(m);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Transformations
// ---------------------------------------------------------------------------

/// Abstraction maps from a transformed MDP back onto its source:
/// phi[ground_state] = source state, psi[ground_state][ground_action] =
/// source action. Identity maps for transforms that do not relabel.
struct MappingRecord {
  std::vector<std::uint32_t> phi;
  std::vector<std::vector<std::uint32_t>> psi;
};

struct TransformResult {
  FiniteMDP mdp;
  MappingRecord mapping;
};

namespace detail {

inline MappingRecord identity_mapping(std::uint32_t n_states, std::uint32_t n_actions) {
  MappingRecord rec;
  rec.phi.resize(n_states);
  for (std::uint32_t s = 0; s < n_states; ++s) rec.phi[s] = s;
  std::vector<std::uint32_t> ids(n_actions);
  for (std::uint32_t a = 0; a < n_actions; ++a) ids[a] = a;
  rec.psi.assign(n_states, ids);
  return rec;
}

inline void check_perm(const std::vector<std::uint32_t>& perm, std::uint32_t n,
                       const char* what) {
  if (perm.size() != n) throw std::invalid_argument(std::string(what) + ": wrong size");
  std::vector<char> hit(n, 0);
  for (std::uint32_t v : perm) {
    if (v >= n || hit[v]) throw std::invalid_argument(std::string(what) + ": not a permutation");
    hit[v] = 1;
  }
}

}  // namespace detail

/// Relabels states by perm[old] = new. The mapping sends each new state back
/// to its source, so the result is an isomorphic image of the input.
inline TransformResult permute_states(const FiniteMDP& m,
                                      const std::vector<std::uint32_t>& perm) {
  detail::check_perm(perm, m.n_states, "permute_states");
  FiniteMDP out = m;
  for (std::uint32_t s = 0; s < m.n_states; ++s) {
    out.initial_dist[perm[s]] = m.initial_dist[s];
    out.terminal[perm[s]] = m.terminal[s];
    for (std::uint32_t a = 0; a < m.n_actions; ++a) {
      auto row = m.row(s, a);
      for (Outcome& o : row) o.next = perm[o.next];
      out.row(perm[s], a) = std::move(row);
    }
  }
  canonicalize_dynamics(out);
  out.validate();
  MappingRecord rec = detail::identity_mapping(m.n_states, m.n_actions);
  for (std::uint32_t s = 0; s < m.n_states; ++s) rec.phi[perm[s]] = s;
  return {std::move(out), std::move(rec)};
}

/// Relabels actions by perm[old] = new, uniformly across states.
inline TransformResult permute_actions(const FiniteMDP& m,
                                       const std::vector<std::uint32_t>& perm) {
  detail::check_perm(perm, m.n_actions, "permute_actions");
  FiniteMDP out = m;
  for (std::uint32_t s = 0; s < m.n_states; ++s)
    for (std::uint32_t a = 0; a < m.n_actions; ++a) out.row(s, perm[a]) = m.row(s, a);
  out.validate();
  MappingRecord rec = detail::identity_mapping(m.n_states, m.n_actions);
  std::vector<std::uint32_t> inv(m.n_actions);
  for (std::uint32_t a = 0; a < m.n_actions; ++a) inv[perm[a]] = a;
  rec.psi.assign(m.n_states, inv);
  return {std::move(out), std::move(rec)};
}

/// Splits every state into k parallel copies (copy c of state s gets id
/// s * k + c). Each copy keeps the source dynamics within its own layer and
/// the initial mass of a state is divided evenly over its copies, so the
/// quotient under the returned mapping reproduces the source exactly.
inline TransformResult duplicate_states(const FiniteMDP& m, std::uint32_t k) {
  if (k < 1) throw std::invalid_argument("duplicate_states: k must be >= 1");
  FiniteMDP out;
  out.n_states = m.n_states * k;
  out.n_actions = m.n_actions;
  out.rewards = m.rewards;
  out.gamma = m.gamma;
  out.horizon = m.horizon;
  out.dynamics.assign(static_cast<std::size_t>(out.n_states) * out.n_actions, {});
  out.initial_dist.assign(out.n_states, 0.0);
  out.terminal.assign(out.n_states, 0);

  for (std::uint32_t s = 0; s < m.n_states; ++s) {
    for (std::uint32_t c = 0; c < k; ++c) {
      const std::uint32_t g = s * k + c;
      out.initial_dist[g] = m.initial_dist[s] / k;
      out.terminal[g] = m.terminal[s];
      for (std::uint32_t a = 0; a < m.n_actions; ++a) {
        auto row = m.row(s, a);
        for (Outcome& o : row) o.next = o.next * k + c;
        out.row(g, a) = std::move(row);
      }
    }
  }
  canonicalize_dynamics(out);
  out.validate();
  MappingRecord rec = detail::identity_mapping(out.n_states, out.n_actions);
  for (std::uint32_t g = 0; g < out.n_states; ++g) rec.phi[g] = g / k;
  return {std::move(out), std::move(rec)};
}

/// Reward-dynamics shift: multiplies every reward value by c. Transition
/// structure is untouched.
inline TransformResult scale_rewards(const FiniteMDP& m, double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("scale_rewards: non-finite factor");
  FiniteMDP out = m;
  std::vector<double> values;
  std::vector<std::uint32_t> remap(m.rewards.size());
  for (std::uint32_t i = 0; i < m.rewards.size(); ++i)
    remap[i] = detail::reward_index(values, m.rewards[i] * c);
  out.rewards = values;
  for (auto& row : out.dynamics)
    for (Outcome& o : row) o.reward = remap[o.reward];
  canonicalize_dynamics(out);
  out.validate();
  return {std::move(out), detail::identity_mapping(m.n_states, m.n_actions)};
}

/// State-dynamics shift: mixes each non-terminal row with a uniform
/// next-state distribution, keeping the row's reward marginal.
inline TransformResult add_dynamics_noise(const FiniteMDP& m, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0))
    throw std::invalid_argument("add_dynamics_noise: eps outside [0, 1]");
  FiniteMDP out = m;
  const double u = 1.0 / m.n_states;
  for (std::uint32_t s = 0; s < m.n_states; ++s) {
    if (m.is_terminal(s)) continue;
    for (std::uint32_t a = 0; a < m.n_actions; ++a) {
      const auto& src = m.row(s, a);
      std::vector<Outcome> mixed;
      for (const Outcome& o : src) mixed.push_back({o.next, o.reward, (1.0 - eps) * o.prob});
      for (const Outcome& o : src)
        for (std::uint32_t next = 0; next < m.n_states; ++next)
          mixed.push_back({next, o.reward, eps * u * o.prob});
      out.row(s, a) = std::move(mixed);
    }
  }
  canonicalize_dynamics(out);
  out.validate();
  return {std::move(out), detail::identity_mapping(m.n_states, m.n_actions)};
}

struct TransformKind {
  enum class Tag { permute_states, permute_actions, duplicate_states, reward_scale, dynamics_noise };
  Tag tag = Tag::permute_states;
  std::vector<std::uint32_t> perm;  // permute_* (required)
  std::uint32_t k = 2;              // duplicate_states
  double c = 1.0;                   // reward_scale
  double eps = 0.0;                 // dynamics_noise
};

inline TransformResult transform(const FiniteMDP& m, const TransformKind& kind) {
  using Tag = TransformKind::Tag;
  switch (kind.tag) {
    case Tag::permute_states: return permute_states(m, kind.perm);
    case Tag::permute_actions: return permute_actions(m, kind.perm);
    case Tag::duplicate_states: return duplicate_states(m, kind.k);
    case Tag::reward_scale: return scale_rewards(m, kind.c);
    case Tag::dynamics_noise: return add_dynamics_noise(m, kind.eps);
  }
  throw std::invalid_argument("transform: unknown kind");
}

/// Applies id relabelings to a dataset (state_map[old] = new), e.g. to carry
/// a dataset into a state/action-permuted environment.
inline Dataset relabel_dataset(const Dataset& ds,
                               const std::vector<std::uint32_t>& state_map,
                               const std::vector<std::uint32_t>& action_map) {
  Dataset out = ds;
  for (Trajectory& traj : out.trajectories)
    for (Transition& tr : traj.transitions) {
      tr.s = state_map.at(static_cast<std::size_t>(tr.s));
      tr.s_next = state_map.at(static_cast<std::size_t>(tr.s_next));
      tr.a = action_map.at(tr.a);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

struct EnvCatalogEntry {
  std::string name;
  std::function<FiniteMDP()> build;
  std::string notes;
};

/// Built-in environments addressable by name from the CLI.
inline const std::vector<EnvCatalogEntry>& env_catalog() {
  static const std::vector<EnvCatalogEntry> entries = [] {
    auto escape5 = [] {
      GridSpec g;
      g.width = g.height = 5;
      g.walls = {g.cell(2, 1), g.cell(2, 2)};
      g.start = g.cell(0, 0);
      g.goal = g.cell(4, 4);
      g.step_reward = -1.0;
      g.goal_reward = 0.0;
      g.gamma = 0.99;
      g.horizon = 60;
      return g;
    };
    auto goal5 = [&] {
      GridSpec g = escape5();
      g.step_reward = 0.0;
      g.goal_reward = 1.0;
      g.gamma = 0.9;
      g.horizon = 50;
      return g;
    };
    auto lava5 = [] {
      GridSpec g;
      g.width = g.height = 5;
      g.lava = {g.cell(2, 0), g.cell(2, 1), g.cell(2, 3), g.cell(2, 4)};
      g.start = g.cell(0, 2);
      g.goal = g.cell(4, 2);
      g.step_reward = -1.0;
      g.goal_reward = 0.0;
      g.lava_reward = -40.0;
      g.gamma = 0.99;
      g.horizon = 60;
      return g;
    };
    auto escape7 = [] {
      GridSpec g;
      g.width = g.height = 7;
      g.walls = {g.cell(3, 1), g.cell(3, 2), g.cell(3, 3), g.cell(3, 4), g.cell(3, 5)};
      g.start = g.cell(0, 3);
      g.goal = g.cell(6, 3);
      g.step_reward = -1.0;
      g.goal_reward = 0.0;
      g.gamma = 0.99;
      g.horizon = 80;
      return g;
    };
    std::vector<EnvCatalogEntry> v;
    v.push_back({"chain5", [] { return build_chain(5, 0.0); },
                 "5-state deterministic chain, reward 1 at the right end"});
    v.push_back({"chain8", [] { return build_chain(8, 0.0); },
                 "8-state deterministic chain"});
    v.push_back({"chain8n", [] { return build_chain(8, 0.1); },
                 "8-state chain with 0.1 action-flip noise"});
    v.push_back({"grid5", [escape5] { return build_gridworld(escape5()); },
                 "5x5 grid, -1 per step, two interior walls, terminal goal"});
    v.push_back({"grid5goal", [goal5] { return build_gridworld(goal5()); },
                 "5x5 grid, 0 per step, +1 on reaching the goal"});
    v.push_back({"grid5slip", [goal5] {
                   GridSpec g = goal5();
                   g.slip_prob = 0.2;
                   return build_gridworld(g);
                 },
                 "grid5goal with 0.2 action-slip stochasticity"});
    v.push_back({"grid5lava", [lava5] { return build_gridworld(lava5()); },
                 "5x5 grid with a lava wall and a single gap, -40 on lava"});
    v.push_back({"grid7", [escape7] { return build_gridworld(escape7()); },
                 "7x7 grid, -1 per step, wall with passages at top and bottom"});
    return v;
  }();
  return entries;
}

inline FiniteMDP build_env(std::string_view name) {
  for (const auto& e : env_catalog())
    if (e.name == name) return e.build();
  throw std::invalid_argument("unknown environment: " + std::string(name));
}

}  // namespace datascope

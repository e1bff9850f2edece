#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>

#include <json.hpp>

#include "datascope/core.hpp"

namespace datascope {

/// Malformed input (bad JSON line, broken trajectory structure, bad manifest).
/// Carries the 1-based line number when the error is line-addressable.
/// The CLI maps this to exit code 2.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t line, const std::string& msg)
      : std::runtime_error(line == 0 ? msg : "line " + std::to_string(line) + ": " + msg),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Shortest round-trippable decimal representation of a double. JSON and CSV
/// writers share it so that serialize -> parse -> serialize is byte-identical.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc())
    throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Dataset file format: JSON Lines, one transition per line, grouped by
// episode with t ascending from 0. Sidecar manifest <name>.manifest.json.
// ---------------------------------------------------------------------------

inline std::string serialize_jsonl(const Dataset& ds) {
  std::string out;
  out.reserve(ds.n_transitions() * 64);
  for (const Trajectory& traj : ds.trajectories) {
    std::uint32_t t = 0;
    for (const Transition& tr : traj.transitions) {
      out += "{\"ep\":";
      out += std::to_string(traj.episode_id);
      out += ",\"t\":";
      out += std::to_string(t++);
      out += ",\"s\":";
      out += std::to_string(tr.s);
      out += ",\"a\":";
      out += std::to_string(tr.a);
      out += ",\"r\":";
      out += format_double(tr.r);
      out += ",\"sn\":";
      out += std::to_string(tr.s_next);
      out += ",\"d\":";
      out += tr.terminal ? "true" : "false";
      out += "}\n";
    }
  }
  return out;
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  return nlohmann::json{{"env", m.env},          {"scheme", m.scheme},
                        {"seed", m.seed},        {"n", m.n},
                        {"n_states", m.n_states}, {"n_actions", m.n_actions},
                        {"gamma", m.gamma}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.env = j.at("env").get<std::string>();
    m.scheme = j.at("scheme").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n = j.at("n").get<std::uint64_t>();
    m.n_states = j.at("n_states").get<std::uint64_t>();
    m.n_actions = j.at("n_actions").get<std::uint32_t>();
    m.gamma = j.at("gamma").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(0, std::string("bad manifest: ") + e.what());
  }
  return m;
}

/// noisy_3.jsonl -> noisy_3.manifest.json
inline std::string manifest_path_for(const std::string& data_path) {
  std::string base = data_path;
  if (base.size() > 6 && base.compare(base.size() - 6, 6, ".jsonl") == 0)
    base.resize(base.size() - 6);
  return base + ".manifest.json";
}

namespace detail {

template <typename T>
T require_uint(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(line, std::string("missing field \"") + key + "\"");
  if (!it->is_number_unsigned() && !it->is_number_integer())
    throw FormatError(line, std::string("field \"") + key + "\" is not an integer");
  if (it->is_number_integer() && it->get<std::int64_t>() < 0)
    throw FormatError(line, std::string("field \"") + key + "\" is negative");
  return it->get<T>();
}

}  // namespace detail

/// Parses the JSONL transition stream. When a manifest is supplied, state and
/// action ids are range-checked against it and the total count must match.
/// Errors carry the offending 1-based line number.
inline Dataset parse_jsonl(std::string_view text, const Manifest* manifest = nullptr) {
  Dataset ds;
  if (manifest) ds.manifest = *manifest;

  std::size_t line_no = 0;
  bool have_ep = false;
  std::uint64_t cur_ep = 0;
  std::uint32_t cur_t = 0;
  std::unordered_set<std::uint64_t> seen_eps;

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;

    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FormatError(line_no, "invalid JSON");
    if (!j.is_object()) throw FormatError(line_no, "expected a JSON object");

    Transition tr;
    const auto ep = detail::require_uint<std::uint64_t>(j, "ep", line_no);
    const auto t = detail::require_uint<std::uint32_t>(j, "t", line_no);
    tr.s = detail::require_uint<std::uint64_t>(j, "s", line_no);
    tr.a = detail::require_uint<std::uint32_t>(j, "a", line_no);
    tr.s_next = detail::require_uint<std::uint64_t>(j, "sn", line_no);
    auto rit = j.find("r");
    if (rit == j.end() || !rit->is_number())
      throw FormatError(line_no, "missing or non-numeric field \"r\"");
    tr.r = rit->get<double>();
    auto dit = j.find("d");
    if (dit == j.end() || !dit->is_boolean())
      throw FormatError(line_no, "missing or non-boolean field \"d\"");
    tr.terminal = dit->get<bool>();

    if (manifest) {
      if (manifest->n_states > 0 &&
          (tr.s >= manifest->n_states || tr.s_next >= manifest->n_states))
        throw FormatError(line_no, "state id outside manifest range");
      if (manifest->n_actions > 0 && tr.a >= manifest->n_actions)
        throw FormatError(line_no, "action id outside manifest range");
    }

    const bool new_episode = !have_ep || ep != cur_ep;
    if (new_episode) {
      if (!seen_eps.insert(ep).second)
        throw FormatError(line_no, "episode id reappears after another episode");
      if (t != 0) throw FormatError(line_no, "episode must start at t=0");
      ds.trajectories.push_back(Trajectory{ep, {}});
      cur_ep = ep;
      cur_t = 0;
      have_ep = true;
    } else {
      if (t != cur_t + 1) throw FormatError(line_no, "t is not ascending by 1");
      Trajectory& traj = ds.trajectories.back();
      const Transition& prev = traj.transitions.back();
      if (prev.terminal)
        throw FormatError(line_no, "transition after a terminal step");
      if (prev.s_next != tr.s)
        throw FormatError(line_no, "trajectory not state-contiguous (s != previous sn)");
      cur_t = t;
    }
    ds.trajectories.back().transitions.push_back(tr);
  }

  if (manifest && manifest->n != 0 && ds.n_transitions() != manifest->n)
    throw FormatError(0, "transition count does not match manifest n=" +
                             std::to_string(manifest->n));
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << serialize_jsonl(ds);
  }
  std::ofstream mout(manifest_path_for(path), std::ios::binary);
  if (!mout)
    throw std::runtime_error("cannot open for writing: " + manifest_path_for(path));
  mout << manifest_to_json(ds.manifest).dump() << '\n';
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Reads a dataset file plus its sidecar manifest when present. Without a
/// sidecar the manifest is inferred (ids from the data, scheme "unknown").
inline Dataset read_dataset(const std::string& path) {
  const std::string text = read_file(path);
  const std::string mpath = manifest_path_for(path);
  if (std::filesystem::exists(mpath)) {
    nlohmann::json j = nlohmann::json::parse(read_file(mpath), nullptr, false);
    if (j.is_discarded()) throw FormatError(0, "invalid manifest JSON: " + mpath);
    Manifest m = manifest_from_json(j);
    return parse_jsonl(text, &m);
  }
  Dataset ds = parse_jsonl(text);
  ds.manifest.scheme = "unknown";
  std::uint64_t max_s = 0;
  std::uint32_t max_a = 0;
  for (const auto& traj : ds.trajectories)
    for (const auto& tr : traj.transitions) {
      max_s = std::max({max_s, tr.s, tr.s_next});
      max_a = std::max(max_a, tr.a);
    }
  ds.manifest.n = ds.n_transitions();
  ds.manifest.n_states = ds.trajectories.empty() ? 0 : max_s + 1;
  ds.manifest.n_actions = ds.trajectories.empty() ? 0 : max_a + 1;
  return ds;
}

}  // namespace datascope

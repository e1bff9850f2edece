// Acceptance suite: one check per criterion, each printing a pass/fail line.
// Exits nonzero if any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "datascope/datascope.hpp"

namespace ds = datascope;
namespace fs = std::filesystem;

namespace {

struct Harness {
  int failures = 0;

  void run(int number, const std::string& name, const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    std::string error;
    try {
      body();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream line;
    line << (error.empty() ? "[PASS] " : "[FAIL] ") << "criterion " << number << ": "
         << name << " (" << std::fixed << std::setprecision(2) << seconds << " s)";
    if (!error.empty()) {
      line << "\n       " << error;
      ++failures;
    }
    std::cout << line.str() << std::endl;
  }
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// Fixture with `unique_pairs` distinct state-action pairs and a constant
// per-trajectory return, mirroring one row of the reference statistics.
ds::Dataset fixture(std::uint64_t unique_pairs, double trajectory_return) {
  ds::Dataset d;
  d.trajectories.reserve(unique_pairs);
  for (std::uint64_t i = 0; i < unique_pairs; ++i)
    d.trajectories.push_back({i, {{i, 0, trajectory_return, i, true}}});
  d.manifest.n = unique_pairs;
  return d;
}

// --------------------------------------------------------------------------

void criterion_1_paper_table_arithmetic() {
  const ds::Dataset cartpole_random = fixture(55916, 22.23);
  const ds::Dataset cartpole_replay = fixture(95384, 208.05);
  const ds::Dataset mountaincar_noisy = fixture(14669, -156.13);
  const ds::Dataset mountaincar_replay = fixture(13740, -159.69);

  ds::CharacterizeRefs refs;
  refs.d_ref = &cartpole_replay;
  refs.d_min_return = 22.23;
  refs.d_expert_return = 500.0;

  const ds::MeasureReport random_report = ds::characterize(cartpole_random, refs);
  const ds::MeasureReport replay_report = ds::characterize(cartpole_replay, refs);
  require(random_report.tq == 0.0, "CartPole random TQ should be exactly 0");
  require(std::abs(replay_report.tq - 0.38893) <= 1e-4,
          "CartPole replay TQ != 0.38893: " + ds::format_double(replay_report.tq));
  require(std::abs(random_report.saco - 0.58622) <= 1e-4,
          "CartPole random SACo != 0.58622: " + ds::format_double(random_report.saco));
  require(std::abs(random_report.lsaco - 0.95343) <= 1e-4,
          "CartPole random lSACo != 0.95343: " + ds::format_double(random_report.lsaco));

  const double noisy_saco = ds::saco(ds::exact_unique_count(mountaincar_noisy),
                                     ds::exact_unique_count(mountaincar_replay));
  require(std::abs(noisy_saco - 1.06761) <= 1e-4,
          "MountainCar noisy SACo != 1.06761: " + ds::format_double(noisy_saco));
}

void criterion_2_entropy_factorization() {
  ds::Rng rng(ds::derive_seed(2, "factorization"));
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const ds::FiniteMDP mdp = ds::random_mdp(rng);  // <=6 states, <=4 actions, <=3 rewards
    const ds::PolicyTable policy = ds::random_policy(rng, mdp);
    const ds::TransitionEntropy te = ds::transition_entropy_detail(mdp, policy);
    worst = std::max(worst, std::abs(te.direct - te.factorized));
  }
  require(worst <= 1e-10, "max |direct - factorized| = " + ds::format_double(worst));
}

void criterion_3_deterministic_collapse() {
  ds::Rng rng(ds::derive_seed(3, "deterministic"));
  ds::RandomMdpParams params;
  params.deterministic = true;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const ds::FiniteMDP mdp = ds::random_mdp(rng, params);
    const ds::PolicyTable policy = ds::random_policy(rng, mdp);
    const double h_joint = ds::transition_entropy_exact(mdp, policy);
    const double h_occ = ds::occupancy_entropy(ds::occupancy_exact(mdp, policy));
    worst = std::max(worst, std::abs(h_joint - h_occ));
  }
  require(worst <= 1e-12, "max |H(p) - H(rho)| = " + ds::format_double(worst));
}

void criterion_4_homomorphism_suite() {
  ds::Rng rng(ds::derive_seed(4, "homomorphism"));
  for (int i = 0; i < 100; ++i) {
    const ds::HomomorphismPair pair = ds::sample_homomorphism_pair(rng);
    require(ds::validate_homomorphism(pair.h1).valid &&
                ds::validate_homomorphism(pair.h2).valid,
            "generated pair failed validation at i=" + std::to_string(i));
    const ds::PolicyTable policy = ds::random_policy(rng, pair.abstract_mdp);
    const auto bounds = ds::check_entropy_bounds(pair.h1, pair.h2, policy);
    require(bounds.lower_bound_holds,
            "lower bound violated at i=" + std::to_string(i));
    require(bounds.difference_bound_holds,
            "difference bound violated at i=" + std::to_string(i));
    const auto ret = ds::check_return_preservation(pair.h1, pair.h2, policy);
    require(ret.equal, "return not preserved at i=" + std::to_string(i) +
                           ", diff=" + ds::format_double(ret.difference));
  }

  // analytic case: duplicating every state adds exactly ln 2
  const ds::FiniteMDP base = ds::build_chain(5, 0.1);
  const ds::TransformResult dup = ds::duplicate_states(base, 2);
  const ds::Homomorphism h = ds::make_homomorphism(dup.mdp, base, dup.mapping);
  const ds::PolicyTable policy = ds::random_policy(rng, base);
  const double gap =
      ds::transition_entropy_exact(h.ground, ds::lift_policy(h, policy).ground_policy) -
      ds::transition_entropy_exact(base, policy);
  require(std::abs(gap - std::log(2.0)) <= 1e-10,
          "duplicate-states gap != ln 2: " + ds::format_double(gap));
}

void criterion_5_sketch_accuracy() {
  std::vector<std::pair<std::uint64_t, std::uint32_t>> keys;
  for (const std::uint64_t n : {10000ull, 100000ull, 1000000ull}) {
    int failures = 0;
    for (int stream = 0; stream < 100; ++stream) {
      ds::Rng rng(ds::derive_seed(5, "sketch", n, stream));
      ds::CardinalitySketch sk(14);
      keys.clear();
      keys.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint64_t s = rng.next_u64();
        const std::uint32_t a = rng.next_below(1u << 30);
        keys.push_back({s, a});
        sk.insert(s, a);
      }
      std::sort(keys.begin(), keys.end());
      const auto exact = static_cast<double>(
          std::unique(keys.begin(), keys.end()) - keys.begin());
      const double err = std::abs(static_cast<double>(sk.estimate()) - exact) / exact;
      if (err > 0.02) ++failures;
    }
    require(failures <= 1, "n=" + std::to_string(n) + ": " + std::to_string(failures) +
                               " of 100 streams exceeded 2% relative error");
  }

  // shard-merge must equal the single-stream sketch register for register
  ds::Rng rng(ds::derive_seed(5, "shards"));
  ds::CardinalitySketch single(14);
  std::vector<ds::CardinalitySketch> shards(8, ds::CardinalitySketch(14));
  for (int i = 0; i < 100000; ++i) {
    const std::uint64_t s = rng.next_u64();
    const std::uint32_t a = rng.next_below(1u << 20);
    single.insert(s, a);
    shards[i % 8].insert(s, a);
  }
  ds::CardinalitySketch merged = shards[0];
  for (std::size_t i = 1; i < shards.size(); ++i)
    merged = ds::CardinalitySketch::merge(merged, shards[i]);
  require(merged == single, "sharded merge differs from the single-stream sketch");
}

void criterion_6_estimator_bias() {
  const std::uint64_t K = 1000, N = 100, resamples = 10000;
  const std::vector<double> uniform(K, 1.0 / static_cast<double>(K));
  require(ds::naive_bias(K, N, uniform).less_biased_flag,
          "K >= 2N ln N + 1 regime does not hold");

  const double h_true = std::log(static_cast<double>(K));
  ds::Rng rng(ds::derive_seed(6, "bias"));
  std::vector<std::uint64_t> counts(K, 0);
  std::vector<std::uint32_t> touched;
  double sum_naive = 0.0, sum_log_u = 0.0;
  for (std::uint64_t rep = 0; rep < resamples; ++rep) {
    touched.clear();
    for (std::uint64_t i = 0; i < N; ++i) {
      const std::uint32_t k = rng.next_below(static_cast<std::uint32_t>(K));
      if (counts[k]++ == 0) touched.push_back(k);
    }
    std::vector<std::uint64_t> observed;
    observed.reserve(touched.size());
    for (const std::uint32_t k : touched) observed.push_back(counts[k]);
    sum_naive += ds::entropy_of_counts(observed);
    sum_log_u += std::log(static_cast<double>(touched.size()));
    for (const std::uint32_t k : touched) counts[k] = 0;
  }
  const double bias_naive = std::abs(sum_naive / resamples - h_true);
  const double bias_log_u = std::abs(sum_log_u / resamples - h_true);
  require(bias_log_u <= bias_naive,
          "|E[ln u] - H| = " + ds::format_double(bias_log_u) + " > |E[H_hat] - H| = " +
              ds::format_double(bias_naive));
}

struct SchemeStats {
  double tq_sum = 0.0;
  double saco_sum = 0.0;
  int n = 0;
  double mean_tq() const { return tq_sum / n; }
  double mean_saco() const { return saco_sum / n; }
};

void criterion_7_scheme_geometry() {
  const std::vector<std::string> envs = {"grid5", "grid5lava", "grid7"};
  const std::vector<std::string> schemes = {"random", "mixed", "replay", "noisy",
                                            "expert"};
  std::map<std::string, SchemeStats> stats;

  for (const auto& env : envs) {
    const ds::FiniteMDP mdp = ds::build_env(env);
    for (std::uint32_t seed = 0; seed < 5; ++seed) {
      ds::OnlineTrainerConfig cfg;
      cfg.steps = 6000;
      cfg.eps_decay_steps = 3000;
      cfg.eval_every = 500;
      cfg.seed = ds::derive_seed(7, env, seed);
      const ds::OnlineResult online = ds::train_online(mdp, cfg, env);

      ds::GenerationScheme random_scheme{ds::GenerationScheme::Kind::random, 0.2, 0.8,
                                         6000};
      const std::uint64_t gen_seed = ds::derive_seed(7, env + "-gen", seed);
      const ds::Dataset random_ds =
          ds::generate(mdp, random_scheme, nullptr, nullptr, gen_seed, env);
      const double min_ref = ds::average_trajectory_return(random_ds, 1.0);
      const double expert_ref = online.best_eval_return();
      require(expert_ref > min_ref, env + ": online training failed to beat random");

      ds::GenerationScheme replay_scheme{ds::GenerationScheme::Kind::replay, 0.2, 0.8,
                                         6000};
      const ds::Dataset replay_ds =
          ds::generate(mdp, replay_scheme, nullptr, &online.replay_log, gen_seed, env);

      for (const auto& scheme_name : schemes) {
        ds::GenerationScheme scheme{ds::GenerationScheme::parse_kind(scheme_name), 0.2,
                                    0.8, 6000};
        ds::Dataset data;
        if (scheme.kind == ds::GenerationScheme::Kind::random)
          data = random_ds;
        else if (scheme.kind == ds::GenerationScheme::Kind::replay)
          data = replay_ds;
        else
          data = ds::generate(mdp, scheme, &online.expert, &online.replay_log, gen_seed,
                              env);
        ds::CharacterizeRefs refs;
        refs.d_ref = &replay_ds;
        refs.d_min_return = min_ref;
        refs.d_expert_return = expert_ref;
        const ds::MeasureReport report = ds::characterize(data, refs);
        SchemeStats& s = stats[scheme_name];
        s.tq_sum += report.tq;
        s.saco_sum += report.saco;
        ++s.n;
      }
    }
  }

  require(stats["expert"].mean_tq() > stats["random"].mean_tq(),
          "mean TQ(expert) <= mean TQ(random)");
  require(stats["replay"].mean_saco() >= stats["expert"].mean_saco(),
          "mean SACo(replay) < mean SACo(expert)");
  for (const auto& [name, s] : stats) {
    if (name == "replay") continue;
    const bool dominates = s.mean_tq() > stats["replay"].mean_tq() &&
                           s.mean_saco() > stats["replay"].mean_saco();
    require(!dominates, "scheme " + name + " dominates replay in (TQ, SACo)");
  }
}

void criterion_8_end_to_end_sweep() {
  ds::SweepSpec spec;  // defaults: 3 envs x 5 schemes x 3 seeds x 6 algos x 3 runs
  spec.base_seed = 8;
  spec.write_datasets = false;

  const ds::SweepResult result = ds::run_sweep(spec);
  require(result.n_failed == 0, std::to_string(result.n_failed) + " runs failed");
  require(result.datasets.size() == 45, "expected 45 dataset rows, got " +
                                            std::to_string(result.datasets.size()));

  auto find_corr = [&](const std::string& x, const std::string& y) {
    for (const auto& row : result.correlations.rows)
      if (row.x == x && row.y == y) return row;
    throw std::runtime_error("missing correlation row " + x + " vs " + y);
  };
  const ds::CorrelationEntry bc_tq = find_corr("tq", "omega_bc");
  require(bc_tq.defined && bc_tq.spearman_rho >= 0.5,
          "Spearman corr(BC omega, TQ) = " + ds::format_double(bc_tq.spearman_rho) +
              " < 0.5");
  const ds::CorrelationEntry q_saco = find_corr("saco", "omega_qlearn");
  require(q_saco.defined && q_saco.spearman_rho > 0.0,
          "Spearman corr(qlearn omega, SACo) = " +
              ds::format_double(q_saco.spearman_rho) + " <= 0");

  double bc_sum = 0.0, q_sum = 0.0;
  int bc_n = 0, q_n = 0;
  for (const auto& row : result.runs) {
    if (row.scheme != "expert" || row.status != "ok") continue;
    if (row.algo == "bc") {
      bc_sum += row.omega;
      ++bc_n;
    } else if (row.algo == "qlearn") {
      q_sum += row.omega;
      ++q_n;
    }
  }
  require(bc_n > 0 && q_n > 0, "missing expert-scheme runs");
  require(bc_sum / bc_n >= q_sum / q_n,
          "mean omega(BC) < mean omega(qlearn) on expert datasets: " +
              ds::format_double(bc_sum / bc_n) + " vs " + ds::format_double(q_sum / q_n));
}

void criterion_9_degeneracy_identities() {
  const ds::FiniteMDP mdp = ds::build_env("grid5");
  ds::OnlineTrainerConfig online_cfg;
  online_cfg.steps = 6000;
  online_cfg.eps_decay_steps = 3000;
  online_cfg.eval_every = 500;
  online_cfg.seed = 9;
  const ds::OnlineResult online = ds::train_online(mdp, online_cfg, "grid5");

  ds::GenerationScheme noisy{ds::GenerationScheme::Kind::noisy, 0.0, 0.8, 3000};
  ds::GenerationScheme expert{ds::GenerationScheme::Kind::expert, 0.2, 0.8, 3000};
  const ds::Dataset noisy_ds = ds::generate(mdp, noisy, &online.expert, nullptr, 4, "grid5");
  const ds::Dataset expert_ds =
      ds::generate(mdp, expert, &online.expert, nullptr, 4, "grid5");
  require(ds::serialize_jsonl(noisy_ds) == ds::serialize_jsonl(expert_ds),
          "noisy(eps=0) dataset differs from the expert dataset");

  ds::GenerationScheme random_scheme{ds::GenerationScheme::Kind::random, 0.2, 0.8, 3000};
  const ds::Dataset data = ds::generate(mdp, random_scheme, nullptr, nullptr, 5, "grid5");

  ds::OfflineConfig qlearn_cfg;
  qlearn_cfg.algorithm = ds::OfflineAlgo::qlearn;
  qlearn_cfg.iterations = 30;
  qlearn_cfg.gamma = mdp.gamma;
  qlearn_cfg.eval_every = 10;
  qlearn_cfg.eval_episodes = 10;
  qlearn_cfg.seed = 99;
  const ds::OfflineResult qlearn = ds::run_offline(data, mdp, qlearn_cfg);

  ds::OfflineConfig bcq_cfg = qlearn_cfg;
  bcq_cfg.algorithm = ds::OfflineAlgo::bcq;
  bcq_cfg.tau = 0.0;
  const ds::OfflineResult bcq = ds::run_offline(data, mdp, bcq_cfg);

  ds::OfflineConfig cql_cfg = qlearn_cfg;
  cql_cfg.algorithm = ds::OfflineAlgo::cql;
  cql_cfg.cql_alpha = 0.0;
  const ds::OfflineResult cql = ds::run_offline(data, mdp, cql_cfg);

  auto same = [](const ds::OfflineResult& a, const ds::OfflineResult& b) {
    if (!(a.learned_policy == b.learned_policy)) return false;
    if (a.best_eval_return != b.best_eval_return) return false;
    if (a.eval_history.size() != b.eval_history.size()) return false;
    for (std::size_t i = 0; i < a.eval_history.size(); ++i)
      if (a.eval_history[i].mean_return != b.eval_history[i].mean_return) return false;
    return true;
  };
  require(same(bcq, qlearn), "BCQ(tau=0) differs from qlearn");
  require(same(cql, qlearn), "CQL(alpha=0) differs from qlearn");
}

void criterion_10_format_round_trip() {
  const ds::FiniteMDP mdp = ds::build_env("grid7");
  const ds::Dataset data = ds::sample_policy_dataset(
      mdp, ds::PolicyTable::uniform(mdp.n_states, mdp.n_actions), 100000, 10, "grid7",
      "random");
  const std::string once = ds::serialize_jsonl(data);
  const ds::Dataset back = ds::parse_jsonl(once, &data.manifest);
  require(ds::serialize_jsonl(back) == once, "round trip is not byte-identical");
  require(back == data, "round trip changed the dataset");

  // malformed fixtures through the CLI: exit code 2, line-numbered message
  const fs::path dir =
      fs::temp_directory_path() / ("datascope_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  struct Cleanup {
    fs::path p;
    ~Cleanup() { fs::remove_all(p); }
  } cleanup{dir};

  const std::vector<std::pair<std::string, std::string>> fixtures = {
      {"not json at all\n", "line 1"},
      {R"({"ep":0,"t":0,"s":0,"a":0,"r":1,"sn":1,"d":false})"
       "\n{\"broken\n",
       "line 2"},
      {R"({"ep":0,"t":0,"s":0,"a":0,"r":1,"sn":1,"d":false})"
       "\n"
       R"({"ep":0,"t":7,"s":1,"a":0,"r":1,"sn":2,"d":false})"
       "\n",
       "line 2"}};
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const fs::path bad = dir / ("bad" + std::to_string(i) + ".jsonl");
    std::ofstream(bad) << fixtures[i].first;
    const fs::path errfile = dir / "stderr.txt";
    const std::string cmd = std::string(DATASCOPE_CLI_PATH) + " characterize --data " +
                            bad.string() + " --ref " + bad.string() +
                            " --min-return 0 --expert-return 1 >/dev/null 2>" +
                            errfile.string();
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    require(code == 2, "fixture " + std::to_string(i) + ": expected exit code 2, got " +
                           std::to_string(code));
    const std::string err = ds::read_file(errfile.string());
    require(err.find(fixtures[i].second) != std::string::npos,
            "fixture " + std::to_string(i) + ": missing '" + fixtures[i].second +
                "' in: " + err);
  }
}

}  // namespace

int main() {
  Harness h;
  h.run(1, "paper-table TQ/SACo/lSACo arithmetic", criterion_1_paper_table_arithmetic);
  h.run(2, "entropy factorization identity", criterion_2_entropy_factorization);
  h.run(3, "deterministic collapse", criterion_3_deterministic_collapse);
  h.run(4, "homomorphism suite", criterion_4_homomorphism_suite);
  h.run(5, "sketch accuracy", criterion_5_sketch_accuracy);
  h.run(6, "estimator bias", criterion_6_estimator_bias);
  h.run(7, "dataset-scheme geometry", criterion_7_scheme_geometry);
  h.run(8, "end-to-end sweep correlations", criterion_8_end_to_end_sweep);
  h.run(9, "degeneracy identities", criterion_9_degeneracy_identities);
  h.run(10, "format round-trip and malformed input", criterion_10_format_round_trip);

  if (h.failures > 0) {
    std::cout << h.failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all acceptance criteria passed" << std::endl;
  return 0;
}

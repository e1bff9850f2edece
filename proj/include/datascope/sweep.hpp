#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "datascope/core.hpp"
#include "datascope/datagen.hpp"
#include "datascope/envs.hpp"
#include "datascope/io.hpp"
#include "datascope/measures.hpp"
#include "datascope/offline.hpp"
#include "datascope/stats.hpp"

namespace datascope {

/// Grid of a sweep: every (env, scheme, dataset seed) produces a dataset,
/// every (dataset, algorithm, run seed) an offline training run. References
/// per (env, dataset seed): the best online evaluation return (expert) and
/// the random dataset's average return (min); the replay dataset is the
/// coverage reference.
struct SweepSpec {
  std::vector<std::string> envs = {"grid5", "grid5lava", "grid7"};
  std::vector<std::string> schemes = {"random", "mixed", "replay", "noisy", "expert"};
  std::uint32_t dataset_seeds = 3;
  std::uint32_t run_seeds = 3;
  std::vector<std::string> algorithms = {"bc", "mce", "bve", "qlearn", "bcq", "cql"};
  std::uint64_t n_samples = 8000;
  std::string output_dir;
  std::uint64_t base_seed = 1;
  unsigned jobs = 0;  // 0 = hardware concurrency
  bool write_datasets = true;

  std::uint32_t offline_iterations = 60;
  double offline_alpha = 0.2;
  std::uint32_t offline_eval_every = 10;
  std::uint32_t offline_eval_episodes = 20;

  void validate() const {
    if (envs.empty() || schemes.empty() || algorithms.empty())
      throw std::invalid_argument("SweepSpec: empty env/scheme/algorithm list");
    if (dataset_seeds == 0 || run_seeds == 0 || n_samples == 0)
      throw std::invalid_argument("SweepSpec: counts must be >= 1");
  }
};

struct SweepDatasetRow {
  std::string env;
  std::string scheme;
  std::uint32_t dataset_seed = 0;
  double tq = 0.0;
  double saco = 0.0;
  double lsaco = 0.0;
  double entropy_ratio = 0.0;
  std::uint64_t unique_sa = 0;
  double avg_return = 0.0;
  double min_ref = 0.0;
  double expert_ref = 0.0;
  std::uint64_t n = 0;
  std::string path;  // dataset file, when written
};

struct SweepRunRow {
  std::string env;
  std::string scheme;
  std::uint32_t dataset_seed = 0;
  std::string algo;
  std::uint32_t run_seed = 0;
  double tq = 0.0;
  double saco = 0.0;
  double lsaco = 0.0;
  double entropy_ratio = 0.0;
  double omega = 0.0;
  std::string status = "ok";  // "failed: <reason>" on error
};

struct SweepResult {
  std::vector<SweepDatasetRow> datasets;
  std::vector<SweepRunRow> runs;
  CorrelationTable correlations;
  std::uint64_t n_failed = 0;
};

inline std::string sweep_dataset_csv_header() {
  return "env,scheme,dataset_seed,tq,saco,lsaco,entropy_ratio,unique_sa,avg_return,"
         "min_ref,expert_ref,n,path";
}

inline std::string sweep_dataset_to_csv(const SweepDatasetRow& r) {
  return r.env + "," + r.scheme + "," + std::to_string(r.dataset_seed) + "," +
         format_double(r.tq) + "," + format_double(r.saco) + "," +
         format_double(r.lsaco) + "," + format_double(r.entropy_ratio) + "," +
         std::to_string(r.unique_sa) + "," + format_double(r.avg_return) + "," +
         format_double(r.min_ref) + "," + format_double(r.expert_ref) + "," +
         std::to_string(r.n) + "," + r.path;
}

inline std::string sweep_run_csv_header() {
  return "env,scheme,dataset_seed,algo,run_seed,tq,saco,lsaco,entropy_ratio,omega,status";
}

inline std::string sweep_run_to_csv(const SweepRunRow& r) {
  return r.env + "," + r.scheme + "," + std::to_string(r.dataset_seed) + "," + r.algo +
         "," + std::to_string(r.run_seed) + "," + format_double(r.tq) + "," +
         format_double(r.saco) + "," + format_double(r.lsaco) + "," +
         format_double(r.entropy_ratio) + "," + format_double(r.omega) + "," + r.status;
}

namespace detail {

struct PreparedDataset {
  SweepDatasetRow row;
  Dataset data;
  FiniteMDP mdp;
  ReturnRefs refs;
};

inline void run_parallel(std::size_t n_jobs, unsigned workers,
                         const std::function<void(std::size_t)>& body) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, n_jobs == 0 ? 1 : static_cast<unsigned>(n_jobs));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n_jobs; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n_jobs; i = next.fetch_add(1)) body(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// Runs the full generation -> characterization -> offline-training pipeline.
/// Trials execute on a bounded worker pool; every trial derives its own seed
/// from (base_seed, env, scheme, seeds), so results are independent of the
/// worker count and re-runs are reproducible row for row.
inline SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  const bool to_disk = !spec.output_dir.empty() && spec.write_datasets;
  if (!spec.output_dir.empty())
    std::filesystem::create_directories(std::filesystem::path(spec.output_dir) / "datasets");

  // Stage 1: per (env, dataset_seed): online training + the scheme datasets.
  struct EnvSeedJob {
    std::string env;
    std::uint32_t dataset_seed;
  };
  std::vector<EnvSeedJob> env_jobs;
  for (const auto& env : spec.envs)
    for (std::uint32_t ds_seed = 0; ds_seed < spec.dataset_seeds; ++ds_seed)
      env_jobs.push_back({env, ds_seed});

  std::vector<std::vector<detail::PreparedDataset>> prepared(env_jobs.size());
  std::vector<std::string> stage1_errors(env_jobs.size());

  detail::run_parallel(env_jobs.size(), spec.jobs, [&](std::size_t ji) {
    const auto& job = env_jobs[ji];
    try {
      const FiniteMDP mdp = build_env(job.env);
      OnlineTrainerConfig online_cfg;
      online_cfg.steps = spec.n_samples;
      online_cfg.eps_decay_steps = spec.n_samples / 2;
      online_cfg.eval_every = std::max<std::uint64_t>(1, spec.n_samples / 16);
      online_cfg.seed = derive_seed(spec.base_seed, job.env + "-online", job.dataset_seed);
      const OnlineResult online = train_online(mdp, online_cfg, job.env);

      const double expert_ref = online.best_eval_return();
      // the random dataset doubles as the minimal reference
      GenerationScheme random_scheme{GenerationScheme::Kind::random, 0.2, 0.8,
                                     spec.n_samples};
      const std::uint64_t gen_seed =
          derive_seed(spec.base_seed, job.env + "-gen", job.dataset_seed);
      const Dataset random_ds =
          generate(mdp, random_scheme, nullptr, nullptr, gen_seed, job.env);
      const double min_ref = average_trajectory_return(random_ds, 1.0);
      if (!(expert_ref > min_ref))
        throw ValidationError("online training did not beat the random policy on " +
                              job.env);

      GenerationScheme replay_scheme{GenerationScheme::Kind::replay, 0.2, 0.8,
                                     spec.n_samples};
      const Dataset replay_ds =
          generate(mdp, replay_scheme, nullptr, &online.replay_log, gen_seed, job.env);

      for (const auto& scheme_name : spec.schemes) {
        GenerationScheme scheme{GenerationScheme::parse_kind(scheme_name), 0.2, 0.8,
                                spec.n_samples};
        Dataset ds;
        if (scheme.kind == GenerationScheme::Kind::random)
          ds = random_ds;
        else if (scheme.kind == GenerationScheme::Kind::replay)
          ds = replay_ds;
        else
          ds = generate(mdp, scheme, &online.expert, &online.replay_log, gen_seed,
                        job.env);

        CharacterizeRefs refs;
        refs.d_ref = &replay_ds;
        refs.d_min_return = min_ref;
        refs.d_expert_return = expert_ref;
        const MeasureReport report = characterize(ds, refs, CounterChoice::exact(), 1.0);

        detail::PreparedDataset p;
        p.row.env = job.env;
        p.row.scheme = scheme_name;
        p.row.dataset_seed = job.dataset_seed;
        p.row.tq = report.tq;
        p.row.saco = report.saco;
        p.row.lsaco = report.lsaco;
        p.row.entropy_ratio = report.naive_entropy_ratio;
        p.row.unique_sa = report.unique_sa;
        p.row.avg_return = report.avg_return;
        p.row.min_ref = min_ref;
        p.row.expert_ref = expert_ref;
        p.row.n = ds.n_transitions();
        if (to_disk) {
          const std::string fname = job.env + "_" + scheme_name + "_" +
                                    std::to_string(job.dataset_seed) + ".jsonl";
          const auto path = std::filesystem::path(spec.output_dir) / "datasets" / fname;
          write_dataset(ds, path.string());
          p.row.path = path.string();
        }
        p.data = std::move(ds);
        p.mdp = mdp;
        p.refs = ReturnRefs{min_ref, expert_ref};
        prepared[ji].push_back(std::move(p));
      }
    } catch (const std::exception& e) {
      stage1_errors[ji] = e.what();
    }
  });

  SweepResult result;
  std::vector<const detail::PreparedDataset*> datasets;
  for (std::size_t ji = 0; ji < env_jobs.size(); ++ji) {
    if (!stage1_errors[ji].empty()) {
      // record one failed row per scheme so the failure is visible downstream
      for (const auto& scheme : spec.schemes) {
        SweepRunRow row;
        row.env = env_jobs[ji].env;
        row.scheme = scheme;
        row.dataset_seed = env_jobs[ji].dataset_seed;
        row.algo = "*";
        row.status = "failed: " + stage1_errors[ji];
        result.runs.push_back(row);
        ++result.n_failed;
      }
      continue;
    }
    for (const auto& p : prepared[ji]) {
      result.datasets.push_back(p.row);
      datasets.push_back(&p);
    }
  }

  // Stage 2: offline runs over (dataset, algorithm, run_seed).
  struct RunJob {
    const detail::PreparedDataset* ds;
    std::string algo;
    std::uint32_t run_seed;
  };
  std::vector<RunJob> run_jobs;
  for (const auto* p : datasets)
    for (const auto& algo : spec.algorithms)
      for (std::uint32_t rs = 0; rs < spec.run_seeds; ++rs)
        run_jobs.push_back({p, algo, rs});

  std::vector<SweepRunRow> run_rows(run_jobs.size());
  detail::run_parallel(run_jobs.size(), spec.jobs, [&](std::size_t ji) {
    const RunJob& job = run_jobs[ji];
    SweepRunRow& row = run_rows[ji];
    row.env = job.ds->row.env;
    row.scheme = job.ds->row.scheme;
    row.dataset_seed = job.ds->row.dataset_seed;
    row.algo = job.algo;
    row.run_seed = job.run_seed;
    row.tq = job.ds->row.tq;
    row.saco = job.ds->row.saco;
    row.lsaco = job.ds->row.lsaco;
    row.entropy_ratio = job.ds->row.entropy_ratio;
    try {
      OfflineConfig cfg;
      cfg.algorithm = parse_offline_algo(job.algo);
      cfg.iterations = spec.offline_iterations;
      cfg.alpha_lr = spec.offline_alpha;
      cfg.gamma = job.ds->mdp.gamma;
      cfg.eval_every = spec.offline_eval_every;
      cfg.eval_episodes = spec.offline_eval_episodes;
      cfg.seed = derive_seed(spec.base_seed,
                             row.env + "-" + row.scheme + "-" + job.algo,
                             row.dataset_seed, job.run_seed);
      const OfflineResult res = run_offline(job.ds->data, job.ds->mdp, cfg, job.ds->refs);
      row.omega = res.omega;
    } catch (const std::exception& e) {
      row.status = "failed: " + std::string(e.what());
    }
  });
  for (auto& row : run_rows) {
    if (row.status != "ok") ++result.n_failed;
    result.runs.push_back(std::move(row));
  }

  // Correlations of dataset-level measures against per-algorithm mean omega.
  std::map<std::string, std::vector<double>> omega_by_algo;
  {
    std::map<std::pair<std::string, std::string>, std::pair<double, std::uint32_t>> acc;
    for (const auto& row : result.runs) {
      if (row.status != "ok") continue;
      const std::string ds_key =
          row.env + "/" + row.scheme + "/" + std::to_string(row.dataset_seed);
      auto& [sum, count] = acc[{row.algo, ds_key}];
      sum += row.omega;
      ++count;
    }
    for (const auto& ds_row : result.datasets) {
      const std::string ds_key =
          ds_row.env + "/" + ds_row.scheme + "/" + std::to_string(ds_row.dataset_seed);
      for (const auto& algo : spec.algorithms) {
        auto it = acc.find({algo, ds_key});
        if (it != acc.end() && it->second.second > 0)
          omega_by_algo[algo].push_back(it->second.first / it->second.second);
        else
          omega_by_algo[algo].push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
  }
  const std::vector<std::pair<std::string, std::function<double(const SweepDatasetRow&)>>>
      measures = {{"tq", [](const auto& r) { return r.tq; }},
                  {"saco", [](const auto& r) { return r.saco; }},
                  {"lsaco", [](const auto& r) { return r.lsaco; }},
                  {"entropy_ratio", [](const auto& r) { return r.entropy_ratio; }}};
  for (const auto& [mname, getter] : measures) {
    for (const auto& algo : spec.algorithms) {
      std::vector<double> xs, ys;
      const auto& omegas = omega_by_algo[algo];
      for (std::size_t i = 0; i < result.datasets.size(); ++i) {
        if (std::isnan(omegas[i])) continue;
        xs.push_back(getter(result.datasets[i]));
        ys.push_back(omegas[i]);
      }
      result.correlations.rows.push_back(
          correlate_pair(mname, "omega_" + algo, xs, ys));
    }
  }

  if (!spec.output_dir.empty()) {
    const std::filesystem::path dir(spec.output_dir);
    {
      std::ofstream out(dir / "datasets.csv");
      out << sweep_dataset_csv_header() << '\n';
      for (const auto& row : result.datasets) out << sweep_dataset_to_csv(row) << '\n';
    }
    {
      std::ofstream out(dir / "runs.csv");
      out << sweep_run_csv_header() << '\n';
      for (const auto& row : result.runs) out << sweep_run_to_csv(row) << '\n';
    }
    {
      std::ofstream out(dir / "correlations.csv");
      out << correlation_table_to_csv(result.correlations);
    }
  }
  return result;
}

/// Recomputes the correlation table from a long-format runs CSV (the file
/// run_sweep writes). Mean omega per (dataset, algorithm) is correlated with
/// the dataset-level measures.
inline CorrelationTable correlate_runs_csv(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    if (eol > pos) lines.push_back(text.substr(pos, eol - pos));
    pos = eol + 1;
  }
  if (lines.empty()) throw FormatError(0, "empty results CSV");

  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        cells.push_back(line.substr(start));
        break;
      }
      cells.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    return cells;
  };

  const auto header = split(lines[0]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required :
       {"env", "scheme", "dataset_seed", "algo", "tq", "saco", "lsaco",
        "entropy_ratio", "omega"})
    if (!col.count(required))
      throw FormatError(1, std::string("results CSV missing column ") + required);
  const bool has_status = col.count("status") > 0;

  struct Acc {
    double tq, saco, lsaco, entropy_ratio;
    double omega_sum = 0.0;
    std::uint32_t runs = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> by_ds_algo;
  std::set<std::string> algos;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split(lines[li]);
    if (cells.size() < header.size())
      throw FormatError(li + 1, "short row in results CSV");
    if (has_status && cells[col["status"]] != "ok") continue;
    const std::string ds_key = cells[col["env"]] + "/" + cells[col["scheme"]] + "/" +
                               cells[col["dataset_seed"]];
    const std::string algo = cells[col["algo"]];
    algos.insert(algo);
    try {
      Acc& acc = by_ds_algo[{ds_key, algo}];
      acc.tq = std::stod(cells[col["tq"]]);
      acc.saco = std::stod(cells[col["saco"]]);
      acc.lsaco = std::stod(cells[col["lsaco"]]);
      acc.entropy_ratio = std::stod(cells[col["entropy_ratio"]]);
      acc.omega_sum += std::stod(cells[col["omega"]]);
      ++acc.runs;
    } catch (const std::exception&) {
      throw FormatError(li + 1, "non-numeric cell in results CSV");
    }
  }

  CorrelationTable table;
  const std::vector<std::pair<std::string, std::function<double(const Acc&)>>> measures =
      {{"tq", [](const Acc& a) { return a.tq; }},
       {"saco", [](const Acc& a) { return a.saco; }},
       {"lsaco", [](const Acc& a) { return a.lsaco; }},
       {"entropy_ratio", [](const Acc& a) { return a.entropy_ratio; }}};
  for (const auto& [mname, getter] : measures) {
    for (const auto& algo : algos) {
      std::vector<double> xs, ys;
      for (const auto& [key, acc] : by_ds_algo) {
        if (key.second != algo || acc.runs == 0) continue;
        xs.push_back(getter(acc));
        ys.push_back(acc.omega_sum / acc.runs);
      }
      table.rows.push_back(correlate_pair(mname, "omega_" + algo, xs, ys));
    }
  }
  return table;
}

}  // namespace datascope

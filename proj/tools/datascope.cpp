// datascope CLI: characterize offline-RL datasets, generate them from the
// built-in environments, train tabular offline algorithms, run end-to-end
// sweeps, classify domain shift between datasets, and verify the library's
// entropy/homomorphism identities numerically.
//
// Exit codes: 0 success, 2 input-format error, 3 numerical-validation
// failure, 4 partial sweep failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "datascope/datascope.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFormat = 2;
constexpr int kExitValidation = 3;
constexpr int kExitPartialSweep = 4;

struct GlobalOpts {
  std::uint64_t seed = 1;
  double gamma = 1.0;
  std::string format = "json";
};

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    if (comma == std::string::npos) {
      if (start < csv.size()) out.push_back(csv.substr(start));
      break;
    }
    if (comma > start) out.push_back(csv.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

datascope::FiniteMDP load_env(const std::string& env, const std::string& grid_json) {
  if (!grid_json.empty()) {
    nlohmann::json j = nlohmann::json::parse(datascope::read_file(grid_json));
    return datascope::build_gridworld(datascope::grid_spec_from_json(j));
  }
  return datascope::build_env(env);
}

int cmd_characterize(const GlobalOpts& g, const std::vector<std::string>& data_paths,
                     const std::string& ref_path, double min_return, double expert_return,
                     const std::string& counter_text) {
  const datascope::Dataset ref = datascope::read_dataset(ref_path);
  const datascope::CounterChoice counter = datascope::CounterChoice::parse(counter_text);
  datascope::CharacterizeRefs refs;
  refs.d_ref = &ref;
  refs.d_min_return = min_return;
  refs.d_expert_return = expert_return;
  refs.ref_name = ref_path;

  if (g.format == "csv")
    std::cout << "data," << datascope::measure_report_csv_header() << '\n';
  for (const auto& path : data_paths) {
    const datascope::Dataset ds = datascope::read_dataset(path);
    const datascope::MeasureReport report =
        datascope::characterize(ds, refs, counter, g.gamma);
    if (g.format == "csv") {
      std::cout << path << ',' << datascope::measure_report_to_csv(report) << '\n';
    } else {
      nlohmann::json j = datascope::measure_report_to_json(report);
      j["data"] = path;
      std::cout << j.dump() << '\n';
    }
  }
  return kExitOk;
}

int cmd_generate(const GlobalOpts& g, const std::string& env, const std::string& grid_json,
                 const std::string& scheme_name, std::uint64_t n, const std::string& out,
                 double epsilon, double mix_fraction, std::uint64_t train_steps) {
  const datascope::FiniteMDP mdp = load_env(env, grid_json);
  datascope::GenerationScheme scheme;
  scheme.kind = datascope::GenerationScheme::parse_kind(scheme_name);
  scheme.n_samples = n;
  scheme.epsilon = epsilon;
  scheme.mix_fraction = mix_fraction;

  const datascope::PolicyTable* expert = nullptr;
  const datascope::Dataset* replay = nullptr;
  std::optional<datascope::OnlineResult> online;
  if (scheme.kind != datascope::GenerationScheme::Kind::random) {
    datascope::OnlineTrainerConfig cfg;
    cfg.steps = std::max<std::uint64_t>(train_steps, n);
    cfg.eps_decay_steps = cfg.steps / 2;
    cfg.eval_every = std::max<std::uint64_t>(1, cfg.steps / 16);
    cfg.seed = datascope::derive_seed(g.seed, env + "-online");
    online = datascope::train_online(mdp, cfg, env);
    expert = &online->expert;
    replay = &online->replay_log;
  }
  const datascope::Dataset ds =
      datascope::generate(mdp, scheme, expert, replay, g.seed, env);
  datascope::write_dataset(ds, out);
  std::cerr << "wrote " << ds.n_transitions() << " transitions to " << out << '\n';
  return kExitOk;
}

int cmd_train(const GlobalOpts& g, const std::string& data_path, const std::string& algo,
              std::uint32_t iters, double alpha, double tau, double cql_alpha,
              std::optional<double> min_return, std::optional<double> expert_return,
              const std::string& env_override, const std::string& out) {
  const datascope::Dataset ds = datascope::read_dataset(data_path);
  const std::string env = env_override.empty() ? ds.manifest.env : env_override;
  if (env.empty())
    throw datascope::FormatError(0, "dataset manifest has no environment; pass --env");
  const datascope::FiniteMDP mdp = datascope::build_env(env);

  datascope::OfflineConfig cfg;
  cfg.algorithm = datascope::parse_offline_algo(algo);
  cfg.iterations = iters;
  cfg.alpha_lr = alpha;
  cfg.gamma = mdp.gamma;
  cfg.tau = tau;
  cfg.cql_alpha = cql_alpha;
  cfg.seed = g.seed;

  std::optional<datascope::ReturnRefs> refs;
  if (min_return && expert_return)
    refs = datascope::ReturnRefs{*min_return, *expert_return};
  const datascope::OfflineResult result = datascope::run_offline(ds, mdp, cfg, refs);

  nlohmann::json j = datascope::offline_result_to_json(result);
  j["algo"] = algo;
  j["data"] = data_path;
  j["env"] = env;
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream f(out);
    f << j.dump(2) << '\n';
    std::cerr << "wrote " << out << '\n';
  }
  return kExitOk;
}

int cmd_shift(const GlobalOpts& g, const std::string& a_path, const std::string& b_path,
              double threshold) {
  const datascope::Dataset a = datascope::read_dataset(a_path);
  const datascope::Dataset b = datascope::read_dataset(b_path);
  const datascope::ShiftReport rep = datascope::compare(
      datascope::estimate_factors(a), datascope::estimate_factors(b), threshold);
  nlohmann::json j = datascope::shift_report_to_json(rep);
  j["a"] = a_path;
  j["b"] = b_path;
  std::cout << j.dump(2) << '\n';
  (void)g;
  return kExitOk;
}

int cmd_correlate(const GlobalOpts& g, const std::string& results_path) {
  const datascope::CorrelationTable table =
      datascope::correlate_runs_csv(datascope::read_file(results_path));
  if (g.format == "csv")
    std::cout << datascope::correlation_table_to_csv(table);
  else
    std::cout << datascope::correlation_table_to_json(table).dump(2) << '\n';
  return kExitOk;
}

int cmd_sweep(const GlobalOpts& g, datascope::SweepSpec spec) {
  spec.base_seed = g.seed;
  const datascope::SweepResult result = datascope::run_sweep(spec);
  std::cerr << "sweep: " << result.datasets.size() << " datasets, "
            << result.runs.size() << " runs, " << result.n_failed << " failed\n";
  if (g.format == "csv")
    std::cout << datascope::correlation_table_to_csv(result.correlations);
  else
    std::cout << datascope::correlation_table_to_json(result.correlations).dump(2)
              << '\n';
  return result.n_failed == 0 ? kExitOk : kExitPartialSweep;
}

int cmd_verify_theory(const GlobalOpts& g, std::uint32_t samples) {
  using namespace datascope;
  bool all_ok = true;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << '\n';
    if (!ok) all_ok = false;
  };

  {  // factorization identity on random stochastic MDPs
    Rng rng(derive_seed(g.seed, "verify-factorization"));
    double worst = 0.0;
    bool ok = true;
    for (std::uint32_t i = 0; i < samples && ok; ++i) {
      const FiniteMDP mdp = random_mdp(rng);
      const PolicyTable policy = random_policy(rng, mdp);
      try {
        const TransitionEntropy te = transition_entropy_detail(mdp, policy);
        worst = std::max(worst, std::abs(te.direct - te.factorized));
      } catch (const ValidationError&) {
        ok = false;
      }
    }
    report("entropy factorization identity", ok && worst <= 1e-10,
           "max |direct - factorized| = " + format_double(worst));
  }
  {  // deterministic collapse to the occupancy entropy
    Rng rng(derive_seed(g.seed, "verify-deterministic"));
    RandomMdpParams params;
    params.deterministic = true;
    double worst = 0.0;
    for (std::uint32_t i = 0; i < samples; ++i) {
      const FiniteMDP mdp = random_mdp(rng, params);
      const PolicyTable policy = random_policy(rng, mdp);
      const double h_joint = transition_entropy_exact(mdp, policy);
      const double h_occ = occupancy_entropy(occupancy_exact(mdp, policy));
      worst = std::max(worst, std::abs(h_joint - h_occ));
    }
    report("deterministic collapse", worst <= 1e-12,
           "max |H(p) - H(rho)| = " + format_double(worst));
  }
  {  // homomorphism suite
    Rng rng(derive_seed(g.seed, "verify-homomorphism"));
    bool ok = true;
    std::string why;
    for (std::uint32_t i = 0; i < samples && ok; ++i) {
      const HomomorphismPair pair = sample_homomorphism_pair(rng);
      const PolicyTable abstract_policy = random_policy(rng, pair.abstract_mdp);
      if (!validate_homomorphism(pair.h1).valid || !validate_homomorphism(pair.h2).valid) {
        ok = false;
        why = "generated homomorphism failed validation";
        break;
      }
      const auto ret = check_return_preservation(pair.h1, pair.h2, abstract_policy);
      if (!ret.equal) {
        ok = false;
        why = "return not preserved, diff = " + format_double(ret.difference);
        break;
      }
      const auto bounds = check_entropy_bounds(pair.h1, pair.h2, abstract_policy);
      if (!bounds.lower_bound_holds || !bounds.difference_bound_holds) {
        ok = false;
        why = "entropy bound violated";
        break;
      }
    }
    report("homomorphism suite (validation, return equality, entropy bounds)", ok, why);
  }
  {  // analytic duplicate-states entropy gap
    const FiniteMDP base = build_chain(5, 0.1);
    const TransformResult dup = duplicate_states(base, 2);
    const Homomorphism h = make_homomorphism(dup.mdp, base, dup.mapping);
    Rng rng(derive_seed(g.seed, "verify-duplicate"));
    const PolicyTable abstract_policy = random_policy(rng, base);
    const double h_ground =
        transition_entropy_exact(h.ground, lift_policy(h, abstract_policy).ground_policy);
    const double h_abstract = transition_entropy_exact(base, abstract_policy);
    const double gap = h_ground - h_abstract;
    report("duplicate-states entropy gap = ln 2",
           std::abs(gap - std::log(2.0)) <= 1e-10, "gap = " + format_double(gap));
  }

  if (!all_ok) return kExitValidation;
  std::cout << "all theory checks passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"datascope: dataset characterization for offline RL on finite MDPs"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--seed", g.seed, "global seed")->capture_default_str();
  app.add_option("--gamma", g.gamma, "discount used for reporting returns")
      ->capture_default_str();
  app.add_option("--format", g.format, "output format: json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();

  // characterize
  auto* characterize = app.add_subcommand("characterize", "compute TQ/SACo measure reports");
  std::vector<std::string> data_paths;
  std::string ref_path, counter_text = "exact";
  double min_return = 0.0, expert_return = 1.0;
  characterize->add_option("--data", data_paths, "dataset file(s)")->required();
  characterize->add_option("--ref", ref_path, "reference (replay) dataset file")->required();
  characterize->add_option("--min-return", min_return, "minimal reference return")->required();
  characterize->add_option("--expert-return", expert_return, "expert reference return")
      ->required();
  characterize->add_option("--counter", counter_text, "exact or hll[:precision]")
      ->capture_default_str();

  // generate
  auto* generate = app.add_subcommand("generate", "sample a dataset from a built-in env");
  std::string gen_env = "grid5", gen_grid_json, gen_scheme = "random", gen_out;
  std::uint64_t gen_n = 10000, gen_train_steps = 0;
  double gen_eps = 0.2, gen_mix = 0.8;
  generate->add_option("--env", gen_env, "environment name")->capture_default_str();
  generate->add_option("--grid-json", gen_grid_json, "grid spec JSON file (overrides --env)");
  generate->add_option("--scheme", gen_scheme, "random|expert|mixed|noisy|replay")
      ->capture_default_str();
  generate->add_option("--n", gen_n, "number of transitions")->capture_default_str();
  generate->add_option("--epsilon", gen_eps, "noisy-scheme epsilon")->capture_default_str();
  generate->add_option("--mix-fraction", gen_mix, "mixed-scheme random fraction")
      ->capture_default_str();
  generate->add_option("--train-steps", gen_train_steps,
                       "online training steps (default max(n, needed))");
  generate->add_option("--out", gen_out, "output .jsonl path")->required();

  // train
  auto* train = app.add_subcommand("train", "train a tabular offline algorithm");
  std::string train_data, train_algo = "qlearn", train_env, train_out;
  std::uint32_t train_iters = 60;
  double train_alpha = 0.2, train_tau = 0.3, train_cql_alpha = 0.1;
  double train_min = 0.0, train_expert = 0.0;
  bool train_has_min = false, train_has_expert = false;
  train->add_option("--data", train_data, "dataset .jsonl")->required();
  train->add_option("--algo", train_algo, "bc|mce|bve|qlearn|bcq|cql")->capture_default_str();
  train->add_option("--iters", train_iters, "sweeps over the dataset")->capture_default_str();
  train->add_option("--alpha", train_alpha, "learning rate")->capture_default_str();
  train->add_option("--tau", train_tau, "BCQ threshold")->capture_default_str();
  train->add_option("--cql-alpha", train_cql_alpha, "CQL penalty weight")
      ->capture_default_str();
  train->add_option("--min-return", train_min, "min reference return (for omega)")
      ->each([&](const std::string&) { train_has_min = true; });
  train->add_option("--expert-return", train_expert, "expert reference return (for omega)")
      ->each([&](const std::string&) { train_has_expert = true; });
  train->add_option("--env", train_env, "override the manifest's environment");
  train->add_option("--out", train_out, "result JSON path (stdout if omitted)");

  // shift
  auto* shift = app.add_subcommand("shift", "classify domain shift between two datasets");
  std::string shift_a, shift_b;
  double shift_threshold = 0.05;
  shift->add_option("--a", shift_a, "first dataset")->required();
  shift->add_option("--b", shift_b, "second dataset")->required();
  shift->add_option("--threshold", shift_threshold, "per-factor TV flag threshold")
      ->capture_default_str();

  // correlate
  auto* correlate = app.add_subcommand("correlate", "correlation table from a runs CSV");
  std::string correlate_input;
  correlate->add_option("--input", correlate_input, "runs.csv from a sweep")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "generation -> training -> correlation pipeline");
  datascope::SweepSpec spec;
  std::string sweep_envs = "grid5,grid5lava,grid7";
  std::string sweep_schemes = "random,mixed,replay,noisy,expert";
  std::string sweep_algos = "bc,mce,bve,qlearn,bcq,cql";
  sweep->add_option("--envs", sweep_envs, "comma-separated env names")->capture_default_str();
  sweep->add_option("--schemes", sweep_schemes, "comma-separated schemes")
      ->capture_default_str();
  sweep->add_option("--algos", sweep_algos, "comma-separated algorithms")
      ->capture_default_str();
  sweep->add_option("--dataset-seeds", spec.dataset_seeds, "datasets per (env, scheme)")
      ->capture_default_str();
  sweep->add_option("--run-seeds", spec.run_seeds, "runs per (dataset, algorithm)")
      ->capture_default_str();
  sweep->add_option("--n", spec.n_samples, "transitions per dataset")->capture_default_str();
  sweep->add_option("--out-dir", spec.output_dir, "directory for CSVs and datasets")
      ->required();
  sweep->add_option("--jobs", spec.jobs, "worker threads (0 = hardware)")
      ->capture_default_str();
  sweep->add_flag("!--no-datasets", spec.write_datasets, "skip writing dataset files");

  // verify-theory
  auto* verify = app.add_subcommand("verify-theory",
                                    "numerically verify the entropy and homomorphism identities");
  std::uint32_t verify_samples = 100;
  verify->add_option("--samples", verify_samples, "random instances per suite")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (characterize->parsed())
      return cmd_characterize(g, data_paths, ref_path, min_return, expert_return,
                              counter_text);
    if (generate->parsed())
      return cmd_generate(g, gen_env, gen_grid_json, gen_scheme, gen_n, gen_out, gen_eps,
                          gen_mix, gen_train_steps);
    if (train->parsed()) {
      std::optional<double> min_opt, expert_opt;
      if (train_has_min) min_opt = train_min;
      if (train_has_expert) expert_opt = train_expert;
      return cmd_train(g, train_data, train_algo, train_iters, train_alpha, train_tau,
                       train_cql_alpha, min_opt, expert_opt, train_env, train_out);
    }
    if (shift->parsed()) return cmd_shift(g, shift_a, shift_b, shift_threshold);
    if (correlate->parsed()) return cmd_correlate(g, correlate_input);
    if (sweep->parsed()) {
      spec.envs = split_list(sweep_envs);
      spec.schemes = split_list(sweep_schemes);
      spec.algorithms = split_list(sweep_algos);
      return cmd_sweep(g, spec);
    }
    if (verify->parsed()) return cmd_verify_theory(g, verify_samples);
  } catch (const datascope::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const datascope::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}

#include <gtest/gtest.h>

#include <cmath>

#include "datascope/datagen.hpp"
#include "datascope/envs.hpp"
#include "datascope/offline.hpp"
#include "test_util.hpp"

namespace ds = datascope;
namespace dt = datascope::test;

namespace {

struct ChainSetup {
  ds::FiniteMDP mdp = ds::build_chain(5, 0.0);
  ds::PolicyTable expert;
  ds::Dataset expert_data;
  ds::Dataset random_data;

  ChainSetup() {
    expert = dt::optimal_policy(mdp, mdp.gamma);
    expert_data =
        ds::sample_policy_dataset(mdp, expert, 2000, 3, "chain5", "expert");
    random_data = ds::sample_policy_dataset(
        mdp, ds::PolicyTable::uniform(mdp.n_states, mdp.n_actions), 20000, 4, "chain5",
        "random");
  }

  ds::OfflineConfig config(ds::OfflineAlgo algo, std::uint64_t seed = 1) const {
    ds::OfflineConfig cfg;
    cfg.algorithm = algo;
    cfg.iterations = 40;
    cfg.alpha_lr = 0.2;
    cfg.gamma = mdp.gamma;
    cfg.eval_every = 10;
    cfg.eval_episodes = 5;
    cfg.seed = seed;
    return cfg;
  }
};

}  // namespace

TEST(RunOffline, BcImitatesADeterministicExpert) {
  const ChainSetup setup;
  const ds::OfflineResult r =
      ds::run_offline(setup.expert_data, setup.mdp, setup.config(ds::OfflineAlgo::bc));
  for (std::uint32_t s = 0; s < setup.mdp.n_states; ++s) {
    bool covered = false;
    for (const auto& traj : setup.expert_data.trajectories)
      for (const auto& tr : traj.transitions)
        if (tr.s == s) covered = true;
    if (!covered) continue;
    for (std::uint32_t a = 0; a < setup.mdp.n_actions; ++a)
      EXPECT_EQ(r.learned_policy.at(s, a), setup.expert.at(s, a)) << "state " << s;
  }
}

TEST(RunOffline, QlearnOnExhaustiveDataIsOptimal) {
  const ChainSetup setup;
  // the uniform-random dataset visits every (s, a) of the small chain
  const ds::ReturnRefs refs{ds::average_trajectory_return(setup.random_data, 1.0),
                            ds::evaluate_policy_exact(setup.mdp, setup.expert, 1.0)};
  const ds::OfflineResult r = ds::run_offline(
      setup.random_data, setup.mdp, setup.config(ds::OfflineAlgo::qlearn), refs);
  EXPECT_NEAR(r.best_eval_return, 1.0, 1e-12);
  EXPECT_NEAR(r.omega, 1.0, 1e-9);
}

TEST(RunOffline, BveOnExpertChainReachesTheGoal) {
  const ChainSetup setup;
  const ds::OfflineResult r =
      ds::run_offline(setup.expert_data, setup.mdp, setup.config(ds::OfflineAlgo::bve));
  EXPECT_NEAR(r.best_eval_return, 1.0, 1e-12);
}

TEST(RunOffline, McEstimatesBehavioralValues) {
  const ChainSetup setup;
  const ds::OfflineResult r =
      ds::run_offline(setup.expert_data, setup.mdp, setup.config(ds::OfflineAlgo::mce));
  // expert data all on the optimal path: greedy on MC values follows it
  EXPECT_NEAR(r.best_eval_return, 1.0, 1e-12);
  EXPECT_EQ(r.eval_history.size(), 1u);
}

TEST(RunOffline, BcqWithTauOneMatchesBcOnExpertData) {
  const ChainSetup setup;
  ds::OfflineConfig cfg = setup.config(ds::OfflineAlgo::bcq);
  cfg.tau = 1.0;
  const ds::OfflineResult bcq = ds::run_offline(setup.expert_data, setup.mdp, cfg);
  const ds::OfflineResult bc =
      ds::run_offline(setup.expert_data, setup.mdp, setup.config(ds::OfflineAlgo::bc));
  EXPECT_EQ(bcq.learned_policy, bc.learned_policy);
}

TEST(RunOffline, BcqWithTauZeroEqualsQlearnDecisionForDecision) {
  const ChainSetup setup;
  for (const ds::Dataset* data : {&setup.expert_data, &setup.random_data}) {
    ds::OfflineConfig bcq_cfg = setup.config(ds::OfflineAlgo::bcq, 77);
    bcq_cfg.tau = 0.0;
    const ds::OfflineResult bcq = ds::run_offline(*data, setup.mdp, bcq_cfg);
    const ds::OfflineResult qlearn =
        ds::run_offline(*data, setup.mdp, setup.config(ds::OfflineAlgo::qlearn, 77));
    ASSERT_EQ(bcq.learned_policy, qlearn.learned_policy);
    ASSERT_EQ(bcq.best_eval_return, qlearn.best_eval_return);
    ASSERT_EQ(bcq.eval_history.size(), qlearn.eval_history.size());
    for (std::size_t i = 0; i < bcq.eval_history.size(); ++i)
      ASSERT_EQ(bcq.eval_history[i].mean_return, qlearn.eval_history[i].mean_return);
  }
}

TEST(RunOffline, CqlWithZeroAlphaEqualsQlearnDecisionForDecision) {
  const ChainSetup setup;
  ds::OfflineConfig cql_cfg = setup.config(ds::OfflineAlgo::cql, 123);
  cql_cfg.cql_alpha = 0.0;
  const ds::OfflineResult cql = ds::run_offline(setup.random_data, setup.mdp, cql_cfg);
  const ds::OfflineResult qlearn = ds::run_offline(
      setup.random_data, setup.mdp, setup.config(ds::OfflineAlgo::qlearn, 123));
  EXPECT_EQ(cql.learned_policy, qlearn.learned_policy);
  EXPECT_EQ(cql.best_eval_return, qlearn.best_eval_return);
}

TEST(RunOffline, CqlPenaltyKeepsExpertChoicesOnExpertData) {
  // on an escape-style grid, plain qlearn drifts to unseen zero-initialized
  // actions while CQL pins the data actions down
  const ds::FiniteMDP m = ds::build_env("grid5");
  const ds::PolicyTable expert = dt::optimal_policy(m, m.gamma);
  const ds::Dataset data = ds::sample_policy_dataset(m, expert, 4000, 5, "grid5", "expert");

  ds::OfflineConfig cql_cfg;
  cql_cfg.algorithm = ds::OfflineAlgo::cql;
  cql_cfg.gamma = m.gamma;
  cql_cfg.iterations = 40;
  cql_cfg.eval_every = 10;
  cql_cfg.eval_episodes = 5;
  cql_cfg.seed = 9;
  const ds::OfflineResult cql = ds::run_offline(data, m, cql_cfg);

  ds::OfflineConfig q_cfg = cql_cfg;
  q_cfg.algorithm = ds::OfflineAlgo::qlearn;
  const ds::OfflineResult qlearn = ds::run_offline(data, m, q_cfg);

  const double expert_return = ds::evaluate_policy_exact(m, expert, 1.0);
  EXPECT_NEAR(cql.best_eval_return, expert_return, 1e-9);
  EXPECT_LT(qlearn.best_eval_return, expert_return - 1.0);
}

TEST(Omega, NormalizationAndInvariance) {
  EXPECT_EQ(ds::omega(500.0, 22.23, 500.0), 1.0);
  EXPECT_EQ(ds::omega(22.23, 22.23, 500.0), 0.0);
  EXPECT_NEAR(ds::omega(208.05, 22.23, 500.0), 0.38893, 1e-5);
  EXPECT_THROW(ds::omega(1.0, 5.0, 5.0), std::invalid_argument);

  const double base = ds::omega(208.05, 22.23, 500.0);
  const double c = 2.5, d = 11.0;
  EXPECT_NEAR(ds::omega(c * 208.05 + d, c * 22.23 + d, c * 500.0 + d), base, 1e-12);
}

TEST(RunOffline, DeterministicPerSeed) {
  const ChainSetup setup;
  const ds::OfflineResult a = ds::run_offline(setup.random_data, setup.mdp,
                                              setup.config(ds::OfflineAlgo::cql, 5));
  const ds::OfflineResult b = ds::run_offline(setup.random_data, setup.mdp,
                                              setup.config(ds::OfflineAlgo::cql, 5));
  EXPECT_EQ(a.learned_policy, b.learned_policy);
  EXPECT_EQ(a.best_eval_return, b.best_eval_return);
}

TEST(RunOffline, ErrorsOnBadInputs) {
  const ChainSetup setup;
  ds::Dataset empty;
  EXPECT_THROW(ds::run_offline(empty, setup.mdp, setup.config(ds::OfflineAlgo::bc)),
               std::invalid_argument);

  ds::Dataset out_of_range;
  out_of_range.trajectories.push_back({0, {{99, 0, 0.0, 99, true}}});
  EXPECT_THROW(
      ds::run_offline(out_of_range, setup.mdp, setup.config(ds::OfflineAlgo::bc)),
      std::invalid_argument);
}

TEST(OfflineAlgo, NamesRoundTrip) {
  for (const char* name : {"bc", "mce", "bve", "qlearn", "bcq", "cql"})
    EXPECT_EQ(ds::offline_algo_name(ds::parse_offline_algo(name)), name);
  EXPECT_THROW(ds::parse_offline_algo("dqn"), std::invalid_argument);
}

TEST(OfflineResult, JsonIncludesHistoryAndNullOmega) {
  const ChainSetup setup;
  const ds::OfflineResult r = ds::run_offline(setup.expert_data, setup.mdp,
                                              setup.config(ds::OfflineAlgo::qlearn));
  const auto j = ds::offline_result_to_json(r);
  EXPECT_TRUE(j.at("omega").is_null());
  EXPECT_GE(j.at("eval_history").size(), 1u);
}

#include <gtest/gtest.h>

#include <cmath>

#include "datascope/datagen.hpp"
#include "datascope/envs.hpp"
#include "datascope/shift.hpp"
#include "test_util.hpp"

namespace ds = datascope;
namespace dt = datascope::test;

namespace {

ds::Dataset uniform_sample(const ds::FiniteMDP& m, std::uint64_t n, std::uint64_t seed) {
  return ds::sample_policy_dataset(m, ds::PolicyTable::uniform(m.n_states, m.n_actions),
                                   n, seed, "env", "random");
}

}  // namespace

TEST(EstimateFactors, DeterministicDatasetsHavePointMassRows) {
  const ds::FiniteMDP m = ds::build_env("grid5");
  const ds::FactorEstimates f = ds::estimate_factors(uniform_sample(m, 5000, 1));
  for (const auto& [sa, row] : f.state_dynamics) {
    ASSERT_EQ(row.size(), 1u);
    ASSERT_EQ(row.begin()->second, 1.0);
  }
  for (const auto& [sas, row] : f.reward_dynamics) {
    ASSERT_EQ(row.size(), 1u);
    ASSERT_EQ(row.begin()->second, 1.0);
  }
}

TEST(EstimateFactors, UniformPolicyEstimateWithinMultinomialBounds) {
  const ds::FiniteMDP m = ds::build_chain(5, 0.0);
  const ds::FactorEstimates f = ds::estimate_factors(uniform_sample(m, 40000, 2));
  for (const auto& [s, row] : f.policy) {
    double n_s = f.state_occupancy.at(s) * static_cast<double>(f.n_transitions);
    if (n_s < 200) continue;
    for (const auto& [a, p] : row)
      ASSERT_LE(std::abs(p - 0.5), 3.0 * std::sqrt(0.25 / n_s)) << "s=" << s;
  }
}

TEST(EstimateFactors, RecompositionReproducesTheEmpiricalJoint) {
  const ds::FiniteMDP m = ds::build_env("grid5slip");
  const ds::Dataset d = uniform_sample(m, 20000, 3);
  const ds::FactorEstimates f = ds::estimate_factors(d);

  std::map<std::tuple<std::uint64_t, std::uint32_t, double, std::uint64_t>, double> joint;
  for (const auto& traj : d.trajectories)
    for (const auto& tr : traj.transitions)
      joint[{tr.s, tr.a, tr.r, tr.s_next}] += 1.0 / static_cast<double>(d.n_transitions());

  for (const auto& [key, p_joint] : joint) {
    const auto& [s, a, r, sn] = key;
    const double recomposed = f.reward_dynamics.at({s, a, sn}).at(r) *
                              f.state_dynamics.at({s, a}).at(sn) *
                              f.policy.at(s).at(a) * f.state_occupancy.at(s);
    ASSERT_NEAR(recomposed, p_joint, 1e-10);
  }
}

TEST(EstimateFactors, EmptyDatasetIsAnError) {
  ds::Dataset empty;
  EXPECT_THROW(ds::estimate_factors(empty), std::invalid_argument);
}

TEST(Compare, IdenticalEstimatesShowNoShift) {
  const ds::FiniteMDP m = ds::build_env("grid5");
  const ds::FactorEstimates f = ds::estimate_factors(uniform_sample(m, 3000, 4));
  const ds::ShiftReport rep = ds::compare(f, f);
  EXPECT_TRUE(rep.comparable);
  EXPECT_EQ(rep.tv_policy, 0.0);
  EXPECT_EQ(rep.tv_state_dyn, 0.0);
  EXPECT_EQ(rep.tv_reward, 0.0);
  EXPECT_EQ(rep.tv_occupancy, 0.0);
  EXPECT_EQ(rep.label, "none");
}

TEST(Compare, RandomVersusExpertFlagsPolicyShift) {
  const ds::FiniteMDP m = ds::build_env("grid5");
  const ds::PolicyTable expert = dt::optimal_policy(m, m.gamma);
  const ds::Dataset random_ds = uniform_sample(m, 8000, 5);
  const ds::Dataset expert_ds =
      ds::sample_policy_dataset(m, expert, 8000, 6, "grid5", "expert");
  const ds::ShiftReport rep =
      ds::compare(ds::estimate_factors(random_ds), ds::estimate_factors(expert_ds));
  EXPECT_TRUE(rep.comparable);
  EXPECT_TRUE(rep.flag_policy);
  // same deterministic environment: dynamics factors agree on shared support
  EXPECT_FALSE(rep.flag_state_dyn);
  EXPECT_FALSE(rep.flag_reward);
}

TEST(Compare, RewardScaleFlagsOnlyRewardDynamics) {
  const ds::FiniteMDP m = ds::build_env("grid5");
  const ds::TransformResult scaled = ds::scale_rewards(m, 2.0);
  const ds::Dataset a = uniform_sample(m, 6000, 7);
  const ds::Dataset b = uniform_sample(scaled.mdp, 6000, 7);  // same seed, same policy
  const ds::ShiftReport rep =
      ds::compare(ds::estimate_factors(a), ds::estimate_factors(b));
  EXPECT_TRUE(rep.flag_reward);
  EXPECT_EQ(rep.tv_policy, 0.0);
  EXPECT_EQ(rep.tv_state_dyn, 0.0);
  EXPECT_EQ(rep.tv_occupancy, 0.0);
  EXPECT_EQ(rep.label, "reward-dynamics");
}

TEST(Compare, DynamicsNoiseFlagsStateDynamicsAndMovesOccupancy) {
  const ds::FiniteMDP m = ds::build_env("grid5goal");
  const ds::TransformResult noisy = ds::add_dynamics_noise(m, 0.4);
  const ds::Dataset a = uniform_sample(m, 30000, 8);
  const ds::Dataset b = uniform_sample(noisy.mdp, 30000, 8);
  const ds::ShiftReport rep =
      ds::compare(ds::estimate_factors(a), ds::estimate_factors(b));
  EXPECT_TRUE(rep.flag_state_dyn);
  EXPECT_GT(rep.tv_occupancy, 0.0);
  // same behavioral policy: only sampling noise left in the policy factor
  EXPECT_FALSE(rep.flag_policy);
}

TEST(Compare, SymmetricInItsArguments) {
  const ds::FiniteMDP m = ds::build_env("grid5lava");
  const ds::FactorEstimates fa = ds::estimate_factors(uniform_sample(m, 5000, 9));
  const ds::FactorEstimates fb = ds::estimate_factors(uniform_sample(m, 5000, 10));
  const ds::ShiftReport ab = ds::compare(fa, fb);
  const ds::ShiftReport ba = ds::compare(fb, fa);
  EXPECT_EQ(ab.tv_policy, ba.tv_policy);
  EXPECT_EQ(ab.tv_state_dyn, ba.tv_state_dyn);
  EXPECT_EQ(ab.tv_reward, ba.tv_reward);
  EXPECT_EQ(ab.tv_occupancy, ba.tv_occupancy);
}

TEST(Compare, DisjointSupportsAreIncomparable) {
  ds::Dataset a, b;
  a.trajectories.push_back({0, {{0, 0, 1.0, 1, true}}});
  b.trajectories.push_back({0, {{5, 1, 1.0, 6, true}}});
  const ds::ShiftReport rep =
      ds::compare(ds::estimate_factors(a), ds::estimate_factors(b));
  EXPECT_FALSE(rep.comparable);
  EXPECT_EQ(rep.label, "incomparable");
  EXPECT_TRUE(std::isnan(rep.tv_policy));
}

TEST(Compare, ThresholdIsRespected) {
  const ds::FiniteMDP m = ds::build_env("grid5");
  const ds::Dataset a = uniform_sample(m, 4000, 11);
  const ds::Dataset b = uniform_sample(m, 4000, 12);
  const ds::ShiftReport strict =
      ds::compare(ds::estimate_factors(a), ds::estimate_factors(b), 1e-9);
  const ds::ShiftReport lax =
      ds::compare(ds::estimate_factors(a), ds::estimate_factors(b), 0.999);
  EXPECT_TRUE(strict.flag_policy);  // sampling noise alone crosses a 1e-9 bar
  EXPECT_EQ(lax.label, "none");
}

TEST(ShiftReport, JsonShape) {
  const ds::FiniteMDP m = ds::build_env("grid5");
  const ds::FactorEstimates f = ds::estimate_factors(uniform_sample(m, 1000, 13));
  const auto j = ds::shift_report_to_json(ds::compare(f, f));
  EXPECT_EQ(j.at("label"), "none");
  EXPECT_EQ(j.at("tv_policy"), 0.0);
  EXPECT_TRUE(j.at("comparable").get<bool>());
}

#include "sscnet/simulator.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "sscnet/ssc.hpp"

using namespace sscnet;

namespace {

// 6 x 6 slice with two 6-voxel networks; small enough for whole studies.
SimScenario small_scenario() {
  SimScenario sc;
  sc.nx = 6;
  sc.ny = 6;
  sc.time_points = 80;
  sc.subjects = 8;
  sc.networks = {{0, 1, 2, 6, 7, 8}, {27, 28, 29, 33, 34, 35}};
  sc.replicates = 3;
  sc.bootstrap_replicates = 200;
  sc.seed = 42;
  sc.lag_edges = {0.0, 0.6, 1.05, 1.6, 2.5, 3.5, 5.0};
  sc.variogram_budget = 50'000;
  return sc;
}

double mean_theta(const std::vector<StreamCounts>& counts, const ComponentMask& mask) {
  double s = 0.0;
  for (const auto& c : counts) s += estimate_ssc(c, mask).theta_hat;
  return s / double(counts.size());
}

double sd_of(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= double(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / double(x.size() - 1));
}

void expect_variogram_round_trip(NoiseLevel level) {
  const auto sc = SimScenario::standard_design(level, 20);
  const CountGenerator generator(sc);
  // The count field is strongly correlated within a draw, so the pooled
  // variogram needs a few hundred independent fields to pin the nugget.
  const auto counts = generator.draw_batch(0, 0, 200);
  const auto grid = scenario_grid(sc);
  const auto masks = scenario_masks(sc);
  VariogramOptions options;
  options.edges = sc.lag_edges;
  options.budget = 100'000;
  options.seed = 5;
  const LagSampler sampler(grid, options);
  std::vector<BinTable> tables;
  for (const auto& c : counts) tables.push_back(sampler.accumulate(detrended_counts(c, masks)));
  const auto fit = fit_semivariogram(pool_bins(tables), VariogramFamily::Exponential);
  EXPECT_NEAR(fit.model.nugget, sc.noise.nugget, 0.3 * sc.noise.nugget);
  EXPECT_NEAR(fit.model.partial_sill, sc.noise.partial_sill, 0.3 * sc.noise.partial_sill);
  EXPECT_NEAR(fit.model.range, sc.noise.range, 0.3 * sc.noise.range);
}

}  // namespace

TEST(Scenario, DefaultGeometryAndTruth) {
  const auto sc = SimScenario::standard_design(NoiseLevel::Low, 20);
  const auto masks = scenario_masks(sc);
  ASSERT_EQ(masks.size(), 2u);
  EXPECT_EQ(masks[0].size(), 12u);
  EXPECT_EQ(masks[1].size(), 12u);
  for (VoxelId v : masks[0].members()) EXPECT_FALSE(masks[1].contains(v));
  EXPECT_EQ(masks[0].label(), "IC1");
  const auto theta = true_ssc(sc);
  EXPECT_NEAR(theta[0], 4.0 / 13.0, 1e-12);
  EXPECT_NEAR(theta[1], 0.64, 1e-12);
  EXPECT_EQ(SimScenario::standard_design(NoiseLevel::High, 50).noise.nugget, 2.0);
  EXPECT_EQ(SimScenario::standard_design(NoiseLevel::High, 50).noise.partial_sill, 5.0);
}

TEST(SimulateSources, SharedAcrossSubjectsAndNetworkDominated) {
  const auto sc = SimScenario::standard_design(NoiseLevel::Low, 20);
  const auto a = simulate_sources(sc, 3);
  EXPECT_EQ(a, simulate_sources(sc, 3));
  EXPECT_NE(a, simulate_sources(sc, 4));
  const auto masks = scenario_masks(sc);
  double inside = 0.0;
  for (VoxelId v : masks[0].members()) inside += a(0, v);
  EXPECT_NEAR(inside / 12.0, 3.0, 0.5);
}

TEST(SimulateFmri, NoiselessDataIsAnExactMixture) {
  auto sc = SimScenario::standard_design(NoiseLevel::Low, 20);
  sc.fmri_noise_sd = 0.0;
  const auto s = simulate_sources(sc, 0);
  const Eigen::MatrixXd y = simulate_fmri(sc, s, 0, 0);
  ASSERT_EQ(y.rows(), 200);
  ASSERT_EQ(y.cols(), 100);
  // Y = A S: solve for A, the residual must vanish.
  const Eigen::MatrixXd a = (s * s.transpose()).ldlt().solve(s * y.transpose()).transpose();
  EXPECT_LT((y - a * s).norm(), 1e-9 * y.norm());
}

TEST(SimulateFmri, SubjectsDifferInNoiseOnly) {
  const auto sc = SimScenario::standard_design(NoiseLevel::Low, 20);
  const auto s = simulate_sources(sc, 1);
  const auto y0 = simulate_fmri(sc, s, 1, 0);
  const auto y1 = simulate_fmri(sc, s, 1, 1);
  EXPECT_NE(y0, y1);
  EXPECT_EQ(y0, simulate_fmri(sc, s, 1, 0));
}

TEST(SimulateCounts, ZeroSillGivesRoundedMeans) {
  auto sc = SimScenario::standard_design(NoiseLevel::Low, 20);
  sc.noise.nugget = 0.0;
  sc.noise.partial_sill = 0.0;
  const auto counts = simulate_counts(sc, 0, 0);
  const auto p = pair_probabilities(sc);
  for (PairId z = 0; z < PairId(p.size()); ++z) {
    ASSERT_EQ(counts.count(z), std::uint32_t(std::lround(20.0 * p[std::size_t(z)])));
  }
}

TEST(SimulateCounts, StayWithinZeroAndN) {
  auto sc = small_scenario();
  sc.noise = SemivariogramModel{VariogramFamily::Exponential, 10.0, 20.0, 1.0};
  const CountGenerator generator(sc);
  std::size_t at_zero = 0, at_max = 0;
  for (const auto& c : generator.draw_batch(0, 0, 20)) {
    for (const auto& e : c.entries()) {
      ASSERT_LE(e.count, sc.streams_per_seed);
      at_zero += e.count == 0;
      at_max += e.count == sc.streams_per_seed;
    }
  }
  // Both clamps are exercised at this noise level.
  EXPECT_GT(at_zero, 0u);
  EXPECT_GT(at_max, 0u);
}

TEST(SimulateCounts, BatchMatchesSingleDraws) {
  const auto sc = small_scenario();
  const CountGenerator generator(sc);
  const auto batch = generator.draw_batch(2, 3, 2);
  EXPECT_EQ(batch[0].dense(), generator.draw(2, 3).dense());
  EXPECT_EQ(batch[1].dense(), generator.draw(2, 4).dense());
  EXPECT_NE(batch[0].dense(), batch[1].dense());
  EXPECT_FALSE(generator.repaired());
}

TEST(SimulateCounts, VariogramRoundTripLowNoise) { expect_variogram_round_trip(NoiseLevel::Low); }

TEST(SimulateCounts, VariogramRoundTripHighNoise) { expect_variogram_round_trip(NoiseLevel::High); }

TEST(SimulateCounts, LargerSamplesShrinkTheSpread) {
  // SD of the subject-mean theta_hat falls by about sqrt(50 / 20).
  const auto sc = small_scenario();
  const CountGenerator generator(sc);
  const auto mask = scenario_masks(sc)[0];
  std::vector<double> small, large;
  for (std::uint64_t r = 0; r < 400; ++r) {
    small.push_back(mean_theta(generator.draw_batch(r, 0, 20), mask));
    large.push_back(mean_theta(generator.draw_batch(r, 100, 50), mask));
  }
  const double ratio = sd_of(small) / sd_of(large);
  EXPECT_GE(ratio, 1.4);
  EXPECT_LE(ratio, 1.8);
}

TEST(RunStudy, ThetaColumnIsTheTruth) {
  auto sc = small_scenario();
  sc.mask_source = MaskSource::Truth;
  const auto summary = run_study(sc);
  const auto theta = true_ssc(sc);
  ASSERT_EQ(summary.components.size(), 2u);
  EXPECT_EQ(summary.completed, sc.replicates);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(summary.components[c].theta, theta[c]);
}

TEST(RunStudy, SameSeedSameSummary) {
  const auto sc = small_scenario();
  const auto a = run_study(sc);
  const auto b = run_study(sc);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.replicates_csv(), b.replicates_csv());
  EXPECT_NE(a.render().find("IC1"), std::string::npos);
}

TEST(ScenarioJson, RoundTrip) {
  auto sc = small_scenario();
  sc.mask_source = MaskSource::Truth;
  sc.fmri_noise_sd = 0.7;
  const auto back = SimScenario::from_json(sc.to_json());
  EXPECT_EQ(back.to_json(), sc.to_json());
  EXPECT_EQ(back.networks, sc.networks);
  EXPECT_EQ(back.mask_source, MaskSource::Truth);
}

TEST(ScenarioJson, RejectsUnknownKeysAndBadValues) {
  auto j = small_scenario().to_json();
  j["mystery"] = 1;
  EXPECT_THROW(SimScenario::from_json(j), Error);
  auto bad = small_scenario().to_json();
  bad["mask_source"] = "atlas";
  EXPECT_THROW(SimScenario::from_json(bad), Error);
  auto sc = small_scenario();
  sc.p_in = {1.5, 0.5};
  EXPECT_THROW(sc.validate(), Error);
}

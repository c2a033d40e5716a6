#include "sscnet/reliability.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "sscnet/parallel.hpp"
#include "sscnet/simulator.hpp"

using namespace sscnet;

namespace {

std::vector<Eigen::MatrixXd> study_fmri(const SimScenario& sc, std::uint64_t rep) {
  const auto s = simulate_sources(sc, rep);
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t i = 0; i < sc.subjects; ++i) out.push_back(simulate_fmri(sc, s, rep, i));
  return out;
}

ReliabilityOptions options_for(std::size_t q, std::size_t b, std::uint64_t seed) {
  ReliabilityOptions o;
  o.components = q;
  o.replicates = b;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(ReliabilityFromCorrelations, PerfectMatchesGiveOne) {
  Eigen::MatrixXd r(2, 2);
  r << 1.0, 0.1, 0.2, 1.0;
  const std::vector<Eigen::MatrixXd> mats{r, r, r};
  const auto report = reliability_from_correlations(mats, {"A", "B"});
  EXPECT_DOUBLE_EQ(report.components[0].index, 1.0);
  EXPECT_DOUBLE_EQ(report.components[1].index, 1.0);
  EXPECT_EQ(report.used, 3u);
}

TEST(ReliabilityFromCorrelations, ChanceAveragesOverAllComponents) {
  Eigen::MatrixXd r(3, 3);
  r << 0.9, 0.3, 0.0, 0.2, 0.8, 0.2, 0.1, 0.1, 0.7;
  const std::vector<Eigen::MatrixXd> mats{r};
  const auto report = reliability_from_correlations(mats, {"A", "B", "C"});
  // The matched entry is part of the chance average (divide by q, not q - 1).
  EXPECT_NEAR(report.components[0].chance, 0.4, 1e-15);
  EXPECT_NEAR(report.components[0].observed, 0.9, 1e-15);
  EXPECT_NEAR(report.components[0].index, 0.5 / 0.6, 1e-15);
  EXPECT_NEAR(report.components[1].chance, 0.4, 1e-15);
  EXPECT_NEAR(report.components[2].chance, 0.3, 1e-15);
}

TEST(ReliabilityFromCorrelations, ChanceLevelMatchesGiveZero) {
  const Eigen::MatrixXd r = Eigen::MatrixXd::Constant(2, 2, 0.3);
  const std::vector<Eigen::MatrixXd> mats{r, r};
  const auto report = reliability_from_correlations(mats, {"A", "B"});
  EXPECT_DOUBLE_EQ(report.components[0].index, 0.0);
}

TEST(ReliabilityFromCorrelations, InvariantToBootstrapLabels) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Eigen::MatrixXd> mats, relabeled;
  for (int b = 0; b < 5; ++b) {
    Eigen::MatrixXd r(3, 3);
    for (Eigen::Index i = 0; i < 9; ++i) r(i) = u(rng);
    mats.push_back(r);
    Eigen::MatrixXd p(3, 3);
    p.col(0) = r.col(2);
    p.col(1) = r.col(0);
    p.col(2) = r.col(1);
    relabeled.push_back(p);
  }
  const auto a = reliability_from_correlations(mats, {"A", "B", "C"});
  const auto b = reliability_from_correlations(relabeled, {"A", "B", "C"});
  for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(a.components[c].index, b.components[c].index);
}

TEST(ReliabilityFromCorrelations, RejectsDegenerateInput) {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(2, 2);
  const std::vector<Eigen::MatrixXd> mats{ones};
  EXPECT_THROW(reliability_from_correlations(mats, {"A", "B"}), Error);
  EXPECT_THROW(reliability_from_correlations({}, {"A"}), Error);
  EXPECT_THROW(reliability_from_correlations(mats, {"A"}), Error);
}

TEST(ReliabilityIndex, NoiselessSourcesAreReliable) {
  auto sc = SimScenario::standard_design(NoiseLevel::Low, 10);
  sc.fmri_noise_sd = 0.0;
  const auto report = reliability_index(study_fmri(sc, 0), options_for(2, 20, 1));
  ASSERT_EQ(report.components.size(), 2u);
  for (const auto& c : report.components) EXPECT_GE(c.index, 0.95) << c.label;
  EXPECT_EQ(report.used, 20u);
}

TEST(ReliabilityIndex, RealSourcesBeatNoiseComponents) {
  auto sc = SimScenario::standard_design(NoiseLevel::Low, 10);
  const auto fmri = study_fmri(sc, 2);
  const auto report = reliability_index(fmri, options_for(4, 20, 2));
  const auto s = simulate_sources(sc, 2);
  const auto match = match_maps(s, report.maps);
  std::vector<bool> real(4, false);
  for (auto m : match.matched) real[m] = true;
  double strong = 0, noise = 0;
  for (std::size_t c = 0; c < 4; ++c) (real[c] ? strong : noise) += report.components[c].index / 2.0;
  EXPECT_GT(strong - noise, 0.3);
}

TEST(ReliabilityIndex, DeterministicAcrossThreadCounts) {
  auto sc = SimScenario::standard_design(NoiseLevel::High, 8);
  const auto fmri = study_fmri(sc, 1);
  set_thread_count(1);
  const auto a = reliability_index(fmri, options_for(2, 12, 9));
  set_thread_count(3);
  const auto b = reliability_index(fmri, options_for(2, 12, 9));
  set_thread_count(0);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(ReliabilityIndex, ErrorsOnBadInput) {
  auto sc = SimScenario::standard_design(NoiseLevel::Low, 1);
  EXPECT_THROW(reliability_index(study_fmri(sc, 0), options_for(2, 10, 0)), Error);
  sc.subjects = 3;
  auto opts = options_for(2, 10, 0);
  opts.ica.max_iterations = 1;
  opts.ica.tolerance = 1e-15;
  EXPECT_THROW(reliability_index(study_fmri(sc, 0), opts), Error);
}

TEST(Association, MonotoneTransformHasUnitSpearman) {
  const std::vector<double> theta{0.1, 0.2, 0.35, 0.4, 0.6, 0.8};
  std::vector<double> r;
  for (double t : theta) r.push_back(std::exp(3.0 * t));
  const auto report = ssc_reliability_association(theta, r, 999, 4);
  ASSERT_TRUE(report.spearman);
  EXPECT_DOUBLE_EQ(*report.spearman, 1.0);
  EXPECT_GT(*report.pearson, 0.9);
  // Only the identity and the reversal reach |rho| = 1 among 720 orders.
  EXPECT_LT(*report.spearman_p, 0.02);
}

TEST(Association, ConstantInputIsNotApplicable) {
  const std::vector<double> theta{0.1, 0.2, 0.3};
  const std::vector<double> r{0.5, 0.5, 0.5};
  const auto report = ssc_reliability_association(theta, r);
  EXPECT_FALSE(report.spearman);
  EXPECT_FALSE(report.pearson_p);
  EXPECT_EQ(report.warnings.size(), 1u);
  EXPECT_TRUE(report.to_json()["spearman"].is_null());
}

TEST(Association, IndependentInputsAreCalibrated) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  int rejections = 0;
  const int runs = 200;
  for (int run = 0; run < runs; ++run) {
    // Enough components for the rank statistic to be nearly continuous.
    std::vector<double> theta(20), r(20);
    for (auto& x : theta) x = normal(rng);
    for (auto& x : r) x = normal(rng);
    const auto report = ssc_reliability_association(theta, r, 499, std::uint64_t(run));
    rejections += *report.spearman_p < 0.05;
  }
  // Exact binomial(200, 0.05) 95% interval.
  EXPECT_GE(rejections, 4);
  EXPECT_LE(rejections, 18);
}

TEST(Association, ValidatesShapes) {
  const std::vector<double> two{1.0, 2.0};
  EXPECT_THROW(ssc_reliability_association(two, two), Error);
  const std::vector<double> three{1.0, 2.0, 3.0};
  EXPECT_THROW(ssc_reliability_association(three, two), Error);
}

TEST(Association, ScatterCsv) {
  const std::vector<double> theta{0.25, 0.5};
  const std::vector<double> r{0.75, 1.0};
  EXPECT_EQ(association_csv({"IC1", "IC2"}, theta, r), "component,theta_hat,R\nIC1,0.25,0.75\nIC2,0.5,1\n");
}

TEST(Ranks, TiesShareTheAverageRank) {
  const std::vector<double> v{3.0, 1.0, 3.0, 2.0};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{3.5, 1.0, 3.5, 2.0}));
}

#include "sscnet/inference.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

using namespace sscnet;

namespace {

SubjectEstimates make(const std::string& component, const std::string& group, std::vector<double> theta) {
  SubjectEstimates e;
  e.component = component;
  e.group = group;
  for (std::size_t i = 0; i < theta.size(); ++i) e.subjects.push_back(group + std::to_string(i));
  e.theta = std::move(theta);
  return e;
}

std::vector<double> normal_draws(std::mt19937_64& rng, std::size_t n, double mean, double sd) {
  std::normal_distribution<double> draw(mean, sd);
  std::vector<double> out(n);
  for (auto& v : out) v = draw(rng);
  return out;
}

}  // namespace

TEST(OneSample, NullData) {
  const auto e = make("IC1", "control", std::vector<double>(10, 0.0));
  for (auto source : {VarianceSource::Bootstrap, VarianceSource::Empirical}) {
    const auto r = test_ssc_positive(e, {source, 0.05, 200, 1});
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_DOUBLE_EQ(*r.wald_p, 0.5);
    EXPECT_FALSE(r.reject);
  }
}

TEST(OneSample, WaldStatistic) {
  auto e = make("IC1", "control", {0.30, 0.32, 0.29, 0.31, 0.33});
  e.delta_variance = {1e-4, 2e-4, 1e-4, 2e-4, 1.5e-4};
  const auto r = test_ssc_positive(e, {VarianceSource::Delta, 0.05, 100, 0});
  const double mean = (0.30 + 0.32 + 0.29 + 0.31 + 0.33) / 5;
  EXPECT_NEAR(r.statistic, mean / std::sqrt(1.5e-4 / 5), 1e-9);
  EXPECT_TRUE(r.reject);
  EXPECT_LT(*r.wald_p, 1e-4);
  EXPECT_GT(*r.wald_p, 0.0);
  EXPECT_NEAR(r.groups[0].se, std::sqrt(1.5e-4), 1e-15);
  EXPECT_NEAR(0.5 * (r.ci_low + r.ci_high), mean, 1e-12);
}

TEST(OneSample, ZeroVarianceWithPositiveMean) {
  const auto e = make("IC1", "control", std::vector<double>(6, 0.25));
  const auto r = test_ssc_positive(e, {VarianceSource::Empirical, 0.05, 100, 0});
  EXPECT_TRUE(std::isinf(r.statistic));
  EXPECT_GT(*r.wald_p, 0.0);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_TRUE(r.reject);
}

TEST(OneSample, MonotoneInScale) {
  std::mt19937_64 rng(1);
  auto e = make("c", "g", normal_draws(rng, 12, 0.01, 0.02));
  e.delta_variance.assign(12, 4e-4);
  const auto base = test_ssc_positive(e, {VarianceSource::Delta, 0.05, 100, 0});
  for (auto& t : e.theta) t *= 3.0;
  const auto scaled = test_ssc_positive(e, {VarianceSource::Delta, 0.05, 100, 0});
  EXPECT_GE(scaled.statistic, base.statistic);
}

TEST(OneSample, Errors) {
  EXPECT_THROW(test_ssc_positive(make("c", "g", {0.1}), {}), Error);
  EXPECT_THROW(test_ssc_positive(make("c", "g", {0.1, 0.2}), {VarianceSource::Delta}), Error);
}

TEST(BetweenNetworks, IdenticalEstimates) {
  std::mt19937_64 rng(2);
  const auto a = make("IC1", "g", normal_draws(rng, 15, 0.3, 0.01));
  auto b = a;
  b.component = "IC2";
  const auto r = test_between_networks(a, b, {VarianceSource::Bootstrap, 0.05, 499, 3});
  EXPECT_DOUBLE_EQ(*r.permutation_p, 1.0);
  EXPECT_FALSE(r.reject);
}

TEST(BetweenNetworks, SeparatedNetworks) {
  std::mt19937_64 rng(3);
  const auto a = make("IC2", "g", normal_draws(rng, 20, 0.64, 0.05));
  const auto b = make("IC1", "g", normal_draws(rng, 20, 0.3077, 0.04));
  const auto r = test_between_networks(a, b, {VarianceSource::Bootstrap, 0.05, 999, 4});
  EXPECT_DOUBLE_EQ(*r.permutation_p, 1.0 / 1000.0);
  EXPECT_TRUE(r.reject);
  EXPECT_GT(r.ci_low, 0.25);
}

TEST(BetweenNetworks, PairsBySubjectId) {
  const auto a = make("A", "g", {0.1, 0.2, 0.3});
  auto b = make("B", "g", {0.3, 0.2, 0.1});
  std::reverse(b.subjects.begin(), b.subjects.end());
  // after pairing by id the two components agree
  const auto r = test_between_networks(a, b, {VarianceSource::Bootstrap, 0.05, 50, 4});
  EXPECT_NEAR(r.estimate, 0.0, 1e-15);
  b.subjects[0] = "stranger";
  try {
    test_between_networks(a, b, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SubjectMismatch);
  }
}

TEST(BetweenGroups, IdenticalGroups) {
  std::mt19937_64 rng(4);
  const auto g1 = make("IC1", "control", normal_draws(rng, 10, 0.3, 0.02));
  auto g2 = g1;
  g2.group = "case";
  const auto r = test_between_groups(g1, g2, {VarianceSource::Bootstrap, 0.05, 499, 5});
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_DOUBLE_EQ(*r.wald_p, 1.0);
  EXPECT_DOUBLE_EQ(*r.permutation_p, 1.0);
}

TEST(BetweenGroups, AntisymmetricUnderSwap) {
  std::mt19937_64 rng(5);
  const auto g1 = make("IC1", "control", normal_draws(rng, 12, 0.30, 0.02));
  const auto g2 = make("IC1", "case", normal_draws(rng, 14, 0.32, 0.03));
  const InferenceOptions options{VarianceSource::Empirical, 0.05, 299, 6};
  const auto ab = test_between_groups(g1, g2, options);
  const auto ba = test_between_groups(g2, g1, options);
  EXPECT_NEAR(ab.statistic, -ba.statistic, 1e-12);
  EXPECT_NEAR(*ab.wald_p, *ba.wald_p, 1e-15);
}

TEST(BetweenGroups, WaldAndPermutationAgreeOnLargeEffects) {
  std::mt19937_64 rng(6);
  int agree = 0, eligible = 0;
  for (int run = 0; run < 40; ++run) {
    const auto g1 = make("c", "a", normal_draws(rng, 20, 0.30, 0.02));
    const auto g2 = make("c", "b", normal_draws(rng, 20, 0.33, 0.02));
    const auto r = test_between_groups(g1, g2, {VarianceSource::Empirical, 0.05, 199, std::uint64_t(run)});
    if (std::abs(r.statistic) <= 4) continue;
    ++eligible;
    if ((*r.wald_p <= 0.05) == (*r.permutation_p <= 0.05)) ++agree;
  }
  ASSERT_GE(eligible, 10);
  EXPECT_GE(agree, 0.95 * eligible);
}

TEST(Adjustment, BonferroniAndBh) {
  std::vector<TestReport> reports(4);
  const double p[] = {0.01, 0.04, 0.03, 0.2};
  for (int i = 0; i < 4; ++i) reports[i].wald_p = p[i];
  adjust_p_values(reports);
  EXPECT_DOUBLE_EQ(*reports[0].bonferroni_p, 0.04);
  EXPECT_DOUBLE_EQ(*reports[3].bonferroni_p, 0.8);
  // BH: sorted 0.01, 0.03, 0.04, 0.2 -> 0.04, 0.0533, 0.0533, 0.2
  EXPECT_NEAR(*reports[0].bh_p, 0.04, 1e-15);
  EXPECT_NEAR(*reports[2].bh_p, 0.04 * 4 / 3, 1e-15);
  EXPECT_NEAR(*reports[1].bh_p, 0.04 * 4 / 3, 1e-15);
  EXPECT_NEAR(*reports[3].bh_p, 0.2, 1e-15);
}

TEST(Rendering, JsonAndTables) {
  std::mt19937_64 rng(7);
  std::vector<TestReport> reports;
  const auto a = make("IC1", "control", normal_draws(rng, 10, 0.3, 0.02));
  const auto b = make("IC2", "control", normal_draws(rng, 10, 0.6, 0.02));
  const auto c = make("IC1", "case", normal_draws(rng, 10, 0.3, 0.02));
  reports.push_back(test_ssc_positive(a, {VarianceSource::Bootstrap, 0.05, 200, 1}));
  reports.push_back(test_between_networks(a, b, {VarianceSource::Bootstrap, 0.05, 200, 1}));
  reports.push_back(test_between_groups(a, c, {VarianceSource::Bootstrap, 0.05, 200, 1}));
  adjust_p_values(reports);
  const auto j = to_json(reports[2]);
  EXPECT_EQ(j["test"], "between-group");
  EXPECT_EQ(j["groups"].size(), 2u);
  EXPECT_TRUE(j["wald_p"].is_number());
  const auto text = render_tests(reports);
  EXPECT_NE(text.find("One-sample tests"), std::string::npos);
  EXPECT_NE(text.find("Between-network tests"), std::string::npos);
  EXPECT_NE(text.find("mean_control"), std::string::npos);
  EXPECT_EQ(format_p(1e-6), "<0.0001");
  EXPECT_EQ(format_p(0.054), "0.0540");
}

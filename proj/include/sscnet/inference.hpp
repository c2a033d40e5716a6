#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sscnet/error.hpp"

namespace sscnet {

enum class TestKind { OneSample, BetweenNetworks, BetweenGroups };
enum class VarianceSource { Delta, Bootstrap, Empirical };

std::string_view to_string(TestKind kind) noexcept;
std::string_view to_string(VarianceSource source) noexcept;
VarianceSource parse_variance_source(std::string_view name);

/// Per-subject estimates of one component in one group.
struct SubjectEstimates {
  std::string component;
  std::string group;
  std::vector<std::string> subjects;
  std::vector<double> theta;
  /// Per-subject delta-method variances; required for the delta source.
  std::vector<double> delta_variance;
};

struct InferenceOptions {
  VarianceSource variance = VarianceSource::Bootstrap;
  double alpha = 0.05;
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
};

struct GroupSummary {
  std::string name;
  std::size_t n = 0;
  double mean = 0.0;
  /// Per-subject standard error from the chosen variance source.
  double se = 0.0;
  /// Between-subject standard deviation of theta_hat.
  double sd = 0.0;
};

struct TestReport {
  TestKind kind = TestKind::OneSample;
  std::string label;
  std::vector<std::string> components;
  std::vector<GroupSummary> groups;
  /// Mean theta_hat, or the difference first - second.
  double estimate = 0.0;
  /// Z* for the Wald tests, the mean difference for the network test.
  double statistic = 0.0;
  std::optional<double> wald_p;
  std::optional<double> permutation_p;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
  bool reject = false;
  VarianceSource variance = VarianceSource::Bootstrap;
  std::optional<double> bonferroni_p;
  std::optional<double> bh_p;
  std::vector<std::string> warnings;

  /// Wald p when present, otherwise the permutation p.
  double p_value() const;
};

/// Var(theta_hat) for a single subject: mean delta variance, n times the
/// bootstrap variance of the mean, or the between-subject sample variance.
double subject_variance(const SubjectEstimates& estimates, const InferenceOptions& options, std::uint64_t stream_key);

/// One-sided Wald test of theta > 0.
TestReport test_ssc_positive(const SubjectEstimates& estimates, const InferenceOptions& options);

/// Permutation test of equal mean theta between two components measured on
/// the same subjects; labels are swapped within subjects.
TestReport test_between_networks(const SubjectEstimates& first, const SubjectEstimates& second,
                                 const InferenceOptions& options);

/// Two-sided Wald test and group-label permutation test of equal mean theta.
TestReport test_between_groups(const SubjectEstimates& first, const SubjectEstimates& second,
                               const InferenceOptions& options);

/// Fills the Bonferroni and Benjamini-Hochberg columns over a family of tests.
/// Decisions are left on the uncorrected p-values.
void adjust_p_values(std::span<TestReport> reports);

nlohmann::json to_json(const TestReport& report);

/// Aligned text tables, one block per test kind present.
std::string render_tests(std::span<const TestReport> reports);

/// "<0.0001" below the display floor, four decimals otherwise.
std::string format_p(double p);

}  // namespace sscnet

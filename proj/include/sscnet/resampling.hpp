#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sscnet/core_model.hpp"

namespace sscnet {

enum class ResampleMode { BootstrapSubjects, PermuteNetworkLabels, PermuteGroupLabels };

struct ResamplePlan {
  ResampleMode mode = ResampleMode::BootstrapSubjects;
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  /// Permutations shuffle labels only within equal strata; empty means one
  /// stratum. Network-label permutation uses one stratum per subject.
  std::vector<int> strata;
  /// Two-sided level of the percentile interval.
  double alpha = 0.05;
};

struct ResampleResult {
  double observed = 0.0;
  std::vector<double> replicates;
  /// Sample standard deviation of the replicate statistics.
  double se = 0.0;
  /// Bootstrap of a mean: se * sqrt(n), the spread of a single unit.
  double per_unit_se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::optional<double> p_value;
  std::vector<std::string> warnings;
};

/// Type-7 (linear interpolation) quantile of sorted data.
double quantile_type7(std::span<const double> sorted, double prob);
double mean_of(std::span<const double> values);
/// n-1 denominator.
double sample_variance(std::span<const double> values);

/// Subject bootstrap of the mean of per-subject values.
ResampleResult bootstrap_mean(std::span<const double> values, const ResamplePlan& plan);

/// Subject bootstrap of the mean sSC over a study.
ResampleResult bootstrap_ssc(std::span<const SubjectDataset> subjects, const ComponentMask& mask,
                             const ResamplePlan& plan);

using LabelStatistic = std::function<double(std::span<const int> labels)>;

/// Permutation distribution of a label statistic with the add-one two-sided
/// p-value (1 + #{|T_b| >= |T_obs|}) / (B + 1).
ResampleResult permutation_null(const LabelStatistic& statistic, std::span<const int> labels, const ResamplePlan& plan);

/// Replicate statistics as CSV (`replicate,statistic`).
std::string replicates_csv(const ResampleResult& result);

}  // namespace sscnet

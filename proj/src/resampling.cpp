#include "sscnet/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "sscnet/parallel.hpp"
#include "sscnet/rng.hpp"
#include "sscnet/ssc.hpp"

namespace sscnet {

double quantile_type7(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of empty data");
  if (prob <= 0.0) return sorted.front();
  if (prob >= 1.0) return sorted.back();
  const double h = (double(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

double mean_of(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "mean of empty data");
  return std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorCode::InvalidArgument, "variance needs at least 2 values");
  const double m = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return ss / double(values.size() - 1);
}

namespace {

void summarize(ResampleResult& result, double alpha) {
  result.se = std::sqrt(sample_variance(result.replicates));
  std::vector<double> sorted = result.replicates;
  std::sort(sorted.begin(), sorted.end());
  result.ci_low = quantile_type7(sorted, alpha / 2.0);
  result.ci_high = quantile_type7(sorted, 1.0 - alpha / 2.0);
}

}  // namespace

ResampleResult bootstrap_mean(std::span<const double> values, const ResamplePlan& plan) {
  if (plan.mode != ResampleMode::BootstrapSubjects) {
    throw Error(ErrorCode::InvalidArgument, "bootstrap needs a bootstrap-subjects plan");
  }
  if (values.size() < 2) throw Error(ErrorCode::TooFewSubjects, "bootstrap needs at least 2 subjects");
  if (plan.replicates < 2) {
    throw Error(ErrorCode::NotEnoughReplicates, "a standard error needs at least 2 bootstrap replicates");
  }
  const std::size_t n = values.size();
  ResampleResult result;
  result.observed = mean_of(values);
  result.replicates.assign(plan.replicates, 0.0);
  parallel_for(plan.replicates, [&](std::size_t b) {
    Rng rng = make_rng(plan.seed, {stream::bootstrap, b});
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += values[pick(rng)];
    result.replicates[b] = sum / double(n);
  });
  summarize(result, plan.alpha);
  result.per_unit_se = result.se * std::sqrt(double(n));
  return result;
}

ResampleResult bootstrap_ssc(std::span<const SubjectDataset> subjects, const ComponentMask& mask,
                             const ResamplePlan& plan) {
  if (subjects.size() < 2) throw Error(ErrorCode::TooFewSubjects, "bootstrap needs at least 2 subjects");
  std::vector<double> theta(subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) theta[i] = estimate_ssc(subjects[i].counts, mask).theta_hat;
  return bootstrap_mean(theta, plan);
}

ResampleResult permutation_null(const LabelStatistic& statistic, std::span<const int> labels,
                                const ResamplePlan& plan) {
  if (plan.mode == ResampleMode::BootstrapSubjects) {
    throw Error(ErrorCode::InvalidArgument, "permutation needs a permutation plan");
  }
  if (plan.replicates < 1) throw Error(ErrorCode::NotEnoughReplicates, "need at least 1 permutation");
  {
    std::vector<int> distinct(labels.begin(), labels.end());
    std::sort(distinct.begin(), distinct.end());
    if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 2) {
      throw Error(ErrorCode::InvalidArgument, "permutation needs at least 2 distinct labels");
    }
  }
  if (!plan.strata.empty() && plan.strata.size() != labels.size()) {
    throw Error(ErrorCode::InvalidArgument, "one stratum per label is required");
  }
  if (plan.mode == ResampleMode::PermuteNetworkLabels && plan.strata.empty()) {
    throw Error(ErrorCode::InvalidArgument, "network-label permutation needs subject strata");
  }

  // positions of each stratum, in label order
  std::map<int, std::vector<std::size_t>> blocks;
  for (std::size_t i = 0; i < labels.size(); ++i) blocks[plan.strata.empty() ? 0 : plan.strata[i]].push_back(i);

  ResampleResult result;
  result.observed = statistic(labels);
  result.replicates.assign(plan.replicates, 0.0);
  parallel_for(plan.replicates, [&](std::size_t b) {
    Rng rng = make_rng(plan.seed, {stream::permutation, b});
    std::vector<int> permuted(labels.begin(), labels.end());
    std::vector<int> block_labels;
    for (const auto& [stratum, positions] : blocks) {
      block_labels.clear();
      for (std::size_t pos : positions) block_labels.push_back(labels[pos]);
      std::shuffle(block_labels.begin(), block_labels.end(), rng);
      for (std::size_t i = 0; i < positions.size(); ++i) permuted[positions[i]] = block_labels[i];
    }
    result.replicates[b] = statistic(permuted);
  });

  const double reference = std::abs(result.observed);
  const double tolerance = 1e-12 * std::max(1.0, reference);
  std::size_t extreme = 0;
  for (double t : result.replicates) {
    if (std::abs(t) >= reference - tolerance) ++extreme;
  }
  result.p_value = (1.0 + double(extreme)) / (double(plan.replicates) + 1.0);
  if (std::all_of(result.replicates.begin(), result.replicates.end(),
                  [&](double t) { return std::abs(t - result.observed) <= tolerance; })) {
    result.warnings.push_back("statistic is constant under permutation");
  }
  if (plan.replicates >= 2) {
    summarize(result, plan.alpha);
  } else {
    result.ci_low = result.ci_high = result.replicates.front();
  }
  return result;
}

std::string replicates_csv(const ResampleResult& result) {
  std::string out = "replicate,statistic\n";
  for (std::size_t b = 0; b < result.replicates.size(); ++b) {
    out += fmt::format("{},{:.17g}\n", b, result.replicates[b]);
  }
  return out;
}

}  // namespace sscnet

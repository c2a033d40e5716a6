#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sscnet/ica.hpp"

namespace sscnet {

struct ComponentReliability {
  std::string label;
  /// Mean over bootstraps of the matched |r|.
  double observed = 0.0;
  /// Mean over bootstraps and all q bootstrap components of |r|.
  double chance = 0.0;
  /// (observed - chance) / (1 - chance); may be negative.
  double index = 0.0;

  double display_index() const noexcept { return index < 0.0 ? 0.0 : index; }
};

struct ReliabilityReport {
  std::vector<ComponentReliability> components;
  std::size_t replicates = 0;  // B requested
  std::size_t used = 0;        // B kept after dropping failed extractions
  std::size_t q = 0;
  std::uint64_t seed = 0;
  /// Maps extracted from all subjects, q x V; the rows the index refers to.
  Eigen::MatrixXd maps;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  std::string render() const;
};

/// Reliability from per-bootstrap |r| matrices (original x bootstrap
/// components). The chance term averages over every bootstrap component,
/// the matched one included.
ReliabilityReport reliability_from_correlations(std::span<const Eigen::MatrixXd> abs_r,
                                                const std::vector<std::string>& labels);

struct ReliabilityOptions {
  std::size_t components = 2;
  std::size_t replicates = 100;
  std::uint64_t seed = 0;
  /// Largest tolerated share of bootstrap extractions that fail.
  double max_dropped = 0.2;
  IcaOptions ica{};
};

/// Bootstrap-ICA reliability of each group component: resample subjects
/// with replacement, rerun the extraction and compare with the original maps.
ReliabilityReport reliability_index(std::span<const Eigen::MatrixXd> subjects, const ReliabilityOptions& options);

/// Same from per-subject Gram matrices (see centered_gram); `time_points[i]`
/// is the row count of subject i.
ReliabilityReport reliability_from_grams(std::span<const Eigen::MatrixXd> grams,
                                         std::span<const std::size_t> time_points,
                                         const ReliabilityOptions& options);

struct AssociationReport {
  std::size_t components = 0;
  /// Empty when an input is constant.
  std::optional<double> pearson;
  std::optional<double> spearman;
  std::optional<double> pearson_p;
  std::optional<double> spearman_p;
  std::size_t permutations = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

double pearson_correlation(std::span<const double> x, std::span<const double> y);
/// Average ranks for ties.
std::vector<double> average_ranks(std::span<const double> values);

/// Correlation of sSC and reliability across components with two-sided
/// permutation p-values.
AssociationReport ssc_reliability_association(std::span<const double> theta, std::span<const double> reliability,
                                              std::size_t permutations = 9999, std::uint64_t seed = 0);

/// `component,theta_hat,R` rows.
std::string association_csv(const std::vector<std::string>& labels, std::span<const double> theta,
                            std::span<const double> reliability);

}  // namespace sscnet

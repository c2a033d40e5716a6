#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sscnet/core_model.hpp"

namespace sscnet {

struct IcaOptions {
  std::size_t components = 2;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;
  int max_iterations = 500;
  /// Independent random starts; the converged run with the largest contrast
  /// is kept. The cubic contrast has spurious local optima on small grids.
  int restarts = 10;
};

/// Group spatial ICA result. Maps are zero-mean with unit variance across
/// voxels; each map's skewness is nonnegative.
struct ComponentSet {
  Eigen::MatrixXd maps;    // q x V
  Eigen::MatrixXd mixing;  // T_total x q, empty when extracted from Gram matrices
  std::uint64_t seed = 0;
  int iterations = 0;
  double tolerance = 0.0;
  bool converged = false;
  /// Sum over maps of |excess kurtosis|, the objective being maximized.
  double contrast = 0.0;
  /// Largest change of a unmixing direction per iteration.
  std::vector<double> iteration_log;

  std::size_t components() const noexcept { return std::size_t(maps.rows()); }
  std::size_t voxels() const noexcept { return std::size_t(maps.cols()); }
};

/// Raised when the fixed-point iteration does not converge; carries the last
/// iterate.
class IcaNotConverged : public Error {
 public:
  IcaNotConverged(const std::string& message, ComponentSet partial);
  const ComponentSet& partial() const noexcept { return partial_; }

 private:
  ComponentSet partial_;
};

/// Time x time rows centered across voxels, then Y' Y (V x V). Gram matrices
/// of subjects add up to the Gram matrix of their temporal concatenation.
Eigen::MatrixXd centered_gram(const Eigen::MatrixXd& fmri);

/// Temporal concatenation, centering across voxels, reduction to q principal
/// components and symmetric fixed-point ICA with a cubic nonlinearity.
ComponentSet group_ica(std::span<const Eigen::MatrixXd> subjects, const IcaOptions& options);

/// Same extraction from a summed Gram matrix; no mixing matrix.
ComponentSet ica_from_gram(const Eigen::MatrixXd& gram, std::size_t total_time, const IcaOptions& options);

/// |Pearson r| over voxels between every pair of rows; zero-variance rows
/// correlate 0 with everything.
Eigen::MatrixXd abs_spatial_correlation(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& candidate);

struct MatchResult {
  /// Candidate index per reference component.
  std::vector<std::size_t> matched;
  std::vector<double> matched_abs_r;
  /// reference x candidate absolute correlations.
  Eigen::MatrixXd abs_r;
  std::vector<std::string> warnings;
};

/// Per-reference argmax of |r|; ties go to the lowest candidate index.
MatchResult match_components(const ComponentSet& reference, const ComponentSet& candidate);
MatchResult match_maps(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& candidate);

enum class ThresholdRule {
  /// Largest |loading|.
  Absolute,
  /// Largest signed loading; meant for maps already oriented so the network
  /// loads positively (group_ica does this via the skew sign).
  Positive,
};

/// Voxels with the `size` top-ranked loadings of each map.
std::vector<ComponentMask> threshold_maps(const Eigen::MatrixXd& maps, std::size_t size,
                                          const std::vector<std::string>& labels,
                                          ThresholdRule rule = ThresholdRule::Absolute);

}  // namespace sscnet

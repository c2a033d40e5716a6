#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sscnet/core_model.hpp"
#include "sscnet/ssc.hpp"

namespace sscnet {

/// Distance between voxel pairs (j,k) and (j2,k2): the smaller of the two
/// averaged cross-assignments of Euclidean voxel distances.
double pair_distance(VoxelId j, VoxelId k, VoxelId j2, VoxelId k2, const VoxelGrid& grid);

inline double pair_distance(const Eigen::MatrixXd& voxel_distances, VoxelId j, VoxelId k, VoxelId j2,
                            VoxelId k2) noexcept {
  const double straight = voxel_distances(j, j2) + voxel_distances(k, k2);
  const double crossed = voxel_distances(j, k2) + voxel_distances(k, j2);
  return 0.5 * (straight < crossed ? straight : crossed);
}

enum class VariogramFamily { Exponential, Gaussian, Spherical };

std::string_view to_string(VariogramFamily family) noexcept;
VariogramFamily parse_family(std::string_view name);

struct SemivariogramModel {
  VariogramFamily family = VariogramFamily::Exponential;
  double nugget = 0.0;
  double partial_sill = 0.0;
  double range = 1.0;

  double sill() const noexcept { return nugget + partial_sill; }
  /// gamma(0) = 0; gamma(0+) = nugget.
  double gamma(double lag) const noexcept;
  /// Covariance implied by second-order stationarity, sill - gamma(d), for
  /// d > 0; never negative.
  double covariance(double lag) const noexcept;
  /// Normalized structural part in [0, 1]: 0 at d = 0, 1 at the sill.
  double shape(double lag) const noexcept;
};

struct LagBin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_lag = 0.0;
  double gamma = 0.0;
  std::size_t pairs = 0;
};

using BinTable = std::vector<LagBin>;

struct VariogramOptions {
  /// Increasing lag edges; bin h covers [edges[h], edges[h+1]).
  std::vector<double> edges;
  /// Maximum number of pair-of-pair combinations visited.
  std::size_t budget = 2'000'000;
  std::uint64_t seed = 0;
};

/// Evenly spaced edges from 0 to max_lag.
std::vector<double> uniform_lag_edges(double max_lag, std::size_t bins);

/// Pair-of-pair combinations and their lag bins for one grid. The sample is
/// drawn once and reused for every count field on that grid.
class LagSampler {
 public:
  LagSampler(const VoxelGrid& grid, const VariogramOptions& options);

  std::size_t combinations() const noexcept { return first_.size(); }
  bool exhaustive() const noexcept { return exhaustive_; }
  std::span<const double> edges() const noexcept { return edges_; }

  /// Matheron estimator over a value per pair id.
  BinTable accumulate(std::span<const double> pair_values) const;

 private:
  std::vector<double> edges_;
  std::vector<std::uint32_t> first_;
  std::vector<std::uint32_t> second_;
  std::vector<std::uint16_t> bin_;
  std::vector<double> lag_sum_;
  std::vector<std::size_t> lag_count_;
  bool exhaustive_ = false;
};

/// Counts minus the mean of their class: pairs inside one of `masks` form one
/// class per mask, every other pair the background class.
std::vector<double> detrended_counts(const StreamCounts& counts, std::span<const ComponentMask> masks);

/// Matheron semivariogram of the (optionally detrended) counts.
BinTable empirical_semivariogram(const StreamCounts& counts, const VoxelGrid& grid, const VariogramOptions& options,
                                 std::span<const ComponentMask> trend_masks = {});

/// Pair-count weighted average of several bin tables with identical edges.
BinTable pool_bins(std::span<const BinTable> tables);

struct FitOptions {
  /// Number of deterministic multistart brackets over log(range).
  int starts = 5;
  /// Range search interval as multiples of the smallest/largest used lag.
  double min_range_factor = 0.05;
  double max_range_factor = 10.0;
  double sill_floor = 1e-12;
};

struct SemivariogramFit {
  SemivariogramModel model;
  double residual = 0.0;
  bool degenerate = false;
  BinTable bins;
};

SemivariogramFit fit_semivariogram(const BinTable& bins, VariogramFamily family, const FitOptions& options = {});

struct CovarianceOptions {
  std::size_t max_bytes = std::size_t{1} << 30;
  bool psd_repair = true;
};

/// Mean and covariance of the counts on the pairs that touch one component.
/// Variances are binomial N p(1-p) with p clamped to [1/(2N), 1-1/(2N)];
/// covariances are the semivariogram correlation (sill - gamma(d)) / sill
/// times the two binomial standard deviations.
struct CovarianceField {
  std::vector<PairId> pairs;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  /// Smallest eigenvalue before repair, when a repair was needed.
  std::optional<double> min_eigenvalue;
  bool repaired = false;
};

CovarianceField build_covariance(const StreamCounts& counts, const VoxelGrid& grid, const SemivariogramModel& model,
                                 const ComponentMask& mask, const CovarianceOptions& options = {});

/// Ratio X / Y of two linear forms with its first-order variance.
struct DeltaResult {
  double variance = 0.0;
  double ratio = 0.0;
  double mean_x = 0.0;
  double mean_y = 0.0;
  double var_x = 0.0;
  double var_y = 0.0;
  double cov_xy = 0.0;
};

/// (E X / E Y)^2 [Var X/(E X)^2 + Var Y/(E Y)^2 - 2 Cov(X,Y)/(E X E Y)],
/// evaluated in the algebraically equal form
/// (Var X - 2 r Cov + r^2 Var Y) / (E Y)^2 so that E X = 0 is allowed.
DeltaResult delta_from_moments(double mean_x, double mean_y, double var_x, double var_y, double cov_xy);

/// Delta-method variance of theta_hat for X = (C_l - A) N*, Y = b - A N*.
DeltaResult delta_variance(const ComponentMask& mask, const StreamCounts& counts, const CovarianceField& field);

}  // namespace sscnet

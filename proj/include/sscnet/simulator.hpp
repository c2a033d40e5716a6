#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sscnet/core_model.hpp"
#include "sscnet/spatial_variance.hpp"

namespace sscnet {

enum class NoiseLevel { Low, High };
enum class MaskSource { Ica, Truth };

/// Synthetic study on a 2-D slice: shared spatial sources mixed by subject
/// time courses, and stream counts drawn around N p with spatially
/// correlated noise.
struct SimScenario {
  int nx = 10;
  int ny = 10;
  std::size_t time_points = 200;
  std::size_t subjects = 20;
  /// Voxel lists of the networks; empty means the front-back and left-right
  /// 12-voxel networks of the 10 x 10 slice.
  std::vector<std::vector<VoxelId>> networks;
  std::vector<double> intensity{3.0, 3.0};
  double background_sd = 0.5;
  double jitter_sd = 0.1;
  double fmri_noise_sd = 1.0;
  double ar_coefficient = 0.3;
  std::uint32_t streams_per_seed = 20;
  double p_out = 0.25;
  std::vector<double> p_in{0.5, 0.75};
  SemivariogramModel noise{VariogramFamily::Exponential, 1.0, 4.0, 1.0};
  std::uint64_t seed = 0;
  std::size_t replicates = 100;
  std::size_t bootstrap_replicates = 1000;
  double alpha = 0.05;
  MaskSource mask_source = MaskSource::Ica;
  /// Lag edges of the per-subject semivariogram.
  std::vector<double> lag_edges{0.0, 0.6, 0.8, 1.05, 1.3, 1.6, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};
  std::size_t variogram_budget = 2'000'000;

  static SimScenario standard_design(NoiseLevel level, std::size_t subjects);

  std::size_t voxel_count() const noexcept { return std::size_t(nx) * std::size_t(ny); }
  std::size_t component_count() const noexcept { return p_in.size(); }
  /// Throws InvalidArgument on inconsistent settings.
  void validate() const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected.
  static SimScenario from_json(const nlohmann::json& j);
};

VoxelGrid scenario_grid(const SimScenario& scenario);
std::vector<ComponentMask> scenario_masks(const SimScenario& scenario);
std::vector<std::string> component_labels(std::size_t count);

/// Connection probability of every pair.
std::vector<double> pair_probabilities(const SimScenario& scenario);
/// Population sSC of each network.
std::vector<double> true_ssc(const SimScenario& scenario);

/// q x V source maps: intensity plus jitter inside each network and
/// background noise everywhere. Shared by all subjects of one replicate.
Eigen::MatrixXd simulate_sources(const SimScenario& scenario, std::uint64_t replicate);

/// T x V data Y = A S + e with AR(1) time courses.
Eigen::MatrixXd simulate_fmri(const SimScenario& scenario, const Eigen::MatrixXd& sources, std::uint64_t replicate,
                              std::uint64_t subject);

/// MVN(N p, Sigma) count draws rounded and clamped to [0, N]. The factor of
/// Sigma is computed once and shared.
class CountGenerator {
 public:
  explicit CountGenerator(const SimScenario& scenario);

  StreamCounts draw(std::uint64_t replicate, std::uint64_t subject) const;
  /// Subjects first..first+count-1 of one replicate in one batch.
  std::vector<StreamCounts> draw_batch(std::uint64_t replicate, std::uint64_t first, std::size_t count) const;

  bool repaired() const noexcept { return repaired_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }

 private:
  std::size_t voxels_;
  std::uint32_t streams_;
  std::uint64_t seed_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd factor_;  // lower triangular unless repaired
  bool zero_ = false;
  bool repaired_ = false;
  std::vector<std::string> warnings_;
};

/// Dense covariance of the count noise over all pairs.
Eigen::MatrixXd count_covariance(const SimScenario& scenario);

StreamCounts simulate_counts(const SimScenario& scenario, std::uint64_t replicate, std::uint64_t subject);

struct ComponentReplicate {
  double theta_mean = 0.0;
  /// Standard errors of the subject mean.
  double theory_se = 0.0;
  double bootstrap_se = 0.0;
  bool wald_covers = false;
  bool percentile_covers = false;
  /// Matched |r| between the estimated and true map.
  double map_correlation = 1.0;
};

struct ReplicateOutcome {
  std::size_t replicate = 0;
  bool ok = false;
  std::string failure;
  std::vector<ComponentReplicate> components;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

struct ComponentSummary {
  std::string label;
  double theta = 0.0;
  MeanSd theta_hat;
  MeanSd theory_se;
  MeanSd bootstrap_se;
  double coverage_wald = 0.0;
  double coverage_percentile = 0.0;
  /// Per-subject standard errors (SE of the mean times sqrt(n)).
  double theory_se_subject = 0.0;
  double bootstrap_se_subject = 0.0;
};

struct StudySummary {
  SimScenario scenario;
  std::size_t completed = 0;
  std::vector<ComponentSummary> components;
  std::vector<ReplicateOutcome> replicates;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  /// Text table with the simulation-table columns.
  std::string render() const;
  /// One row per replicate and component.
  std::string replicates_csv() const;
};

/// Everything one replicate produces before summarizing, for callers that
/// need the data (dataset export, tests).
struct SimulatedReplicate {
  Eigen::MatrixXd sources;
  std::vector<Eigen::MatrixXd> fmri;
  std::vector<StreamCounts> counts;
};

SimulatedReplicate simulate_replicate(const SimScenario& scenario, const CountGenerator& generator,
                                      std::uint64_t replicate, bool with_fmri = true);

StudySummary run_study(const SimScenario& scenario);
StudySummary run_study(const SimScenario& scenario, const CountGenerator& generator);

}  // namespace sscnet

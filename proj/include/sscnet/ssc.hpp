#pragma once

#include <span>
#include <string>
#include <vector>

#include "sscnet/core_model.hpp"

namespace sscnet {

enum class Level { Voxel, Region };

std::string_view to_string(Level level) noexcept;

/// Standardized strength of structural connectivity for one network.
/// theta_hat = numerator / denominator; for voxel-level estimates both are
/// in stream-count units, for region-level estimates in probability units.
struct SscEstimate {
  std::string component;
  double theta_hat = 0.0;
  Level level = Level::Voxel;
  double numerator = 0.0;
  double denominator = 0.0;
};

/// Dense field of values over every unordered voxel pair, indexed by pair id.
struct PairField {
  std::size_t voxels = 0;
  std::vector<double> values;

  static PairField constant(std::size_t voxels, double value);
  double at(VoxelId j, VoxelId k) const;
};

/// Population sSC from connection probabilities, baselines averaged over all
/// V-1 brain partners.
double true_ssc_from_probabilities(const PairField& probabilities, const ComponentMask& mask);

/// Plug-in estimator from stream counts.
SscEstimate estimate_ssc(const StreamCounts& counts, const ComponentMask& mask);

/// theta_hat as a ratio of linear forms of the count vector:
///   theta_hat = (C_l - A) N* / (b - A N*)
/// Only pairs touching the component carry nonzero weight, so the form is
/// stored sparsely over those pairs.
struct LinearForm {
  std::vector<PairId> pairs;    // sorted
  std::vector<double> within;   // C_l entries (0 or 1)
  std::vector<double> baseline; // A entries
  double offset = 0.0;          // b

  /// (C_l - A) x and b - A x for values indexed like `pairs`.
  double numerator(std::span<const double> values) const;
  double denominator(std::span<const double> values) const;
  /// Weight vector C_l - A.
  std::vector<double> contrast() const;
};

LinearForm build_linear_form(const ComponentMask& mask, std::size_t voxel_count, std::uint32_t streams_per_seed);

/// Pair ids involving voxel j (the support of C_j).
std::vector<PairId> voxel_pair_indicator(VoxelId j, std::size_t voxel_count);

/// Counts of `counts` gathered at the pairs of `form`.
std::vector<double> gather_counts(const StreamCounts& counts, const LinearForm& form);

SscEstimate estimate_ssc_linear(const StreamCounts& counts, const ComponentMask& mask);

/// Parcellation of the whole brain into regions, plus the regions that make
/// up one component. Voxels without an explicit assignment form singleton
/// regions so that baselines always cover the whole brain.
class RegionPartition {
 public:
  /// `assignment[v]` is a region label >= 0, or -1 for an unassigned voxel.
  RegionPartition(std::string component, std::vector<int> assignment, const ComponentMask& mask);

  const std::string& component() const noexcept { return component_; }
  std::size_t region_count() const noexcept { return sizes_.size(); }
  std::size_t voxel_count() const noexcept { return region_of_.size(); }
  int region_of(VoxelId v) const { return region_of_.at(static_cast<std::size_t>(v)); }
  std::size_t region_size(int r) const { return sizes_.at(static_cast<std::size_t>(r)); }
  /// Dense region ids covering the component's voxels.
  std::span<const int> component_regions() const noexcept { return component_regions_; }

 private:
  std::string component_;
  std::vector<int> region_of_;
  std::vector<std::size_t> sizes_;
  std::vector<int> component_regions_;
};

/// Region-level sSC. Region-pair counts sum voxel-pair counts between the
/// two regions; the trial total of a region pair is N |R| |S| so connection
/// probabilities stay in [0, 1]. Baselines average over all other regions.
SscEstimate estimate_ssc_region(const StreamCounts& counts, const RegionPartition& partition);

}  // namespace sscnet

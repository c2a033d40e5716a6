#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sscnet/error.hpp"

namespace sscnet {

using VoxelId = std::int32_t;
using PairId = std::int64_t;
using Coordinate = std::array<double, 3>;

/// Spatial layout of the brain voxels. Voxels are addressed by dense ids
/// 0..V-1; the ids found in input files are kept for the round trip.
class VoxelGrid {
 public:
  /// Empty external ids default to 0..V-1.
  explicit VoxelGrid(std::vector<Coordinate> coordinates, std::vector<std::int64_t> external_ids = {});

  /// nx by ny slice in unit grid spacing, voxel id = y * nx + x.
  static VoxelGrid regular_slice(int nx, int ny);

  std::size_t size() const noexcept { return coordinates_.size(); }
  const Coordinate& coordinate(VoxelId v) const;
  double distance(VoxelId a, VoxelId b) const;

  std::int64_t external_id(VoxelId v) const;
  /// Throws UnknownVoxel for ids that are not part of the grid.
  VoxelId index_of(std::int64_t external_id) const;
  bool contains(VoxelId v) const noexcept {
    return v >= 0 && static_cast<std::size_t>(v) < coordinates_.size();
  }

  /// Dense V x V Euclidean distance table.
  Eigen::MatrixXd distance_matrix() const;

 private:
  std::vector<Coordinate> coordinates_;
  std::vector<std::int64_t> external_ids_;
  std::unordered_map<std::int64_t, VoxelId> lookup_;
};

/// Voxel set of one functional network.
class ComponentMask {
 public:
  /// Members are sorted; duplicates or ids outside the grid are rejected and
  /// fewer than two members raise MaskTooSmall.
  ComponentMask(std::string label, std::vector<VoxelId> members, std::size_t grid_size);

  const std::string& label() const noexcept { return label_; }
  std::span<const VoxelId> members() const noexcept { return members_; }
  std::size_t size() const noexcept { return members_.size(); }
  bool contains(VoxelId v) const noexcept;
  std::size_t grid_size() const noexcept { return grid_size_; }

  /// Per-voxel membership flags over the whole grid.
  std::vector<char> indicator() const;

 private:
  std::string label_;
  std::vector<VoxelId> members_;
  std::size_t grid_size_;
};

/// Lexicographic enumeration of unordered voxel pairs (0,1),(0,2),...,(V-2,V-1).
class PairIndex {
 public:
  explicit PairIndex(std::size_t voxel_count);

  std::size_t voxel_count() const noexcept { return voxels_; }
  std::size_t pair_count() const noexcept { return pairs_; }

  /// Symmetric in its arguments. j == k raises InvalidPair, ids outside the
  /// grid raise UnknownVoxel.
  PairId to_index(VoxelId j, VoxelId k) const;
  std::pair<VoxelId, VoxelId> to_pair(PairId z) const;

  /// Unchecked variant for hot loops; requires j < k.
  PairId index_unchecked(VoxelId j, VoxelId k) const noexcept {
    const auto jj = static_cast<PairId>(j);
    return jj * (2 * static_cast<PairId>(voxels_) - jj - 1) / 2 + (k - jj - 1);
  }

 private:
  std::size_t voxels_;
  std::size_t pairs_;
};

PairId pair_to_index(VoxelId j, VoxelId k, std::size_t voxel_count);
std::pair<VoxelId, VoxelId> index_to_pair(PairId z, std::size_t voxel_count);

struct CountRecord {
  VoxelId seed;
  VoxelId target;
  std::uint32_t count;
};

struct PairCount {
  PairId pair;
  std::uint32_t count;
};

/// How directional records were folded into symmetric pair counts.
struct SymmetrizationStats {
  std::size_t records = 0;
  std::size_t pairs = 0;
  std::size_t one_direction_pairs = 0;
  std::size_t averaged_pairs = 0;
};

/// Symmetric field of pairwise tractography counts. Pairs without an entry
/// have count zero. Row means average over all V-1 partners of a voxel.
class StreamCounts {
 public:
  /// Entries must be sorted by pair id, unique and within [0, streams_per_seed].
  StreamCounts(std::size_t voxel_count, std::uint32_t streams_per_seed, std::vector<PairCount> entries,
               SymmetrizationStats stats = {});

  /// Every pair present, indexed by pair id.
  static StreamCounts from_dense(std::size_t voxel_count, std::uint32_t streams_per_seed,
                                 std::span<const std::uint32_t> counts);

  std::size_t voxel_count() const noexcept { return voxels_; }
  std::size_t pair_count() const noexcept { return index_.pair_count(); }
  std::uint32_t streams_per_seed() const noexcept { return streams_; }
  const PairIndex& index() const noexcept { return index_; }

  std::uint32_t count(PairId z) const;
  std::uint32_t count(VoxelId j, VoxelId k) const;
  std::span<const PairCount> entries() const noexcept { return entries_; }
  std::span<const double> row_means() const noexcept { return row_means_; }
  double row_mean(VoxelId j) const { return row_means_.at(static_cast<std::size_t>(j)); }
  const SymmetrizationStats& symmetrization() const noexcept { return stats_; }

  /// Counts for all pairs, indexed by pair id.
  std::vector<double> dense() const;

 private:
  std::size_t voxels_;
  std::uint32_t streams_;
  PairIndex index_;
  std::vector<PairCount> entries_;
  bool dense_ = false;
  std::vector<double> row_means_;
  SymmetrizationStats stats_;
};

/// Folds directional records into a symmetric field. All records of one
/// unordered pair are averaged and rounded half up.
StreamCounts ingest_counts(std::span<const CountRecord> records, std::size_t voxel_count,
                           std::uint32_t streams_per_seed);

/// Recomputes N-bar_j = sum_{v != j} N_jv / (V - 1) from the sparse entries.
std::vector<double> row_means(const StreamCounts& counts);

struct SubjectDataset {
  std::string subject_id;
  std::string group;
  StreamCounts counts;
  /// time x voxel, present for ICA workflows.
  std::optional<Eigen::MatrixXd> fmri;
};

/// Grid, networks and subjects of one study.
struct Study {
  VoxelGrid grid;
  std::vector<ComponentMask> masks;
  std::vector<SubjectDataset> subjects;

  /// Checks that every subject lives on the study grid.
  void validate() const;
};

}  // namespace sscnet

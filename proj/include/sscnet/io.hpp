#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sscnet/core_model.hpp"

namespace sscnet::io {

namespace fs = std::filesystem;

/// Rows of a header-checked CSV file. Fields are unquoted; blank lines are
/// skipped. Problems are reported as "<path>:<line>: ...".
struct CsvTable {
  std::string source;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;

  [[noreturn]] void fail(std::size_t row, const std::string& message) const;
  std::int64_t integer(std::size_t row, std::size_t column) const;
  double real(std::size_t row, std::size_t column) const;
};

CsvTable parse_csv(std::string_view text, std::span<const std::string_view> header, const std::string& source);
CsvTable read_csv(const fs::path& path, std::span<const std::string_view> header);

std::string read_text(const fs::path& path);
/// Creates parent directories.
void write_text(const fs::path& path, std::string_view text);
nlohmann::json read_json(const fs::path& path);

/// `voxel_id,x,y,z`
VoxelGrid read_grid(const fs::path& path);
std::string grid_csv(const VoxelGrid& grid);

/// Component declared in a mask file; may hold fewer than two voxels, which
/// only fails once a mask is built from it.
struct MaskDeclaration {
  std::string label;
  std::vector<VoxelId> members;

  ComponentMask build(std::size_t grid_size) const { return ComponentMask(label, members, grid_size); }
};

/// `component,voxel_id`; an empty voxel_id declares a component without
/// voxels. Components keep their order of first appearance.
std::vector<MaskDeclaration> read_masks(const fs::path& path, const VoxelGrid& grid);
std::string masks_csv(std::span<const ComponentMask> masks, const VoxelGrid& grid);

/// `seed,target,count` plus the sidecar `<path>.json` holding
/// `{"streams_per_seed": N}`. `fallback_streams` is used when there is no
/// sidecar.
StreamCounts read_counts(const fs::path& path, const VoxelGrid& grid,
                         std::optional<std::uint32_t> fallback_streams = std::nullopt);
/// Nonzero pairs, one record per unordered pair.
std::string counts_csv(const StreamCounts& counts, const VoxelGrid& grid);
void write_counts(const fs::path& path, const StreamCounts& counts, const VoxelGrid& grid);

/// `voxel_id,region`; voxels not listed get -1 (own region).
std::vector<int> read_partition(const fs::path& path, const VoxelGrid& grid);

/// Header of voxel ids, then one row per time point.
Eigen::MatrixXd read_fmri(const fs::path& path, const VoxelGrid& grid);
std::string fmri_csv(const Eigen::MatrixXd& fmri, const VoxelGrid& grid);

struct ManifestSubject {
  std::string id;
  std::string group;
  fs::path counts;
  std::optional<fs::path> fmri;
};

/// Study description; relative paths resolve against the manifest's folder.
struct Manifest {
  fs::path grid;
  fs::path masks;
  std::optional<fs::path> partition;
  std::optional<std::uint32_t> streams_per_seed;
  std::vector<ManifestSubject> subjects;

  static Manifest load(const fs::path& path);
  /// Paths written relative to `base`.
  nlohmann::json to_json(const fs::path& base) const;
};

struct LoadedStudy {
  VoxelGrid grid;
  std::vector<MaskDeclaration> masks;
  std::optional<std::vector<int>> partition;
  std::vector<SubjectDataset> subjects;
};

LoadedStudy load_study(const Manifest& manifest, bool with_fmri);

}  // namespace sscnet::io

#include "sscnet/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

namespace sscnet {

namespace {

std::vector<std::int64_t> iota_ids(std::size_t n) {
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
  return ids;
}

}  // namespace

VoxelGrid::VoxelGrid(std::vector<Coordinate> coordinates, std::vector<std::int64_t> external_ids)
    : coordinates_(std::move(coordinates)), external_ids_(std::move(external_ids)) {
  if (external_ids_.empty()) external_ids_ = iota_ids(coordinates_.size());
  if (coordinates_.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "a voxel grid needs at least 2 voxels");
  }
  if (external_ids_.size() != coordinates_.size()) {
    throw Error(ErrorCode::InvalidArgument, "one external id per voxel is required");
  }
  std::set<Coordinate> seen;
  for (std::size_t v = 0; v < coordinates_.size(); ++v) {
    if (!seen.insert(coordinates_[v]).second) {
      throw Error(ErrorCode::InvalidArgument,
                  "duplicate coordinate for voxel " + std::to_string(external_ids_[v]));
    }
    if (!lookup_.emplace(external_ids_[v], static_cast<VoxelId>(v)).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate voxel id " + std::to_string(external_ids_[v]));
    }
  }
}

VoxelGrid VoxelGrid::regular_slice(int nx, int ny) {
  if (nx < 1 || ny < 1) throw Error(ErrorCode::InvalidArgument, "slice dimensions must be positive");
  std::vector<Coordinate> coords;
  coords.reserve(static_cast<std::size_t>(nx * ny));
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) coords.push_back({double(x), double(y), 0.0});
  }
  return VoxelGrid(std::move(coords));
}

const Coordinate& VoxelGrid::coordinate(VoxelId v) const {
  if (!contains(v)) throw Error(ErrorCode::UnknownVoxel, "voxel " + std::to_string(v));
  return coordinates_[static_cast<std::size_t>(v)];
}

double VoxelGrid::distance(VoxelId a, VoxelId b) const {
  const auto& p = coordinate(a);
  const auto& q = coordinate(b);
  const double dx = p[0] - q[0];
  const double dy = p[1] - q[1];
  const double dz = p[2] - q[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::int64_t VoxelGrid::external_id(VoxelId v) const {
  if (!contains(v)) throw Error(ErrorCode::UnknownVoxel, "voxel " + std::to_string(v));
  return external_ids_[static_cast<std::size_t>(v)];
}

VoxelId VoxelGrid::index_of(std::int64_t external_id) const {
  const auto it = lookup_.find(external_id);
  if (it == lookup_.end()) {
    throw Error(ErrorCode::UnknownVoxel, "voxel id " + std::to_string(external_id) + " is not in the grid");
  }
  return it->second;
}

Eigen::MatrixXd VoxelGrid::distance_matrix() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    d(a, a) = 0.0;
    for (Eigen::Index b = a + 1; b < n; ++b) {
      d(a, b) = d(b, a) = distance(static_cast<VoxelId>(a), static_cast<VoxelId>(b));
    }
  }
  return d;
}

ComponentMask::ComponentMask(std::string label, std::vector<VoxelId> members, std::size_t grid_size)
    : label_(std::move(label)), members_(std::move(members)), grid_size_(grid_size) {
  std::sort(members_.begin(), members_.end());
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const VoxelId v = members_[i];
    if (v < 0 || static_cast<std::size_t>(v) >= grid_size_) {
      throw Error(ErrorCode::UnknownVoxel, "component " + label_ + " references voxel " + std::to_string(v));
    }
    if (i > 0 && members_[i - 1] == v) {
      throw Error(ErrorCode::InvalidArgument,
                  "component " + label_ + " lists voxel " + std::to_string(v) + " twice");
    }
  }
  if (members_.size() < 2) {
    throw Error(ErrorCode::MaskTooSmall,
                "component " + label_ + " has " + std::to_string(members_.size()) + " voxel(s); need at least 2");
  }
}

bool ComponentMask::contains(VoxelId v) const noexcept {
  return std::binary_search(members_.begin(), members_.end(), v);
}

std::vector<char> ComponentMask::indicator() const {
  std::vector<char> in(grid_size_, 0);
  for (VoxelId v : members_) in[static_cast<std::size_t>(v)] = 1;
  return in;
}

PairIndex::PairIndex(std::size_t voxel_count)
    : voxels_(voxel_count), pairs_(voxel_count * (voxel_count - 1) / 2) {
  if (voxel_count < 2) throw Error(ErrorCode::InvalidArgument, "pair index needs at least 2 voxels");
}

PairId PairIndex::to_index(VoxelId j, VoxelId k) const {
  const auto in_range = [this](VoxelId v) { return v >= 0 && static_cast<std::size_t>(v) < voxels_; };
  if (!in_range(j) || !in_range(k)) {
    throw Error(ErrorCode::UnknownVoxel,
                "pair (" + std::to_string(j) + ", " + std::to_string(k) + ") outside 0.." +
                    std::to_string(voxels_ - 1));
  }
  if (j == k) throw Error(ErrorCode::InvalidPair, "voxel " + std::to_string(j) + " paired with itself");
  if (j > k) std::swap(j, k);
  return index_unchecked(j, k);
}

std::pair<VoxelId, VoxelId> PairIndex::to_pair(PairId z) const {
  if (z < 0 || static_cast<std::size_t>(z) >= pairs_) {
    throw Error(ErrorCode::InvalidPair, "pair index " + std::to_string(z) + " out of range");
  }
  // Row j starts at offset j(2V - j - 1)/2; invert the quadratic and fix up
  // the floating point guess.
  const double n = static_cast<double>(voxels_);
  const double zz = static_cast<double>(z);
  auto j = static_cast<PairId>(std::floor(((2 * n - 1) - std::sqrt((2 * n - 1) * (2 * n - 1) - 8 * zz)) / 2));
  const auto row_start = [this](PairId r) { return r * (2 * static_cast<PairId>(voxels_) - r - 1) / 2; };
  while (j > 0 && row_start(j) > z) --j;
  while (row_start(j + 1) <= z) ++j;
  const PairId k = z - row_start(j) + j + 1;
  return {static_cast<VoxelId>(j), static_cast<VoxelId>(k)};
}

PairId pair_to_index(VoxelId j, VoxelId k, std::size_t voxel_count) {
  return PairIndex(voxel_count).to_index(j, k);
}

std::pair<VoxelId, VoxelId> index_to_pair(PairId z, std::size_t voxel_count) {
  return PairIndex(voxel_count).to_pair(z);
}

StreamCounts::StreamCounts(std::size_t voxel_count, std::uint32_t streams_per_seed,
                           std::vector<PairCount> entries, SymmetrizationStats stats)
    : voxels_(voxel_count),
      streams_(streams_per_seed),
      index_(voxel_count),
      entries_(std::move(entries)),
      stats_(stats) {
  if (streams_ == 0) throw Error(ErrorCode::InvalidArgument, "streams per seed must be positive");
  const auto pairs = static_cast<PairId>(index_.pair_count());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.pair < 0 || e.pair >= pairs) throw Error(ErrorCode::InvalidPair, "pair id out of range");
    if (i > 0 && entries_[i - 1].pair >= e.pair) {
      throw Error(ErrorCode::InvalidArgument, "count entries must be sorted and unique");
    }
    if (e.count > streams_) {
      throw Error(ErrorCode::CountOverflow, "count " + std::to_string(e.count) + " exceeds " +
                                                std::to_string(streams_) + " streams per seed");
    }
  }
  dense_ = entries_.size() == index_.pair_count();
  row_means_ = sscnet::row_means(*this);
}

StreamCounts StreamCounts::from_dense(std::size_t voxel_count, std::uint32_t streams_per_seed,
                                      std::span<const std::uint32_t> counts) {
  const PairIndex index(voxel_count);
  if (counts.size() != index.pair_count()) {
    throw Error(ErrorCode::InvalidArgument, "dense count vector must cover every voxel pair");
  }
  std::vector<PairCount> entries(counts.size());
  for (std::size_t z = 0; z < counts.size(); ++z) entries[z] = {static_cast<PairId>(z), counts[z]};
  SymmetrizationStats stats;
  stats.pairs = counts.size();
  return StreamCounts(voxel_count, streams_per_seed, std::move(entries), stats);
}

std::uint32_t StreamCounts::count(PairId z) const {
  if (dense_) return entries_.at(static_cast<std::size_t>(z)).count;
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), z,
                                   [](const PairCount& e, PairId key) { return e.pair < key; });
  return (it != entries_.end() && it->pair == z) ? it->count : 0u;
}

std::uint32_t StreamCounts::count(VoxelId j, VoxelId k) const { return count(index_.to_index(j, k)); }

std::vector<double> StreamCounts::dense() const {
  std::vector<double> out(index_.pair_count(), 0.0);
  for (const auto& e : entries_) out[static_cast<std::size_t>(e.pair)] = e.count;
  return out;
}

StreamCounts ingest_counts(std::span<const CountRecord> records, std::size_t voxel_count,
                           std::uint32_t streams_per_seed) {
  const PairIndex index(voxel_count);
  struct Accumulator {
    std::uint64_t sum = 0;
    std::uint32_t n = 0;
    bool forward = false;
    bool backward = false;
  };
  std::map<PairId, Accumulator> acc;
  for (const auto& r : records) {
    const PairId z = index.to_index(r.seed, r.target);
    if (r.count > streams_per_seed) {
      throw Error(ErrorCode::CountOverflow, "record (" + std::to_string(r.seed) + ", " + std::to_string(r.target) +
                                                ") has count " + std::to_string(r.count) + " > " +
                                                std::to_string(streams_per_seed));
    }
    auto& a = acc[z];
    a.sum += r.count;
    a.n += 1;
    (r.seed < r.target ? a.forward : a.backward) = true;
  }
  SymmetrizationStats stats;
  stats.records = records.size();
  std::vector<PairCount> entries;
  entries.reserve(acc.size());
  for (const auto& [z, a] : acc) {
    // round half up of sum / n
    const auto value = static_cast<std::uint32_t>((2 * a.sum + a.n) / (2 * static_cast<std::uint64_t>(a.n)));
    entries.push_back({z, value});
    if (a.n > 1) ++stats.averaged_pairs;
    if (!(a.forward && a.backward)) ++stats.one_direction_pairs;
  }
  stats.pairs = entries.size();
  return StreamCounts(voxel_count, streams_per_seed, std::move(entries), stats);
}

std::vector<double> row_means(const StreamCounts& counts) {
  const std::size_t v = counts.voxel_count();
  std::vector<double> sums(v, 0.0);
  const auto& index = counts.index();
  for (const auto& e : counts.entries()) {
    const auto [j, k] = index.to_pair(e.pair);
    sums[static_cast<std::size_t>(j)] += e.count;
    sums[static_cast<std::size_t>(k)] += e.count;
  }
  for (auto& s : sums) s /= static_cast<double>(v - 1);
  return sums;
}

void Study::validate() const {
  for (const auto& m : masks) {
    if (m.grid_size() != grid.size()) {
      throw Error(ErrorCode::InvalidArgument, "component " + m.label() + " was built for another grid");
    }
  }
  for (const auto& s : subjects) {
    if (s.counts.voxel_count() != grid.size()) {
      throw Error(ErrorCode::InvalidArgument, "subject " + s.subject_id + " counts do not match the grid");
    }
    if (s.fmri && static_cast<std::size_t>(s.fmri->cols()) != grid.size()) {
      throw Error(ErrorCode::InvalidArgument, "subject " + s.subject_id + " fMRI columns do not match the grid");
    }
  }
}

}  // namespace sscnet

#include "sscnet/ssc.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace sscnet {

namespace {

void require_positive_denominator(double denominator, const std::string& label) {
  if (!(denominator > 0.0)) {
    throw Error(ErrorCode::DegenerateBaseline,
                "component " + label + " has a non-positive denominator (baselines at their maximum)");
  }
}

}  // namespace

std::string_view to_string(Level level) noexcept { return level == Level::Voxel ? "voxel" : "region"; }

PairField PairField::constant(std::size_t voxels, double value) {
  return PairField{voxels, std::vector<double>(PairIndex(voxels).pair_count(), value)};
}

double PairField::at(VoxelId j, VoxelId k) const {
  return values.at(static_cast<std::size_t>(pair_to_index(j, k, voxels)));
}

double true_ssc_from_probabilities(const PairField& probabilities, const ComponentMask& mask) {
  const std::size_t v = probabilities.voxels;
  const PairIndex index(v);
  if (probabilities.values.size() != index.pair_count()) {
    throw Error(ErrorCode::InvalidArgument, "probability field does not cover every voxel pair");
  }
  if (mask.grid_size() != v) throw Error(ErrorCode::InvalidArgument, "mask and probability field disagree on V");
  for (double p : probabilities.values) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "probabilities must lie in [0, 1]");
  }

  std::vector<double> baseline(v, 0.0);
  for (std::size_t j = 0; j < v; ++j) {
    double sum = 0.0;
    for (std::size_t u = 0; u < v; ++u) {
      if (u == j) continue;
      sum += probabilities.values[static_cast<std::size_t>(index.to_index(VoxelId(j), VoxelId(u)))];
    }
    baseline[j] = sum / static_cast<double>(v - 1);
  }

  double numerator = 0.0;
  double denominator = 0.0;
  const auto members = mask.members();
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      const VoxelId j = members[a];
      const VoxelId k = members[b];
      const double base = 0.5 * (baseline[std::size_t(j)] + baseline[std::size_t(k)]);
      numerator += probabilities.values[static_cast<std::size_t>(index.to_index(j, k))] - base;
      denominator += 1.0 - base;
    }
  }
  require_positive_denominator(denominator, mask.label());
  return numerator / denominator;
}

SscEstimate estimate_ssc(const StreamCounts& counts, const ComponentMask& mask) {
  if (mask.size() < 2) throw Error(ErrorCode::MaskTooSmall, "component " + mask.label());
  if (mask.grid_size() != counts.voxel_count()) {
    throw Error(ErrorCode::InvalidArgument, "mask and counts disagree on the voxel count");
  }
  const double n = counts.streams_per_seed();
  const auto means = counts.row_means();
  const auto members = mask.members();

  double numerator = 0.0;
  double denominator = 0.0;
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      const VoxelId j = members[a];
      const VoxelId k = members[b];
      const double base = 0.5 * (means[std::size_t(j)] + means[std::size_t(k)]);
      numerator += counts.count(counts.index().index_unchecked(j, k)) - base;
      denominator += n - base;
    }
  }
  require_positive_denominator(denominator, mask.label());
  return SscEstimate{mask.label(), numerator / denominator, Level::Voxel, numerator, denominator};
}

double LinearForm::numerator(std::span<const double> values) const {
  double s = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) s += (within[i] - baseline[i]) * values[i];
  return s;
}

double LinearForm::denominator(std::span<const double> values) const {
  double s = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) s += baseline[i] * values[i];
  return offset - s;
}

std::vector<double> LinearForm::contrast() const {
  std::vector<double> g(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) g[i] = within[i] - baseline[i];
  return g;
}

std::vector<PairId> voxel_pair_indicator(VoxelId j, std::size_t voxel_count) {
  const PairIndex index(voxel_count);
  std::vector<PairId> out;
  out.reserve(voxel_count - 1);
  for (std::size_t u = 0; u < voxel_count; ++u) {
    if (static_cast<VoxelId>(u) != j) out.push_back(index.to_index(j, static_cast<VoxelId>(u)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

LinearForm build_linear_form(const ComponentMask& mask, std::size_t voxel_count, std::uint32_t streams_per_seed) {
  if (mask.size() < 2) throw Error(ErrorCode::MaskTooSmall, "component " + mask.label());
  const double v = static_cast<double>(voxel_count);
  const double vl = static_cast<double>(mask.size());
  const double coefficient = (vl - 1.0) / (2.0 * (v - 1.0));

  // A accumulates C_j over member voxels; pairs with both ends inside the
  // component receive the coefficient twice.
  std::map<PairId, std::pair<double, double>> entries;
  for (VoxelId j : mask.members()) {
    for (PairId z : voxel_pair_indicator(j, voxel_count)) entries[z].second += coefficient;
  }
  const PairIndex index(voxel_count);
  const auto members = mask.members();
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      entries[index.to_index(members[a], members[b])].first = 1.0;
    }
  }

  LinearForm form;
  form.pairs.reserve(entries.size());
  form.within.reserve(entries.size());
  form.baseline.reserve(entries.size());
  for (const auto& [z, w] : entries) {
    form.pairs.push_back(z);
    form.within.push_back(w.first);
    form.baseline.push_back(w.second);
  }
  form.offset = vl * (vl - 1.0) / 2.0 * static_cast<double>(streams_per_seed);
  return form;
}

std::vector<double> gather_counts(const StreamCounts& counts, const LinearForm& form) {
  std::vector<double> out(form.pairs.size());
  for (std::size_t i = 0; i < form.pairs.size(); ++i) out[i] = counts.count(form.pairs[i]);
  return out;
}

SscEstimate estimate_ssc_linear(const StreamCounts& counts, const ComponentMask& mask) {
  if (mask.grid_size() != counts.voxel_count()) {
    throw Error(ErrorCode::InvalidArgument, "mask and counts disagree on the voxel count");
  }
  const LinearForm form = build_linear_form(mask, counts.voxel_count(), counts.streams_per_seed());
  const auto values = gather_counts(counts, form);
  const double numerator = form.numerator(values);
  const double denominator = form.denominator(values);
  require_positive_denominator(denominator, mask.label());
  return SscEstimate{mask.label(), numerator / denominator, Level::Voxel, numerator, denominator};
}

RegionPartition::RegionPartition(std::string component, std::vector<int> assignment, const ComponentMask& mask)
    : component_(std::move(component)) {
  if (assignment.size() != mask.grid_size()) {
    throw Error(ErrorCode::InvalidArgument, "region assignment must cover every grid voxel");
  }
  // Relabel explicit regions densely in order of first appearance, then give
  // every unassigned voxel its own region.
  std::map<int, int> dense;
  region_of_.assign(assignment.size(), -1);
  for (std::size_t v = 0; v < assignment.size(); ++v) {
    const int label = assignment[v];
    if (label < -1) throw Error(ErrorCode::InvalidArgument, "region labels must be >= 0 (or -1 for none)");
    if (label < 0) continue;
    const auto [it, inserted] = dense.emplace(label, static_cast<int>(dense.size()));
    region_of_[v] = it->second;
  }
  int next = static_cast<int>(dense.size());
  for (auto& r : region_of_) {
    if (r < 0) r = next++;
  }
  sizes_.assign(static_cast<std::size_t>(next), 0);
  for (int r : region_of_) ++sizes_[static_cast<std::size_t>(r)];

  for (VoxelId v : mask.members()) component_regions_.push_back(region_of_[static_cast<std::size_t>(v)]);
  std::sort(component_regions_.begin(), component_regions_.end());
  component_regions_.erase(std::unique(component_regions_.begin(), component_regions_.end()),
                           component_regions_.end());
}

SscEstimate estimate_ssc_region(const StreamCounts& counts, const RegionPartition& partition) {
  if (partition.voxel_count() != counts.voxel_count()) {
    throw Error(ErrorCode::InvalidArgument, "partition and counts disagree on the voxel count");
  }
  const auto regions = partition.component_regions();
  if (regions.size() < 2) {
    throw Error(ErrorCode::MaskTooSmall, "component " + partition.component() + " spans fewer than 2 regions");
  }
  const std::size_t regions_total = partition.region_count();
  if (regions_total < 3) throw Error(ErrorCode::DegenerateBaseline, "the parcellation needs regions outside the component");

  // Region-pair stream totals (symmetric, K x K). Pairs within one region do
  // not contribute to any region pair.
  const auto k = static_cast<Eigen::Index>(regions_total);
  Eigen::MatrixXd totals = Eigen::MatrixXd::Zero(k, k);
  const auto& index = counts.index();
  for (const auto& e : counts.entries()) {
    const auto [a, b] = index.to_pair(e.pair);
    const int ra = partition.region_of(a);
    const int rb = partition.region_of(b);
    if (ra == rb) continue;
    totals(ra, rb) += e.count;
    totals(rb, ra) += e.count;
  }
  const double n = counts.streams_per_seed();
  Eigen::MatrixXd prob(k, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index s = 0; s < k; ++s) {
      prob(r, s) = r == s ? 0.0
                          : totals(r, s) / (n * double(partition.region_size(int(r))) *
                                            double(partition.region_size(int(s))));
    }
  }
  Eigen::VectorXd baseline = prob.rowwise().sum() / double(k - 1);

  double numerator = 0.0;
  double denominator = 0.0;
  for (std::size_t a = 0; a < regions.size(); ++a) {
    for (std::size_t b = a + 1; b < regions.size(); ++b) {
      const int r = regions[a];
      const int s = regions[b];
      const double base = 0.5 * (baseline(r) + baseline(s));
      numerator += prob(r, s) - base;
      denominator += 1.0 - base;
    }
  }
  require_positive_denominator(denominator, partition.component());
  return SscEstimate{partition.component(), numerator / denominator, Level::Region, numerator, denominator};
}

}  // namespace sscnet

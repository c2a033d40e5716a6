#include "sscnet/spatial_variance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/tools/minima.hpp>

#include "sscnet/rng.hpp"

namespace sscnet {

double pair_distance(VoxelId j, VoxelId k, VoxelId j2, VoxelId k2, const VoxelGrid& grid) {
  if (j == k || j2 == k2) throw Error(ErrorCode::InvalidPair, "pair distance needs two distinct voxels per pair");
  const double straight = grid.distance(j, j2) + grid.distance(k, k2);
  const double crossed = grid.distance(j, k2) + grid.distance(k, j2);
  return 0.5 * std::min(straight, crossed);
}

std::string_view to_string(VariogramFamily family) noexcept {
  switch (family) {
    case VariogramFamily::Exponential: return "exponential";
    case VariogramFamily::Gaussian: return "gaussian";
    case VariogramFamily::Spherical: return "spherical";
  }
  return "exponential";
}

VariogramFamily parse_family(std::string_view name) {
  if (name == "exponential") return VariogramFamily::Exponential;
  if (name == "gaussian") return VariogramFamily::Gaussian;
  if (name == "spherical") return VariogramFamily::Spherical;
  throw Error(ErrorCode::InvalidArgument, "unknown semivariogram family '" + std::string(name) + "'");
}

double SemivariogramModel::shape(double lag) const noexcept {
  if (lag <= 0.0) return 0.0;
  const double h = lag / range;
  switch (family) {
    case VariogramFamily::Exponential: return 1.0 - std::exp(-h);
    case VariogramFamily::Gaussian: return 1.0 - std::exp(-h * h);
    case VariogramFamily::Spherical: return h >= 1.0 ? 1.0 : 1.5 * h - 0.5 * h * h * h;
  }
  return 1.0;
}

double SemivariogramModel::gamma(double lag) const noexcept {
  if (lag <= 0.0) return 0.0;
  return nugget + partial_sill * shape(lag);
}

double SemivariogramModel::covariance(double lag) const noexcept {
  if (lag <= 0.0) return sill();
  return std::max(0.0, sill() - gamma(lag));
}

std::vector<double> uniform_lag_edges(double max_lag, std::size_t bins) {
  if (!(max_lag > 0.0) || bins == 0) throw Error(ErrorCode::InvalidArgument, "need a positive lag range and bins");
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = max_lag * double(i) / double(bins);
  return edges;
}

LagSampler::LagSampler(const VoxelGrid& grid, const VariogramOptions& options) : edges_(options.edges) {
  if (edges_.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least one lag bin");
  if (edges_.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorCode::InvalidArgument, "too many lag bins");
  }
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    if (!(edges_[i] > edges_[i - 1])) throw Error(ErrorCode::InvalidArgument, "lag edges must increase");
  }
  const PairIndex index(grid.size());
  const std::size_t pairs = index.pair_count();
  if (pairs < 2) throw Error(ErrorCode::InvalidArgument, "semivariogram needs at least 2 voxel pairs");
  if (pairs > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::InvalidArgument, "grid too large for the lag sampler");
  }

  std::vector<VoxelId> first_voxel(pairs);
  std::vector<VoxelId> second_voxel(pairs);
  for (VoxelId j = 0, z = 0; j < VoxelId(grid.size()); ++j) {
    for (VoxelId k = j + 1; k < VoxelId(grid.size()); ++k, ++z) {
      first_voxel[std::size_t(z)] = j;
      second_voxel[std::size_t(z)] = k;
    }
  }
  const Eigen::MatrixXd dist = grid.distance_matrix();
  lag_sum_.assign(edges_.size() - 1, 0.0);
  lag_count_.assign(edges_.size() - 1, 0);

  const auto visit = [&](std::size_t a, std::size_t b) {
    const double d = pair_distance(dist, first_voxel[a], second_voxel[a], first_voxel[b], second_voxel[b]);
    if (d < edges_.front() || d >= edges_.back()) return;
    const auto h = static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), d) - edges_.begin()) - 1;
    first_.push_back(static_cast<std::uint32_t>(a));
    second_.push_back(static_cast<std::uint32_t>(b));
    bin_.push_back(static_cast<std::uint16_t>(h));
    lag_sum_[h] += d;
    ++lag_count_[h];
  };

  const double total = 0.5 * double(pairs) * double(pairs - 1);
  if (total <= double(options.budget)) {
    exhaustive_ = true;
    for (std::size_t a = 0; a < pairs; ++a) {
      for (std::size_t b = a + 1; b < pairs; ++b) visit(a, b);
    }
  } else {
    Rng rng = make_rng(options.seed, {stream::variogram});
    std::uniform_int_distribution<std::size_t> pick_first(0, pairs - 1);
    std::uniform_int_distribution<std::size_t> pick_second(0, pairs - 2);
    for (std::size_t draw = 0; draw < options.budget; ++draw) {
      const std::size_t a = pick_first(rng);
      std::size_t b = pick_second(rng);
      if (b >= a) ++b;
      visit(a, b);
    }
  }
}

BinTable LagSampler::accumulate(std::span<const double> pair_values) const {
  const std::size_t bins = edges_.size() - 1;
  std::vector<double> sums(bins, 0.0);
  for (std::size_t i = 0; i < first_.size(); ++i) {
    const double diff = pair_values[first_[i]] - pair_values[second_[i]];
    sums[bin_[i]] += diff * diff;
  }
  BinTable table(bins);
  for (std::size_t h = 0; h < bins; ++h) {
    auto& bin = table[h];
    bin.lower = edges_[h];
    bin.upper = edges_[h + 1];
    bin.pairs = lag_count_[h];
    if (bin.pairs > 0) {
      bin.mean_lag = lag_sum_[h] / double(bin.pairs);
      bin.gamma = sums[h] / (2.0 * double(bin.pairs));
    } else {
      bin.mean_lag = 0.5 * (bin.lower + bin.upper);
    }
  }
  return table;
}

std::vector<double> detrended_counts(const StreamCounts& counts, std::span<const ComponentMask> masks) {
  std::vector<double> values = counts.dense();
  if (masks.empty()) return values;
  const std::size_t v = counts.voxel_count();
  // class of a voxel pair: 1 + mask index when both ends share a mask, 0 otherwise
  std::vector<int> voxel_class(v, -1);
  for (std::size_t m = 0; m < masks.size(); ++m) {
    for (VoxelId id : masks[m].members()) {
      if (voxel_class[std::size_t(id)] < 0) voxel_class[std::size_t(id)] = int(m);
    }
  }
  std::vector<int> pair_class(values.size(), 0);
  for (VoxelId j = 0, z = 0; j < VoxelId(v); ++j) {
    for (VoxelId k = j + 1; k < VoxelId(v); ++k, ++z) {
      const int cj = voxel_class[std::size_t(j)];
      if (cj >= 0 && cj == voxel_class[std::size_t(k)]) pair_class[std::size_t(z)] = cj + 1;
    }
  }
  std::vector<double> sum(masks.size() + 1, 0.0);
  std::vector<double> n(masks.size() + 1, 0.0);
  for (std::size_t z = 0; z < values.size(); ++z) {
    sum[std::size_t(pair_class[z])] += values[z];
    n[std::size_t(pair_class[z])] += 1.0;
  }
  for (std::size_t z = 0; z < values.size(); ++z) {
    const auto c = std::size_t(pair_class[z]);
    values[z] -= sum[c] / n[c];
  }
  return values;
}

BinTable empirical_semivariogram(const StreamCounts& counts, const VoxelGrid& grid, const VariogramOptions& options,
                                 std::span<const ComponentMask> trend_masks) {
  if (counts.voxel_count() != grid.size()) {
    throw Error(ErrorCode::InvalidArgument, "counts and grid disagree on the voxel count");
  }
  const LagSampler sampler(grid, options);
  const auto values = detrended_counts(counts, trend_masks);
  return sampler.accumulate(values);
}

BinTable pool_bins(std::span<const BinTable> tables) {
  if (tables.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to pool");
  BinTable pooled = tables.front();
  for (auto& bin : pooled) {
    bin.gamma = 0.0;
    bin.pairs = 0;
  }
  std::vector<double> lag_weighted(pooled.size(), 0.0);
  for (const auto& table : tables) {
    if (table.size() != pooled.size()) throw Error(ErrorCode::InvalidArgument, "bin tables use different edges");
    for (std::size_t h = 0; h < table.size(); ++h) {
      if (table[h].lower != pooled[h].lower || table[h].upper != pooled[h].upper) {
        throw Error(ErrorCode::InvalidArgument, "bin tables use different edges");
      }
      pooled[h].gamma += table[h].gamma * double(table[h].pairs);
      lag_weighted[h] += table[h].mean_lag * double(table[h].pairs);
      pooled[h].pairs += table[h].pairs;
    }
  }
  for (std::size_t h = 0; h < pooled.size(); ++h) {
    if (pooled[h].pairs > 0) {
      pooled[h].gamma /= double(pooled[h].pairs);
      pooled[h].mean_lag = lag_weighted[h] / double(pooled[h].pairs);
    }
  }
  return pooled;
}

namespace {

struct LinearSolution {
  double nugget = 0.0;
  double partial_sill = 0.0;
  double residual = 0.0;
};

// For a fixed range the model is linear in (nugget, partial sill): solve the
// weighted least squares problem under nonnegativity by checking the
// interior solution and both boundary faces.
LinearSolution solve_sills(const std::vector<double>& f, const std::vector<double>& y, const std::vector<double>& w) {
  double sw = 0, sf = 0, sff = 0, sy = 0, sfy = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    sw += w[i];
    sf += w[i] * f[i];
    sff += w[i] * f[i] * f[i];
    sy += w[i] * y[i];
    sfy += w[i] * f[i] * y[i];
  }
  const auto residual = [&](double c0, double ce) {
    double r = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double e = c0 + ce * f[i] - y[i];
      r += w[i] * e * e;
    }
    return r;
  };
  LinearSolution best{0.0, 0.0, residual(0.0, 0.0)};
  const auto consider = [&](double c0, double ce) {
    if (c0 < 0.0 || ce < 0.0 || !std::isfinite(c0) || !std::isfinite(ce)) return;
    const double r = residual(c0, ce);
    if (r < best.residual) best = {c0, ce, r};
  };
  const double det = sw * sff - sf * sf;
  if (std::abs(det) > 1e-14 * sw * sff) consider((sff * sy - sf * sfy) / det, (sw * sfy - sf * sy) / det);
  if (sff > 0.0) consider(0.0, sfy / sff);
  if (sw > 0.0) consider(sy / sw, 0.0);
  return best;
}

}  // namespace

SemivariogramFit fit_semivariogram(const BinTable& bins, VariogramFamily family, const FitOptions& options) {
  std::vector<double> lags;
  std::vector<double> values;
  std::vector<double> weights;
  for (const auto& bin : bins) {
    if (bin.pairs == 0) continue;
    lags.push_back(bin.mean_lag);
    values.push_back(bin.gamma);
    weights.push_back(double(bin.pairs));
  }
  if (lags.size() < 3) {
    throw Error(ErrorCode::InsufficientLags, std::to_string(lags.size()) + " nonempty lag bins; need 3");
  }
  for (double g : values) {
    if (!std::isfinite(g)) throw Error(ErrorCode::FitDiverged, "non-finite semivariogram value");
  }
  const double min_lag = *std::min_element(lags.begin(), lags.end());
  const double max_lag = *std::max_element(lags.begin(), lags.end());
  const double lo = std::log(options.min_range_factor * std::max(min_lag, 1e-12));
  const double hi = std::log(options.max_range_factor * max_lag);

  SemivariogramFit fit;
  fit.bins = bins;
  fit.model.family = family;

  if (std::all_of(values.begin(), values.end(), [](double g) { return g == 0.0; })) {
    fit.model.nugget = 0.0;
    fit.model.partial_sill = options.sill_floor;
    fit.model.range = std::exp(lo);
    fit.residual = 0.0;
    fit.degenerate = true;
    return fit;
  }

  std::vector<double> f(lags.size());
  const auto solve_at = [&](double log_range) {
    SemivariogramModel m{family, 0.0, 1.0, std::exp(log_range)};
    for (std::size_t i = 0; i < lags.size(); ++i) f[i] = m.shape(lags[i]);
    return solve_sills(f, values, weights);
  };

  const int starts = std::max(1, options.starts);
  double best_log_range = lo;
  double best_residual = std::numeric_limits<double>::infinity();
  for (int s = 0; s < starts; ++s) {
    const double a = lo + (hi - lo) * double(s) / starts;
    const double b = lo + (hi - lo) * double(s + 1) / starts;
    const auto [x, r] = boost::math::tools::brent_find_minima([&](double t) { return solve_at(t).residual; }, a, b,
                                                              std::numeric_limits<double>::digits / 2);
    if (r < best_residual) {
      best_residual = r;
      best_log_range = x;
    }
  }
  const LinearSolution sol = solve_at(best_log_range);
  if (!std::isfinite(sol.residual) || !std::isfinite(best_log_range)) {
    throw Error(ErrorCode::FitDiverged, "semivariogram fit produced non-finite parameters");
  }
  fit.model.nugget = sol.nugget;
  fit.model.partial_sill = std::max(sol.partial_sill, options.sill_floor);
  fit.model.range = std::exp(best_log_range);
  fit.residual = sol.residual;
  fit.degenerate = sol.partial_sill <= options.sill_floor;
  return fit;
}

CovarianceField build_covariance(const StreamCounts& counts, const VoxelGrid& grid, const SemivariogramModel& model,
                                 const ComponentMask& mask, const CovarianceOptions& options) {
  if (counts.voxel_count() != grid.size() || mask.grid_size() != grid.size()) {
    throw Error(ErrorCode::InvalidArgument, "counts, grid and mask disagree on the voxel count");
  }
  const LinearForm form = build_linear_form(mask, grid.size(), counts.streams_per_seed());
  const std::size_t p = form.pairs.size();
  if (p * p * sizeof(double) > options.max_bytes) {
    throw Error(ErrorCode::CovarianceTooLarge, std::to_string(p) + " pairs exceed the covariance memory budget");
  }

  CovarianceField field;
  field.pairs = form.pairs;
  const auto n = Eigen::Index(p);
  field.mean.resize(n);
  Eigen::VectorXd sd(n);
  const double trials = counts.streams_per_seed();
  const double floor_p = 1.0 / (2.0 * trials);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = counts.count(form.pairs[std::size_t(i)]);
    field.mean(i) = c;
    const double prob = std::clamp(c / trials, floor_p, 1.0 - floor_p);
    sd(i) = std::sqrt(trials * prob * (1.0 - prob));
  }

  std::vector<VoxelId> first(p);
  std::vector<VoxelId> second(p);
  for (std::size_t i = 0; i < p; ++i) std::tie(first[i], second[i]) = counts.index().to_pair(form.pairs[i]);
  const Eigen::MatrixXd dist = grid.distance_matrix();
  const double sill = model.sill();

  field.covariance.resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    field.covariance(a, a) = sd(a) * sd(a);
    for (Eigen::Index b = a + 1; b < n; ++b) {
      double value = 0.0;
      if (sill > 0.0) {
        const double d =
            pair_distance(dist, first[std::size_t(a)], second[std::size_t(a)], first[std::size_t(b)], second[std::size_t(b)]);
        value = std::min(1.0, model.covariance(d) / sill) * sd(a) * sd(b);
      }
      field.covariance(a, b) = value;
      field.covariance(b, a) = value;
    }
  }

  if (options.psd_repair && p > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(field.covariance);
    if (llt.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(field.covariance);
      const Eigen::VectorXd values = eig.eigenvalues();
      field.min_eigenvalue = values.minCoeff();
      if (*field.min_eigenvalue < 0.0) {
        field.covariance = eig.eigenvectors() * values.cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
        field.repaired = true;
      }
    }
  }
  return field;
}

DeltaResult delta_from_moments(double mean_x, double mean_y, double var_x, double var_y, double cov_xy) {
  if (mean_y == 0.0 || !std::isfinite(mean_y)) {
    throw Error(ErrorCode::DeltaUndefined, "denominator has zero expectation");
  }
  DeltaResult r;
  r.mean_x = mean_x;
  r.mean_y = mean_y;
  r.var_x = var_x;
  r.var_y = var_y;
  r.cov_xy = cov_xy;
  r.ratio = mean_x / mean_y;
  const double v = (var_x - 2.0 * r.ratio * cov_xy + r.ratio * r.ratio * var_y) / (mean_y * mean_y);
  r.variance = std::max(0.0, v);
  return r;
}

DeltaResult delta_variance(const ComponentMask& mask, const StreamCounts& counts, const CovarianceField& field) {
  const LinearForm form = build_linear_form(mask, counts.voxel_count(), counts.streams_per_seed());
  if (form.pairs != field.pairs) {
    throw Error(ErrorCode::InvalidArgument, "covariance field was built for another component");
  }
  const auto n = Eigen::Index(form.pairs.size());
  const auto contrast = form.contrast();
  const Eigen::Map<const Eigen::VectorXd> g(contrast.data(), n);
  const Eigen::Map<const Eigen::VectorXd> a(form.baseline.data(), n);
  const Eigen::VectorXd sigma_g = field.covariance.selfadjointView<Eigen::Lower>() * g;
  const Eigen::VectorXd sigma_a = field.covariance.selfadjointView<Eigen::Lower>() * a;

  const double mean_x = g.dot(field.mean);
  const double mean_y = form.offset - a.dot(field.mean);
  const double var_x = g.dot(sigma_g);
  const double var_y = a.dot(sigma_a);
  const double cov_xy = -g.dot(sigma_a);
  return delta_from_moments(mean_x, mean_y, var_x, var_y, cov_xy);
}

}  // namespace sscnet

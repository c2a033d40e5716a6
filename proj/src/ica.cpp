#include "sscnet/ica.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sscnet/rng.hpp"

namespace sscnet {

IcaNotConverged::IcaNotConverged(const std::string& message, ComponentSet partial)
    : Error(ErrorCode::IcaNotConverged, message), partial_(std::move(partial)) {}

Eigen::MatrixXd centered_gram(const Eigen::MatrixXd& fmri) {
  const Eigen::MatrixXd centered = fmri.colwise() - fmri.rowwise().mean();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(fmri.cols(), fmri.cols());
  gram.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  return gram.selfadjointView<Eigen::Lower>();
}

namespace {

Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w * w.transpose());
  const Eigen::VectorXd inv_sqrt = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * w;
}

void normalize_maps(Eigen::MatrixXd& maps, Eigen::MatrixXd* mixing) {
  const double v = double(maps.cols());
  for (Eigen::Index c = 0; c < maps.rows(); ++c) {
    maps.row(c).array() -= maps.row(c).mean();
    const double sd = std::sqrt(maps.row(c).squaredNorm() / v);
    if (sd > 0.0) {
      maps.row(c) /= sd;
      if (mixing) mixing->col(c) *= sd;
    }
    const double skew = maps.row(c).array().cube().mean();
    if (skew < 0.0) {
      maps.row(c) *= -1.0;
      if (mixing) mixing->col(c) *= -1.0;
    }
  }
}

// Whitened q x V signals from the top-q eigenvectors of the Gram matrix.
Eigen::MatrixXd whiten(const Eigen::MatrixXd& gram, std::size_t q) {
  const Eigen::Index v = gram.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "eigen-decomposition failed");
  // eigenvalues ascend; take the last q, largest first
  const auto& lambda = eig.eigenvalues();
  if (!(lambda(v - Eigen::Index(q)) > 1e-10 * lambda(v - 1))) {
    throw Error(ErrorCode::UnstableExtraction,
                "the data have fewer than " + std::to_string(q) + " nonzero principal components");
  }
  Eigen::MatrixXd z(Eigen::Index(q), v);
  for (std::size_t c = 0; c < q; ++c) {
    Eigen::VectorXd e = eig.eigenvectors().col(v - 1 - Eigen::Index(c));
    // fix the arbitrary eigenvector sign for reproducibility
    Eigen::Index at = 0;
    e.cwiseAbs().maxCoeff(&at);
    if (e(at) < 0) e = -e;
    z.row(Eigen::Index(c)) = e.transpose() * std::sqrt(double(v));
  }
  return z;
}

double kurtosis_contrast(const Eigen::MatrixXd& y) {
  double total = 0.0;
  for (Eigen::Index c = 0; c < y.rows(); ++c) {
    const Eigen::ArrayXd x = y.row(c).array() - y.row(c).mean();
    const double var = x.square().mean();
    if (var > 0.0) total += std::abs(x.square().square().mean() / (var * var) - 3.0);
  }
  return total;
}

ComponentSet fast_ica_once(const Eigen::MatrixXd& z, const IcaOptions& options, int start) {
  const auto q = z.rows();
  const double samples = double(z.cols());
  Rng rng = make_rng(options.seed, {stream::ica, std::uint64_t(start)});
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd w(q, q);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) w(i, j) = normal(rng);
  }
  w = symmetric_decorrelation(w);

  ComponentSet set;
  set.seed = options.seed;
  set.tolerance = options.tolerance;
  // Newton form of the fixed-point update; mu = 1 is the plain iteration and
  // is halved when the iterates oscillate or stall.
  double mu = 1.0;
  Eigen::MatrixXd previous = w;
  const auto distance = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (1.0 - (a * b.transpose()).diagonal().cwiseAbs().array()).abs().maxCoeff();
  };
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Eigen::MatrixXd y = w * z;
    const Eigen::MatrixXd g = y.array().cube().matrix();
    const Eigen::MatrixXd expected = g * z.transpose() / samples;
    Eigen::MatrixXd next = w;
    for (Eigen::Index i = 0; i < q; ++i) {
      const double beta = (y.row(i).array() * g.row(i).array()).mean();
      const double slope = 3.0 * y.row(i).squaredNorm() / samples;
      const double denom = beta - slope;
      if (std::abs(denom) < 1e-12) continue;
      next.row(i) = w.row(i) + mu * (expected.row(i) - beta * w.row(i)) / denom;
    }
    next = symmetric_decorrelation(next);
    const double change = distance(next, w);
    const double two_step = distance(next, previous);
    previous = w;
    w = next;
    set.iterations = it;
    set.iteration_log.push_back(change);
    if (change < options.tolerance) {
      set.converged = true;
      break;
    }
    if ((two_step < options.tolerance || it % 50 == 0) && mu > 1.0 / 64.0) mu *= 0.5;
  }
  set.maps = w * z;
  set.contrast = kurtosis_contrast(set.maps);
  return set;
}

ComponentSet fast_ica(const Eigen::MatrixXd& z, const IcaOptions& options) {
  if (options.restarts < 1) throw Error(ErrorCode::InvalidArgument, "ICA needs at least one start");
  ComponentSet best = fast_ica_once(z, options, 0);
  for (int start = 1; start < options.restarts; ++start) {
    ComponentSet run = fast_ica_once(z, options, start);
    const bool better = run.converged != best.converged ? run.converged : run.contrast > best.contrast + 1e-9;
    if (better) best = std::move(run);
  }
  return best;
}

void check_options(const IcaOptions& options, std::size_t total_time, std::size_t voxels) {
  if (options.components == 0) throw Error(ErrorCode::InvalidArgument, "ICA needs at least one component");
  if (options.components > std::min(total_time, voxels)) {
    throw Error(ErrorCode::InvalidArgument, "ICA components exceed min(time points, voxels)");
  }
}

}  // namespace

ComponentSet ica_from_gram(const Eigen::MatrixXd& gram, std::size_t total_time, const IcaOptions& options) {
  check_options(options, total_time, std::size_t(gram.rows()));
  ComponentSet set = fast_ica(whiten(gram, options.components), options);
  normalize_maps(set.maps, nullptr);
  if (!set.converged) {
    throw IcaNotConverged("ICA did not converge in " + std::to_string(options.max_iterations) + " iterations",
                          std::move(set));
  }
  return set;
}

ComponentSet group_ica(std::span<const Eigen::MatrixXd> subjects, const IcaOptions& options) {
  if (subjects.empty()) throw Error(ErrorCode::InvalidArgument, "ICA needs at least one subject");
  const Eigen::Index v = subjects.front().cols();
  Eigen::Index total = 0;
  for (const auto& y : subjects) {
    if (y.cols() != v) throw Error(ErrorCode::InvalidArgument, "subjects have different voxel counts");
    if (y.rows() < Eigen::Index(options.components)) {
      throw Error(ErrorCode::InvalidArgument, "a subject has fewer time points than components");
    }
    total += y.rows();
  }
  check_options(options, std::size_t(total), std::size_t(v));

  Eigen::MatrixXd centered(total, v);
  Eigen::Index row = 0;
  for (const auto& y : subjects) {
    centered.middleRows(row, y.rows()) = y.colwise() - y.rowwise().mean();
    row += y.rows();
  }
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(v, v);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();

  ComponentSet set = fast_ica(whiten(gram, options.components), options);
  normalize_maps(set.maps, nullptr);
  // least-squares time courses for the normalized maps
  set.mixing = (set.maps * set.maps.transpose()).ldlt().solve(set.maps * centered.transpose()).transpose();
  if (!set.converged) {
    throw IcaNotConverged("ICA did not converge in " + std::to_string(options.max_iterations) + " iterations",
                          std::move(set));
  }
  return set;
}

Eigen::MatrixXd abs_spatial_correlation(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& candidate) {
  if (reference.cols() != candidate.cols()) throw Error(ErrorCode::InvalidArgument, "maps differ in voxel count");
  const auto standardize = [](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out = m.colwise() - m.rowwise().mean();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double norm = out.row(r).norm();
      if (norm > 0.0) out.row(r) /= norm;
      else out.row(r).setZero();
    }
    return out;
  };
  Eigen::MatrixXd r = (standardize(reference) * standardize(candidate).transpose()).cwiseAbs();
  return r.cwiseMin(1.0);
}

MatchResult match_maps(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& candidate) {
  MatchResult result;
  result.abs_r = abs_spatial_correlation(reference, candidate);
  const auto has_variance = [](const Eigen::MatrixXd& m, Eigen::Index r) {
    return (m.row(r).array() - m.row(r).mean()).abs().maxCoeff() > 0.0;
  };
  for (Eigen::Index r = 0; r < reference.rows(); ++r) {
    if (!has_variance(reference, r)) result.warnings.push_back("reference map " + std::to_string(r) + " is constant");
  }
  for (Eigen::Index c = 0; c < candidate.rows(); ++c) {
    if (!has_variance(candidate, c)) result.warnings.push_back("candidate map " + std::to_string(c) + " is constant");
  }
  for (Eigen::Index r = 0; r < result.abs_r.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < result.abs_r.cols(); ++c) {
      if (result.abs_r(r, c) > result.abs_r(r, best)) best = c;
    }
    result.matched.push_back(std::size_t(best));
    result.matched_abs_r.push_back(result.abs_r(r, best));
  }
  return result;
}

MatchResult match_components(const ComponentSet& reference, const ComponentSet& candidate) {
  return match_maps(reference.maps, candidate.maps);
}

std::vector<ComponentMask> threshold_maps(const Eigen::MatrixXd& maps, std::size_t size,
                                          const std::vector<std::string>& labels, ThresholdRule rule) {
  if (labels.size() != std::size_t(maps.rows())) throw Error(ErrorCode::InvalidArgument, "one label per map");
  if (size > std::size_t(maps.cols())) throw Error(ErrorCode::InvalidArgument, "mask larger than the grid");
  std::vector<ComponentMask> masks;
  for (Eigen::Index c = 0; c < maps.rows(); ++c) {
    std::vector<VoxelId> order(std::size_t(maps.cols()));
    std::iota(order.begin(), order.end(), 0);
    const auto score = [&](VoxelId v) { return rule == ThresholdRule::Absolute ? std::abs(maps(c, v)) : maps(c, v); };
    std::stable_sort(order.begin(), order.end(), [&](VoxelId a, VoxelId b) { return score(a) > score(b); });
    order.resize(size);
    masks.emplace_back(labels[std::size_t(c)], std::move(order), std::size_t(maps.cols()));
  }
  return masks;
}

}  // namespace sscnet

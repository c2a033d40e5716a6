#include "sscnet/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "sscnet/parallel.hpp"
#include "sscnet/resampling.hpp"
#include "sscnet/rng.hpp"

namespace sscnet {

namespace {

std::vector<std::string> default_labels(std::size_t q) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < q; ++c) out.push_back(fmt::format("IC{}", c + 1));
  return out;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

nlohmann::json ReliabilityReport::to_json() const {
  nlohmann::json j;
  j["replicates"] = replicates;
  j["used"] = used;
  j["q"] = q;
  j["seed"] = seed;
  j["warnings"] = warnings;
  j["components"] = nlohmann::json::array();
  for (const auto& c : components) {
    j["components"].push_back(
        {{"component", c.label}, {"observed", c.observed}, {"chance", c.chance}, {"R", c.index}});
  }
  return j;
}

std::string ReliabilityReport::render() const {
  std::string out = fmt::format("Reliability index (B = {} of {}, q = {})\n", used, replicates, q);
  out += fmt::format("{:<10}{:>10}{:>10}{:>10}{:>12}\n", "component", "observed", "chance", "R", "R (>= 0)");
  for (const auto& c : components) {
    out += fmt::format("{:<10}{:>10.4f}{:>10.4f}{:>10.4f}{:>12.4f}\n", c.label, c.observed, c.chance, c.index,
                       c.display_index());
  }
  for (const auto& w : warnings) out += "warning: " + w + "\n";
  return out;
}

ReliabilityReport reliability_from_correlations(std::span<const Eigen::MatrixXd> abs_r,
                                                const std::vector<std::string>& labels) {
  if (abs_r.empty()) throw Error(ErrorCode::NotEnoughReplicates, "reliability needs at least one bootstrap");
  const auto q = abs_r.front().rows();
  if (std::size_t(q) != labels.size()) throw Error(ErrorCode::InvalidArgument, "one label per component");
  ReliabilityReport report;
  report.q = std::size_t(q);
  report.replicates = report.used = abs_r.size();
  for (Eigen::Index l = 0; l < q; ++l) {
    ComponentReliability c;
    c.label = labels[std::size_t(l)];
    for (const auto& r : abs_r) {
      if (r.rows() != q || r.cols() < 1) throw Error(ErrorCode::InvalidArgument, "correlation matrices differ in shape");
      c.observed += r.row(l).maxCoeff();
      c.chance += r.row(l).mean();
    }
    c.observed /= double(abs_r.size());
    c.chance /= double(abs_r.size());
    if (!(c.chance < 1.0)) {
      throw Error(ErrorCode::DegenerateBaseline, "chance-level correlation of " + c.label + " is 1");
    }
    c.index = (c.observed - c.chance) / (1.0 - c.chance);
    report.components.push_back(c);
  }
  return report;
}

ReliabilityReport reliability_from_grams(std::span<const Eigen::MatrixXd> grams,
                                         std::span<const std::size_t> time_points,
                                         const ReliabilityOptions& options) {
  const std::size_t n = grams.size();
  if (n < 2) throw Error(ErrorCode::TooFewSubjects, "reliability needs at least 2 subjects");
  if (time_points.size() != n) throw Error(ErrorCode::InvalidArgument, "one time-point count per subject");
  if (options.replicates < 1) throw Error(ErrorCode::NotEnoughReplicates, "reliability needs B >= 1");

  IcaOptions ica = options.ica;
  ica.components = options.components;
  const auto extract = [&](const std::vector<std::size_t>& picks, std::uint64_t key) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(grams.front().rows(), grams.front().cols());
    std::size_t total = 0;
    for (std::size_t i : picks) {
      gram += grams[i];
      total += time_points[i];
    }
    IcaOptions run = ica;
    run.seed = derive_seed(options.seed, {stream::ica, key});
    return ica_from_gram(gram, total, run);
  };

  std::vector<std::size_t> everyone(n);
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});
  const ComponentSet original = extract(everyone, 0);

  const std::size_t b_total = options.replicates;
  std::vector<Eigen::MatrixXd> abs_r(b_total);
  std::vector<std::string> failure(b_total);
  parallel_for(b_total, [&](std::size_t b) {
    Rng rng = make_rng(options.seed, {stream::bootstrap, b});
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> picks(n);
    for (auto& p : picks) p = pick(rng);
    try {
      abs_r[b] = abs_spatial_correlation(original.maps, extract(picks, b + 1).maps);
    } catch (const IcaNotConverged& e) {
      failure[b] = e.what();
    }
  });

  std::vector<Eigen::MatrixXd> kept;
  std::vector<std::string> warnings;
  for (std::size_t b = 0; b < b_total; ++b) {
    if (failure[b].empty()) kept.push_back(std::move(abs_r[b]));
    else warnings.push_back(fmt::format("bootstrap {} dropped: {}", b, failure[b]));
  }
  const std::size_t dropped = b_total - kept.size();
  if (double(dropped) > options.max_dropped * double(b_total) || kept.empty()) {
    throw Error(ErrorCode::UnstableExtraction,
                fmt::format("{} of {} bootstrap extractions failed to converge", dropped, b_total));
  }
  ReliabilityReport report = reliability_from_correlations(kept, default_labels(options.components));
  report.replicates = b_total;
  report.seed = options.seed;
  report.maps = original.maps;
  report.warnings = std::move(warnings);
  return report;
}

ReliabilityReport reliability_index(std::span<const Eigen::MatrixXd> subjects, const ReliabilityOptions& options) {
  if (subjects.empty()) throw Error(ErrorCode::TooFewSubjects, "reliability needs at least 2 subjects");
  std::vector<Eigen::MatrixXd> grams(subjects.size());
  std::vector<std::size_t> time_points(subjects.size());
  parallel_for(subjects.size(), [&](std::size_t i) {
    if (subjects[i].cols() != subjects.front().cols()) {
      throw Error(ErrorCode::InvalidArgument, "subjects have different voxel counts");
    }
    grams[i] = centered_gram(subjects[i]);
    time_points[i] = std::size_t(subjects[i].rows());
  });
  return reliability_from_grams(grams, time_points, options);
}

nlohmann::json AssociationReport::to_json() const {
  nlohmann::json j;
  j["components"] = components;
  j["pearson"] = optional_json(pearson);
  j["spearman"] = optional_json(spearman);
  j["pearson_p"] = optional_json(pearson_p);
  j["spearman_p"] = optional_json(spearman_p);
  j["permutations"] = permutations;
  j["warnings"] = warnings;
  return j;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::InvalidArgument, "correlation needs paired data");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nan("");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

AssociationReport ssc_reliability_association(std::span<const double> theta, std::span<const double> reliability,
                                              std::size_t permutations, std::uint64_t seed) {
  if (theta.size() != reliability.size()) {
    throw Error(ErrorCode::InvalidArgument, "one reliability value per sSC estimate");
  }
  if (theta.size() < 3) throw Error(ErrorCode::InvalidArgument, "association needs at least 3 components");
  AssociationReport report;
  report.components = theta.size();
  report.permutations = permutations;

  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(theta) || constant(reliability)) {
    report.warnings.push_back("an input is constant; correlations are not applicable");
    return report;
  }

  const std::vector<double> rank_theta = average_ranks(theta);
  const std::vector<double> rank_rel = average_ranks(reliability);
  std::vector<int> identity(theta.size());
  std::iota(identity.begin(), identity.end(), 0);

  // Permuting the pairing of reliability values against sSC values.
  const auto permuted = [](std::span<const double> v, std::span<const int> order) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[std::size_t(order[i])];
    return out;
  };
  const ResamplePlan plan{ResampleMode::PermuteGroupLabels, permutations, derive_seed(seed, {stream::permutation}),
                          {}, 0.05};
  const auto pearson = permutation_null(
      [&](std::span<const int> order) { return pearson_correlation(theta, permuted(reliability, order)); }, identity,
      plan);
  const auto spearman = permutation_null(
      [&](std::span<const int> order) { return pearson_correlation(rank_theta, permuted(rank_rel, order)); },
      identity, plan);
  report.pearson = pearson.observed;
  report.spearman = spearman.observed;
  report.pearson_p = pearson.p_value;
  report.spearman_p = spearman.p_value;
  return report;
}

std::string association_csv(const std::vector<std::string>& labels, std::span<const double> theta,
                            std::span<const double> reliability) {
  if (labels.size() != theta.size() || theta.size() != reliability.size()) {
    throw Error(ErrorCode::InvalidArgument, "scatter columns differ in length");
  }
  std::string out = "component,theta_hat,R\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += fmt::format("{},{:.17g},{:.17g}\n", labels[i], theta[i], reliability[i]);
  }
  return out;
}

}  // namespace sscnet

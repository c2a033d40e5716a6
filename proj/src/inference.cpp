#include "sscnet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "sscnet/error.hpp"
#include "sscnet/resampling.hpp"
#include "sscnet/rng.hpp"

namespace sscnet {

namespace {

constexpr std::uint64_t kOneSample = 1;
constexpr std::uint64_t kNetworks = 2;
constexpr std::uint64_t kGroups = 3;

const boost::math::normal_distribution<double> standard_normal;

double upper_tail(double z) {
  if (std::isinf(z)) return z > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(standard_normal, z));
}

double z_quantile(double prob) { return boost::math::quantile(standard_normal, prob); }

// p-values live in (0, 1]; an exact zero means the tail underflowed.
double floor_p(double p, std::vector<std::string>& warnings) {
  if (p <= 0.0) {
    warnings.push_back("p-value below the floating-point floor");
    return std::numeric_limits<double>::min();
  }
  return std::min(p, 1.0);
}

void require_subjects(const SubjectEstimates& e, std::size_t minimum = 2) {
  if (e.theta.size() < minimum) {
    throw Error(ErrorCode::TooFewSubjects, "component " + e.component + " has " + std::to_string(e.theta.size()) +
                                               " subjects; need " + std::to_string(minimum));
  }
  if (!e.subjects.empty() && e.subjects.size() != e.theta.size()) {
    throw Error(ErrorCode::InvalidArgument, "subject ids and estimates differ in length");
  }
}

GroupSummary summarize(const SubjectEstimates& e, double variance, std::string name) {
  GroupSummary g;
  g.name = std::move(name);
  g.n = e.theta.size();
  g.mean = mean_of(e.theta);
  g.se = std::sqrt(variance);
  g.sd = std::sqrt(sample_variance(e.theta));
  return g;
}

}  // namespace

std::string_view to_string(TestKind kind) noexcept {
  switch (kind) {
    case TestKind::OneSample: return "one-sample";
    case TestKind::BetweenNetworks: return "between-network";
    case TestKind::BetweenGroups: return "between-group";
  }
  return "one-sample";
}

std::string_view to_string(VarianceSource source) noexcept {
  switch (source) {
    case VarianceSource::Delta: return "delta";
    case VarianceSource::Bootstrap: return "bootstrap";
    case VarianceSource::Empirical: return "empirical";
  }
  return "bootstrap";
}

VarianceSource parse_variance_source(std::string_view name) {
  if (name == "delta") return VarianceSource::Delta;
  if (name == "bootstrap") return VarianceSource::Bootstrap;
  if (name == "empirical") return VarianceSource::Empirical;
  throw Error(ErrorCode::InvalidArgument, "unknown variance source '" + std::string(name) + "'");
}

double TestReport::p_value() const {
  if (wald_p) return *wald_p;
  if (permutation_p) return *permutation_p;
  return 1.0;
}

double subject_variance(const SubjectEstimates& estimates, const InferenceOptions& options, std::uint64_t stream_key) {
  require_subjects(estimates);
  switch (options.variance) {
    case VarianceSource::Delta: {
      if (estimates.delta_variance.size() != estimates.theta.size()) {
        throw Error(ErrorCode::InvalidArgument, "component " + estimates.component + " lacks delta variances");
      }
      return mean_of(estimates.delta_variance);
    }
    case VarianceSource::Bootstrap: {
      const ResamplePlan plan{ResampleMode::BootstrapSubjects, options.replicates,
                              derive_seed(options.seed, {stream::bootstrap, stream_key}), {}, options.alpha};
      const auto r = bootstrap_mean(estimates.theta, plan);
      return r.per_unit_se * r.per_unit_se;
    }
    case VarianceSource::Empirical: return sample_variance(estimates.theta);
  }
  return 0.0;
}

TestReport test_ssc_positive(const SubjectEstimates& estimates, const InferenceOptions& options) {
  require_subjects(estimates);
  TestReport report;
  report.kind = TestKind::OneSample;
  report.label = estimates.component;
  report.components = {estimates.component};
  report.alpha = options.alpha;
  report.variance = options.variance;

  const double n = double(estimates.theta.size());
  const double variance = subject_variance(estimates, options, kOneSample);
  report.groups.push_back(summarize(estimates, variance, estimates.group));
  report.estimate = report.groups.front().mean;
  const double se_mean = std::sqrt(variance / n);

  if (se_mean > 0.0) {
    report.statistic = report.estimate / se_mean;
  } else if (report.estimate == 0.0) {
    report.statistic = 0.0;
  } else {
    report.statistic = std::copysign(std::numeric_limits<double>::infinity(), report.estimate);
    report.warnings.push_back("zero variance with a nonzero mean");
  }
  report.wald_p = floor_p(upper_tail(report.statistic), report.warnings);
  report.reject = report.statistic > z_quantile(1.0 - options.alpha);

  if (options.variance == VarianceSource::Bootstrap) {
    const ResamplePlan plan{ResampleMode::BootstrapSubjects, options.replicates,
                            derive_seed(options.seed, {stream::bootstrap, kOneSample}), {}, options.alpha};
    const auto r = bootstrap_mean(estimates.theta, plan);
    report.ci_low = r.ci_low;
    report.ci_high = r.ci_high;
  } else {
    const double half = z_quantile(1.0 - options.alpha / 2.0) * se_mean;
    report.ci_low = report.estimate - half;
    report.ci_high = report.estimate + half;
  }
  return report;
}

TestReport test_between_networks(const SubjectEstimates& first, const SubjectEstimates& second,
                                 const InferenceOptions& options) {
  require_subjects(first);
  require_subjects(second);
  // pair values by subject id
  std::vector<double> a = first.theta;
  std::vector<double> b;
  if (first.subjects.empty() || second.subjects.empty()) {
    if (first.theta.size() != second.theta.size() || first.subjects.size() != second.subjects.size()) {
      throw Error(ErrorCode::SubjectMismatch, "components were measured on different subjects");
    }
    b = second.theta;
  } else {
    std::map<std::string, double> lookup;
    for (std::size_t i = 0; i < second.subjects.size(); ++i) lookup[second.subjects[i]] = second.theta[i];
    if (lookup.size() != second.subjects.size() || second.subjects.size() != first.subjects.size()) {
      throw Error(ErrorCode::SubjectMismatch, "components were measured on different subjects");
    }
    for (const auto& id : first.subjects) {
      const auto it = lookup.find(id);
      if (it == lookup.end()) throw Error(ErrorCode::SubjectMismatch, "subject " + id + " lacks " + second.component);
      b.push_back(it->second);
    }
  }

  TestReport report;
  report.kind = TestKind::BetweenNetworks;
  report.label = first.component + " vs " + second.component;
  report.components = {first.component, second.component};
  report.alpha = options.alpha;
  report.variance = options.variance;
  report.groups.push_back(summarize(first, sample_variance(first.theta), first.component));
  report.groups.push_back(summarize(second, sample_variance(second.theta), second.component));

  const std::size_t n = a.size();
  std::vector<double> values(2 * n);
  std::vector<int> labels(2 * n);
  std::vector<int> strata(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    values[2 * i] = a[i];
    values[2 * i + 1] = b[i];
    labels[2 * i] = 0;
    labels[2 * i + 1] = 1;
    strata[2 * i] = strata[2 * i + 1] = int(i);
  }
  const auto statistic = [&](std::span<const int> l) {
    double diff = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) diff += l[i] == 0 ? values[i] : -values[i];
    return diff / double(n);
  };
  const ResamplePlan plan{ResampleMode::PermuteNetworkLabels, options.replicates,
                          derive_seed(options.seed, {stream::permutation, kNetworks}), strata, options.alpha};
  const auto r = permutation_null(statistic, labels, plan);
  report.estimate = r.observed;
  report.statistic = r.observed;
  report.permutation_p = r.p_value;
  report.warnings = r.warnings;
  report.reject = *r.p_value <= options.alpha;

  // paired differences give the interval
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  const ResamplePlan boot{ResampleMode::BootstrapSubjects, std::max<std::size_t>(options.replicates, 2),
                          derive_seed(options.seed, {stream::bootstrap, kNetworks}), {}, options.alpha};
  const auto ci = bootstrap_mean(diff, boot);
  report.ci_low = ci.ci_low;
  report.ci_high = ci.ci_high;
  return report;
}

TestReport test_between_groups(const SubjectEstimates& first, const SubjectEstimates& second,
                               const InferenceOptions& options) {
  require_subjects(first);
  require_subjects(second);
  TestReport report;
  report.kind = TestKind::BetweenGroups;
  report.label = first.component;
  report.components = {first.component};
  if (second.component != first.component) report.components.push_back(second.component);
  report.alpha = options.alpha;
  report.variance = options.variance;

  const double v1 = subject_variance(first, options, kGroups * 16 + 1);
  const double v2 = subject_variance(second, options, kGroups * 16 + 2);
  report.groups.push_back(summarize(first, v1, first.group));
  report.groups.push_back(summarize(second, v2, second.group));
  const double n1 = double(first.theta.size());
  const double n2 = double(second.theta.size());
  report.estimate = report.groups[0].mean - report.groups[1].mean;
  const double se = std::sqrt(v1 / n1 + v2 / n2);
  if (se > 0.0) {
    report.statistic = report.estimate / se;
  } else if (report.estimate == 0.0) {
    report.statistic = 0.0;
  } else {
    report.statistic = std::copysign(std::numeric_limits<double>::infinity(), report.estimate);
    report.warnings.push_back("zero pooled variance with a nonzero difference");
  }
  report.wald_p = floor_p(2.0 * upper_tail(std::abs(report.statistic)), report.warnings);

  std::vector<double> values(first.theta);
  values.insert(values.end(), second.theta.begin(), second.theta.end());
  std::vector<int> labels(values.size(), 1);
  std::fill(labels.begin(), labels.begin() + std::ptrdiff_t(first.theta.size()), 0);
  const auto statistic = [&](std::span<const int> l) {
    double s0 = 0, s1 = 0;
    for (std::size_t i = 0; i < values.size(); ++i) (l[i] == 0 ? s0 : s1) += values[i];
    return s0 / n1 - s1 / n2;
  };
  const ResamplePlan plan{ResampleMode::PermuteGroupLabels, options.replicates,
                          derive_seed(options.seed, {stream::permutation, kGroups}), {}, options.alpha};
  const auto r = permutation_null(statistic, labels, plan);
  report.permutation_p = r.p_value;
  for (const auto& w : r.warnings) report.warnings.push_back(w);
  report.reject = std::abs(report.statistic) > z_quantile(1.0 - options.alpha / 2.0);

  if (options.variance == VarianceSource::Bootstrap) {
    // independent resamples of the two groups
    const auto b1 = bootstrap_mean(first.theta, {ResampleMode::BootstrapSubjects, options.replicates,
                                                 derive_seed(options.seed, {stream::bootstrap, kGroups, 1}), {},
                                                 options.alpha});
    const auto b2 = bootstrap_mean(second.theta, {ResampleMode::BootstrapSubjects, options.replicates,
                                                  derive_seed(options.seed, {stream::bootstrap, kGroups, 2}), {},
                                                  options.alpha});
    std::vector<double> diff(b1.replicates.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = b1.replicates[i] - b2.replicates[i];
    std::sort(diff.begin(), diff.end());
    report.ci_low = quantile_type7(diff, options.alpha / 2.0);
    report.ci_high = quantile_type7(diff, 1.0 - options.alpha / 2.0);
  } else {
    const double half = z_quantile(1.0 - options.alpha / 2.0) * se;
    report.ci_low = report.estimate - half;
    report.ci_high = report.estimate + half;
  }
  return report;
}

void adjust_p_values(std::span<TestReport> reports) {
  const std::size_t m = reports.size();
  if (m == 0) return;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return reports[a].p_value() < reports[b].p_value(); });
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t i = order[r];
    running = std::min(running, reports[i].p_value() * double(m) / double(r + 1));
    reports[i].bh_p = std::min(running, 1.0);
  }
  for (auto& report : reports) report.bonferroni_p = std::min(1.0, report.p_value() * double(m));
}

nlohmann::json to_json(const TestReport& report) {
  nlohmann::json j;
  j["test"] = std::string(to_string(report.kind));
  j["label"] = report.label;
  j["components"] = report.components;
  j["variance_source"] = std::string(to_string(report.variance));
  j["alpha"] = report.alpha;
  j["estimate"] = report.estimate;
  j["statistic"] = std::isfinite(report.statistic) ? nlohmann::json(report.statistic)
                                                   : nlohmann::json(report.statistic > 0 ? "inf" : "-inf");
  j["wald_p"] = report.wald_p ? nlohmann::json(*report.wald_p) : nlohmann::json(nullptr);
  j["permutation_p"] = report.permutation_p ? nlohmann::json(*report.permutation_p) : nlohmann::json(nullptr);
  j["bonferroni_p"] = report.bonferroni_p ? nlohmann::json(*report.bonferroni_p) : nlohmann::json(nullptr);
  j["bh_p"] = report.bh_p ? nlohmann::json(*report.bh_p) : nlohmann::json(nullptr);
  j["ci"] = {report.ci_low, report.ci_high};
  j["reject"] = report.reject;
  j["groups"] = nlohmann::json::array();
  for (const auto& g : report.groups) {
    j["groups"].push_back({{"name", g.name}, {"n", g.n}, {"mean", g.mean}, {"se", g.se}, {"sd", g.sd}});
  }
  j["warnings"] = report.warnings;
  return j;
}

std::string format_p(double p) { return p < 1e-4 ? "<0.0001" : fmt::format("{:.4f}", p); }

namespace {

std::string optional_p(const std::optional<double>& p) { return p ? format_p(*p) : "-"; }

std::string interval(double lo, double hi) { return fmt::format("({:.4f}, {:.4f})", lo, hi); }

std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  const auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += "  ";
      out += fmt::format("{:<{}}", cells[c], width[c]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& row : rows) out += line(row);
  return out;
}

}  // namespace

std::string render_tests(std::span<const TestReport> reports) {
  std::string out;
  std::vector<std::vector<std::string>> one, networks, groups;
  for (const auto& r : reports) {
    const auto decision = r.reject ? "reject" : "-";
    switch (r.kind) {
      case TestKind::OneSample:
        one.push_back({r.label, std::to_string(r.groups[0].n), fmt::format("{:.4f}", r.groups[0].mean),
                       fmt::format("{:.4f}", r.groups[0].se), interval(r.ci_low, r.ci_high),
                       fmt::format("{:.3f}", r.statistic), optional_p(r.wald_p), optional_p(r.bonferroni_p),
                       optional_p(r.bh_p), decision});
        break;
      case TestKind::BetweenNetworks:
        networks.push_back({r.label, std::to_string(r.groups[0].n), fmt::format("{:.4f}", r.groups[0].mean),
                            fmt::format("{:.4f}", r.groups[1].mean), fmt::format("{:.4f}", r.estimate),
                            interval(r.ci_low, r.ci_high), optional_p(r.permutation_p), optional_p(r.bonferroni_p),
                            optional_p(r.bh_p), decision});
        break;
      case TestKind::BetweenGroups:
        groups.push_back({r.label, fmt::format("{:.4f}", r.groups[0].mean), fmt::format("{:.4f}", r.groups[0].se),
                          fmt::format("{:.4f}", r.groups[1].mean), fmt::format("{:.4f}", r.groups[1].se),
                          interval(r.ci_low, r.ci_high), optional_p(r.wald_p), optional_p(r.permutation_p),
                          optional_p(r.bonferroni_p), optional_p(r.bh_p), decision});
        break;
    }
  }
  if (!one.empty()) {
    out += "One-sample tests (H0: theta = 0, one-sided)\n";
    out += table({"component", "n", "mean", "SE", "CI", "Z", "p", "p_bonf", "p_bh", "decision"}, one);
  }
  if (!networks.empty()) {
    if (!out.empty()) out += "\n";
    out += "Between-network tests (within-subject label permutation)\n";
    out += table({"components", "n", "mean_1", "mean_2", "difference", "CI", "perm_p", "p_bonf", "p_bh", "decision"},
                 networks);
  }
  if (!groups.empty()) {
    if (!out.empty()) out += "\n";
    const auto& g = std::find_if(reports.begin(), reports.end(),
                                 [](const TestReport& r) { return r.kind == TestKind::BetweenGroups; })
                        ->groups;
    out += fmt::format("Between-group tests ({} - {})\n", g[0].name, g[1].name);
    out += table({"component", "mean_" + g[0].name, "SE_" + g[0].name, "mean_" + g[1].name, "SE_" + g[1].name,
                  "CI (difference)", "wald_p", "perm_p", "p_bonf", "p_bh", "decision"},
                 groups);
  }
  return out;
}

}  // namespace sscnet

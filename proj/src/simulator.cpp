#include "sscnet/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "sscnet/ica.hpp"
#include "sscnet/parallel.hpp"
#include "sscnet/resampling.hpp"
#include "sscnet/rng.hpp"
#include "sscnet/ssc.hpp"

namespace sscnet {

namespace {

std::vector<std::vector<VoxelId>> default_networks() {
  std::vector<VoxelId> front_back;
  for (int y : {0, 1, 2, 7, 8, 9}) {
    for (int x : {4, 5}) front_back.push_back(y * 10 + x);
  }
  std::vector<VoxelId> left_right;
  for (int y : {4, 5}) {
    for (int x : {0, 1, 2, 7, 8, 9}) left_right.push_back(y * 10 + x);
  }
  return {front_back, left_right};
}

std::vector<std::vector<VoxelId>> networks_of(const SimScenario& s) {
  return s.networks.empty() ? default_networks() : s.networks;
}

void invalid(const std::string& message) { throw Error(ErrorCode::InvalidArgument, "scenario: " + message); }

}  // namespace

SimScenario SimScenario::standard_design(NoiseLevel level, std::size_t subjects) {
  SimScenario s;
  s.subjects = subjects;
  if (level == NoiseLevel::High) s.noise = {VariogramFamily::Exponential, 2.0, 5.0, 1.0};
  return s;
}

void SimScenario::validate() const {
  if (nx < 1 || ny < 1 || voxel_count() < 2) invalid("the grid needs at least 2 voxels");
  if (p_in.empty()) invalid("p_in needs one entry per network");
  const auto nets = networks_of(*this);
  if (nets.size() != p_in.size()) invalid("p_in needs one entry per network");
  if (intensity.size() != p_in.size()) invalid("intensity needs one entry per network");
  if (networks.empty() && (nx != 10 || ny != 10)) invalid("the default networks need a 10 x 10 grid");
  std::set<VoxelId> seen;
  for (const auto& net : nets) {
    if (net.size() < 2) invalid("every network needs at least 2 voxels");
    for (VoxelId v : net) {
      if (v < 0 || std::size_t(v) >= voxel_count()) invalid("network voxel outside the grid");
      if (!seen.insert(v).second) invalid("networks must be disjoint");
    }
  }
  for (double p : p_in) {
    if (!(p >= 0.0 && p <= 1.0)) invalid("probabilities must lie in [0, 1]");
  }
  if (!(p_out >= 0.0 && p_out <= 1.0)) invalid("probabilities must lie in [0, 1]");
  if (time_points < p_in.size()) invalid("time points must be at least the number of networks");
  if (subjects < 2) invalid("at least 2 subjects are needed");
  if (replicates < 1) invalid("replicates must be at least 1");
  if (bootstrap_replicates < 2) invalid("bootstrap replicates must be at least 2");
  if (!(alpha > 0.0 && alpha < 1.0)) invalid("alpha must lie in (0, 1)");
  if (streams_per_seed < 1) invalid("streams_per_seed must be positive");
  if (!(noise.nugget >= 0.0) || !(noise.partial_sill >= 0.0) || !(noise.range > 0.0)) {
    invalid("semivariogram parameters must be nonnegative with a positive range");
  }
  if (!(background_sd >= 0.0) || !(jitter_sd >= 0.0) || !(fmri_noise_sd >= 0.0)) invalid("noise sds must be >= 0");
  if (!(std::abs(ar_coefficient) < 1.0)) invalid("the AR coefficient must lie in (-1, 1)");
  if (lag_edges.size() < 2) invalid("need at least one lag bin");
  for (std::size_t i = 1; i < lag_edges.size(); ++i) {
    if (!(lag_edges[i] > lag_edges[i - 1])) invalid("lag edges must increase");
  }
}

nlohmann::json SimScenario::to_json() const {
  nlohmann::json j;
  j["nx"] = nx;
  j["ny"] = ny;
  j["time_points"] = time_points;
  j["subjects"] = subjects;
  if (!networks.empty()) j["networks"] = networks;
  j["intensity"] = intensity;
  j["background_sd"] = background_sd;
  j["jitter_sd"] = jitter_sd;
  j["fmri_noise_sd"] = fmri_noise_sd;
  j["ar_coefficient"] = ar_coefficient;
  j["streams_per_seed"] = streams_per_seed;
  j["p_out"] = p_out;
  j["p_in"] = p_in;
  j["noise"] = {{"family", std::string(to_string(noise.family))},
                {"nugget", noise.nugget},
                {"partial_sill", noise.partial_sill},
                {"range", noise.range}};
  j["seed"] = seed;
  j["replicates"] = replicates;
  j["bootstrap_replicates"] = bootstrap_replicates;
  j["alpha"] = alpha;
  j["mask_source"] = mask_source == MaskSource::Ica ? "ica" : "truth";
  j["lag_edges"] = lag_edges;
  j["variogram_budget"] = variogram_budget;
  return j;
}

SimScenario SimScenario::from_json(const nlohmann::json& j) {
  if (!j.is_object()) invalid("expected a JSON object");
  SimScenario s;
  bool intensity_given = false;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "nx") s.nx = value.get<int>();
      else if (key == "ny") s.ny = value.get<int>();
      else if (key == "time_points") s.time_points = value.get<std::size_t>();
      else if (key == "subjects") s.subjects = value.get<std::size_t>();
      else if (key == "networks") s.networks = value.get<std::vector<std::vector<VoxelId>>>();
      else if (key == "intensity") {
        intensity_given = true;
        s.intensity = value.is_array() ? value.get<std::vector<double>>() : std::vector<double>{value.get<double>()};
      } else if (key == "background_sd") s.background_sd = value.get<double>();
      else if (key == "jitter_sd") s.jitter_sd = value.get<double>();
      else if (key == "fmri_noise_sd") s.fmri_noise_sd = value.get<double>();
      else if (key == "ar_coefficient") s.ar_coefficient = value.get<double>();
      else if (key == "streams_per_seed") s.streams_per_seed = value.get<std::uint32_t>();
      else if (key == "p_out") s.p_out = value.get<double>();
      else if (key == "p_in") s.p_in = value.get<std::vector<double>>();
      else if (key == "noise_level") {
        const auto level = value.get<std::string>();
        if (level == "low") s.noise = {VariogramFamily::Exponential, 1.0, 4.0, 1.0};
        else if (level == "high") s.noise = {VariogramFamily::Exponential, 2.0, 5.0, 1.0};
        else invalid("noise_level must be \"low\" or \"high\"");
      } else if (key == "noise") {
        for (const auto& [nk, nv] : value.items()) {
          if (nk == "family") s.noise.family = parse_family(nv.get<std::string>());
          else if (nk == "nugget") s.noise.nugget = nv.get<double>();
          else if (nk == "partial_sill") s.noise.partial_sill = nv.get<double>();
          else if (nk == "range") s.noise.range = nv.get<double>();
          else invalid("unknown key noise." + nk);
        }
      } else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else if (key == "replicates") s.replicates = value.get<std::size_t>();
      else if (key == "bootstrap_replicates") s.bootstrap_replicates = value.get<std::size_t>();
      else if (key == "alpha") s.alpha = value.get<double>();
      else if (key == "mask_source") {
        const auto source = value.get<std::string>();
        if (source == "ica") s.mask_source = MaskSource::Ica;
        else if (source == "truth") s.mask_source = MaskSource::Truth;
        else invalid("mask_source must be \"ica\" or \"truth\"");
      } else if (key == "lag_edges") s.lag_edges = value.get<std::vector<double>>();
      else if (key == "variogram_budget") s.variogram_budget = value.get<std::size_t>();
      else invalid("unknown key " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    invalid(std::string("bad value: ") + e.what());
  }
  if (s.intensity.size() == 1 && s.p_in.size() > 1) s.intensity.assign(s.p_in.size(), s.intensity.front());
  if (!intensity_given && s.intensity.size() != s.p_in.size()) s.intensity.assign(s.p_in.size(), 3.0);
  s.validate();
  return s;
}

VoxelGrid scenario_grid(const SimScenario& scenario) { return VoxelGrid::regular_slice(scenario.nx, scenario.ny); }

std::vector<std::string> component_labels(std::size_t count) {
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < count; ++c) labels.push_back("IC" + std::to_string(c + 1));
  return labels;
}

std::vector<ComponentMask> scenario_masks(const SimScenario& scenario) {
  const auto nets = networks_of(scenario);
  const auto labels = component_labels(nets.size());
  std::vector<ComponentMask> masks;
  for (std::size_t c = 0; c < nets.size(); ++c) masks.emplace_back(labels[c], nets[c], scenario.voxel_count());
  return masks;
}

std::vector<double> pair_probabilities(const SimScenario& scenario) {
  const std::size_t v = scenario.voxel_count();
  const PairIndex index(v);
  std::vector<double> p(index.pair_count(), scenario.p_out);
  const auto nets = networks_of(scenario);
  for (std::size_t c = 0; c < nets.size(); ++c) {
    for (VoxelId a : nets[c]) {
      for (VoxelId b : nets[c]) {
        if (a < b) p[std::size_t(index.index_unchecked(a, b))] = scenario.p_in[c];
      }
    }
  }
  return p;
}

std::vector<double> true_ssc(const SimScenario& scenario) {
  const PairField field{scenario.voxel_count(), pair_probabilities(scenario)};
  std::vector<double> out;
  for (const auto& mask : scenario_masks(scenario)) out.push_back(true_ssc_from_probabilities(field, mask));
  return out;
}

Eigen::MatrixXd simulate_sources(const SimScenario& scenario, std::uint64_t replicate) {
  const auto nets = networks_of(scenario);
  const auto v = Eigen::Index(scenario.voxel_count());
  Rng rng = make_rng(scenario.seed, {stream::sources, replicate});
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd s(Eigen::Index(nets.size()), v);
  for (Eigen::Index c = 0; c < s.rows(); ++c) {
    for (Eigen::Index x = 0; x < v; ++x) s(c, x) = scenario.background_sd * normal(rng);
    for (VoxelId x : nets[std::size_t(c)]) s(c, x) += scenario.intensity[std::size_t(c)] + scenario.jitter_sd * normal(rng);
  }
  return s;
}

Eigen::MatrixXd simulate_fmri(const SimScenario& scenario, const Eigen::MatrixXd& sources, std::uint64_t replicate,
                              std::uint64_t subject) {
  const auto t = Eigen::Index(scenario.time_points);
  const auto q = sources.rows();
  Rng rng = make_rng(scenario.seed, {stream::fmri, replicate, subject});
  std::normal_distribution<double> normal(0.0, 1.0);
  const double phi = scenario.ar_coefficient;
  Eigen::MatrixXd a(t, q);
  for (Eigen::Index c = 0; c < q; ++c) {
    double x = normal(rng) / std::sqrt(1.0 - phi * phi);
    for (Eigen::Index i = 0; i < t; ++i) {
      if (i > 0) x = phi * x + normal(rng);
      a(i, c) = x;
    }
  }
  Eigen::MatrixXd y = a * sources;
  if (scenario.fmri_noise_sd > 0.0) {
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      for (Eigen::Index j = 0; j < y.cols(); ++j) y(i, j) += scenario.fmri_noise_sd * normal(rng);
    }
  }
  return y;
}

Eigen::MatrixXd count_covariance(const SimScenario& scenario) {
  const auto grid = scenario_grid(scenario);
  const PairIndex index(grid.size());
  const auto p = Eigen::Index(index.pair_count());
  std::vector<VoxelId> first(static_cast<std::size_t>(p)), second(static_cast<std::size_t>(p));
  for (PairId z = 0; z < p; ++z) std::tie(first[std::size_t(z)], second[std::size_t(z)]) = index.to_pair(z);
  const Eigen::MatrixXd dist = grid.distance_matrix();
  Eigen::MatrixXd sigma(p, p);
  for (Eigen::Index a = 0; a < p; ++a) {
    sigma(a, a) = scenario.noise.sill();
    for (Eigen::Index b = a + 1; b < p; ++b) {
      const double d =
          pair_distance(dist, first[std::size_t(a)], second[std::size_t(a)], first[std::size_t(b)], second[std::size_t(b)]);
      sigma(a, b) = sigma(b, a) = scenario.noise.covariance(d);
    }
  }
  return sigma;
}

CountGenerator::CountGenerator(const SimScenario& scenario)
    : voxels_(scenario.voxel_count()), streams_(scenario.streams_per_seed), seed_(scenario.seed) {
  scenario.validate();
  const auto p = pair_probabilities(scenario);
  mean_ = Eigen::Map<const Eigen::VectorXd>(p.data(), Eigen::Index(p.size())) * double(streams_);
  if (scenario.noise.sill() <= 0.0) {
    zero_ = true;
    return;
  }
  factor_ = count_covariance(scenario);
  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(factor_);
  if (llt.info() == Eigen::Success) {
    factor_.triangularView<Eigen::StrictlyUpper>().setZero();
    return;
  }
  warnings_.push_back("count covariance is not positive definite; using an eigenvalue-clipped factor");
  repaired_ = true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(count_covariance(scenario));
  factor_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::vector<StreamCounts> CountGenerator::draw_batch(std::uint64_t replicate, std::uint64_t first,
                                                     std::size_t count) const {
  const auto p = mean_.size();
  Eigen::MatrixXd x(p, Eigen::Index(count));
  if (zero_) {
    x.colwise() = mean_;
  } else {
    Eigen::MatrixXd z(p, Eigen::Index(count));
    for (std::size_t s = 0; s < count; ++s) {
      Rng rng = make_rng(seed_, {stream::counts, replicate, first + s});
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index i = 0; i < p; ++i) z(i, Eigen::Index(s)) = normal(rng);
    }
    if (repaired_) x.noalias() = factor_ * z;
    else x.noalias() = factor_.triangularView<Eigen::Lower>() * z;
    x.colwise() += mean_;
  }
  std::vector<StreamCounts> out;
  out.reserve(count);
  std::vector<std::uint32_t> dense(static_cast<std::size_t>(p));
  const double top = streams_;
  for (std::size_t s = 0; s < count; ++s) {
    for (Eigen::Index i = 0; i < p; ++i) {
      dense[std::size_t(i)] = std::uint32_t(std::clamp(std::round(x(i, Eigen::Index(s))), 0.0, top));
    }
    out.push_back(StreamCounts::from_dense(voxels_, streams_, dense));
  }
  return out;
}

StreamCounts CountGenerator::draw(std::uint64_t replicate, std::uint64_t subject) const {
  return std::move(draw_batch(replicate, subject, 1).front());
}

StreamCounts simulate_counts(const SimScenario& scenario, std::uint64_t replicate, std::uint64_t subject) {
  return CountGenerator(scenario).draw(replicate, subject);
}

SimulatedReplicate simulate_replicate(const SimScenario& scenario, const CountGenerator& generator,
                                      std::uint64_t replicate, bool with_fmri) {
  SimulatedReplicate out;
  out.sources = simulate_sources(scenario, replicate);
  if (with_fmri) {
    for (std::size_t i = 0; i < scenario.subjects; ++i) {
      out.fmri.push_back(simulate_fmri(scenario, out.sources, replicate, i));
    }
  }
  out.counts = generator.draw_batch(replicate, 0, scenario.subjects);
  return out;
}

namespace {

struct StudyContext {
  const SimScenario& scenario;
  VoxelGrid grid;
  std::vector<ComponentMask> truth;
  std::vector<double> theta;
  std::unique_ptr<LagSampler> sampler;
  double z = 0.0;
};

ReplicateOutcome run_replicate(const StudyContext& ctx, const CountGenerator& generator, std::size_t replicate) {
  const auto& sc = ctx.scenario;
  ReplicateOutcome outcome;
  outcome.replicate = replicate;
  const bool need_fmri = sc.mask_source == MaskSource::Ica;
  const auto data = simulate_replicate(sc, generator, replicate, need_fmri);
  const std::size_t q = sc.component_count();
  const std::size_t n = sc.subjects;

  std::vector<ComponentMask> masks = ctx.truth;
  std::vector<double> map_r(q, 1.0);
  if (need_fmri) {
    const IcaOptions options{q, derive_seed(sc.seed, {stream::ica, replicate}), 1e-6, 500};
    const auto set = group_ica(data.fmri, options);
    const auto match = match_maps(data.sources, set.maps);
    std::set<std::size_t> used(match.matched.begin(), match.matched.end());
    if (used.size() != q) throw Error(ErrorCode::UnstableExtraction, "two networks matched one ICA component");
    masks.clear();
    for (std::size_t c = 0; c < q; ++c) {
      Eigen::MatrixXd row = set.maps.row(Eigen::Index(match.matched[c]));
      masks.push_back(threshold_maps(row, ctx.truth[c].size(), {ctx.truth[c].label()}, ThresholdRule::Positive).front());
      map_r[c] = match.matched_abs_r[c];
    }
  }

  // One semivariogram per subject, shared by its components.
  std::vector<SemivariogramModel> models(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bins = ctx.sampler->accumulate(detrended_counts(data.counts[i], masks));
    models[i] = fit_semivariogram(bins, sc.noise.family, FitOptions{}).model;
  }
  const CovarianceOptions cov_options{std::size_t{1} << 30, false};
  for (std::size_t c = 0; c < q; ++c) {
    std::vector<double> theta(n), variance(n);
    for (std::size_t i = 0; i < n; ++i) {
      theta[i] = estimate_ssc(data.counts[i], masks[c]).theta_hat;
      const auto field = build_covariance(data.counts[i], ctx.grid, models[i], masks[c], cov_options);
      variance[i] = delta_variance(masks[c], data.counts[i], field).variance;
    }
    ComponentReplicate r;
    r.theta_mean = mean_of(theta);
    r.theory_se = std::sqrt(mean_of(variance) / double(n));
    const ResamplePlan plan{ResampleMode::BootstrapSubjects, sc.bootstrap_replicates,
                            derive_seed(sc.seed, {stream::bootstrap, replicate, c}), {}, sc.alpha};
    const auto boot = bootstrap_mean(theta, plan);
    r.bootstrap_se = boot.se;
    const double truth = ctx.theta[c];
    r.wald_covers = std::abs(r.theta_mean - truth) <= ctx.z * r.theory_se;
    r.percentile_covers = boot.ci_low <= truth && truth <= boot.ci_high;
    r.map_correlation = map_r[c];
    outcome.components.push_back(r);
  }
  outcome.ok = true;
  return outcome;
}

MeanSd mean_sd(const std::vector<double>& x) {
  MeanSd out;
  if (x.empty()) return out;
  out.mean = mean_of(x);
  out.sd = x.size() > 1 ? std::sqrt(sample_variance(x)) : 0.0;
  return out;
}

}  // namespace

StudySummary run_study(const SimScenario& scenario) {
  const CountGenerator generator(scenario);
  return run_study(scenario, generator);
}

StudySummary run_study(const SimScenario& scenario, const CountGenerator& generator) {
  scenario.validate();
  StudyContext ctx{scenario, scenario_grid(scenario), scenario_masks(scenario), true_ssc(scenario), nullptr, 0.0};
  ctx.sampler = std::make_unique<LagSampler>(
      ctx.grid, VariogramOptions{scenario.lag_edges, scenario.variogram_budget,
                                 derive_seed(scenario.seed, {stream::variogram})});
  ctx.z = boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - scenario.alpha / 2.0);

  StudySummary summary;
  summary.scenario = scenario;
  summary.warnings = generator.warnings();
  summary.replicates.resize(scenario.replicates);
  parallel_for(scenario.replicates, [&](std::size_t r) {
    try {
      summary.replicates[r] = run_replicate(ctx, generator, r);
    } catch (const Error& e) {
      summary.replicates[r].replicate = r;
      summary.replicates[r].ok = false;
      summary.replicates[r].failure = e.what();
    }
  });

  const std::size_t q = scenario.component_count();
  const auto labels = component_labels(q);
  std::vector<std::vector<double>> theta(q), theory(q), boot(q);
  std::vector<std::size_t> wald(q, 0), pct(q, 0);
  for (const auto& rep : summary.replicates) {
    if (!rep.ok) {
      summary.warnings.push_back(fmt::format("replicate {} failed: {}", rep.replicate, rep.failure));
      continue;
    }
    ++summary.completed;
    for (std::size_t c = 0; c < q; ++c) {
      theta[c].push_back(rep.components[c].theta_mean);
      theory[c].push_back(rep.components[c].theory_se);
      boot[c].push_back(rep.components[c].bootstrap_se);
      wald[c] += rep.components[c].wald_covers;
      pct[c] += rep.components[c].percentile_covers;
    }
  }
  const double root_n = std::sqrt(double(scenario.subjects));
  for (std::size_t c = 0; c < q; ++c) {
    ComponentSummary s;
    s.label = labels[c];
    s.theta = ctx.theta[c];
    s.theta_hat = mean_sd(theta[c]);
    s.theory_se = mean_sd(theory[c]);
    s.bootstrap_se = mean_sd(boot[c]);
    if (summary.completed > 0) {
      s.coverage_wald = 100.0 * double(wald[c]) / double(summary.completed);
      s.coverage_percentile = 100.0 * double(pct[c]) / double(summary.completed);
    }
    s.theory_se_subject = s.theory_se.mean * root_n;
    s.bootstrap_se_subject = s.bootstrap_se.mean * root_n;
    summary.components.push_back(s);
  }
  return summary;
}

nlohmann::json StudySummary::to_json() const {
  nlohmann::json j;
  j["scenario"] = scenario.to_json();
  j["completed"] = completed;
  j["components"] = nlohmann::json::array();
  for (const auto& c : components) {
    j["components"].push_back({{"component", c.label},
                               {"theta", c.theta},
                               {"theta_hat_mean", c.theta_hat.mean},
                               {"theta_hat_sd", c.theta_hat.sd},
                               {"theory_se_mean", c.theory_se.mean},
                               {"theory_se_sd", c.theory_se.sd},
                               {"bootstrap_se_mean", c.bootstrap_se.mean},
                               {"bootstrap_se_sd", c.bootstrap_se.sd},
                               {"coverage_wald", c.coverage_wald},
                               {"coverage_percentile", c.coverage_percentile},
                               {"theory_se_subject", c.theory_se_subject},
                               {"bootstrap_se_subject", c.bootstrap_se_subject}});
  }
  j["warnings"] = warnings;
  return j;
}

std::string StudySummary::render() const {
  std::string out = fmt::format(
      "Simulation summary: {} of {} replicates, n = {}, noise (c0={:g}, ce={:g}, ae={:g})\n", completed,
      scenario.replicates, scenario.subjects, scenario.noise.nugget, scenario.noise.partial_sill, scenario.noise.range);
  out += fmt::format("{:<6} {:>8} {:>20} {:>20} {:>20} {:>9} {:>9}\n", "IC", "theta", "theta_hat mean (SD)",
                     "theory SE (SD)", "bootstrap SE (SD)", "cov. I", "cov. II");
  for (const auto& c : components) {
    out += fmt::format("{:<6} {:>8.4f} {:>20} {:>20} {:>20} {:>9.1f} {:>9.1f}\n", c.label, c.theta,
                       fmt::format("{:.4f} ({:.4f})", c.theta_hat.mean, c.theta_hat.sd),
                       fmt::format("{:.4f} ({:.5f})", c.theory_se.mean, c.theory_se.sd),
                       fmt::format("{:.4f} ({:.4f})", c.bootstrap_se.mean, c.bootstrap_se.sd), c.coverage_wald,
                       c.coverage_percentile);
  }
  out += "cov. I: Wald interval from the theoretical SE; cov. II: bootstrap percentile interval\n";
  return out;
}

std::string StudySummary::replicates_csv() const {
  std::string out = "replicate,component,ok,theta_mean,theory_se,bootstrap_se,wald_covers,percentile_covers,map_r\n";
  const auto labels = component_labels(scenario.component_count());
  for (const auto& rep : replicates) {
    if (!rep.ok) {
      out += fmt::format("{},,0,,,,,,\n", rep.replicate);
      continue;
    }
    for (std::size_t c = 0; c < rep.components.size(); ++c) {
      const auto& r = rep.components[c];
      out += fmt::format("{},{},1,{:.17g},{:.17g},{:.17g},{},{},{:.17g}\n", rep.replicate, labels[c], r.theta_mean,
                         r.theory_se, r.bootstrap_se, int(r.wald_covers), int(r.percentile_covers), r.map_correlation);
    }
  }
  return out;
}

}  // namespace sscnet

// sscnet command-line driver: simulation, sSC estimation, delta-method
// variances, hypothesis tests, ICA reliability and a combined report.
//
// Exit codes: 0 success, 2 usage or configuration, 3 data format,
// 4 numerical failure, 1 anything unexpected.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sscnet/error.hpp"
#include "sscnet/ica.hpp"
#include "sscnet/inference.hpp"
#include "sscnet/io.hpp"
#include "sscnet/parallel.hpp"
#include "sscnet/reliability.hpp"
#include "sscnet/resampling.hpp"
#include "sscnet/rng.hpp"
#include "sscnet/simulator.hpp"
#include "sscnet/spatial_variance.hpp"
#include "sscnet/ssc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sscnet;

namespace {

constexpr const char* kVersion = "1.0.0";

struct RunConfig {
  std::string command;
  fs::path outdir = "sscnet-out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned threads = 0;
  fs::path scenario;
  fs::path manifest;
  fs::path partition;
  long long replicates = -1;  // -1: command default
  bool emit_dataset = false;
  std::string level = "voxel";
  std::string variance = "bootstrap";
  double alpha = 0.05;
  long long components = -1;  // -1: one per declared mask
  long long permutations = 9999;
  std::string family = "exponential";

  void validate() const;
};

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::ConfigError, message); }

void RunConfig::validate() const {
  const bool needs_manifest = command == "estimate" || command == "variance" || command == "test" ||
                              command == "reliability";
  if (command == "simulate" && scenario.empty()) config_error("simulate needs --scenario");
  if (needs_manifest && manifest.empty()) config_error(command + " needs --manifest");
  if (replicates != -1 && replicates < 1) config_error(fmt::format("--replicates must be >= 1, got {}", replicates));
  if (level != "voxel" && level != "region") config_error("--level must be voxel or region, got '" + level + "'");
  if (!(alpha > 0.0 && alpha < 1.0)) config_error(fmt::format("--alpha must lie in (0, 1), got {}", alpha));
  if (components != -1 && components < 1) config_error("--components must be >= 1");
  if (permutations < 1) config_error("--permutations must be >= 1");
  try {
    parse_variance_source(variance);
    parse_family(family);
  } catch (const Error& e) {
    config_error(e.message());
  }
}

// ---------------------------------------------------------------------------
// Config file: flat JSON object whose keys mirror the long flags with
// underscores. Flags given on the command line win.

using GivenFlags = std::multimap<std::string, const CLI::Option*>;

bool flag_given(const GivenFlags& flags, const std::string& key) {
  const auto [lo, hi] = flags.equal_range(key);
  for (auto it = lo; it != hi; ++it) {
    if (it->second->count() > 0) return true;
  }
  return false;
}

void apply_config(const fs::path& path, RunConfig& cfg, const GivenFlags& flags) {
  json j;
  try {
    j = io::read_json(path);
  } catch (const Error& e) {
    config_error(e.message());
  }
  if (!j.is_object()) config_error(path.generic_string() + ": expected a JSON object");
  const fs::path base = path.parent_path();
  const auto as_path = [&](const json& v) {
    const fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  for (const auto& [key, value] : j.items()) {
    static const std::set<std::string> known{"seed",     "threads", "outdir",  "scenario", "replicates",
                                             "emit_dataset", "manifest", "level", "partition", "variance",
                                             "alpha",    "components", "permutations", "family"};
    if (!known.count(key)) config_error(path.generic_string() + ": unknown key '" + key + "'");
    if (flag_given(flags, key)) continue;
    try {
      if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
        cfg.seed_given = true;
      } else if (key == "threads") cfg.threads = value.get<unsigned>();
      else if (key == "outdir") cfg.outdir = as_path(value);
      else if (key == "scenario") cfg.scenario = as_path(value);
      else if (key == "replicates") cfg.replicates = value.get<long long>();
      else if (key == "emit_dataset") cfg.emit_dataset = value.get<bool>();
      else if (key == "manifest") cfg.manifest = as_path(value);
      else if (key == "level") cfg.level = value.get<std::string>();
      else if (key == "partition") cfg.partition = as_path(value);
      else if (key == "variance") cfg.variance = value.get<std::string>();
      else if (key == "alpha") cfg.alpha = value.get<double>();
      else if (key == "components") cfg.components = value.get<long long>();
      else if (key == "permutations") cfg.permutations = value.get<long long>();
      else if (key == "family") cfg.family = value.get<std::string>();
    } catch (const json::exception&) {
      config_error(path.generic_string() + ": bad value for '" + key + "'");
    }
  }
}

int exit_code(ErrorCode code) {
  if (code == ErrorCode::ConfigError || code == ErrorCode::InvalidArgument) return 2;
  if (is_numerical(code)) return 4;
  return 3;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

std::string fixed(double v, int digits = 4) { return std::isfinite(v) ? fmt::format("{:.{}f}", v, digits) : "NA"; }

// ---------------------------------------------------------------------------
// Per-subject estimates shared by estimate, variance, test and reliability.

struct ComponentEstimates {
  std::string label;
  std::optional<ComponentMask> mask;
  std::string error;
  std::vector<SscEstimate> subjects;
  std::vector<double> delta_variance;

  bool ok() const { return error.empty(); }
  std::vector<double> theta() const {
    std::vector<double> out;
    for (const auto& e : subjects) out.push_back(e.theta_hat);
    return out;
  }
};

std::vector<ComponentEstimates> estimate_components(const io::LoadedStudy& study, Level level,
                                                    const std::optional<std::vector<int>>& partition) {
  std::vector<ComponentEstimates> out;
  for (const auto& decl : study.masks) {
    ComponentEstimates c;
    c.label = decl.label;
    try {
      c.mask = decl.build(study.grid.size());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MaskTooSmall) throw;
      c.error = e.what();
      out.push_back(std::move(c));
      continue;
    }
    std::optional<RegionPartition> regions;
    if (level == Level::Region) regions.emplace(c.label, *partition, *c.mask);
    c.subjects.resize(study.subjects.size());
    parallel_for(study.subjects.size(), [&](std::size_t i) {
      const auto& counts = study.subjects[i].counts;
      c.subjects[i] = level == Level::Voxel ? estimate_ssc(counts, *c.mask) : estimate_ssc_region(counts, *regions);
    });
    out.push_back(std::move(c));
  }
  return out;
}

struct SubjectVariogram {
  SemivariogramFit fit;
  std::vector<std::string> warnings;
};

// One semivariogram per subject, fitted to counts detrended by every usable
// mask, then the delta-method variance of each component.
std::vector<SubjectVariogram> add_delta_variance(const io::LoadedStudy& study, std::vector<ComponentEstimates>& comps,
                                                 const RunConfig& cfg) {
  std::vector<ComponentMask> masks;
  for (const auto& c : comps) {
    if (c.ok()) masks.push_back(*c.mask);
  }
  const VariogramFamily family = parse_family(cfg.family);
  const LagSampler sampler(study.grid,
                           VariogramOptions{SimScenario{}.lag_edges, 2'000'000, derive_seed(cfg.seed, {stream::variogram})});
  for (auto& c : comps) {
    if (c.ok()) c.delta_variance.assign(study.subjects.size(), 0.0);
  }
  std::vector<SubjectVariogram> fits(study.subjects.size());
  parallel_for(study.subjects.size(), [&](std::size_t i) {
    const auto& counts = study.subjects[i].counts;
    fits[i].fit = fit_semivariogram(sampler.accumulate(detrended_counts(counts, masks)), family);
    for (auto& c : comps) {
      if (!c.ok()) continue;
      const auto field = build_covariance(counts, study.grid, fits[i].fit.model, *c.mask);
      if (field.repaired) {
        fits[i].warnings.push_back(fmt::format("{} / {}: covariance repaired (min eigenvalue {:.3g})",
                                               study.subjects[i].subject_id, c.label, field.min_eigenvalue.value_or(0.0)));
      }
      c.delta_variance[i] = delta_variance(*c.mask, counts, field).variance;
    }
  });
  return fits;
}

std::vector<std::string> group_order(const io::LoadedStudy& study) {
  std::vector<std::string> groups;
  for (const auto& s : study.subjects) {
    if (std::find(groups.begin(), groups.end(), s.group) == groups.end()) groups.push_back(s.group);
  }
  return groups;
}

SubjectEstimates subject_estimates(const io::LoadedStudy& study, const ComponentEstimates& c,
                                   const std::optional<std::string>& group) {
  SubjectEstimates e;
  e.component = c.label;
  e.group = group.value_or("all");
  for (std::size_t i = 0; i < study.subjects.size(); ++i) {
    if (group && study.subjects[i].group != *group) continue;
    e.subjects.push_back(study.subjects[i].subject_id);
    e.theta.push_back(c.subjects[i].theta_hat);
    if (!c.delta_variance.empty()) e.delta_variance.push_back(c.delta_variance[i]);
  }
  return e;
}

io::LoadedStudy load(const RunConfig& cfg, bool with_fmri) {
  auto manifest = io::Manifest::load(cfg.manifest);
  if (!cfg.partition.empty()) manifest.partition = cfg.partition;
  return io::load_study(manifest, with_fmri);
}

// ---------------------------------------------------------------------------
// simulate

SimScenario load_scenario(const RunConfig& cfg) {
  json j;
  try {
    j = io::read_json(cfg.scenario);
  } catch (const Error& e) {
    config_error(e.message());
  }
  SimScenario sc;
  try {
    sc = SimScenario::from_json(j);
  } catch (const Error& e) {
    config_error(cfg.scenario.generic_string() + ": " + e.message());
  }
  if (cfg.replicates != -1) sc.replicates = std::size_t(cfg.replicates);
  if (cfg.seed_given) sc.seed = cfg.seed;
  return sc;
}

// Replicate 0 of the scenario as an on-disk study; subjects alternate
// between groups A and B, which share one generating model.
void emit_dataset(const SimScenario& sc, const CountGenerator& generator, const fs::path& dir) {
  const auto grid = scenario_grid(sc);
  const auto masks = scenario_masks(sc);
  const auto data = simulate_replicate(sc, generator, 0, true);
  io::write_text(dir / "grid.csv", io::grid_csv(grid));
  io::write_text(dir / "masks.csv", io::masks_csv(masks, grid));

  // 2 x 2 blocks as a coarse parcellation for region-level runs.
  std::string partition = "voxel_id,region\n";
  const int bx = (sc.nx + 1) / 2;
  for (int y = 0; y < sc.ny; ++y) {
    for (int x = 0; x < sc.nx; ++x) partition += fmt::format("{},{}\n", y * sc.nx + x, (y / 2) * bx + x / 2);
  }
  io::write_text(dir / "partition.csv", partition);

  json subjects = json::array();
  for (std::size_t i = 0; i < sc.subjects; ++i) {
    const std::string id = fmt::format("sub{:02}", i + 1);
    io::write_counts(dir / "counts" / (id + ".csv"), data.counts[i], grid);
    io::write_text(dir / "fmri" / (id + ".csv"), io::fmri_csv(data.fmri[i], grid));
    subjects.push_back({{"id", id},
                        {"group", i % 2 == 0 ? "A" : "B"},
                        {"counts", "counts/" + id + ".csv"},
                        {"fmri", "fmri/" + id + ".csv"}});
  }
  write_json(dir / "manifest.json",
             {{"grid", "grid.csv"}, {"masks", "masks.csv"}, {"partition", "partition.csv"}, {"subjects", subjects}});
}

void cmd_simulate(const RunConfig& cfg) {
  const SimScenario sc = load_scenario(cfg);
  const CountGenerator generator(sc);
  if (cfg.emit_dataset) emit_dataset(sc, generator, cfg.outdir / "dataset");
  const auto summary = run_study(sc, generator);
  io::write_text(cfg.outdir / "report" / "simulation.txt", summary.render());
  write_json(cfg.outdir / "report" / "simulation.json", summary.to_json());
  io::write_text(cfg.outdir / "report" / "simulation_replicates.csv", summary.replicates_csv());
  std::cout << summary.render();
  for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------
// estimate

json component_json(const io::LoadedStudy& study, const ComponentEstimates& c, const std::vector<std::string>& groups) {
  json j{{"component", c.label}};
  if (!c.ok()) {
    j["status"] = "error";
    j["error"] = c.error;
    return j;
  }
  j["status"] = "ok";
  j["voxels"] = c.mask->size();
  j["subjects"] = json::array();
  for (std::size_t i = 0; i < c.subjects.size(); ++i) {
    json s{{"subject", study.subjects[i].subject_id},
           {"group", study.subjects[i].group},
           {"theta_hat", c.subjects[i].theta_hat},
           {"numerator", c.subjects[i].numerator},
           {"denominator", c.subjects[i].denominator}};
    if (!c.delta_variance.empty()) s["delta_variance"] = c.delta_variance[i];
    j["subjects"].push_back(s);
  }
  j["groups"] = json::array();
  for (const auto& g : groups) {
    const auto e = subject_estimates(study, c, g);
    j["groups"].push_back({{"group", g},
                           {"n", e.theta.size()},
                           {"mean", mean_of(e.theta)},
                           {"sd", e.theta.size() > 1 ? std::sqrt(sample_variance(e.theta)) : 0.0}});
  }
  return j;
}

std::string estimates_table(const io::LoadedStudy& study, const std::vector<ComponentEstimates>& comps,
                            const std::vector<std::string>& groups, Level level) {
  std::string out = fmt::format("sSC estimates ({} level), mean (SD) over subjects\n", to_string(level));
  out += fmt::format("{:<12}", "component");
  for (const auto& g : groups) {
    const auto n = std::count_if(study.subjects.begin(), study.subjects.end(), [&](const auto& s) { return s.group == g; });
    out += fmt::format("{:>24}", fmt::format("{} (n={})", g, n));
  }
  out += "\n";
  for (const auto& c : comps) {
    out += fmt::format("{:<12}", c.label);
    if (!c.ok()) {
      out += "  not estimated: " + c.error + "\n";
      continue;
    }
    for (const auto& g : groups) {
      const auto t = subject_estimates(study, c, g).theta;
      out += fmt::format("{:>24}", fmt::format("{} ({})", fixed(mean_of(t)),
                                                t.size() > 1 ? fixed(std::sqrt(sample_variance(t))) : "NA"));
    }
    out += "\n";
  }
  return out;
}

void cmd_estimate(const RunConfig& cfg) {
  const auto study = load(cfg, false);
  const Level level = cfg.level == "region" ? Level::Region : Level::Voxel;
  if (level == Level::Region && !study.partition) config_error("--level region needs a partition");
  const auto comps = estimate_components(study, level, study.partition);
  const auto groups = group_order(study);

  json j{{"level", std::string(to_string(level))}, {"components", json::array()}};
  std::string csv = "subject,group,component,level,theta_hat\n";
  for (const auto& c : comps) {
    j["components"].push_back(component_json(study, c, groups));
    for (std::size_t i = 0; i < c.subjects.size(); ++i) {
      csv += fmt::format("{},{},{},{},{:.17g}\n", study.subjects[i].subject_id, study.subjects[i].group, c.label,
                         to_string(level), c.subjects[i].theta_hat);
    }
    if (!c.ok()) std::cerr << "warning: component " << c.label << ": " << c.error << "\n";
  }
  const auto table = estimates_table(study, comps, groups, level);
  write_json(cfg.outdir / "estimates" / "estimates.json", j);
  io::write_text(cfg.outdir / "estimates" / "estimates.csv", csv);
  io::write_text(cfg.outdir / "estimates" / "table.txt", table);
  std::cout << table;
}

// ---------------------------------------------------------------------------
// variance

void cmd_variance(const RunConfig& cfg) {
  const auto study = load(cfg, false);
  auto comps = estimate_components(study, Level::Voxel, std::nullopt);
  const auto fits = add_delta_variance(study, comps, cfg);
  const auto groups = group_order(study);

  json j{{"family", cfg.family}, {"components", json::array()}, {"variograms", json::array()}, {"warnings", json::array()}};
  std::string csv = "subject,group,component,theta_hat,delta_variance,delta_se\n";
  for (const auto& c : comps) {
    j["components"].push_back(component_json(study, c, groups));
    for (std::size_t i = 0; c.ok() && i < c.subjects.size(); ++i) {
      csv += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g}\n", study.subjects[i].subject_id, study.subjects[i].group,
                         c.label, c.subjects[i].theta_hat, c.delta_variance[i], std::sqrt(c.delta_variance[i]));
    }
  }
  std::string vg = "subject,family,nugget,partial_sill,range,residual,degenerate\n";
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& m = fits[i].fit.model;
    vg += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", study.subjects[i].subject_id, to_string(m.family),
                      m.nugget, m.partial_sill, m.range, fits[i].fit.residual, int(fits[i].fit.degenerate));
    j["variograms"].push_back({{"subject", study.subjects[i].subject_id},
                               {"nugget", m.nugget},
                               {"partial_sill", m.partial_sill},
                               {"range", m.range},
                               {"residual", fits[i].fit.residual},
                               {"degenerate", fits[i].fit.degenerate}});
    for (const auto& w : fits[i].warnings) j["warnings"].push_back(w);
  }
  write_json(cfg.outdir / "estimates" / "variance.json", j);
  io::write_text(cfg.outdir / "estimates" / "variance.csv", csv);
  io::write_text(cfg.outdir / "estimates" / "variograms.csv", vg);

  std::string table = "Delta-method standard errors, mean over subjects\n";
  table += fmt::format("{:<12}{:>6}{:>12}{:>12}{:>12}\n", "component", "n", "theta_hat", "delta SE", "SD");
  for (const auto& c : comps) {
    if (!c.ok()) {
      table += fmt::format("{:<12}  not estimated: {}\n", c.label, c.error);
      continue;
    }
    const auto t = c.theta();
    table += fmt::format("{:<12}{:>6}{:>12}{:>12}{:>12}\n", c.label, t.size(), fixed(mean_of(t)),
                         fixed(std::sqrt(mean_of(c.delta_variance))), t.size() > 1 ? fixed(std::sqrt(sample_variance(t))) : "NA");
  }
  io::write_text(cfg.outdir / "estimates" / "variance.txt", table);
  std::cout << table;
}

// ---------------------------------------------------------------------------
// test

void cmd_test(const RunConfig& cfg) {
  const auto study = load(cfg, false);
  auto comps = estimate_components(study, Level::Voxel, std::nullopt);
  InferenceOptions base;
  base.variance = parse_variance_source(cfg.variance);
  base.alpha = cfg.alpha;
  base.replicates = cfg.replicates == -1 ? 1000 : std::size_t(cfg.replicates);
  if (base.variance == VarianceSource::Delta) add_delta_variance(study, comps, cfg);

  std::vector<const ComponentEstimates*> usable;
  json skipped = json::array();
  for (const auto& c : comps) {
    if (c.ok()) usable.push_back(&c);
    else skipped.push_back({{"test", "all"}, {"component", c.label}, {"reason", c.error}});
  }
  const auto groups = group_order(study);

  std::vector<TestReport> reports;
  std::uint64_t key = 0;
  const auto next = [&] {
    InferenceOptions o = base;
    o.seed = derive_seed(cfg.seed, {key++});
    return o;
  };
  const auto attempt = [&](const std::string& what, auto&& run) {
    try {
      reports.push_back(run());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TooFewSubjects) throw;
      skipped.push_back({{"test", what}, {"reason", e.what()}});
    }
  };
  for (const auto* c : usable) {
    const auto o = next();
    attempt("one-sample " + c->label, [&] { return test_ssc_positive(subject_estimates(study, *c, std::nullopt), o); });
  }
  for (std::size_t a = 0; a < usable.size(); ++a) {
    for (std::size_t b = a + 1; b < usable.size(); ++b) {
      const auto o = next();
      attempt("between-network " + usable[a]->label + " " + usable[b]->label, [&] {
        return test_between_networks(subject_estimates(study, *usable[a], std::nullopt),
                                     subject_estimates(study, *usable[b], std::nullopt), o);
      });
    }
  }
  for (const auto* c : usable) {
    for (std::size_t a = 0; a < groups.size(); ++a) {
      for (std::size_t b = a + 1; b < groups.size(); ++b) {
        const auto o = next();
        attempt("between-group " + c->label, [&] {
          return test_between_groups(subject_estimates(study, *c, groups[a]), subject_estimates(study, *c, groups[b]), o);
        });
      }
    }
  }
  adjust_p_values(reports);

  json j{{"variance", std::string(to_string(base.variance))},
         {"alpha", base.alpha},
         {"replicates", base.replicates},
         {"seed", cfg.seed},
         {"tests", json::array()},
         {"skipped", skipped}};
  for (const auto& r : reports) j["tests"].push_back(to_json(r));
  std::string table = render_tests(reports);
  for (const auto& s : skipped) table += "skipped: " + s.value("test", std::string()) + " " + s["reason"].get<std::string>() + "\n";
  write_json(cfg.outdir / "tests" / "tests.json", j);
  io::write_text(cfg.outdir / "tests" / "tests.txt", table);
  std::cout << table;
}

// ---------------------------------------------------------------------------
// reliability

void cmd_reliability(const RunConfig& cfg) {
  const auto study = load(cfg, true);
  auto comps = estimate_components(study, Level::Voxel, std::nullopt);

  ReliabilityOptions options;
  options.components = cfg.components == -1 ? study.masks.size() : std::size_t(cfg.components);
  options.replicates = cfg.replicates == -1 ? 100 : std::size_t(cfg.replicates);
  options.seed = cfg.seed;
  std::vector<Eigen::MatrixXd> fmri;
  for (const auto& s : study.subjects) fmri.push_back(*s.fmri);
  const auto report = reliability_index(fmri, options);

  // Each declared network is paired with the component whose map it
  // resembles most.
  json matches = json::array();
  std::vector<std::string> labels;
  std::vector<double> theta, rel;
  std::string match_table = fmt::format("{:<12}{:>10}{:>10}{:>12}{:>10}\n", "network", "component", "|r|", "theta_hat", "R");
  for (const auto& c : comps) {
    if (!c.ok()) continue;
    Eigen::MatrixXd indicator = Eigen::MatrixXd::Zero(1, Eigen::Index(study.grid.size()));
    for (auto v : c.mask->members()) indicator(0, Eigen::Index(v)) = 1.0;
    const auto m = match_maps(indicator, report.maps);
    const auto& rc = report.components[m.matched.front()];
    const double t = mean_of(c.theta());
    labels.push_back(c.label);
    theta.push_back(t);
    rel.push_back(rc.index);
    matches.push_back({{"network", c.label}, {"component", rc.label}, {"abs_r", m.matched_abs_r.front()}, {"theta_hat", t}, {"R", rc.index}});
    match_table += fmt::format("{:<12}{:>10}{:>10}{:>12}{:>10}\n", c.label, rc.label, fixed(m.matched_abs_r.front(), 3),
                               fixed(t), fixed(rc.index));
  }

  json j = report.to_json();
  j["matches"] = matches;
  std::string text = report.render() + "\nNetworks matched to components\n" + match_table;
  if (labels.size() >= 3) {
    const auto assoc = ssc_reliability_association(theta, rel, std::size_t(cfg.permutations), cfg.seed);
    j["association"] = assoc.to_json();
    if (assoc.spearman) {
      text += fmt::format("sSC vs R: Spearman {} (p = {}), Pearson {} (p = {}), {} permutations\n", fixed(*assoc.spearman),
                          format_p(*assoc.spearman_p), fixed(*assoc.pearson), format_p(*assoc.pearson_p),
                          assoc.permutations);
    }
    for (const auto& w : assoc.warnings) text += "association: " + w + "\n";
  } else {
    j["association"] = nullptr;
    text += "sSC vs R: fewer than 3 matched networks, association not computed\n";
  }

  std::string maps = "component,voxel_id,loading\n";
  for (Eigen::Index c = 0; c < report.maps.rows(); ++c) {
    for (Eigen::Index v = 0; v < report.maps.cols(); ++v) {
      maps += fmt::format("{},{},{:.17g}\n", report.components[std::size_t(c)].label,
                          study.grid.external_id(VoxelId(v)), report.maps(c, v));
    }
  }
  write_json(cfg.outdir / "reliability" / "reliability.json", j);
  io::write_text(cfg.outdir / "reliability" / "reliability.txt", text);
  io::write_text(cfg.outdir / "reliability" / "maps.csv", maps);
  io::write_text(cfg.outdir / "reliability" / "ssc_vs_reliability.csv", association_csv(labels, theta, rel));
  std::cout << text;
}

// ---------------------------------------------------------------------------
// report

void cmd_report(const RunConfig& cfg) {
  struct Section {
    const char* title;
    fs::path file;
  };
  const std::vector<Section> sections{
      {"Simulation", cfg.outdir / "report" / "simulation.txt"},
      {"Estimates", cfg.outdir / "estimates" / "table.txt"},
      {"Delta-method variances", cfg.outdir / "estimates" / "variance.txt"},
      {"Tests", cfg.outdir / "tests" / "tests.txt"},
      {"Reliability", cfg.outdir / "reliability" / "reliability.txt"},
  };
  std::string out;
  json included = json::array();
  for (const auto& s : sections) {
    if (!fs::exists(s.file)) continue;
    out += fmt::format("== {} ==\n{}\n", s.title, io::read_text(s.file));
    included.push_back(fs::relative(s.file, cfg.outdir).generic_string());
  }
  if (included.empty()) config_error("nothing to report in " + cfg.outdir.generic_string());
  const fs::path scatter = cfg.outdir / "reliability" / "ssc_vs_reliability.csv";
  if (fs::exists(scatter)) {
    io::write_text(cfg.outdir / "report" / "ssc_vs_reliability.csv", io::read_text(scatter));
    included.push_back(fs::relative(scatter, cfg.outdir).generic_string());
  }
  io::write_text(cfg.outdir / "report" / "report.txt", out);
  write_json(cfg.outdir / "report" / "report.json", {{"sections", included}});
  std::cout << out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sSC estimation, inference and reliability for structural connectivity of functional networks"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig cfg;
  fs::path config_path;
  GivenFlags flags;
  std::string outdir = cfg.outdir.string();
  flags.emplace("seed", app.add_option("--seed", cfg.seed, "Master seed for every random stream"));
  flags.emplace("threads", app.add_option("--threads", cfg.threads, "Worker threads (0 = all cores)"));
  flags.emplace("outdir", app.add_option("--outdir", outdir, "Output directory")->capture_default_str());
  app.add_option("--config", config_path, "JSON file with option defaults");

  std::string scenario, manifest, partition;
  const auto replicates = [&](CLI::App* sub, const char* help) {
    flags.emplace("replicates", sub->add_option("--replicates", cfg.replicates, help));
  };
  const auto manifest_opt = [&](CLI::App* sub) {
    flags.emplace("manifest", sub->add_option("--manifest", manifest, "Study manifest (JSON)"));
  };

  auto* simulate = app.add_subcommand("simulate", "Run the simulation study");
  flags.emplace("scenario", simulate->add_option("--scenario", scenario, "Scenario JSON"));
  replicates(simulate, "Simulation replicates (overrides the scenario)");
  flags.emplace("emit_dataset", simulate->add_flag("--emit-dataset", cfg.emit_dataset,
                                                   "Also write replicate 0 as a study under <outdir>/dataset"));

  auto* estimate = app.add_subcommand("estimate", "Per-subject sSC estimates");
  manifest_opt(estimate);
  flags.emplace("level", estimate->add_option("--level", cfg.level, "voxel or region")->capture_default_str());
  flags.emplace("partition", estimate->add_option("--partition", partition, "Region partition CSV"));

  auto* variance = app.add_subcommand("variance", "Semivariogram fits and delta-method variances");
  manifest_opt(variance);
  flags.emplace("family", variance->add_option("--family", cfg.family, "exponential, spherical or gaussian")->capture_default_str());

  auto* test = app.add_subcommand("test", "One-sample, between-network and between-group tests");
  manifest_opt(test);
  flags.emplace("variance", test->add_option("--variance", cfg.variance, "delta, bootstrap or empirical")->capture_default_str());
  flags.emplace("alpha", test->add_option("--alpha", cfg.alpha, "Significance level")->capture_default_str());
  replicates(test, "Bootstrap and permutation replicates (default 1000)");
  flags.emplace("family", test->add_option("--family", cfg.family, "Semivariogram family for --variance delta"));

  auto* reliability = app.add_subcommand("reliability", "Bootstrap group-ICA reliability index");
  manifest_opt(reliability);
  flags.emplace("components", reliability->add_option("--components", cfg.components, "ICA components (default: one per network)"));
  replicates(reliability, "Bootstrap extractions (default 100)");
  flags.emplace("permutations", reliability->add_option("--permutations", cfg.permutations, "Permutations for the sSC-R association")->capture_default_str());

  app.add_subcommand("report", "Collect the tables written by earlier commands");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    cfg.command = app.get_subcommands().front()->get_name();
    cfg.outdir = outdir;
    cfg.scenario = scenario;
    cfg.manifest = manifest;
    cfg.partition = partition;
    cfg.seed_given = flag_given(flags, "seed");
    if (!config_path.empty()) apply_config(config_path, cfg, flags);
    cfg.validate();
    set_thread_count(cfg.threads);

    const std::string started = utc_now();
    if (cfg.command == "simulate") cmd_simulate(cfg);
    else if (cfg.command == "estimate") cmd_estimate(cfg);
    else if (cfg.command == "variance") cmd_variance(cfg);
    else if (cfg.command == "test") cmd_test(cfg);
    else if (cfg.command == "reliability") cmd_reliability(cfg);
    else cmd_report(cfg);

    // The only file with timestamps; one entry per command run in outdir.
    const fs::path meta_path = cfg.outdir / "run_metadata.json";
    json meta = json::object();
    if (fs::exists(meta_path)) {
      try {
        meta = io::read_json(meta_path);
      } catch (const Error&) {
      }
      if (!meta.is_object()) meta = json::object();
    }
    meta["version"] = kVersion;
    meta["runs"][cfg.command] = {{"seed", cfg.seed},
                                 {"threads", thread_count()},
                                 {"started_utc", started},
                                 {"finished_utc", utc_now()},
                                 {"argv", std::vector<std::string>(argv, argv + argc)}};
    write_json(meta_path, meta);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

// Acceptance checks: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset. Exit status is 1 if any check fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <fmt/format.h>

#include "sscnet/ica.hpp"
#include "sscnet/inference.hpp"
#include "sscnet/reliability.hpp"
#include "sscnet/resampling.hpp"
#include "sscnet/rng.hpp"
#include "sscnet/simulator.hpp"
#include "sscnet/spatial_variance.hpp"
#include "sscnet/ssc.hpp"

namespace fs = std::filesystem;
using namespace sscnet;

namespace {

struct Check {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Exact binomial 95% acceptance region for the number of rejections.
std::pair<int, int> binomial_region(int runs, double alpha) {
  const boost::math::binomial_distribution<double> b(runs, alpha);
  return {int(boost::math::quantile(b, 0.025)), int(boost::math::quantile(boost::math::complement(b, 0.025)))};
}

// ---------------------------------------------------------------------------

Check criterion1() {
  const auto t0 = Clock::now();
  const auto sc = SimScenario::standard_design(NoiseLevel::Low, 20);
  const auto masks = scenario_masks(sc);
  const std::size_t v = 100;
  PairField p = PairField::constant(v, 0.25);
  const double p_in[2] = {0.5, 0.75};
  for (std::size_t c = 0; c < 2; ++c) {
    const auto m = masks[c].members();
    for (std::size_t a = 0; a < m.size(); ++a) {
      for (std::size_t b = a + 1; b < m.size(); ++b) p.values[pair_to_index(m[a], m[b], v)] = p_in[c];
    }
  }
  const double t1 = true_ssc_from_probabilities(p, masks[0]);
  const double t2 = true_ssc_from_probabilities(p, masks[1]);
  const double secs = seconds_since(t0);
  // Closed form for a homogeneous component of size 12.
  const auto closed = [&](double pin) {
    const double bar = (11.0 * pin + 88.0 * 0.25) / 99.0;
    return (pin - bar) / (1.0 - bar);
  };
  const bool ok = fmt::format("{:.4f}", t1) == "0.3077" && fmt::format("{:.4f}", t2) == "0.6400" &&
                  std::abs(t1 - closed(0.5)) < 1e-12 && std::abs(t2 - closed(0.75)) < 1e-12 && secs < 1.0;
  return {ok, fmt::format("theta = {:.4f}, {:.4f} (targets 0.3077, 0.6400), {:.3f} s", t1, t2, secs)};
}

// Criteria 2 to 5 share one study run.
struct StudyChecks {
  Check c2, c3, c4, c5;
};

StudyChecks criteria2to5() {
  const auto t0 = Clock::now();
  auto sc = SimScenario::standard_design(NoiseLevel::Low, 20);
  sc.replicates = 100;
  sc.seed = 7;
  const auto s = run_study(sc);
  const double secs = seconds_since(t0);
  const auto& a = s.components[0];
  const auto& b = s.components[1];
  StudyChecks out;
  out.c2.pass = std::abs(a.theta_hat.mean - 0.3077) <= 0.004 && std::abs(b.theta_hat.mean - 0.64) <= 0.005 &&
                a.theta_hat.sd >= 0.006 && a.theta_hat.sd <= 0.013 && secs < 600.0;
  out.c2.detail = fmt::format("mean theta_hat {:.4f}, {:.4f}; SD(theta_hat_1) {:.4f}; {} of {} replicates; {:.0f} s",
                              a.theta_hat.mean, b.theta_hat.mean, a.theta_hat.sd, s.completed, sc.replicates, secs);

  const double boot1 = a.bootstrap_se.mean / a.theta_hat.sd;
  const double boot2 = b.bootstrap_se.mean / b.theta_hat.sd;
  out.c3.pass = std::abs(boot1 - 1.0) <= 0.25;
  out.c3.detail = fmt::format("IC1 bootstrap SE / SD = {:.4f} / {:.4f} = {:.3f} (IC2: {:.3f})", a.bootstrap_se.mean,
                              a.theta_hat.sd, boot1, boot2);

  const double delta1 = a.theory_se.mean / a.theta_hat.sd;
  const double delta2 = b.theory_se.mean / b.theta_hat.sd;
  out.c4.pass = delta1 >= 0.7 && delta1 <= 1.1;
  out.c4.detail = fmt::format("IC1 theory SE / SD = {:.4f} / {:.4f} = {:.3f} (IC2: {:.3f})", a.theory_se.mean,
                              a.theta_hat.sd, delta1, delta2);

  out.c5.pass = a.coverage_percentile >= 88.0 && a.coverage_percentile <= 99.0 && a.coverage_wald >= 85.0 &&
                a.coverage_wald <= 98.0;
  out.c5.detail = fmt::format("IC1 coverage percentile {:.1f}%, Wald {:.1f}% (IC2: {:.1f}%, {:.1f}%)",
                              a.coverage_percentile, a.coverage_wald, b.coverage_percentile, b.coverage_wald);
  return out;
}

// Literal double loop over the component's pairs.
double theta_by_loop(const StreamCounts& counts, const std::vector<VoxelId>& members) {
  const std::size_t v = counts.voxel_count();
  std::vector<double> bar(v, 0.0);
  for (std::size_t j = 0; j < v; ++j) {
    for (std::size_t k = 0; k < v; ++k) {
      if (j != k) bar[j] += counts.count(VoxelId(j), VoxelId(k));
    }
    bar[j] /= double(v - 1);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      const double base = 0.5 * (bar[members[a]] + bar[members[b]]);
      num += counts.count(members[a], members[b]) - base;
      den += counts.streams_per_seed() - base;
    }
  }
  return num / den;
}

Check criterion6() {
  std::mt19937_64 rng(6);
  double worst = 0.0, worst_loop = 0.0;
  int instances = 0;
  for (; instances < 1000; ++instances) {
    const std::size_t v = std::uniform_int_distribution<std::size_t>(3, 50)(rng);
    const std::uint32_t n = std::uniform_int_distribution<std::uint32_t>(1, 200)(rng);
    std::vector<VoxelId> ids(v);
    for (std::size_t i = 0; i < v; ++i) ids[i] = VoxelId(i);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(std::uniform_int_distribution<std::size_t>(2, v - 1)(rng));
    std::sort(ids.begin(), ids.end());
    const ComponentMask mask("m", ids, v);
    std::vector<std::uint32_t> dense(v * (v - 1) / 2);
    const double sparsity = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
    for (auto& x : dense) {
      x = std::uniform_real_distribution<double>()(rng) < sparsity ? 0 : std::uniform_int_distribution<std::uint32_t>(0, n)(rng);
    }
    const auto counts = StreamCounts::from_dense(v, n, dense);
    const double direct = estimate_ssc(counts, mask).theta_hat;
    const double linear = estimate_ssc_linear(counts, mask).theta_hat;
    const double loop = theta_by_loop(counts, ids);
    const double scale = std::max(std::abs(direct), 1e-300);
    worst = std::max(worst, std::abs(linear - direct) / scale);
    worst_loop = std::max(worst_loop, std::abs(loop - direct) / scale);
  }
  return {worst <= 1e-10 && worst_loop <= 1e-10,
          fmt::format("{} instances; max relative |linear - direct| {:.2e}, |loop - direct| {:.2e}", instances, worst,
                      worst_loop)};
}

Check criterion7() {
  std::string detail;
  bool pass = true;
  for (const SemivariogramModel& model : {SemivariogramModel{VariogramFamily::Exponential, 1.0, 4.0, 1.0},
                                          SemivariogramModel{VariogramFamily::Exponential, 2.0, 5.0, 1.0}}) {
    const auto grid = VoxelGrid::regular_slice(6, 5);
    const std::size_t v = grid.size();
    const std::vector<VoxelId> members{7, 8, 9, 13, 14};
    const ComponentMask mask("m", members, v);
    const std::uint32_t n = 20;
    std::vector<std::uint32_t> dense(v * (v - 1) / 2, 5);
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) dense[pair_to_index(members[a], members[b], v)] = 10;
    }
    const auto counts = StreamCounts::from_dense(v, n, dense);
    const auto field = build_covariance(counts, grid, model, mask);
    const double delta = delta_variance(mask, counts, field).variance;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(field.covariance);
    const Eigen::MatrixXd root =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    const auto form = build_linear_form(mask, v, n);
    if (form.pairs != field.pairs) return {false, "linear form and covariance cover different pairs"};
    Rng rng(derive_seed(7, {std::uint64_t(model.nugget * 10)}));
    std::normal_distribution<double> z;
    const int draws = 100000;
    Eigen::VectorXd e(field.mean.size());
    std::vector<double> x(std::size_t(field.mean.size()));
    double sum = 0.0, sum_sq = 0.0;
    for (int d = 0; d < draws; ++d) {
      for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = z(rng);
      const Eigen::VectorXd draw = field.mean + root * e;
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = draw(Eigen::Index(i));
      const double t = form.numerator(x) / form.denominator(x);
      sum += t;
      sum_sq += t * t;
    }
    const double mc = (sum_sq - sum * sum / draws) / (draws - 1);
    const double ratio = delta / mc;
    pass = pass && std::abs(ratio - 1.0) <= 0.15;
    detail += fmt::format("{}nugget {:g}: delta {:.4e} vs Monte Carlo {:.4e} (ratio {:.3f})", detail.empty() ? "" : "; ",
                          model.nugget, delta, mc, ratio);
  }
  return {pass, detail + ", V = 30, 1e5 draws"};
}

Check criterion8() {
  SimScenario sc;
  sc.nx = 8;
  sc.ny = 8;
  sc.networks = {{0, 1, 2, 8, 9, 10}, {53, 54, 55, 61, 62, 63}};
  const auto masks_of = [](const SimScenario& s) { return scenario_masks(s); };
  const int runs = 200;
  const std::size_t n = 20;
  const auto [lo, hi] = binomial_region(runs, 0.05);

  const auto estimates = [&](const CountGenerator& gen, const ComponentMask& mask, std::uint64_t run,
                             std::uint64_t first, const std::string& group) {
    SubjectEstimates e;
    e.component = mask.label();
    e.group = group;
    const auto counts = gen.draw_batch(run, first, n);
    for (std::size_t i = 0; i < n; ++i) {
      e.subjects.push_back(fmt::format("s{}", i));
      e.theta.push_back(estimate_ssc(counts[i], mask).theta_hat);
    }
    return e;
  };
  const auto options = [](std::uint64_t run) {
    InferenceOptions o;
    o.replicates = 1000;
    o.seed = derive_seed(8, {run});
    return o;
  };

  // theta = 0 everywhere.
  sc.p_in = {0.25, 0.25};
  sc.intensity = {3.0, 3.0};
  const CountGenerator flat(sc);
  const auto flat_masks = masks_of(sc);
  int one = 0;
  for (int r = 0; r < runs; ++r) one += test_ssc_positive(estimates(flat, flat_masks[0], r, 0, "all"), options(r)).reject;

  // Two networks with equal theta measured on the same subjects.
  sc.p_in = {0.5, 0.5};
  const CountGenerator twin(sc);
  const auto twin_masks = masks_of(sc);
  int networks = 0;
  for (int r = 0; r < runs; ++r) {
    const auto counts = twin.draw_batch(r, 0, n);
    SubjectEstimates a, b;
    a.component = "first";
    b.component = "second";
    a.group = b.group = "all";
    for (std::size_t i = 0; i < n; ++i) {
      a.subjects.push_back(fmt::format("s{}", i));
      b.subjects.push_back(fmt::format("s{}", i));
      a.theta.push_back(estimate_ssc(counts[i], twin_masks[0]).theta_hat);
      b.theta.push_back(estimate_ssc(counts[i], twin_masks[1]).theta_hat);
    }
    networks += test_between_networks(a, b, options(r)).reject;
  }

  // Two groups drawn from one model.
  sc.p_in = {0.5, 0.75};
  const CountGenerator shared(sc);
  const auto shared_masks = masks_of(sc);
  int groups = 0;
  for (int r = 0; r < runs; ++r) {
    groups += test_between_groups(estimates(shared, shared_masks[0], r, 0, "A"),
                                  estimates(shared, shared_masks[0], r, n, "B"), options(r))
                  .reject;
  }
  const auto inside = [&](int k) { return k >= lo && k <= hi; };
  return {inside(one) && inside(networks) && inside(groups),
          fmt::format("rejections out of {}: one-sample {}, between-network {}, between-group {}; region [{}, {}]", runs,
                      one, networks, groups, lo, hi)};
}

std::vector<Eigen::MatrixXd> fmri_of(const SimScenario& sc, const Eigen::MatrixXd& sources, std::uint64_t rep) {
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t i = 0; i < sc.subjects; ++i) out.push_back(simulate_fmri(sc, sources, rep, i));
  return out;
}

Check criterion9() {
  // Noiseless sources.
  auto clean = SimScenario::standard_design(NoiseLevel::Low, 20);
  clean.fmri_noise_sd = 0.0;
  ReliabilityOptions ro;
  ro.components = 2;
  ro.replicates = 50;
  ro.seed = 9;
  const auto noiseless = reliability_index(fmri_of(clean, simulate_sources(clean, 0), 0), ro);
  const double r_min = std::min(noiseless.components[0].index, noiseless.components[1].index);

  // Observed equals chance: every bootstrap row is flat.
  std::vector<Eigen::MatrixXd> flat;
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.05, 0.9);
  for (int b = 0; b < 100; ++b) {
    Eigen::MatrixXd m(3, 3);
    for (Eigen::Index l = 0; l < 3; ++l) m.row(l).setConstant(u(rng));
    flat.push_back(m);
  }
  const auto chance = reliability_from_correlations(flat, {"A", "B", "C"});
  double r_abs = 0.0;
  for (const auto& c : chance.components) r_abs = std::max(r_abs, std::abs(c.index));

  // Two real sources extracted with four components.
  auto sc = SimScenario::standard_design(NoiseLevel::Low, 20);
  double gap_min = 1.0, gap_sum = 0.0;
  const int runs = 30;
  for (int run = 0; run < runs; ++run) {
    sc.seed = 900 + std::uint64_t(run);
    const auto sources = simulate_sources(sc, 0);
    ReliabilityOptions o;
    o.components = 4;
    o.replicates = 20;
    o.seed = sc.seed;
    const auto rep = reliability_index(fmri_of(sc, sources, 0), o);
    const auto match = match_maps(sources, rep.maps);
    std::set<std::size_t> real(match.matched.begin(), match.matched.end());
    double strong = 0.0, noise = 0.0;
    for (std::size_t c = 0; c < 4; ++c) (real.count(c) ? strong : noise) += rep.components[c].index;
    const double gap = real.size() == 2 ? strong / 2.0 - noise / 2.0 : 0.0;
    gap_min = std::min(gap_min, gap);
    gap_sum += gap;
  }
  return {r_min >= 0.95 && r_abs <= 0.02 && gap_min > 0.3,
          fmt::format("noiseless min R {:.4f}; chance construction max |R| {:.2e}; strong - noise gap min {:.3f}, "
                      "mean {:.3f} over {} runs",
                      r_min, r_abs, gap_min, gap_sum / runs, runs)};
}

Check criterion10() {
  // Eight networks: within-network connection probability and the share of
  // signal a source carries in the fMRI data rise together.
  SimScenario sc;
  sc.subjects = 20;
  sc.time_points = 100;
  sc.networks.clear();
  const std::vector<std::pair<int, int>> origin{{0, 0}, {4, 0}, {7, 0}, {0, 4}, {4, 4}, {7, 4}, {0, 8}, {4, 8}};
  for (const auto& [ox, oy] : origin) {
    std::vector<VoxelId> net;
    for (int y = 0; y < 2; ++y) {
      for (int x = 0; x < 3; ++x) net.push_back(VoxelId((oy + y) * 10 + ox + x));
    }
    sc.networks.push_back(net);
  }
  const std::size_t q = sc.networks.size();
  sc.p_in.clear();
  sc.intensity.assign(q, 3.0);
  std::vector<double> weight;
  for (std::size_t c = 0; c < q; ++c) {
    sc.p_in.push_back(0.3 + 0.05 * double(c));
    weight.push_back(0.1 * std::pow(8.0, double(c) / double(q - 1)));
  }
  sc.validate();
  const auto masks = scenario_masks(sc);
  const auto probs = pair_probabilities(sc);
  const std::size_t v = sc.voxel_count();

  const int runs = 30;
  int hits = 0;
  double rho_sum = 0.0, worst_p = 0.0;
  for (int run = 0; run < runs; ++run) {
    sc.seed = 1000 + std::uint64_t(run);
    Eigen::MatrixXd sources = simulate_sources(sc, 0);
    for (std::size_t c = 0; c < q; ++c) sources.row(Eigen::Index(c)) *= weight[c];
    ReliabilityOptions o;
    o.components = q;
    o.replicates = 20;
    o.seed = sc.seed;
    const auto rep = reliability_index(fmri_of(sc, sources, 0), o);
    const auto match = match_maps(sources, rep.maps);

    // Independent binomial stream counts.
    std::vector<double> theta(q, 0.0), rel(q);
    std::vector<SubjectEstimates> per_subject(q);
    for (std::size_t i = 0; i < sc.subjects; ++i) {
      Rng rng = make_rng(sc.seed, {stream::counts, i});
      std::vector<std::uint32_t> dense(probs.size());
      for (std::size_t z = 0; z < probs.size(); ++z) {
        dense[z] = std::binomial_distribution<std::uint32_t>(sc.streams_per_seed, probs[z])(rng);
      }
      const auto counts = StreamCounts::from_dense(v, sc.streams_per_seed, dense);
      for (std::size_t c = 0; c < q; ++c) {
        const double t = estimate_ssc(counts, masks[c]).theta_hat;
        theta[c] += t / double(sc.subjects);
        per_subject[c].subjects.push_back(fmt::format("s{}", i));
        per_subject[c].theta.push_back(t);
      }
    }
    // Every component has theta > 0, so each one-sample test should be overwhelming.
    for (std::size_t c = 0; c < q; ++c) {
      per_subject[c].component = masks[c].label();
      InferenceOptions o;
      o.seed = derive_seed(sc.seed, {c});
      worst_p = std::max(worst_p, test_ssc_positive(per_subject[c], o).wald_p.value_or(1.0));
    }
    for (std::size_t c = 0; c < q; ++c) rel[c] = rep.components[match.matched[c]].index;
    const auto assoc = ssc_reliability_association(theta, rel, 999, sc.seed);
    if (assoc.spearman) {
      rho_sum += *assoc.spearman;
      hits += *assoc.spearman > 0.0 && *assoc.spearman_p < 0.05;
    }
  }
  return {hits >= 24 && worst_p < 1e-4,
          fmt::format("Spearman > 0 with p < 0.05 in {} of {} runs (need 24), mean rho {:.3f}; largest one-sample "
                      "p {:.1e}",
                      hits, runs, rho_sum / runs, worst_p)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Check criterion11() {
  const fs::path cli = SSCNET_CLI;
  const fs::path scenario = fs::path(SSCNET_TOY_DIR) / "scenario.json";
  const fs::path root = fs::temp_directory_path() / "sscnet_acceptance_determinism";
  fs::remove_all(root);
  const auto pipeline = [&](const fs::path& out) {
    const std::string o = " --seed 11 --outdir " + out.string();
    const std::string manifest = " --manifest " + (out / "dataset" / "manifest.json").string();
    const std::vector<std::string> steps{
        "simulate --scenario " + scenario.string() + " --replicates 3 --emit-dataset" + o,
        "estimate" + manifest + o,
        "estimate --level region" + manifest + " --outdir " + (out / "region").string(),
        "variance" + manifest + o,
        "test --variance delta --replicates 300" + manifest + o,
        "reliability --replicates 10 --permutations 199" + manifest + o,
        "report" + o,
    };
    for (const auto& step : steps) {
      const int status = std::system((cli.string() + " " + step + " > /dev/null 2>&1").c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return step;
    }
    return std::string();
  };
  const auto t0 = Clock::now();
  const std::string failed_a = pipeline(root / "a");
  const double secs = seconds_since(t0);
  const std::string failed_b = failed_a.empty() ? pipeline(root / "b") : failed_a;
  if (!failed_a.empty() || !failed_b.empty()) return {false, "pipeline step failed: " + failed_a + failed_b};

  std::set<std::string> files_a, files_b;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (e.is_regular_file()) files_a.insert(fs::relative(e.path(), root / "a").generic_string());
  }
  for (const auto& e : fs::recursive_directory_iterator(root / "b")) {
    if (e.is_regular_file()) files_b.insert(fs::relative(e.path(), root / "b").generic_string());
  }
  std::size_t compared = 0;
  std::string differing;
  for (const auto& f : files_a) {
    if (fs::path(f).filename() == "run_metadata.json") continue;
    ++compared;
    if (!files_b.count(f) || slurp(root / "a" / f) != slurp(root / "b" / f)) differing += " " + f;
  }
  const bool same_set = files_a == files_b;
  fs::remove_all(root);
  return {same_set && differing.empty(),
          fmt::format("{} files compared, {} differ{}; one pipeline run {:.1f} s", compared,
                      differing.empty() ? "none" : "some", differing, secs)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  const auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };

  bool all = true;
  const auto print = [&](int id, const Check& c) {
    all = all && c.pass;
    std::cout << fmt::format("criterion {:>2}: {}  {}", id, c.pass ? "PASS" : "FAIL", c.detail) << std::endl;
  };
  const auto guarded = [&](int id, const std::function<Check()>& f) {
    if (!want(id)) return;
    try {
      print(id, f());
    } catch (const std::exception& e) {
      print(id, {false, std::string("error: ") + e.what()});
    }
  };

  guarded(1, criterion1);
  if (want(2) || want(3) || want(4) || want(5)) {
    try {
      const auto s = criteria2to5();
      if (want(2)) print(2, s.c2);
      if (want(3)) print(3, s.c3);
      if (want(4)) print(4, s.c4);
      if (want(5)) print(5, s.c5);
    } catch (const std::exception& e) {
      for (int id = 2; id <= 5; ++id) {
        if (want(id)) print(id, {false, std::string("error: ") + e.what()});
      }
    }
  }
  guarded(6, criterion6);
  guarded(7, criterion7);
  guarded(8, criterion8);
  guarded(9, criterion9);
  guarded(10, criterion10);
  guarded(11, criterion11);
  return all ? 0 : 1;
}

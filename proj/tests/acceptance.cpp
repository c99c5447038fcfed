// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance            all criteria
//   acceptance 3 5 8      a subset
//
// SKINDIFF_MODEL_CACHE=<dir> caches the trained desk models between runs.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "skindiff/checkpoint.hpp"
#include "skindiff/evaluation.hpp"
#include "skindiff/experiment_spec.hpp"

namespace fs = std::filesystem;
using namespace skindiff;

namespace {

const fs::path kSource = SKINDIFF_SOURCE_DIR;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Desk models shared by criteria 1, 2 and 9.

class DeskModels {
 public:
  explicit DeskModels(const ExperimentSpec& spec) : spec_(spec) {}

  const DiffusionModel& get(const std::string& object, std::size_t res) {
    const std::string key = ExperimentSpec::checkpoint_key(object, res);
    auto it = models_.find(key);
    if (it != models_.end()) return *it->second;
    fs::path cached;
    if (const char* dir = std::getenv("SKINDIFF_MODEL_CACHE")) {
      fs::create_directories(dir);
      cached = fs::path(dir) / (object + std::to_string(res) + "_" + spec_.hash + ".ckpt");
    }
    std::unique_ptr<DiffusionModel> m;
    if (!cached.empty() && fs::exists(cached)) {
      m = std::make_unique<DiffusionModel>(deserialize_checkpoint(read_file(cached)));
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      m = std::make_unique<DiffusionModel>(
          train_model_for(spec_.catalog.at(object), spec_.sensor, res, spec_.training));
      std::cerr << "  trained " << key << " in " << seconds_since(t0) << " s\n";
      if (!cached.empty()) write_file_atomic(cached, serialize_checkpoint(*m));
    }
    return *models_.emplace(key, std::move(m)).first->second;
  }

 private:
  const ExperimentSpec& spec_;
  std::map<std::string, std::unique_ptr<DiffusionModel>> models_;
};

Verdict criterion_sampler_comparison(const ExperimentSpec& spec, DeskModels& models) {
  const ComparisonSetup& setup = *spec.comparison;
  const auto rows = compare_samplers(setup, [&](const std::string& o, std::size_t r) { return &models.get(o, r); });
  // Pair rows per (object, resolution, seed).
  std::map<std::tuple<std::string, std::size_t, std::uint64_t>, std::map<ProposalMethod, double>> cells;
  for (const auto& r : rows) cells[{r.object, r.resolution, r.seed}][r.method] = r.best_median;
  std::map<std::pair<std::string, std::size_t>, std::size_t> wins, total;
  std::ostringstream detail;
  for (const auto& [k, v] : cells) {
    const auto cell = std::make_pair(std::get<0>(k), std::get<1>(k));
    ++total[cell];
    if (v.at(ProposalMethod::ddpm) < v.at(ProposalMethod::sdf_projection)) ++wins[cell];
    std::cerr << "  " << std::get<0>(k) << "@" << std::get<1>(k) << " seed " << std::get<2>(k)
              << ": ddpm " << v.at(ProposalMethod::ddpm) << " sdf " << v.at(ProposalMethod::sdf_projection) << '\n';
  }
  bool pass = !total.empty();
  for (const auto& [cell, n] : total) {
    const std::size_t w = wins[cell];
    pass = pass && static_cast<double>(w) >= 0.95 * static_cast<double>(n);
    detail << cell.first << "@" << cell.second << " " << w << "/" << n << "; ";
  }
  return {pass, "DDPM best-median ADD below SDF projection in " + detail.str() +
                    std::to_string(setup.n_configurations) + " configs, S=" + std::to_string(setup.n_hypotheses)};
}

Verdict criterion_filter_convergence(const ExperimentSpec& spec, DeskModels& models) {
  const ConvergenceSetup& setup = *spec.filter;
  const auto traces = filter_convergence(setup, models.get(setup.object_name, setup.resolution));
  const double ddpm = median_contacts_to_threshold(traces, ProposalMethod::ddpm);
  const double sdf = median_contacts_to_threshold(traces, ProposalMethod::sdf_projection);
  for (const auto& t : traces)
    std::cerr << "  " << method_name(t.method) << " seed " << t.seed << ": " << t.contacts_to_threshold << '\n';
  std::ostringstream d;
  d << "median contacts to MAP ADD <= " << setup.threshold << ": ddpm " << ddpm << ", sdf " << sdf << " ("
    << setup.seeds.size() << " seeds, " << setup.filter.n_particles << " particles, " << setup.contacts
    << " contacts; never reached counts as " << setup.contacts + 1 << ")";
  return {ddpm < sdf, d.str()};
}

Verdict criterion_sampling_time(const ExperimentSpec& spec, DeskModels& models) {
  const ConvergenceSetup& setup = *spec.filter;
  const DiffusionModel& trained = models.get(setup.object_name, setup.resolution);
  DiffusionModel full = DiffusionModel::create(default_schedule(), setup.resolution, 256, 32);
  Rng rng = make_stream(91, 0);
  full.net.initialize(rng);

  const TaxelArray array = build_array(spec.sensor.radius, setup.resolution, spec.sensor.rho, spec.sensor.noise_std);
  const Observation z = observe(setup.object, PlanarPose::from_angle(0.075, 0.0, 0.3), array, rng);
  double worst = 0.0;
  std::ostringstream d;
  for (const DiffusionModel* m : {&trained, static_cast<const DiffusionModel*>(&full)}) {
    sample(*m, z, 100, 0);  // warm-up
    const TimingSummary t = time_sampling(*m, z, 100, 10, 5);
    // Every repetition must be within budget, so bound the mean plus the spread.
    const double bound = t.mean_ms + 3 * t.stddev_ms;
    worst = std::max(worst, bound);
    d << "H=" << m->net.dims()[1] << " mean " << t.mean_ms << " ms sd " << t.stddev_ms << "; ";
  }
  return {worst <= 1000.0, "S=100 sampling: " + d.str() + "budget 1000 ms"};
}

// ---------------------------------------------------------------------------
// Property suites.

const ConvexPolygon kWedge{{{-0.02, -0.015}, {0.03, -0.015}, {0.0, 0.03}}};

Verdict criterion_projection() {
  Rng rng = make_stream(303, 0);
  double worst = 0.0;
  std::size_t degenerate = 0;
  const std::vector<std::pair<std::string, Shape>> objects = {
      {"circle", Circle{0.03}}, {"box", Box{0.04, 0.025}}, {"polygon", kWedge}};
  for (const auto& [name, obj] : objects) {
    const ContactGeometry geom(obj, Circle{0.05});
    int done = 0;
    while (done < 1000) {
      const PlanarPose init = sample_initial_pose(SampleBounds::around_sensor(0.05), rng);
      const double delta = uniform(rng, 0.0, 0.005);
      if (geom.separation(init).value <= 0.0) continue;
      const auto r = project_to_contact(geom, init, delta);
      if (!r.ok()) {
        ++degenerate;
        continue;
      }
      ++done;
      worst = std::max(worst, std::abs(oracle::circle_sensor_separation(obj, r.pose, 0.05) + delta));
      worst = std::max(worst, std::abs(pose_distance(obj, r.pose, Circle{0.05}).value + delta));
    }
  }
  std::ostringstream d;
  d << "max |pose_distance + delta| = " << worst << " m over 3x1000 projections (circle, box, polygon); "
    << degenerate << " skipped as degenerate";
  return {worst <= 1e-4, d.str()};
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

Verdict criterion_gradients() {
  // Noise predictor at the default architecture.
  DiffusionModel model = DiffusionModel::create(default_schedule(), 64, 256, 32);
  Rng rng = make_stream(404, 0);
  model.net.initialize(rng);
  Matrix x(static_cast<Eigen::Index>(model.input_dim()), 8), eps(4, 8);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
  Mlp::Gradient g;
  noise_loss(model.net, x, eps, &g);
  std::vector<double> analytic;
  for (std::size_t l = 0; l < model.net.n_layers(); ++l) {
    for (Eigen::Index i = 0; i < g.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < g.weights[l].cols(); ++j) analytic.push_back(g.weights[l](i, j));
    for (Eigen::Index i = 0; i < g.biases[l].size(); ++i) analytic.push_back(g.biases[l](i));
  }
  const std::vector<double> base = model.net.parameters();
  Mlp probe = model.net;
  constexpr double h = 1e-5;
  double net_worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t c = static_cast<std::size_t>(rng() % base.size());
    std::vector<double> p = base;
    p[c] = base[c] + h;
    probe.set_parameters(p);
    const double up = noise_loss(probe, x, eps, nullptr);
    p[c] = base[c] - h;
    probe.set_parameters(p);
    const double down = noise_loss(probe, x, eps, nullptr);
    net_worst = std::max(net_worst, rel_error((up - down) / (2 * h), analytic[c]));
  }

  // SDF gradients away from medial axes, identified by agreement of two finite-difference scales.
  std::mt19937_64 gen(405);
  std::uniform_real_distribution<double> d(-0.08, 0.08);
  const std::vector<Shape> shapes = {Circle{0.03}, Box{0.04, 0.025}, kWedge,
                                     Union{{Circle{0.03}, Box{0.042, 0.006}}}};
  double sdf_worst = 0.0;
  for (const auto& shape : shapes) {
    int checked = 0;
    while (checked < 1000) {
      const Vec2 p{d(gen), d(gen)};
      const SdfSample s = sdf_eval(shape, p);
      auto fd = [&](double step) {
        return Vec2{(sdf_eval(shape, p + Vec2{step, 0}).value - sdf_eval(shape, p - Vec2{step, 0}).value) / (2 * step),
                    (sdf_eval(shape, p + Vec2{0, step}).value - sdf_eval(shape, p - Vec2{0, step}).value) / (2 * step)};
      };
      const Vec2 fine = fd(1e-7);
      if (s.singular || (fd(1e-4) - fine).norm() > 1e-6) continue;
      sdf_worst = std::max(sdf_worst, (s.gradient - fine).norm() / fine.norm());
      ++checked;
    }
  }
  std::ostringstream o;
  o << "noise predictor (H=256, 64 taxels) max rel error " << net_worst << " on 100 coordinates; SDF max rel error "
    << sdf_worst << " on 4x1000 smooth points";
  return {net_worst < 1e-4 && sdf_worst < 1e-4, o.str()};
}

Verdict criterion_marginals() {
  const NoiseSchedule s = default_schedule();
  Rng rng = make_stream(505, 0);
  constexpr int kDraws = 100000;
  Vec4 sum = Vec4::Zero(), sq = Vec4::Zero();
  for (int i = 0; i < kDraws; ++i) {
    Vec4 q0, eps;
    for (int k = 0; k < 4; ++k) q0[k] = normal(rng);
    for (int k = 0; k < 4; ++k) eps[k] = normal(rng);
    const Vec4 x = forward_diffuse(q0, s.T, eps, s);
    sum += x;
    sq += x.cwiseAbs2();
  }
  const Vec4 mean = sum / kDraws;
  const Vec4 var = sq / kDraws - mean.cwiseAbs2();
  bool pass = true;
  for (int k = 0; k < 4; ++k) pass = pass && mean[k] >= -0.02 && mean[k] <= 0.02 && var[k] >= 0.97 && var[k] <= 1.03;
  std::ostringstream d;
  d << "t=" << s.T << ", 1e5 draws (standardized q0): mean [" << mean.transpose() << "] var [" << var.transpose() << "]";
  return {pass, d.str()};
}

Verdict criterion_injection_oracle() {
  Rng rng = make_stream(606, 0);
  const double worst = oracle::injection_discrepancy(1000, 6, rng);
  std::ostringstream d;
  if (worst < 0)
    d << "particle mismatch against the manual listing";
  else
    d << "max weight difference " << worst << " over 1000 trials, N=1..6, S=0..N";
  return {worst >= 0 && worst <= 1e-12, d.str()};
}

Verdict criterion_resampling() {
  Rng rng = make_stream(707, 0);
  bool pass = true;
  double worst_z = 0.0;
  for (std::size_t n : {5u, 10u, 37u}) {
    Belief b = oracle::random_belief(n, rng);
    for (std::size_t i = 0; i < n; ++i) b.particles[i] = {static_cast<double>(i), 0, 1, 0};
    constexpr int kTrials = 10000;
    std::vector<double> sum(n, 0.0), sq(n, 0.0);
    for (int t = 0; t < kTrials; ++t) {
      std::vector<double> count(n, 0.0);
      for (const auto& p : systematic_resample(b, rng).particles) count[static_cast<std::size_t>(p.x)] += 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum[i] += count[i];
        sq[i] += count[i] * count[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double mean = sum[i] / kTrials;
      const double se = std::sqrt(std::max(0.0, sq[i] / kTrials - mean * mean) / kTrials);
      const double err = std::abs(mean - static_cast<double>(n) * b.weights[i]);
      if (err > std::max(3 * se, 1e-12)) pass = false;
      if (se > 0) worst_z = std::max(worst_z, err / se);
    }
  }
  std::ostringstream d;
  d << "offspring means vs N*w_i over 1e4 trials (N=5,10,37): worst deviation " << worst_z << " standard errors";
  return {pass, d.str()};
}

Verdict criterion_add_oracle() {
  Rng rng = make_stream(808, 0);
  const std::vector<Shape> shapes = {Circle{0.03}, Box{0.04, 0.025}, kWedge};
  double worst = 0.0;
  bool translation_exact = true;
  for (int i = 0; i < 1000; ++i) {
    const auto pts = boundary_points(shapes[static_cast<std::size_t>(i) % 3], kModelPoints);
    const PlanarPose a = PlanarPose::from_angle(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), uniform(rng, -3.2, 3.2));
    const PlanarPose b = PlanarPose::from_angle(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), uniform(rng, -3.2, 3.2));
    worst = std::max(worst, std::abs(add_error(pts, a, b) - oracle::brute_force_add(pts, a, b)));
    PlanarPose shifted = a;
    shifted.x += uniform(rng, -0.05, 0.05);
    shifted.y += uniform(rng, -0.05, 0.05);
    if (add_error(pts, shifted, a) != std::hypot(shifted.x - a.x, shifted.y - a.y)) translation_exact = false;
  }
  std::ostringstream d;
  d << "max |add_error - brute force| = " << worst << " over 1000 pose pairs; translation identity "
    << (translation_exact ? "exact" : "violated");
  return {worst <= 1e-12 && translation_exact, d.str()};
}

// ---------------------------------------------------------------------------
// End-to-end determinism through the command-line tool.

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SKINDIFF_CLI_PATH) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "skindiff_acceptance_e2e";
  fs::remove_all(root);
  const std::vector<std::string> artifacts = {"data/train.jsonl", "models/can16.ckpt", "samples.txt",
                                              "out/comparison.csv", "out/convergence.csv",
                                              "out/convergence_summary.csv"};
  std::vector<std::map<std::string, std::string>> runs;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = root / ("run" + std::to_string(rep));
    fs::create_directories(dir / "data");
    fs::create_directories(dir / "models");
    fs::copy_file(kSource / "data/catalog.jsonl", dir / "data/catalog.jsonl");
    std::ofstream(dir / "spec.json") << R"({
  "catalog": "data/catalog.jsonl",
  "output_dir": "out",
  "checkpoints": {"can@16": "models/can16.ckpt"},
  "comparison": {"objects": ["can"], "resolutions": [16], "n_configurations": 20, "n_hypotheses": 10, "seeds": [1]},
  "filter": {"object": "can", "resolution": 16, "contacts": 4, "seeds": [1, 2]}
})";
    std::ofstream(dir / "obs.txt") << "0 0 0 0.2 0.6 0.2 0 0 0 0 0 0 0 0 0 0\n";
    const fs::path log = dir / "log.txt";
    const std::string d = dir.string() + "/";
    const std::vector<std::string> steps = {
        "synth --catalog " + d + "data/catalog.jsonl --object can --n 500 --seed 11 --taxels 16 --out " + d +
            "data/train.jsonl",
        "train --data " + d + "data/train.jsonl --out " + d + "models/can16.ckpt --epochs 5 --hidden 32 --seed 12",
        "sample --checkpoint " + d + "models/can16.ckpt --obs " + d + "obs.txt --s 100 --seed 13 --out " + d +
            "samples.txt",
        "eval --spec " + d + "spec.json"};
    for (const auto& s : steps)
      if (run_cli(s, log) != 0) return {false, "command failed: skindiff " + s + " (see " + log.string() + ")"};
    std::map<std::string, std::string> bytes;
    for (const auto& a : artifacts) bytes[a] = read_file(dir / a);
    runs.push_back(std::move(bytes));
  }
  std::vector<std::string> differing;
  for (const auto& a : artifacts)
    if (runs[0].at(a) != runs[1].at(a) || runs[0].at(a).empty()) differing.push_back(a);
  if (!differing.empty()) {
    std::string list;
    for (const auto& a : differing) list += a + " ";
    return {false, "artifacts differ or are empty: " + list};
  }
  fs::remove_all(root);
  return {true, "synth, train, sample, eval twice: dataset, checkpoint, samples and 3 tables byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };

  const ExperimentSpec spec = load_experiment_spec(kSource / "specs/desk.json");
  DeskModels models(spec);

  const std::vector<std::pair<int, std::pair<std::string, std::function<Verdict()>>>> criteria = {
      {1, {"sampler comparison", [&] { return criterion_sampler_comparison(spec, models); }}},
      {2, {"filter convergence", [&] { return criterion_filter_convergence(spec, models); }}},
      {3, {"projection exactness", criterion_projection}},
      {4, {"gradient suite", criterion_gradients}},
      {5, {"diffusion marginals", criterion_marginals}},
      {6, {"injection oracle", criterion_injection_oracle}},
      {7, {"resampling statistics", criterion_resampling}},
      {8, {"ADD oracle", criterion_add_oracle}},
      {9, {"sampling performance", [&] { return criterion_sampling_time(spec, models); }}},
      {10, {"end-to-end determinism", criterion_determinism}},
  };

  int failures = 0;
  for (const auto& [n, c] : criteria) {
    if (!wanted(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("[%s] criterion %d (%s): %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", n, c.first.c_str(),
                v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

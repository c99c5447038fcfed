#pragma once

// Experiment harnesses: hypothesis quality of DDPM vs. SDF-projection proposals across taxel
// resolutions, and particle-filter convergence with either proposal.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skindiff/add_metric.hpp"
#include "skindiff/catalog.hpp"
#include "skindiff/checkpoint.hpp"
#include "skindiff/contact_synthesis.hpp"
#include "skindiff/ddpm.hpp"
#include "skindiff/io.hpp"
#include "skindiff/particle_filter.hpp"

namespace skindiff {

enum class ProposalMethod { sdf_projection, ddpm };

inline const char* method_name(ProposalMethod m) { return m == ProposalMethod::ddpm ? "ddpm" : "sdf_projection"; }

/// Unconditioned proposal: uniform poses projected into contact, ignoring the observation.
inline SeededSampler sdf_projection_sampler(const Shape& object, const TaxelArray& array, const SynthesisConfig& cfg) {
  auto geom = std::make_shared<const ContactGeometry>(object, array.sensor_shape());
  return [geom, cfg](const Observation&, std::size_t S, std::uint64_t seed) {
    std::vector<PlanarPose> out;
    out.reserve(S);
    SynthesisStats stats;
    for (std::size_t i = 0; i < S; ++i) {
      Rng rng = make_stream(seed, i, kSynthesisSalt);
      out.push_back(synthesize_contact(*geom, cfg, rng, stats).pose);
    }
    return out;
  };
}

inline SeededSampler ddpm_sampler(const DiffusionModel& model) {
  return [&model](const Observation& z, std::size_t S, std::uint64_t seed) { return sample(model, z, S, seed); };
}

template <class T>
double median_of(std::vector<T> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? static_cast<double>(v[n / 2]) : 0.5 * (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2]));
}

// ---------------------------------------------------------------------------
// Sampler comparison

struct SamplerCell {
  std::string object;
  std::size_t resolution = 0;
  ProposalMethod method = ProposalMethod::ddpm;
  std::uint64_t seed = 0;
  // Per-configuration best hypothesis.
  double best_median = 0.0, best_min = 0.0, best_max = 0.0;
  // Every hypothesis of every configuration.
  double all_median = 0.0, all_min = 0.0, all_max = 0.0;
};

struct SensorParams {
  double radius = 0.05;
  double rho = 0.005;
  double noise_std = 0.02;
};

struct ComparisonSetup {
  std::vector<std::pair<std::string, Shape>> objects;
  std::vector<std::size_t> resolutions;
  SensorParams sensor;
  std::size_t n_configurations = 200;
  std::size_t n_hypotheses = 100;
  std::vector<std::uint64_t> seeds{0};
  double delta_max = 0.005;
  std::size_t model_points = kModelPoints;
};

/// Looks up the trained model for (object, resolution); nullptr when missing.
using ModelLookup = std::function<const DiffusionModel*(const std::string& object, std::size_t resolution)>;

inline constexpr std::uint64_t kConfigSalt = 0xCF60;

/// For every configuration a ground-truth contact and its noisy observation are drawn; both
/// proposals generate S hypotheses and the ADD of each hypothesis is recorded.
inline std::vector<SamplerCell> compare_samplers(const ComparisonSetup& setup, const ModelLookup& models) {
  std::vector<SamplerCell> rows;
  for (const auto& [name, shape] : setup.objects) {
    const auto points = boundary_points(shape, setup.model_points);
    for (std::size_t res : setup.resolutions) {
      const DiffusionModel* model = models(name, res);
      if (!model) throw ConfigError("missing checkpoint for " + name + " at " + std::to_string(res) + " taxels");
      const TaxelArray array = build_array(setup.sensor.radius, res, setup.sensor.rho, setup.sensor.noise_std);
      if (model->n_taxels != res) throw ConfigError("checkpoint for " + name + " was trained for another resolution");
      SynthesisConfig scfg;
      scfg.delta_max = setup.delta_max;
      scfg.bounds = SampleBounds::around_sensor(setup.sensor.radius);
      const ContactGeometry geom(shape, array.sensor_shape());
      const SeededSampler sdf = sdf_projection_sampler(shape, array, scfg);
      const SeededSampler ddpm = ddpm_sampler(*model);
      for (std::uint64_t seed : setup.seeds) {
        std::map<ProposalMethod, std::vector<double>> best, all;
        for (std::size_t i = 0; i < setup.n_configurations; ++i) {
          Rng rng = make_stream(seed, i, kConfigSalt);
          SynthesisStats stats;
          const ContactSample gt = synthesize_contact(geom, scfg, rng, stats);
          const Observation z = observe(shape, gt.pose, array, rng);
          const std::uint64_t hyp_seed = rng();
          for (ProposalMethod m : {ProposalMethod::sdf_projection, ProposalMethod::ddpm}) {
            const auto hyps = (m == ProposalMethod::ddpm ? ddpm : sdf)(z, setup.n_hypotheses, hyp_seed);
            double b = std::numeric_limits<double>::infinity();
            for (const auto& h : hyps) {
              const double e = add_error(points, h, gt.pose);
              all[m].push_back(e);
              b = std::min(b, e);
            }
            best[m].push_back(b);
          }
        }
        for (ProposalMethod m : {ProposalMethod::sdf_projection, ProposalMethod::ddpm}) {
          const auto& bv = best[m];
          const auto& av = all[m];
          rows.push_back({name, res, m, seed, median_of(bv), *std::min_element(bv.begin(), bv.end()),
                          *std::max_element(bv.begin(), bv.end()), median_of(av),
                          *std::min_element(av.begin(), av.end()), *std::max_element(av.begin(), av.end())});
        }
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Filter convergence

struct ConvergenceSetup {
  std::string object_name;
  Shape object;
  std::size_t resolution = 64;
  SensorParams sensor;
  FilterConfig filter;
  std::size_t contacts = 20;
  std::vector<std::uint64_t> seeds{0};
  double threshold = 0.01;
  double delta_max = 0.005;
  SampleBounds prior_bounds{-0.05, 0.05, -0.05, 0.05};
  std::size_t model_points = kModelPoints;
};

struct ConvergenceTrace {
  ProposalMethod method = ProposalMethod::ddpm;
  std::uint64_t seed = 0;
  FilterRun run;
  /// First contact count whose MAP estimate is within the threshold; contacts + 1 if never.
  std::size_t contacts_to_threshold = 0;
};

inline constexpr std::uint64_t kGroundTruthSalt = 0x6E7A;

inline std::size_t contacts_to_threshold(const FilterRun& run, double threshold) {
  if (run.prior_map_add <= threshold) return 0;
  for (const auto& s : run.steps)
    if (s.map_add <= threshold) return s.contact_index;
  return run.steps.size() + 1;
}

/// Runs the same filter twice per seed, once per proposal. Both runs share the ground truth,
/// prior and contact sequence.
inline std::vector<ConvergenceTrace> filter_convergence(const ConvergenceSetup& setup, const DiffusionModel& model) {
  if (model.n_taxels != setup.resolution) throw ConfigError("filter model was trained for another resolution");
  FilterProblem problem;
  problem.object = setup.object;
  problem.array = build_array(setup.sensor.radius, setup.resolution, setup.sensor.rho, setup.sensor.noise_std);
  problem.prior_bounds = setup.prior_bounds;
  problem.contact_cfg.delta_max = setup.delta_max;
  problem.contact_cfg.bounds = SampleBounds::around_sensor(setup.sensor.radius);
  problem.model_points = boundary_points(setup.object, setup.model_points);

  const SeededSampler sdf = sdf_projection_sampler(setup.object, problem.array, problem.contact_cfg);
  const SeededSampler ddpm = ddpm_sampler(model);

  std::vector<ConvergenceTrace> out;
  for (std::uint64_t seed : setup.seeds) {
    Rng gt_rng = make_stream(seed, 0, kGroundTruthSalt);
    const PlanarPose gt = sample_initial_pose(setup.prior_bounds, gt_rng);
    FilterConfig fc = setup.filter;
    fc.seed = seed;
    for (ProposalMethod m : {ProposalMethod::sdf_projection, ProposalMethod::ddpm}) {
      ConvergenceTrace tr;
      tr.method = m;
      tr.seed = seed;
      tr.run = run_filter(problem, m == ProposalMethod::ddpm ? ddpm : sdf, gt, fc, setup.contacts);
      tr.contacts_to_threshold = contacts_to_threshold(tr.run, setup.threshold);
      out.push_back(std::move(tr));
    }
  }
  return out;
}

inline double median_contacts_to_threshold(const std::vector<ConvergenceTrace>& traces, ProposalMethod m) {
  std::vector<std::size_t> v;
  for (const auto& t : traces)
    if (t.method == m) v.push_back(t.contacts_to_threshold);
  return median_of(v);
}

// ---------------------------------------------------------------------------
// Timing

struct TimingSummary {
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  std::size_t repetitions = 0;
};

inline TimingSummary time_sampling(const DiffusionModel& model, const Observation& z, std::size_t S,
                                   std::size_t repetitions, std::uint64_t seed = 0) {
  std::vector<double> ms;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto poses = sample(model, z, S, derive_seed(seed, r));
    const auto t1 = std::chrono::steady_clock::now();
    if (poses.size() != S) throw std::runtime_error("time_sampling: wrong sample count");
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  TimingSummary s;
  s.repetitions = repetitions;
  if (ms.empty()) return s;
  for (double v : ms) s.mean_ms += v;
  s.mean_ms /= static_cast<double>(ms.size());
  for (double v : ms) s.stddev_ms += (v - s.mean_ms) * (v - s.mean_ms);
  s.stddev_ms = ms.size() > 1 ? std::sqrt(s.stddev_ms / static_cast<double>(ms.size() - 1)) : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_double(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

inline std::string comparison_csv(const std::vector<SamplerCell>& rows, const std::string& spec_hash) {
  std::ostringstream o;
  o << "# skindiff sampler comparison (ADD in meters)\n# spec_hash=" << spec_hash << '\n';
  o << "object,resolution,method,seed,best_median,best_min,best_max,all_median,all_min,all_max\n";
  for (const auto& r : rows)
    o << r.object << ',' << r.resolution << ',' << method_name(r.method) << ',' << r.seed << ','
      << format_double(r.best_median) << ',' << format_double(r.best_min) << ',' << format_double(r.best_max) << ','
      << format_double(r.all_median) << ',' << format_double(r.all_min) << ',' << format_double(r.all_max) << '\n';
  return o.str();
}

inline std::string convergence_csv(const std::vector<ConvergenceTrace>& traces, const std::string& spec_hash) {
  std::ostringstream o;
  o << "# skindiff filter convergence (ADD in meters; contact 0 is the prior)\n# spec_hash=" << spec_hash << '\n';
  o << "method,seed,contact_index,map_add,wmean_add,effective_sample_size,injected_count\n";
  for (const auto& t : traces) {
    o << method_name(t.method) << ',' << t.seed << ",0," << format_double(t.run.prior_map_add) << ','
      << format_double(t.run.prior_wmean_add) << ',' << format_double(t.run.prior_ess) << ",0\n";
    for (const auto& s : t.run.steps)
      o << method_name(t.method) << ',' << t.seed << ',' << s.contact_index << ',' << format_double(s.map_add) << ','
        << format_double(s.wmean_add) << ',' << format_double(s.effective_sample_size) << ',' << s.injected_count
        << '\n';
  }
  return o.str();
}

inline std::string convergence_summary_csv(const std::vector<ConvergenceTrace>& traces, double threshold,
                                           const std::string& spec_hash) {
  std::ostringstream o;
  o << "# skindiff contacts to MAP ADD <= " << format_double(threshold) << "\n# spec_hash=" << spec_hash << '\n';
  o << "method,seed,contacts_to_threshold\n";
  for (const auto& t : traces) o << method_name(t.method) << ',' << t.seed << ',' << t.contacts_to_threshold << '\n';
  for (ProposalMethod m : {ProposalMethod::sdf_projection, ProposalMethod::ddpm})
    o << method_name(m) << ",median," << format_double(median_contacts_to_threshold(traces, m)) << '\n';
  return o.str();
}

/// Line-delimited JSON log of one filter run.
inline std::string filter_log(const FilterRun& run) {
  std::ostringstream o;
  for (const auto& s : run.steps) {
    const nlohmann::json j = {{"contact_index", s.contact_index},
                              {"map_add", s.map_add},
                              {"wmean_add", s.wmean_add},
                              {"effective_sample_size", s.effective_sample_size},
                              {"injected_count", s.injected_count}};
    o << j.dump() << '\n';
  }
  return o.str();
}

}  // namespace skindiff

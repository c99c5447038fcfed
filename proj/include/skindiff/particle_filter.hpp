#pragma once

// Particle filter over a static object's planar pose with tactile likelihoods and injection of
// contact hypotheses on every touch.
//
// Poses in the belief live in a fixed world frame. Each contact is made with the sensor at a
// known world pose; observations and proposal samples are expressed in that sensor frame.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "skindiff/add_metric.hpp"
#include "skindiff/contact_synthesis.hpp"
#include "skindiff/geometry.hpp"
#include "skindiff/rng.hpp"
#include "skindiff/tactile_sensor.hpp"

namespace skindiff {

struct Belief {
  std::vector<PlanarPose> particles;
  std::vector<double> weights;

  std::size_t size() const { return particles.size(); }
};

struct FilterConfig {
  std::size_t n_particles = 100;
  double likelihood_std = 0.1;
  std::size_t resample_period = 3;
  std::size_t initial_injection = 50;
  double injection_decay = 0.8;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_particles < 1) throw std::invalid_argument("FilterConfig: n_particles must be >= 1");
    if (initial_injection < 1 || initial_injection > n_particles)
      throw std::invalid_argument("FilterConfig: need 0 < initial injection <= n_particles");
    if (!(injection_decay > 0.0 && injection_decay <= 1.0))
      throw std::invalid_argument("FilterConfig: injection decay must lie in (0, 1]");
    if (!(likelihood_std > 0.0)) throw std::invalid_argument("FilterConfig: likelihood_std must be > 0");
    if (resample_period < 1) throw std::invalid_argument("FilterConfig: resample_period must be >= 1");
  }

  /// ceil(S0 * decay^k), clamped to the particle count.
  std::size_t injection_count(std::size_t contact_index) const {
    const double s = static_cast<double>(initial_injection) * std::pow(injection_decay, static_cast<double>(contact_index));
    return std::min(n_particles, static_cast<std::size_t>(std::ceil(s - 1e-9)));
  }
};

inline void normalize(std::vector<double>& w) {
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= sum;
}

inline double effective_sample_size(const Belief& b) {
  double sq = 0.0;
  for (double w : b.weights) sq += w * w;
  return 1.0 / sq;
}

/// N poses uniform over the bounds and the full heading range, each with weight 1/N.
inline Belief init_belief(const FilterConfig& cfg, const SampleBounds& bounds, Rng& rng) {
  Belief b;
  b.particles.reserve(cfg.n_particles);
  for (std::size_t i = 0; i < cfg.n_particles; ++i) b.particles.push_back(sample_initial_pose(bounds, rng));
  b.weights.assign(cfg.n_particles, 1.0 / static_cast<double>(cfg.n_particles));
  return b;
}

/// exp(-|observe(q) - z|^2 / (2 sigma^2)) with the noiseless observation model; q in the sensor frame.
inline double likelihood(const PlanarPose& q, const Observation& z_obs, const Shape& object, const TaxelArray& array,
                         double sigma_w) {
  const Observation pred = observe(object, q, array);
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.activations[i] - z_obs.activations[i];
    sq += d * d;
  }
  return std::exp(-sq / (2.0 * sigma_w * sigma_w));
}

struct WeightUpdate {
  Belief belief;
  bool degenerate = false;  // every product was zero; weights were reset to uniform
};

/// Bayes update w_i <- w_i * p(z | q_i), normalized. `sensor_pose` maps sensor-frame to world.
inline WeightUpdate update_weights(Belief b, const Observation& z_obs, const Shape& object, const TaxelArray& array,
                                   const FilterConfig& cfg, const PlanarPose& sensor_pose = PlanarPose::identity()) {
  const PlanarPose to_sensor = sensor_pose.inverse();
  double sum = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    b.weights[i] *= likelihood(to_sensor.compose(b.particles[i]), z_obs, object, array, cfg.likelihood_std);
    sum += b.weights[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    b.weights.assign(b.size(), 1.0 / static_cast<double>(b.size()));
    return {std::move(b), true};
  }
  for (auto& w : b.weights) w /= sum;
  return {std::move(b), false};
}

/// Source of S pose hypotheses for an observation.
using HypothesisSampler = std::function<std::vector<PlanarPose>(const Observation& z, std::size_t S)>;

/// Sorts the belief by ascending weight, replaces the S lowest-weight particles with sampled
/// hypotheses carrying the mean weight of the incoming belief, then normalizes.
inline Belief inject_on_contact(Belief b, const Observation& z, std::size_t S, const HypothesisSampler& sampler) {
  const std::size_t N = b.size();
  if (S > N) throw std::invalid_argument("inject_on_contact: more injections than particles");
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return b.weights[i] < b.weights[j]; });
  Belief sorted;
  sorted.particles.reserve(N);
  sorted.weights.reserve(N);
  for (std::size_t i : order) {
    sorted.particles.push_back(b.particles[i]);
    sorted.weights.push_back(b.weights[i]);
  }
  const double w_bar = std::accumulate(sorted.weights.begin(), sorted.weights.end(), 0.0) / static_cast<double>(N);
  if (S > 0) {
    const auto hyps = sampler(z, S);
    if (hyps.size() != S) throw std::runtime_error("inject_on_contact: sampler returned the wrong count");
    for (std::size_t i = 0; i < S; ++i) {
      sorted.particles[i] = hyps[i];
      sorted.weights[i] = w_bar;
    }
  }
  normalize(sorted.weights);
  return sorted;
}

/// Low-variance resampling with a single offset u ~ U[0, 1/N).
inline Belief systematic_resample(const Belief& b, Rng& rng) {
  const std::size_t N = b.size();
  Belief out;
  out.particles.reserve(N);
  const double step = 1.0 / static_cast<double>(N);
  const double u0 = uniform01(rng) * step;
  double cum = b.weights[0];
  std::size_t i = 0;
  for (std::size_t k = 0; k < N; ++k) {
    const double u = u0 + static_cast<double>(k) * step;
    while (u > cum && i + 1 < N) cum += b.weights[++i];
    out.particles.push_back(b.particles[i]);
  }
  out.weights.assign(N, step);
  return out;
}

/// Highest-weight particle; the smallest index wins ties.
inline PlanarPose map_estimate(const Belief& b) {
  const auto it = std::max_element(b.weights.begin(), b.weights.end());
  return b.particles[static_cast<std::size_t>(it - b.weights.begin())];
}

/// Weighted mean position and circular mean heading. If the weighted heading vector vanishes
/// the MAP heading is used and `angle_fallback` is set.
inline PlanarPose weighted_mean_estimate(const Belief& b, bool* angle_fallback = nullptr) {
  double x = 0.0, y = 0.0, c = 0.0, s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double w = b.weights[i];
    x += w * b.particles[i].x;
    y += w * b.particles[i].y;
    c += w * b.particles[i].c;
    s += w * b.particles[i].s;
  }
  const double n = std::hypot(c, s);
  if (angle_fallback) *angle_fallback = !(n > 1e-12);
  if (!(n > 1e-12)) {
    const PlanarPose m = map_estimate(b);
    return {x, y, m.c, m.s};
  }
  return {x, y, c / n, s / n};
}

// ---------------------------------------------------------------------------
// Contact sequences and full filter runs

struct ContactEvent {
  PlanarPose sensor_pose;  // sensor frame -> world
  PlanarPose object_in_sensor;
  Observation observation;  // noisy
};

inline constexpr std::uint64_t kContactSalt = 0xC047;
inline constexpr std::uint64_t kInjectSalt = 0x1A7C;
inline constexpr std::uint64_t kResampleSalt = 0x7E5A;
inline constexpr std::uint64_t kPriorSalt = 0x9B10;

/// A touch of the static object from a random approach: a contact configuration is synthesized
/// in the sensor frame and the sensor is placed so the object sits at `ground_truth` in the world.
inline ContactEvent simulate_contact(const ContactGeometry& geom, const TaxelArray& array, const PlanarPose& ground_truth,
                                     const SynthesisConfig& contact_cfg, Rng& rng) {
  SynthesisStats stats;
  const ContactSample c = synthesize_contact(geom, contact_cfg, rng, stats);
  ContactEvent ev;
  ev.object_in_sensor = c.pose;
  ev.sensor_pose = ground_truth.compose(c.pose.inverse());
  ev.observation = observe(geom.object(), c.pose, array, rng);
  return ev;
}

struct FilterStep {
  std::size_t contact_index = 0;  // 1-based
  double map_add = 0.0;
  double wmean_add = 0.0;
  double effective_sample_size = 0.0;
  std::size_t injected_count = 0;
  bool degenerate_update = false;
};

struct FilterRun {
  double prior_map_add = 0.0;
  double prior_wmean_add = 0.0;
  double prior_ess = 0.0;
  std::vector<FilterStep> steps;
  Belief final_belief;
};

struct FilterProblem {
  Shape object;
  TaxelArray array;
  SampleBounds prior_bounds{-0.05, 0.05, -0.05, 0.05};
  SynthesisConfig contact_cfg;  // approach sampling for simulated touches
  std::vector<Vec2> model_points;
};

/// Sensor-frame hypothesis source; the seed selects the random streams for one call.
using SeededSampler = std::function<std::vector<PlanarPose>(const Observation& z, std::size_t S, std::uint64_t seed)>;

/// K simulated contacts with the static object at `ground_truth`. Per contact: weight update,
/// injection of ceil(S0 * decay^k) proposals, estimates, then resampling every
/// `resample_period` contacts. No motion model between contacts.
inline FilterRun run_filter(const FilterProblem& problem, const SeededSampler& proposal, const PlanarPose& ground_truth,
                            const FilterConfig& cfg, std::size_t K) {
  cfg.validate();
  const ContactGeometry geom(problem.object, problem.array.sensor_shape());
  FilterRun run;
  Rng prior_rng = make_stream(cfg.seed, 0, kPriorSalt);
  Belief b = init_belief(cfg, problem.prior_bounds, prior_rng);
  run.prior_map_add = add_error(problem.model_points, map_estimate(b), ground_truth);
  run.prior_wmean_add = add_error(problem.model_points, weighted_mean_estimate(b), ground_truth);
  run.prior_ess = effective_sample_size(b);

  for (std::size_t k = 0; k < K; ++k) {
    Rng contact_rng = make_stream(cfg.seed, k, kContactSalt);
    const ContactEvent ev = simulate_contact(geom, problem.array, ground_truth, problem.contact_cfg, contact_rng);

    WeightUpdate upd = update_weights(std::move(b), ev.observation, problem.object, problem.array, cfg, ev.sensor_pose);
    b = std::move(upd.belief);

    const std::size_t S = cfg.injection_count(k);
    const std::uint64_t inject_seed = derive_seed(cfg.seed, k, kInjectSalt);
    const HypothesisSampler to_world = [&](const Observation& z, std::size_t n) {
      auto hyps = proposal(z, n, inject_seed);
      for (auto& h : hyps) h = ev.sensor_pose.compose(h);
      return hyps;
    };
    b = inject_on_contact(std::move(b), ev.observation, S, to_world);

    FilterStep step;
    step.contact_index = k + 1;
    step.map_add = add_error(problem.model_points, map_estimate(b), ground_truth);
    step.wmean_add = add_error(problem.model_points, weighted_mean_estimate(b), ground_truth);
    step.effective_sample_size = effective_sample_size(b);
    step.injected_count = S;
    step.degenerate_update = upd.degenerate;
    run.steps.push_back(step);

    if ((k + 1) % cfg.resample_period == 0) {
      Rng rs = make_stream(cfg.seed, k, kResampleSalt);
      b = systematic_resample(b, rs);
    }
  }
  run.final_belief = std::move(b);
  return run;
}

}  // namespace skindiff

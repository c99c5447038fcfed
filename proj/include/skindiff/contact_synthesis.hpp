#pragma once

// Contact synthesis: uniformly sampled object poses are translated into contact with the
// sensor along the gradient of the object-sensor separation,
//
//   t = -(sigma + delta) * grad(sigma) / |grad(sigma)|,   delta ~ U[0, delta_max],
//
// where sigma is the separation of the posed object from the sensor surface (0 when
// touching, negative when overlapping) and grad(sigma) is its gradient with respect to
// the object translation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skindiff/geometry.hpp"
#include "skindiff/rng.hpp"
#include "skindiff/tactile_sensor.hpp"

namespace skindiff {

inline constexpr std::size_t kSeparationSamples = 256;
inline constexpr double kContactTolerance = 1e-4;

struct SampleBounds {
  double x_min = -0.15;
  double x_max = 0.15;
  double y_min = -0.15;
  double y_max = 0.15;

  /// [-3R, 3R]^2 around a sensor of radius R.
  static SampleBounds around_sensor(double radius) {
    return {-3.0 * radius, 3.0 * radius, -3.0 * radius, 3.0 * radius};
  }
  bool valid() const { return x_max > x_min && y_max > y_min && std::isfinite(x_max - x_min) && std::isfinite(y_max - y_min); }
};

struct SynthesisConfig {
  std::size_t n_samples = 10000;
  double delta_max = 0.005;
  SampleBounds bounds = SampleBounds::around_sensor(0.05);
  std::uint64_t seed = 0;
  int max_reprojections = 3;

  void validate() const {
    if (n_samples < 1) throw ConfigError("synthesis: n_samples must be >= 1");
    if (!(delta_max >= 0.0)) throw ConfigError("synthesis: delta_max must be >= 0");
    if (!bounds.valid()) throw ConfigError("synthesis: sample bounds are degenerate");
    if (max_reprojections < 0) throw ConfigError("synthesis: max_reprojections must be >= 0");
  }
};

struct ContactRecord {
  PlanarPose pose;
  Observation observation;
  double delta = 0.0;

  friend bool operator==(const ContactRecord&, const ContactRecord&) = default;
};

/// Separation between a posed object and the sensor, in pose-translation space.
struct Separation {
  double value = 0.0;
  Vec2 gradient{1.0, 0.0};
  bool degenerate = false;
};

/// Precomputed object boundary used to evaluate the object-sensor separation repeatedly.
class ContactGeometry {
 public:
  ContactGeometry(Shape object, Shape sensor) : object_(std::move(object)), sensor_(std::move(sensor)) {
    validate(object_);
    validate(sensor_);
    if (!object_.is<Circle>()) {
      samples_ = boundary_points(object_, kSeparationSamples);
      const auto corners = shape_corners(object_);
      samples_.insert(samples_.end(), corners.begin(), corners.end());
    }
    if (object_.is<Box>()) poly_ = box_vertices(object_.as<Box>());
    if (object_.is<ConvexPolygon>()) poly_ = object_.as<ConvexPolygon>().vertices;
  }

  const Shape& object() const { return object_; }
  const Shape& sensor() const { return sensor_; }

  /// Minimum sensor SDF over the object boundary. Exact for circular objects; otherwise the
  /// best boundary sample is refined by golden-section search on the adjacent arc.
  Separation separation(const PlanarPose& pose) const {
    if (object_.is<Circle>()) {
      const SdfSample s = sdf_eval(sensor_, pose.translation());
      return {s.value - object_.as<Circle>().radius, s.gradient, s.singular};
    }
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      const double v = sdf_eval(sensor_, transform_point(pose, samples_[i])).value;
      if (v < best) {
        best = v;
        best_i = i;
      }
    }
    Vec2 best_point = transform_point(pose, samples_[best_i]);
    if (const auto* poly = polyline()) {
      const double perim = perimeter_of(*poly);
      const double step = perim / static_cast<double>(kSeparationSamples);
      const double center = arclength_of(*poly, samples_[best_i]);
      auto f = [&](double s) {
        return sdf_eval(sensor_, transform_point(pose, point_at_arclength(*poly, s))).value;
      };
      double lo = center - step;
      double hi = center + step;
      constexpr double kInvPhi = 0.6180339887498949;
      double a = hi - kInvPhi * (hi - lo);
      double b = lo + kInvPhi * (hi - lo);
      double fa = f(a);
      double fb = f(b);
      for (int it = 0; it < 60; ++it) {
        if (fa < fb) {
          hi = b;
          b = a;
          fb = fa;
          a = hi - kInvPhi * (hi - lo);
          fa = f(a);
        } else {
          lo = a;
          a = b;
          fa = fb;
          b = lo + kInvPhi * (hi - lo);
          fb = f(b);
        }
      }
      const double s_star = 0.5 * (lo + hi);
      const double v = f(s_star);
      if (v < best) {
        best = v;
        best_point = transform_point(pose, point_at_arclength(*poly, s_star));
      }
    }
    const SdfSample g = sdf_eval(sensor_, best_point);
    return {best, g.gradient, g.singular};
  }

 private:
  const std::vector<Vec2>* polyline() const { return poly_.empty() ? nullptr : &poly_; }

  static double perimeter_of(const std::vector<Vec2>& v) {
    double p = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) p += (v[(i + 1) % v.size()] - v[i]).norm();
    return p;
  }

  static Vec2 point_at_arclength(const std::vector<Vec2>& v, double s) {
    const double perim = perimeter_of(v);
    s = std::fmod(s, perim);
    if (s < 0.0) s += perim;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec2 e = v[(i + 1) % v.size()] - v[i];
      const double len = e.norm();
      if (s <= len || i + 1 == v.size()) return v[i] + std::min(s / len, 1.0) * e;
      s -= len;
    }
    return v.front();
  }

  static double arclength_of(const std::vector<Vec2>& v, const Vec2& p) {
    double acc = 0.0;
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec2 e = v[(i + 1) % v.size()] - v[i];
      const double len = e.norm();
      const double t = std::clamp((p - v[i]).dot(e) / (len * len), 0.0, 1.0);
      const double d = (v[i] + t * e - p).norm();
      if (d < best_d) {
        best_d = d;
        best_s = acc + t * len;
      }
      acc += len;
    }
    return best_s;
  }

  Shape object_;
  Shape sensor_;
  std::vector<Vec2> samples_;
  std::vector<Vec2> poly_;
};

inline Separation pose_distance(const Shape& object, const PlanarPose& object_pose, const Shape& sensor) {
  return ContactGeometry(object, sensor).separation(object_pose);
}

enum class ProjectionStatus { ok, degenerate_gradient, budget_exhausted };

struct ProjectionResult {
  PlanarPose pose;
  ProjectionStatus status = ProjectionStatus::ok;
  int reprojections = 0;

  bool ok() const { return status == ProjectionStatus::ok; }
};

/// Translates the object so that its separation from the sensor becomes -delta. Orientation
/// is left untouched. Extra corrective steps (up to `max_reprojections`) are taken while the
/// residual exceeds kContactTolerance.
inline ProjectionResult project_to_contact(const ContactGeometry& geom, const PlanarPose& pose_init, double delta,
                                           int max_reprojections = 3) {
  if (!(delta >= 0.0)) throw std::invalid_argument("project_to_contact: delta must be >= 0");
  ProjectionResult out{pose_init, ProjectionStatus::ok, 0};
  Separation sep = geom.separation(out.pose);
  for (int step = 0;; ++step) {
    if (sep.degenerate) {
      out.status = ProjectionStatus::degenerate_gradient;
      return out;
    }
    const double n = sep.gradient.norm();
    const Vec2 t = -(sep.value + delta) * sep.gradient / n;
    out.pose.x += t.x();
    out.pose.y += t.y();
    sep = geom.separation(out.pose);
    if (std::abs(sep.value + delta) <= kContactTolerance) return out;
    if (step >= max_reprojections) {
      out.status = ProjectionStatus::budget_exhausted;
      return out;
    }
    ++out.reprojections;
  }
}

inline ProjectionResult project_to_contact(const Shape& object, const PlanarPose& pose_init, const Shape& sensor,
                                           double delta, int max_reprojections = 3) {
  return project_to_contact(ContactGeometry(object, sensor), pose_init, delta, max_reprojections);
}

/// Uniform over the bounds and the full heading range.
inline PlanarPose sample_initial_pose(const SampleBounds& bounds, Rng& rng) {
  const double x = uniform(rng, bounds.x_min, bounds.x_max);
  const double y = uniform(rng, bounds.y_min, bounds.y_max);
  const double theta = uniform(rng, -std::numbers::pi, std::numbers::pi);
  return PlanarPose::from_angle(x, y, theta);
}

struct SynthesisStats {
  std::size_t attempts = 0;
  std::size_t rejected_overlap = 0;
  std::size_t rejected_degenerate = 0;
  std::size_t rejected_budget = 0;
  std::size_t rejected_silent = 0;  // in contact, but between taxels with no activation

  std::size_t rejected() const { return rejected_overlap + rejected_degenerate + rejected_budget; }
  SynthesisStats& operator+=(const SynthesisStats& o) {
    attempts += o.attempts;
    rejected_overlap += o.rejected_overlap;
    rejected_degenerate += o.rejected_degenerate;
    rejected_budget += o.rejected_budget;
    rejected_silent += o.rejected_silent;
    return *this;
  }
};

struct ContactSample {
  PlanarPose pose;
  double delta = 0.0;
};

/// Draws initial poses from `rng` until one projects cleanly into contact.
inline ContactSample synthesize_contact(const ContactGeometry& geom, const SynthesisConfig& cfg, Rng& rng,
                                        SynthesisStats& stats) {
  constexpr std::size_t kMaxAttempts = 10000;
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    ++stats.attempts;
    const PlanarPose init = sample_initial_pose(cfg.bounds, rng);
    const double delta = uniform(rng, 0.0, cfg.delta_max);
    if (geom.separation(init).value <= 0.0) {
      ++stats.rejected_overlap;
      continue;
    }
    const ProjectionResult r = project_to_contact(geom, init, delta, cfg.max_reprojections);
    if (r.status == ProjectionStatus::degenerate_gradient) {
      ++stats.rejected_degenerate;
      continue;
    }
    if (r.status == ProjectionStatus::budget_exhausted) {
      ++stats.rejected_budget;
      continue;
    }
    return {r.pose, delta};
  }
  throw ConfigError("synthesis: no valid contact after " + std::to_string(kMaxAttempts) + " attempts");
}

struct Dataset {
  std::vector<ContactRecord> records;
  SynthesisStats stats;
};

inline constexpr std::uint64_t kSynthesisSalt = 0x5157;

/// Exactly cfg.n_samples in-contact records with noiseless observations. Record n uses the
/// stream derived from (seed, n). Contacts that activate no taxel are redrawn.
inline Dataset synthesize_dataset(const Shape& object, const TaxelArray& array, const SynthesisConfig& cfg) {
  cfg.validate();
  const ContactGeometry geom(object, array.sensor_shape());
  Dataset ds;
  ds.records.reserve(cfg.n_samples);
  for (std::size_t n = 0; n < cfg.n_samples; ++n) {
    Rng rng = make_stream(cfg.seed, n, kSynthesisSalt);
    for (;;) {
      const ContactSample c = synthesize_contact(geom, cfg, rng, ds.stats);
      Observation z = observe(object, c.pose, array);
      if (std::all_of(z.activations.begin(), z.activations.end(), [](double a) { return a <= 0.0; })) {
        ++ds.stats.rejected_silent;
        if (ds.stats.rejected_silent > 100 * cfg.n_samples)
          throw ConfigError("synthesis: contacts almost never activate a taxel; array too sparse");
        continue;
      }
      ds.records.push_back({c.pose, std::move(z), c.delta});
      break;
    }
  }
  if (2 * ds.stats.rejected() > ds.stats.attempts)
    throw ConfigError("synthesis: " + std::to_string(ds.stats.rejected()) + " of " +
                      std::to_string(ds.stats.attempts) +
                      " initial poses rejected; sample bounds lie mostly inside the sensor");
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset file: a JSON header line followed by one JSON record per line.

inline constexpr int kDatasetSchemaVersion = 1;

struct DatasetHeader {
  std::string object_name;
  nlohmann::json sensor;
  std::string sensor_hash;
  std::uint64_t seed = 0;
  double delta_max = 0.0;
  std::size_t n_samples = 0;
};

inline void write_dataset(std::ostream& out, const DatasetHeader& header, const std::vector<ContactRecord>& records) {
  nlohmann::json h = {{"schema", "skindiff.dataset"},  {"version", kDatasetSchemaVersion},
                      {"object", header.object_name},  {"sensor", header.sensor},
                      {"sensor_hash", header.sensor_hash}, {"seed", header.seed},
                      {"delta_max", header.delta_max}, {"n_samples", records.size()}};
  out << h.dump() << '\n';
  for (const auto& r : records) {
    nlohmann::json j = {{"pose", {r.pose.x, r.pose.y, r.pose.c, r.pose.s}},
                        {"obs", r.observation.activations},
                        {"delta", r.delta}};
    out << j.dump() << '\n';
  }
}

inline std::pair<DatasetHeader, std::vector<ContactRecord>> read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset: empty file");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset: bad header: ") + e.what());
  }
  if (h.value("schema", "") != "skindiff.dataset") throw ConfigError("dataset: not a skindiff dataset");
  if (h.value("version", -1) != kDatasetSchemaVersion)
    throw ConfigError("dataset: unsupported schema version " + h.value("version", nlohmann::json(-1)).dump());
  DatasetHeader header{h.at("object").get<std::string>(), h.at("sensor"), h.at("sensor_hash").get<std::string>(),
                       h.at("seed").get<std::uint64_t>(), h.at("delta_max").get<double>(),
                       h.at("n_samples").get<std::size_t>()};
  std::vector<ContactRecord> records;
  records.reserve(header.n_samples);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto& p = j.at("pose");
    records.push_back({PlanarPose{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>(),
                                  p.at(3).get<double>()},
                       Observation{j.at("obs").get<std::vector<double>>()}, j.at("delta").get<double>()});
  }
  if (records.size() != header.n_samples)
    throw ConfigError("dataset: header announces " + std::to_string(header.n_samples) + " records, found " +
                      std::to_string(records.size()));
  return {std::move(header), std::move(records)};
}

}  // namespace skindiff

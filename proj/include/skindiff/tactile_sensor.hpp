#pragma once

// Circular taxel array around a cylindrical end-effector cross-section, and the nominal
// observation model mapping a posed object to continuous taxel activations.
//
// Activation law (stand-in; the real capacitive skin response is not modelled):
//   a_i = clamp((rho - d_i) / (rho + delta_ref), 0, 1)
// where d_i is the object's signed distance at taxel i. A taxel reads 0 beyond the
// proximity range rho, 0.5 on the surface when delta_ref == rho, and saturates at a
// penetration of delta_ref.

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skindiff/geometry.hpp"
#include "skindiff/io.hpp"
#include "skindiff/rng.hpp"

namespace skindiff {

struct Observation {
  std::vector<double> activations;

  std::size_t size() const { return activations.size(); }
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct TaxelArray {
  double radius = 0.05;
  std::size_t n_taxels = 0;
  std::vector<Vec2> positions;
  std::vector<Vec2> normals;
  double rho = 0.005;
  double noise_std = 0.02;
  double delta_ref = 0.005;

  Shape sensor_shape() const { return Circle{radius}; }

  nlohmann::json config_json() const {
    return {{"radius", radius}, {"n_taxels", n_taxels}, {"rho", rho}, {"noise_std", noise_std},
            {"delta_ref", delta_ref}};
  }

  std::string config_hash() const { return hex64(fnv1a64(config_json().dump())); }
};

/// Taxel i sits at angle 2πi/N on the circle with a radial outward normal.
/// `delta_ref` defaults to `rho` when not given.
inline TaxelArray build_array(double radius, std::size_t n_taxels, double rho, double noise_std,
                              std::optional<double> delta_ref = std::nullopt) {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("build_array: radius must be > 0");
  if (n_taxels < 4) throw std::invalid_argument("build_array: need at least 4 taxels");
  if (!(rho > 0.0)) throw std::invalid_argument("build_array: rho must be > 0");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("build_array: noise_std must be >= 0");
  const double dref = delta_ref.value_or(rho);
  if (!(dref > 0.0)) throw std::invalid_argument("build_array: delta_ref must be > 0");

  TaxelArray a;
  a.radius = radius;
  a.n_taxels = n_taxels;
  a.rho = rho;
  a.noise_std = noise_std;
  a.delta_ref = dref;
  a.positions.reserve(n_taxels);
  a.normals.reserve(n_taxels);
  for (std::size_t i = 0; i < n_taxels; ++i) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_taxels);
    const Vec2 n{std::cos(ang), std::sin(ang)};
    a.normals.push_back(n);
    a.positions.push_back(radius * n);
  }
  return a;
}

inline TaxelArray array_from_json(const nlohmann::json& j) {
  std::optional<double> dref;
  if (j.contains("delta_ref")) dref = j.at("delta_ref").get<double>();
  return build_array(j.value("radius", 0.05), j.at("n_taxels").get<std::size_t>(), j.value("rho", 0.005),
                     j.value("noise_std", 0.02), dref);
}

inline double activation(const TaxelArray& array, double signed_distance) {
  return std::clamp((array.rho - signed_distance) / (array.rho + array.delta_ref), 0.0, 1.0);
}

/// Noiseless activations of the array for `object` at `pose` (sensor frame).
inline Observation observe(const Shape& object, const PlanarPose& pose, const TaxelArray& array) {
  Observation z;
  z.activations.resize(array.n_taxels);
  for (std::size_t i = 0; i < array.n_taxels; ++i)
    z.activations[i] = activation(array, posed_sdf_eval(object, pose, array.positions[i]).value);
  return z;
}

/// Noisy activations: Gaussian noise with the array's noise_std, re-clamped to [0, 1].
inline Observation observe(const Shape& object, const PlanarPose& pose, const TaxelArray& array, Rng& rng) {
  Observation z = observe(object, pose, array);
  if (array.noise_std > 0.0)
    for (auto& a : z.activations) a = std::clamp(a + array.noise_std * normal(rng), 0.0, 1.0);
  return z;
}

}  // namespace skindiff

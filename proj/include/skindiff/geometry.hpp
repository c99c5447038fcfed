#pragma once

// Planar poses, parametric shapes and their signed distance fields.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace skindiff {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;

/// Raised when a shape, config or spec file does not satisfy its invariants.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Object pose in the sensor frame. The heading is stored as (cos, sin) only.
struct PlanarPose {
  double x = 0.0;
  double y = 0.0;
  double c = 1.0;
  double s = 0.0;

  static PlanarPose identity() { return {}; }
  static PlanarPose from_angle(double x, double y, double theta) {
    return {x, y, std::cos(theta), std::sin(theta)};
  }
  static PlanarPose from_vector(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }

  double angle() const { return std::atan2(s, c); }
  Vec2 translation() const { return {x, y}; }
  Vec4 as_vector() const { return {x, y, c, s}; }

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(c) && std::isfinite(s);
  }

  /// Projects (c, s) back onto the unit circle. Throws on a zero heading vector.
  PlanarPose& renormalize() {
    const double n = std::hypot(c, s);
    if (!(n > 1e-12)) throw std::domain_error("PlanarPose: zero heading vector");
    c /= n;
    s /= n;
    return *this;
  }

  Vec2 rotate(const Vec2& p) const { return {c * p.x() - s * p.y(), s * p.x() + c * p.y()}; }
  Vec2 unrotate(const Vec2& p) const { return {c * p.x() + s * p.y(), -s * p.x() + c * p.y()}; }

  /// this ∘ other: apply `other` first, then this.
  PlanarPose compose(const PlanarPose& other) const {
    const Vec2 t = rotate(other.translation()) + translation();
    return {t.x(), t.y(), c * other.c - s * other.s, s * other.c + c * other.s};
  }

  PlanarPose inverse() const {
    const Vec2 t = -unrotate(translation());
    return {t.x(), t.y(), c, -s};
  }

  friend bool operator==(const PlanarPose&, const PlanarPose&) = default;
};

/// Maps a point from the object frame into the frame the pose is expressed in.
inline Vec2 transform_point(const PlanarPose& pose, const Vec2& p_object) {
  return pose.rotate(p_object) + pose.translation();
}

inline Vec2 inverse_transform_point(const PlanarPose& pose, const Vec2& p_world) {
  return pose.unrotate(p_world - pose.translation());
}

// ---------------------------------------------------------------------------
// Shapes

struct Circle {
  double radius = 0.0;
};

/// Axis-aligned box centred at the origin of its frame.
struct Box {
  double half_w = 0.0;
  double half_h = 0.0;
};

/// Convex polygon with counter-clockwise vertices.
struct ConvexPolygon {
  std::vector<Vec2> vertices;
};

struct Shape;

struct Union {
  std::vector<Shape> children;
};

struct Shape {
  std::variant<Circle, Box, ConvexPolygon, Union> geometry;

  Shape() : geometry(Circle{1.0}) {}
  Shape(Circle v) : geometry(std::move(v)) {}
  Shape(Box v) : geometry(std::move(v)) {}
  Shape(ConvexPolygon v) : geometry(std::move(v)) {}
  Shape(Union v) : geometry(std::move(v)) {}

  template <class T>
  bool is() const { return std::holds_alternative<T>(geometry); }
  template <class T>
  const T& as() const { return std::get<T>(geometry); }
};

struct SdfSample {
  double value = 0.0;
  Vec2 gradient{1.0, 0.0};
  /// Set on medial-axis points where the gradient is undefined; `gradient` is then (1, 0).
  bool singular = false;
};

inline std::vector<Vec2> box_vertices(const Box& b) {
  return {{-b.half_w, -b.half_h}, {b.half_w, -b.half_h}, {b.half_w, b.half_h}, {-b.half_w, b.half_h}};
}

/// Throws ConfigError if the shape violates its invariants.
inline void validate(const Shape& shape) {
  std::visit(
      [](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Circle>) {
          if (!(g.radius > 0.0) || !std::isfinite(g.radius))
            throw ConfigError("circle radius must be positive");
        } else if constexpr (std::is_same_v<T, Box>) {
          if (!(g.half_w > 0.0) || !(g.half_h > 0.0) || !std::isfinite(g.half_w) ||
              !std::isfinite(g.half_h))
            throw ConfigError("box half-extents must be positive");
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          const auto& v = g.vertices;
          const std::size_t n = v.size();
          if (n < 3) throw ConfigError("polygon needs at least 3 vertices");
          for (const auto& p : v)
            if (!p.allFinite()) throw ConfigError("polygon vertex is not finite");
          for (std::size_t i = 0; i < n; ++i) {
            const Vec2& a = v[i];
            const Vec2& b = v[(i + 1) % n];
            const Vec2& d = v[(i + 2) % n];
            if ((b - a).norm() <= 0.0) throw ConfigError("polygon has a zero-length edge");
            if (cross2(b - a, d - b) <= 0.0)
              throw ConfigError("polygon must be convex with counter-clockwise vertices");
          }
          // Strict left turns everywhere still admit self-intersecting stars; total turning must be 2π.
          double turning = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const Vec2 e0 = v[(i + 1) % n] - v[i];
            const Vec2 e1 = v[(i + 2) % n] - v[(i + 1) % n];
            turning += std::atan2(cross2(e0, e1), e0.dot(e1));
          }
          if (std::abs(turning - 2.0 * std::numbers::pi) > 1e-6)
            throw ConfigError("polygon is self-intersecting");
        } else {
          if (g.children.empty()) throw ConfigError("union must have at least one child");
          for (const auto& c : g.children) validate(c);
        }
      },
      shape.geometry);
}

namespace detail {

inline SdfSample circle_sdf(const Circle& c, const Vec2& p) {
  const double n = p.norm();
  if (n == 0.0) return {-c.radius, {1.0, 0.0}, true};
  return {n - c.radius, p / n, false};
}

inline SdfSample box_sdf(const Box& b, const Vec2& p) {
  const double qx = std::abs(p.x()) - b.half_w;
  const double qy = std::abs(p.y()) - b.half_h;
  const double sx = p.x() < 0.0 ? -1.0 : 1.0;
  const double sy = p.y() < 0.0 ? -1.0 : 1.0;
  if (qx > 0.0 || qy > 0.0) {
    const Vec2 q{std::max(qx, 0.0), std::max(qy, 0.0)};
    const double d = q.norm();
    return {d, Vec2{sx * q.x(), sy * q.y()} / d, false};
  }
  if (qx > qy) return {qx, {sx, 0.0}, p.x() == 0.0};
  if (qy > qx) return {qy, {0.0, sy}, p.y() == 0.0};
  return {qx, {1.0, 0.0}, true};
}

inline SdfSample polygon_sdf(const ConvexPolygon& poly, const Vec2& p) {
  const auto& v = poly.vertices;
  const std::size_t n = v.size();
  bool inside = true;
  double best = std::numeric_limits<double>::infinity();
  Vec2 closest = v[0];
  std::size_t best_edge = 0;
  // Inside: distance to the nearest edge line, tracked separately for tie detection.
  double inner_best = std::numeric_limits<double>::infinity();
  double inner_second = std::numeric_limits<double>::infinity();
  std::size_t inner_edge = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % n];
    const Vec2 e = b - a;
    const double len2 = e.squaredNorm();
    const double side = cross2(e, p - a);
    if (side < 0.0) inside = false;
    const double t = std::clamp((p - a).dot(e) / len2, 0.0, 1.0);
    const Vec2 foot = a + t * e;
    const double d = (p - foot).norm();
    if (d < best) {
      best = d;
      closest = foot;
      best_edge = i;
    }
    const double line_d = side / std::sqrt(len2);
    if (line_d < inner_best) {
      inner_second = inner_best;
      inner_best = line_d;
      inner_edge = i;
    } else if (line_d < inner_second) {
      inner_second = line_d;
    }
  }
  auto edge_normal = [&](std::size_t i) {
    const Vec2 e = v[(i + 1) % n] - v[i];
    return Vec2{e.y(), -e.x()}.normalized();
  };
  if (!inside) {
    if (best == 0.0) return {0.0, edge_normal(best_edge), false};
    return {best, (p - closest) / best, false};
  }
  const bool tie = inner_second - inner_best <= 1e-15 * std::max(1.0, inner_best);
  if (tie) return {-inner_best, {1.0, 0.0}, true};
  return {-inner_best, edge_normal(inner_edge), false};
}

}  // namespace detail

/// Exact signed distance to the shape boundary (negative inside) and its gradient.
/// For unions the value is the minimum over children, which is exact outside and a bound inside.
inline SdfSample sdf_eval(const Shape& shape, const Vec2& p) {
  return std::visit(
      [&](const auto& g) -> SdfSample {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return detail::circle_sdf(g, p);
        } else if constexpr (std::is_same_v<T, Box>) {
          return detail::box_sdf(g, p);
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          return detail::polygon_sdf(g, p);
        } else {
          SdfSample best{std::numeric_limits<double>::infinity(), {1.0, 0.0}, false};
          for (const auto& child : g.children) {
            const SdfSample s = sdf_eval(child, p);
            if (s.value < best.value) best = s;
          }
          return best;
        }
      },
      shape.geometry);
}

/// SDF of a shape placed at `pose`, evaluated at a point in the pose's parent frame.
inline SdfSample posed_sdf_eval(const Shape& shape, const PlanarPose& pose, const Vec2& p_world) {
  SdfSample s = sdf_eval(shape, inverse_transform_point(pose, p_world));
  if (!s.singular) s.gradient = pose.rotate(s.gradient);
  return s;
}

namespace detail {

// Walks a closed polyline and returns m points spaced uniformly in arc length, starting at vertex 0.
inline std::vector<Vec2> sample_closed_polyline(const std::vector<Vec2>& v, std::size_t m) {
  const std::size_t n = v.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + (v[(i + 1) % n] - v[i]).norm();
  const double perimeter = cum[n];
  std::vector<Vec2> out;
  out.reserve(m);
  std::size_t edge = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double s = perimeter * static_cast<double>(k) / static_cast<double>(m);
    while (edge + 1 < n && cum[edge + 1] <= s) ++edge;
    const double t = (s - cum[edge]) / (cum[edge + 1] - cum[edge]);
    out.push_back(v[edge] + t * (v[(edge + 1) % n] - v[edge]));
  }
  return out;
}

inline double perimeter(const Shape& shape);

}  // namespace detail

/// m points on the boundary, approximately uniform in arc length. Deterministic for fixed inputs.
inline std::vector<Vec2> boundary_points(const Shape& shape, std::size_t m) {
  if (m < 3) throw std::invalid_argument("boundary_points: need at least 3 points");
  return std::visit(
      [&](const auto& g) -> std::vector<Vec2> {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Circle>) {
          std::vector<Vec2> out;
          out.reserve(m);
          for (std::size_t k = 0; k < m; ++k) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m);
            out.emplace_back(g.radius * std::cos(a), g.radius * std::sin(a));
          }
          return out;
        } else if constexpr (std::is_same_v<T, Box>) {
          return detail::sample_closed_polyline(box_vertices(g), m);
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          return detail::sample_closed_polyline(g.vertices, m);
        } else {
          // Dense child samples that are not buried inside a sibling, then resampled by arc length.
          const Shape whole{g};
          std::vector<Vec2> kept;
          std::vector<double> weight;
          for (const auto& child : g.children) {
            const std::size_t dense = 64 * m;
            const double ds = detail::perimeter(child) / static_cast<double>(dense);
            for (const auto& p : boundary_points(child, dense)) {
              if (sdf_eval(whole, p).value > -1e-12) {
                kept.push_back(p);
                weight.push_back(ds);
              }
            }
          }
          std::vector<double> cum(kept.size() + 1, 0.0);
          for (std::size_t i = 0; i < kept.size(); ++i) cum[i + 1] = cum[i] + weight[i];
          std::vector<Vec2> out;
          out.reserve(m);
          std::size_t j = 0;
          for (std::size_t k = 0; k < m; ++k) {
            const double s = cum.back() * static_cast<double>(k) / static_cast<double>(m);
            while (j + 1 < kept.size() && cum[j + 1] <= s) ++j;
            out.push_back(kept[j]);
          }
          return out;
        }
      },
      shape.geometry);
}

namespace detail {

inline double perimeter(const Shape& shape) {
  return std::visit(
      [](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return 2.0 * std::numbers::pi * g.radius;
        } else if constexpr (std::is_same_v<T, Box>) {
          return 4.0 * (g.half_w + g.half_h);
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          double p = 0.0;
          for (std::size_t i = 0; i < g.vertices.size(); ++i)
            p += (g.vertices[(i + 1) % g.vertices.size()] - g.vertices[i]).norm();
          return p;
        } else {
          double p = 0.0;
          for (const auto& c : g.children) p += perimeter(c);
          return p;
        }
      },
      shape.geometry);
}

}  // namespace detail

/// Polygon and box corners (object frame); empty for circles. Used to sharpen sampled distances.
inline std::vector<Vec2> shape_corners(const Shape& shape) {
  return std::visit(
      [](const auto& g) -> std::vector<Vec2> {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return {};
        } else if constexpr (std::is_same_v<T, Box>) {
          return box_vertices(g);
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          return g.vertices;
        } else {
          std::vector<Vec2> out;
          for (const auto& c : g.children) {
            auto cs = shape_corners(c);
            out.insert(out.end(), cs.begin(), cs.end());
          }
          return out;
        }
      },
      shape.geometry);
}

/// True if every point of the shape is convex-hull-exact (no unions).
inline bool is_convex(const Shape& shape) { return !shape.is<Union>(); }

/// Largest distance from the frame origin to any boundary point.
inline double bounding_radius(const Shape& shape) {
  return std::visit(
      [](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return g.radius;
        } else if constexpr (std::is_same_v<T, Box>) {
          return std::hypot(g.half_w, g.half_h);
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          double r = 0.0;
          for (const auto& v : g.vertices) r = std::max(r, v.norm());
          return r;
        } else {
          double r = 0.0;
          for (const auto& c : g.children) r = std::max(r, bounding_radius(c));
          return r;
        }
      },
      shape.geometry);
}

}  // namespace skindiff

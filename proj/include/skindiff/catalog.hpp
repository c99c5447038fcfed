#pragma once

// Shape catalog: one JSON document per line.
//
//   {"name": "can", "kind": "circle", "radius": 0.03}
//   {"name": "brick", "kind": "box", "half_w": 0.04, "half_h": 0.025}
//   {"name": "wedge", "kind": "convex_polygon", "vertices": [[0,0],[0.05,0],[0.02,0.04]]}
//   {"name": "mug", "kind": "union", "children": [{"kind": "circle", "radius": 0.03}, ...]}
//
// Lengths are in meters. Blank lines and lines starting with '#' are skipped.

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "skindiff/geometry.hpp"

namespace skindiff {

using json = nlohmann::json;

inline Shape shape_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("kind")) throw ConfigError("shape document needs a 'kind'");
  const std::string kind = doc.at("kind").get<std::string>();
  Shape shape;
  try {
    if (kind == "circle") {
      shape = Circle{doc.at("radius").get<double>()};
    } else if (kind == "box") {
      shape = Box{doc.at("half_w").get<double>(), doc.at("half_h").get<double>()};
    } else if (kind == "convex_polygon") {
      ConvexPolygon poly;
      for (const auto& v : doc.at("vertices")) {
        if (!v.is_array() || v.size() != 2) throw ConfigError("polygon vertex must be [x, y]");
        poly.vertices.emplace_back(v[0].get<double>(), v[1].get<double>());
      }
      shape = std::move(poly);
    } else if (kind == "union") {
      Union u;
      for (const auto& c : doc.at("children")) u.children.push_back(shape_from_json(c));
      shape = std::move(u);
    } else {
      throw ConfigError("unknown shape kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed " + kind + " shape: " + e.what());
  }
  validate(shape);
  return shape;
}

inline json shape_to_json(const Shape& shape) {
  return std::visit(
      [](const auto& g) -> json {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Circle>) {
          return {{"kind", "circle"}, {"radius", g.radius}};
        } else if constexpr (std::is_same_v<T, Box>) {
          return {{"kind", "box"}, {"half_w", g.half_w}, {"half_h", g.half_h}};
        } else if constexpr (std::is_same_v<T, ConvexPolygon>) {
          json verts = json::array();
          for (const auto& v : g.vertices) verts.push_back({v.x(), v.y()});
          return {{"kind", "convex_polygon"}, {"vertices", verts}};
        } else {
          json children = json::array();
          for (const auto& c : g.children) children.push_back(shape_to_json(c));
          return {{"kind", "union"}, {"children", children}};
        }
      },
      shape.geometry);
}

class ShapeCatalog {
 public:
  ShapeCatalog() = default;

  static ShapeCatalog parse(std::istream& in) {
    ShapeCatalog cat;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      json doc;
      try {
        doc = json::parse(line);
      } catch (const json::exception& e) {
        throw ConfigError("catalog line " + std::to_string(lineno) + ": " + e.what());
      }
      if (!doc.contains("name") || !doc.at("name").is_string())
        throw ConfigError("catalog line " + std::to_string(lineno) + ": missing 'name'");
      const std::string name = doc.at("name").get<std::string>();
      try {
        cat.add(name, shape_from_json(doc));
      } catch (const ConfigError& e) {
        throw ConfigError("catalog line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    return cat;
  }

  static ShapeCatalog load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open shape catalog " + path);
    return parse(in);
  }

  void add(const std::string& name, Shape shape) {
    validate(shape);
    if (!shapes_.emplace(name, std::move(shape)).second)
      throw ConfigError("duplicate shape name '" + name + "'");
  }

  bool contains(const std::string& name) const { return shapes_.count(name) != 0; }

  const Shape& at(const std::string& name) const {
    auto it = shapes_.find(name);
    if (it == shapes_.end()) throw ConfigError("unknown object '" + name + "'");
    return it->second;
  }

  const std::map<std::string, Shape>& shapes() const { return shapes_; }

  std::string dump() const {
    std::ostringstream out;
    for (const auto& [name, shape] : shapes_) {
      json doc = shape_to_json(shape);
      doc["name"] = name;
      out << doc.dump() << '\n';
    }
    return out.str();
  }

 private:
  std::map<std::string, Shape> shapes_;
};

}  // namespace skindiff

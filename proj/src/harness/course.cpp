// Copyright 2026 The mmg-teleop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mmg/harness/course.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "mmg/error.hpp"

namespace mmg {

namespace {

double cross(const Point& o, const Point& a, const Point& b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool segments_cross(const Point& a, const Point& b, const Point& c, const Point& d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
  return ((d1 > 0) != (d2 > 0) && d1 != 0 && d2 != 0) && ((d3 > 0) != (d4 > 0) && d3 != 0 && d4 != 0);
}

double point_rect_distance(const Point& p, const Rect& r) {
  const double dx = std::max({r.xmin - p.x, 0.0, p.x - r.xmax});
  const double dy = std::max({r.ymin - p.y, 0.0, p.y - r.ymax});
  return std::hypot(dx, dy);
}

// Zero when the segment touches the rectangle.
double segment_rect_distance(const Point& a, const Point& b, const Rect& r) {
  const std::array<Point, 4> c = {{{r.xmin, r.ymin}, {r.xmax, r.ymin}, {r.xmax, r.ymax}, {r.xmin, r.ymax}}};
  for (std::size_t i = 0; i < 4; ++i) {
    if (segments_cross(a, b, c[i], c[(i + 1) % 4])) return 0.0;
  }
  double d = std::min(point_rect_distance(a, r), point_rect_distance(b, r));
  for (const auto& corner : c) d = std::min(d, point_segment_distance(corner, a, b));
  return d;
}

}  // namespace

std::vector<double> corner_angles(const std::vector<Point>& w) {
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < w.size(); ++i) {
    const double a = std::atan2(w[i].y - w[i - 1].y, w[i].x - w[i - 1].x);
    const double b = std::atan2(w[i + 1].y - w[i].y, w[i + 1].x - w[i].x);
    double d = std::remainder(b - a, 2.0 * std::numbers::pi);
    out.push_back(d * 180.0 / std::numbers::pi);
  }
  return out;
}

void Scenario::validate(double robot_radius) const {
  path.validate();
  if (b_index == 0 || b_index + 1 >= path.waypoints.size()) throw InvalidSpec("point B must be an interior waypoint");
  int right = 0, half = 0;
  for (double c : corner_angles(path.waypoints)) {
    const double a = std::fabs(c);
    if (std::fabs(a - 90.0) < 1.0) {
      ++right;
    } else if (std::fabs(a - 45.0) < 1.0) {
      ++half;
    } else if (a > 1.0) {
      throw InvalidSpec("scenario has a turn of " + std::to_string(c) + " degrees");
    }
  }
  if (right != 3 || half != 2) {
    throw InvalidSpec("scenario needs three 90 degree and two 45 degree turns (found " + std::to_string(right) +
                      " and " + std::to_string(half) + ")");
  }
  const auto& w = path.waypoints;
  if (std::hypot(w.front().x - w.back().x, w.front().y - w.back().y) > 1e-6) {
    throw InvalidSpec("scenario path must return to its start");
  }
  for (const auto& r : obstacles) {
    if (!(r.xmin < r.xmax && r.ymin < r.ymax)) throw InvalidSpec("obstacle rectangle is empty");
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (segment_rect_distance(w[i - 1], w[i], r) < robot_radius) {
        throw InvalidSpec("an obstacle blocks the reference path");
      }
    }
  }
  if (catalog.empty()) throw InvalidSpec("scenario object catalog is empty");
  for (const auto& o : catalog) o.validate();
}

std::vector<ObjectSpec> default_catalog() {
  return {
      {"watch", 200.0, 4.0, grit_roughness(Grit::kSmooth), 1e9, false, 0.0},
      {"earphones", 60.0, 3.0, grit_roughness(Grit::kSmooth), 9.0, false, 0.0},
      {"water_cup", 300.0, 7.0, grit_roughness(Grit::kSmooth), 1e9, true, 0.9},
  };
}

Scenario default_course() {
  Scenario s;
  // Edge lengths 1.323, 1.5, 2.146, 0.7071, 1.0, 1.323 m: total 8 m.
  const double a = 1.323, b = 1.5, c = 2.146, d = std::sqrt(0.5), e = 1.0;
  const Point p0{0.0, 0.0};
  const Point p1{a, 0.0};
  const Point p2{a, b};
  const Point pb{a - (4.0 - a - b), b};  // B halfway round
  const Point p3{a - c, b};
  const Point p4{p3.x - d * std::sqrt(0.5), p3.y - d * std::sqrt(0.5)};
  const Point p5{p4.x, p4.y - e};
  s.path.waypoints = {p0, p1, p2, pb, p3, p4, p5, p0};
  s.path.corner_deg = corner_angles(s.path.waypoints);
  s.b_index = 3;
  s.start = {0.0, 0.0, 0.0};
  s.catalog = default_catalog();
  // Clutter inside and around the loop, all at least 0.45 m from the path.
  s.obstacles = {
      {0.30, 0.45, 0.80, 1.05},    // inside the loop
      {-0.85, 0.45, -0.45, 0.75},  // inside, near the bends
      {1.80, 0.40, 2.10, 1.10},    // outside, right of the first climb
      {-0.30, 1.95, 0.60, 2.25},   // beyond the top edge
      {-2.10, 0.10, -1.80, 0.90},  // outside the left edge
      {0.40, -0.75, 1.00, -0.45},  // below the start line
  };
  return s;
}

nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  for (const auto& p : s.path.waypoints) j["waypoints"].push_back({p.x, p.y});
  for (const auto& r : s.obstacles) j["obstacles"].push_back({r.xmin, r.ymin, r.xmax, r.ymax});
  if (s.obstacles.empty()) j["obstacles"] = nlohmann::json::array();
  j["b_index"] = s.b_index;
  j["start"] = {s.start.x, s.start.y, s.start.theta};
  for (const auto& o : s.catalog) {
    j["catalog"].push_back({{"name", o.name},
                            {"mass_g", o.mass_g},
                            {"width_cm", o.width_cm},
                            {"roughness_ra_um", o.roughness_ra_um},
                            {"fragility_n", o.fragility_n},
                            {"liquid", o.liquid},
                            {"fill", o.fill}});
  }
  return j;
}

Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  if (!j.is_object()) throw InvalidSpec("scenario must be a JSON object");
  const auto known = [](const nlohmann::json& obj, std::initializer_list<const char*> keys, const char* what) {
    for (const auto& [k, _] : obj.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* n) { return k == n; })) {
        throw InvalidSpec(std::string("unknown ") + what + " key '" + k + "'");
      }
    }
  };
  known(j, {"waypoints", "obstacles", "b_index", "start", "catalog"}, "scenario");
  try {
    for (const auto& p : j.at("waypoints")) s.path.waypoints.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    for (const auto& r : j.value("obstacles", nlohmann::json::array())) {
      s.obstacles.push_back({r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>()});
    }
    s.b_index = j.at("b_index").get<std::size_t>();
    if (auto it = j.find("start"); it != j.end()) {
      s.start = {it->at(0).get<double>(), it->at(1).get<double>(), it->at(2).get<double>()};
    } else {
      s.start = {s.path.waypoints.at(0).x, s.path.waypoints.at(0).y, 0.0};
    }
    if (auto it = j.find("catalog"); it != j.end()) {
      for (const auto& o : *it) {
        known(o, {"name", "mass_g", "width_cm", "roughness_ra_um", "fragility_n", "liquid", "fill"}, "catalog");
        ObjectSpec spec;
        spec.name = o.at("name").get<std::string>();
        spec.mass_g = o.at("mass_g").get<double>();
        spec.width_cm = o.at("width_cm").get<double>();
        spec.roughness_ra_um = o.value("roughness_ra_um", grit_roughness(Grit::kSmooth));
        spec.fragility_n = o.value("fragility_n", 1e9);
        spec.liquid = o.value("liquid", false);
        spec.fill = o.value("fill", 0.0);
        s.catalog.push_back(spec);
      }
    } else {
      s.catalog = default_catalog();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidSpec(std::string("malformed scenario: ") + e.what());
  }
  s.path.corner_deg = corner_angles(s.path.waypoints);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec("cannot open scenario " + path.string());
  try {
    return scenario_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidSpec("scenario " + path.string() + " is not valid JSON");
  }
}

}  // namespace mmg

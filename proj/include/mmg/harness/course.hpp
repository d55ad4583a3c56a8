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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmg/robot.hpp"

namespace mmg {

/// A navigation scenario: a closed reference loop from A through B back to A,
/// obstacles, and where the robot starts.
struct Scenario {
  PathSpec path;
  std::vector<Rect> obstacles;
  std::size_t b_index = 0;  // waypoint index of point B
  Pose start;
  // Objects used by the transfer runs and placed at B in live sessions.
  std::vector<ObjectSpec> catalog;

  /// Requires three right-angle and two half-right-angle turns, a clear path
  /// and a usable object catalog.
  void validate(double robot_radius) const;
  Point b() const { return path.waypoints.at(b_index); }
};

/// Watch, earphones and a filled water cup; surface roughness is set per run.
std::vector<ObjectSpec> default_catalog();

/// 8 m loop: two straights either side of a 90/90 pair, two 45 degree bends,
/// and a final 90 back onto the start line.
Scenario default_course();

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);
Scenario load_scenario(const std::filesystem::path& path);

/// Signed turn at each interior waypoint, degrees (counter-clockwise positive).
std::vector<double> corner_angles(const std::vector<Point>& waypoints);

}  // namespace mmg

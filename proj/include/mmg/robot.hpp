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

// Mobile manipulator simulation: omnidirectional base, rectangle obstacles
// with an ultrasonic stop, a two-finger gripper and the grasp, transport
// and release physics used by the experiments.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmg/random.hpp"

namespace mmg {

inline constexpr double kGravity = 9.81;
inline constexpr double kMaxAperture = 0.08;  // m

struct Point {
  double x = 0.0, y = 0.0;
  bool operator==(const Point&) const = default;
};

struct Pose {
  double x = 0.0, y = 0.0, theta = 0.0;
  bool operator==(const Pose&) const = default;
};

/// Body-frame velocity: vx forward, vy left, omega counter-clockwise.
struct Twist {
  double vx = 0.0, vy = 0.0, omega = 0.0;
  bool operator==(const Twist&) const = default;
};

struct Rect {
  double xmin, ymin, xmax, ymax;
};

struct RobotParams {
  double radius = 0.15;          // circular footprint
  double v_max = 0.5;            // m/s
  double omega_max = 1.0;        // rad/s
  bool slew_limit = true;
  double a_max = 1.0;            // m/s^2
  double alpha_max = 4.0;        // rad/s^2
  bool ultrasonic_enabled = true;
  double ultrasonic_range = 2.0;      // m
  double ultrasonic_threshold = 0.15; // m
  double gripper_reach = 0.20;   // gripper centre ahead of the base centre, m
  double gripper_radius = 0.04;
  double scrape_inflation = 0.02;
  double dt = 0.01;              // s

  void validate() const;
};

enum class RobotEvent { kCollision, kEstop };

struct StepResult {
  bool collision = false;
  bool estop = false;        // ultrasonic stop fired this step
  double ultrasonic_m = 0.0; // free travel along the intended displacement
  double linear_accel = 0.0; // |dv|/dt of the world-frame velocity
  double angular_accel = 0.0;
};

class World {
 public:
  World() = default;
  World(RobotParams params, std::vector<Rect> obstacles, Pose start = {});

  /// Advances one step of `dt` seconds (0 < dt <= 0.05).
  StepResult step(const Twist& command, double dt);
  StepResult step(const Twist& command) { return step(command, params_.dt); }

  /// Operator stop: zeroes velocity now and ignores commands until cleared.
  void emergency_stop();
  void clear_estop() { estop_latched_ = false; }
  bool estop_latched() const { return estop_latched_; }

  bool collides(const Pose& p) const;
  Point gripper_position() const;

  const Pose& pose() const { return pose_; }
  const Twist& velocity() const { return vel_; }
  const RobotParams& params() const { return params_; }
  const std::vector<Rect>& obstacles() const { return obstacles_; }
  double clock_ms() const { return clock_ms_; }
  long collisions() const { return collisions_; }
  long estops() const { return estops_; }
  void set_pose(const Pose& p) { pose_ = p; }

  // Manipulator state.
  double aperture = kMaxAperture;
  double grip_force = 0.0;
  double arm_angle = 0.0;
  std::optional<int> held;

 private:
  RobotParams params_;
  std::vector<Rect> obstacles_;
  Pose pose_;
  Twist vel_;
  double clock_ms_ = 0.0;
  long collisions_ = 0;
  long estops_ = 0;
  bool estop_latched_ = false;
};

/// Distance the robot disc can travel from `from` along unit `dir` before
/// touching an obstacle, capped at `max_range`.
double sweep_distance(const Point& from, double radius, const Point& dir, std::span<const Rect> obstacles,
                      double max_range);

struct UltrasonicReading {
  double distance_m;
  bool estop;
};

/// Forward-looking ultrasonic reading along the current heading.
UltrasonicReading ultrasonic(const World& w, double max_range_m, double stop_threshold_m);

// ---------------------------------------------------------------------------
// Objects and grasping

enum class Grit { kSmooth, kFine1200, kCoarse120 };

double grit_roughness(Grit g);
const char* grit_name(Grit g);

struct ObjectSpec {
  std::string name;
  double mass_g = 100.0;
  double width_cm = 5.0;
  double roughness_ra_um = 5.0;
  double fragility_n = 1e9;
  bool liquid = false;
  double fill = 0.0;

  void validate() const;
};

/// Piecewise-linear friction table: 0.25 at Ra 0, 0.55 at 50 um, 0.85 at 100 um.
double friction_coefficient(double ra_um);
/// Two-contact grip force needed to hold `obj` against gravity with a safety factor.
double required_grip_force(const ObjectSpec& obj, double safety = 1.5);

enum class GraspOutcome { kHeld, kSlip, kDamaged, kMissed };
const char* grasp_outcome_name(GraspOutcome o);

inline constexpr double kAlignmentTolerance = 0.04;  // m

/// Outcome for a closed grip; priority MISSED, DAMAGED, HELD, SLIP.
GraspOutcome grasp_outcome(const ObjectSpec& obj, double applied_force_n, double misalignment_m,
                           double aperture_m = kMaxAperture, double safety = 1.5);

/// Closes the gripper on an object located at `object_at`.
GraspOutcome grasp(World& w, int object_id, const ObjectSpec& obj, const Point& object_at, double applied_force_n);

// ---------------------------------------------------------------------------
// Transport and release

struct TrajectorySample {
  double t_ms = 0.0;
  Pose pose;
  Twist velocity;
  double grip_force = 0.0;
};

struct TransportParams {
  double alpha_spill = 3.0;        // rad/s^2
  double a_spill = 2.0;            // m/s^2
  double spill_duration_ms = 100.0;
  double slip_timeout_ms = 500.0;
  double safety = 1.5;
};

struct TransportEvents {
  bool spill = false;
  bool drop = false;
  bool scrape = false;
  double spill_at_ms = -1.0;
  double drop_at_ms = -1.0;
  double scrape_at_ms = -1.0;
  double max_linear_accel = 0.0;
  double max_angular_accel = 0.0;

  bool any() const { return spill || drop || scrape; }
};

/// Scans a held-object trajectory for spills, drops and scrapes. Pure in its
/// inputs, so a logged trace always reproduces the same events.
TransportEvents transport_check(std::span<const TrajectorySample> trace, const ObjectSpec& obj,
                                const RobotParams& robot, std::span<const Rect> obstacles,
                                const TransportParams& tp = {});

enum class ReleaseStrategy { kLight, kStandard, kGradual };
enum class ReleaseOutcome { kPlaced, kTipped, kSpilled };
const char* release_strategy_name(ReleaseStrategy s);
const char* release_outcome_name(ReleaseOutcome o);

double release_duration_s(ReleaseStrategy s);

struct ReleaseResult {
  ReleaseOutcome outcome;
  double duration_s;
};

/// Ramps the grip to zero. Throws RejectedAction if nothing is held or the base is moving.
ReleaseResult release(World& w, const ObjectSpec& obj, ReleaseStrategy strategy);
ReleaseOutcome release_outcome(const ObjectSpec& obj, ReleaseStrategy strategy);

// ---------------------------------------------------------------------------
// Reference paths

struct PathSpec {
  std::vector<Point> waypoints;
  std::vector<double> corner_deg;  // signed turn at each interior waypoint

  double length() const;
  void validate() const;
};

double point_segment_distance(const Point& p, const Point& a, const Point& b);
double point_polyline_distance(const Point& p, const PathSpec& path);
/// Mean distance of the executed positions to the reference polyline, in cm.
double trajectory_deviation_cm(std::span<const Point> executed, const PathSpec& ref);

}  // namespace mmg

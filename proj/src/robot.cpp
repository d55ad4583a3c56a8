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

#include "mmg/robot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "mmg/error.hpp"

namespace mmg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double rect_distance(const Point& p, const Rect& r) {
  const double dx = std::max({r.xmin - p.x, 0.0, p.x - r.xmax});
  const double dy = std::max({r.ymin - p.y, 0.0, p.y - r.ymax});
  return std::hypot(dx, dy);
}

// Entry parameter of the ray p + t*d into an axis-aligned box, or +inf.
double ray_box(const Point& p, const Point& d, double x0, double y0, double x1, double y1) {
  double tmin = -kInf, tmax = kInf;
  const std::array<std::array<double, 4>, 2> axes = {{{p.x, d.x, x0, x1}, {p.y, d.y, y0, y1}}};
  for (const auto& [o, dir, lo, hi] : axes) {
    if (dir == 0.0) {
      if (o < lo || o > hi) return kInf;
      continue;
    }
    double a = (lo - o) / dir, b = (hi - o) / dir;
    if (a > b) std::swap(a, b);
    tmin = std::max(tmin, a);
    tmax = std::min(tmax, b);
  }
  if (tmin > tmax || tmax < 0.0) return kInf;
  return std::max(tmin, 0.0);
}

double ray_circle(const Point& p, const Point& d, const Point& c, double r) {
  const double fx = p.x - c.x, fy = p.y - c.y;
  const double b = fx * d.x + fy * d.y;
  const double cc = fx * fx + fy * fy - r * r;
  if (cc <= 0.0) return 0.0;
  const double disc = b * b - cc;  // |d| = 1
  if (disc < 0.0) return kInf;
  const double t = -b - std::sqrt(disc);
  return t >= 0.0 ? t : kInf;
}

Point world_velocity(double theta, const Twist& v) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {v.vx * c - v.vy * s, v.vx * s + v.vy * c};
}

double toward(double from, double to, double max_delta) {
  return from + std::clamp(to - from, -max_delta, max_delta);
}

}  // namespace

void RobotParams::validate() const {
  if (!(radius > 0.0)) throw InvalidSpec("robot radius must be positive");
  if (!(v_max > 0.0) || !(omega_max > 0.0)) throw InvalidSpec("velocity limits must be positive");
  if (slew_limit && (!(a_max > 0.0) || !(alpha_max > 0.0))) throw InvalidSpec("slew limits must be positive");
  if (!(ultrasonic_range > 0.0) || !(ultrasonic_threshold >= 0.0)) throw InvalidSpec("bad ultrasonic settings");
  if (!(dt > 0.0 && dt <= 0.05)) throw InvalidSpec("dt must lie in (0, 50 ms]");
}

World::World(RobotParams params, std::vector<Rect> obstacles, Pose start)
    : params_(params), obstacles_(std::move(obstacles)), pose_(start) {
  params_.validate();
  for (const auto& r : obstacles_) {
    if (!(r.xmin < r.xmax && r.ymin < r.ymax)) throw InvalidSpec("obstacle rectangle is empty");
  }
  if (collides(pose_)) throw InvalidSpec("start pose overlaps an obstacle");
}

bool World::collides(const Pose& p) const {
  for (const auto& r : obstacles_) {
    if (rect_distance({p.x, p.y}, r) < params_.radius - 1e-12) return true;
  }
  return false;
}

Point World::gripper_position() const {
  return {pose_.x + params_.gripper_reach * std::cos(pose_.theta),
          pose_.y + params_.gripper_reach * std::sin(pose_.theta)};
}

void World::emergency_stop() {
  vel_ = {};
  estop_latched_ = true;
  ++estops_;
}

StepResult World::step(const Twist& command, double dt) {
  if (!(dt > 0.0 && dt <= 0.05)) throw RejectedInput("step dt must lie in (0, 0.05] s");
  StepResult res;
  Twist target = estop_latched_ ? Twist{} : command;
  // Clamp to the base limits; the linear part is limited in magnitude.
  const double speed = std::hypot(target.vx, target.vy);
  if (speed > params_.v_max) {
    target.vx *= params_.v_max / speed;
    target.vy *= params_.v_max / speed;
  }
  target.omega = std::clamp(target.omega, -params_.omega_max, params_.omega_max);

  Twist next = target;
  if (params_.slew_limit) {
    next.vx = toward(vel_.vx, target.vx, params_.a_max * dt);
    next.vy = toward(vel_.vy, target.vy, params_.a_max * dt);
    next.omega = toward(vel_.omega, target.omega, params_.alpha_max * dt);
  }

  // Midpoint heading makes a step exactly undone by the negated step.
  auto displacement = [&](const Twist& v) {
    const double mid = pose_.theta + 0.5 * v.omega * dt;
    const Point w = world_velocity(mid, v);
    return Point{w.x * dt, w.y * dt};
  };
  Point d = displacement(next);
  const double len = std::hypot(d.x, d.y);
  res.ultrasonic_m = params_.ultrasonic_range;
  if (params_.ultrasonic_enabled && len > 0.0) {
    res.ultrasonic_m = sweep_distance({pose_.x, pose_.y}, params_.radius, {d.x / len, d.y / len}, obstacles_,
                                      params_.ultrasonic_range);
    if (res.ultrasonic_m < params_.ultrasonic_threshold) {
      res.estop = true;
      ++estops_;
      next = {};
      d = {};
    }
  }

  const Point v_before = world_velocity(pose_.theta, vel_);
  const double omega_before = vel_.omega;
  Pose moved{pose_.x + d.x, pose_.y + d.y, pose_.theta + next.omega * dt};
  if (collides(moved)) {
    res.collision = true;
    ++collisions_;
    next = {};
    moved = pose_;
  }
  pose_ = moved;
  vel_ = next;
  const Point v_after = world_velocity(pose_.theta, vel_);
  res.linear_accel = std::hypot(v_after.x - v_before.x, v_after.y - v_before.y) / dt;
  res.angular_accel = std::fabs(vel_.omega - omega_before) / dt;
  clock_ms_ += dt * 1000.0;
  return res;
}

double sweep_distance(const Point& from, double radius, const Point& dir, std::span<const Rect> obstacles,
                      double max_range) {
  double best = max_range;
  for (const auto& r : obstacles) {
    // Disc-vs-rectangle is a ray against the rectangle grown by the radius.
    double t = std::min(ray_box(from, dir, r.xmin - radius, r.ymin, r.xmax + radius, r.ymax),
                        ray_box(from, dir, r.xmin, r.ymin - radius, r.xmax, r.ymax + radius));
    for (const Point c : {Point{r.xmin, r.ymin}, Point{r.xmax, r.ymin}, Point{r.xmin, r.ymax}, Point{r.xmax, r.ymax}}) {
      t = std::min(t, ray_circle(from, dir, c, radius));
    }
    best = std::min(best, t);
  }
  return std::max(best, 0.0);
}

UltrasonicReading ultrasonic(const World& w, double max_range_m, double stop_threshold_m) {
  const Pose& p = w.pose();
  const double d = sweep_distance({p.x, p.y}, w.params().radius, {std::cos(p.theta), std::sin(p.theta)},
                                  w.obstacles(), max_range_m);
  return {d, d < stop_threshold_m};
}

// ---------------------------------------------------------------------------

double grit_roughness(Grit g) {
  switch (g) {
    case Grit::kSmooth: return 5.0;
    case Grit::kFine1200: return 30.0;
    case Grit::kCoarse120: return 90.0;
  }
  return 0.0;
}

const char* grit_name(Grit g) {
  switch (g) {
    case Grit::kSmooth: return "smooth";
    case Grit::kFine1200: return "1200-grit";
    case Grit::kCoarse120: return "120-grit";
  }
  return "?";
}

void ObjectSpec::validate() const {
  if (!(mass_g >= 50.0 && mass_g <= 500.0)) throw InvalidSpec(name + ": mass must lie in [50, 500] g");
  if (!(width_cm >= 3.0 && width_cm <= 8.0)) throw InvalidSpec(name + ": width must lie in [3, 8] cm");
  if (!(roughness_ra_um >= 0.0 && roughness_ra_um <= 100.0)) throw InvalidSpec(name + ": Ra must lie in [0, 100] um");
  if (!(fragility_n > 0.0)) throw InvalidSpec(name + ": fragility limit must be positive");
  if (!(fill >= 0.0 && fill <= 1.0)) throw InvalidSpec(name + ": fill must lie in [0, 1]");
}

double friction_coefficient(double ra_um) {
  static constexpr std::array<std::pair<double, double>, 3> table = {{{0.0, 0.25}, {50.0, 0.55}, {100.0, 0.85}}};
  const double ra = std::clamp(ra_um, table.front().first, table.back().first);
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (ra <= table[i].first) {
      const auto [x0, y0] = table[i - 1];
      const auto [x1, y1] = table[i];
      return y0 + (y1 - y0) * (ra - x0) / (x1 - x0);
    }
  }
  return table.back().second;
}

double required_grip_force(const ObjectSpec& obj, double safety) {
  return safety * (obj.mass_g / 1000.0) * kGravity / (2.0 * friction_coefficient(obj.roughness_ra_um));
}

const char* grasp_outcome_name(GraspOutcome o) {
  switch (o) {
    case GraspOutcome::kHeld: return "HELD";
    case GraspOutcome::kSlip: return "SLIP";
    case GraspOutcome::kDamaged: return "DAMAGED";
    case GraspOutcome::kMissed: return "MISSED";
  }
  return "?";
}

GraspOutcome grasp_outcome(const ObjectSpec& obj, double applied_force_n, double misalignment_m, double aperture_m,
                           double safety) {
  if (!(applied_force_n >= 0.0)) throw RejectedInput("grip force must be non-negative");
  if (misalignment_m > kAlignmentTolerance || aperture_m < obj.width_cm / 100.0) return GraspOutcome::kMissed;
  if (applied_force_n > obj.fragility_n) return GraspOutcome::kDamaged;
  if (applied_force_n >= required_grip_force(obj, safety)) return GraspOutcome::kHeld;
  return GraspOutcome::kSlip;
}

GraspOutcome grasp(World& w, int object_id, const ObjectSpec& obj, const Point& object_at, double applied_force_n) {
  if (w.held) throw RejectedAction("gripper already holds an object");
  const Point g = w.gripper_position();
  const auto outcome =
      grasp_outcome(obj, applied_force_n, std::hypot(g.x - object_at.x, g.y - object_at.y), w.aperture);
  if (outcome == GraspOutcome::kHeld || outcome == GraspOutcome::kSlip) {
    w.held = object_id;
    w.aperture = obj.width_cm / 100.0;
    w.grip_force = applied_force_n;
  }
  return outcome;
}

// ---------------------------------------------------------------------------

TransportEvents transport_check(std::span<const TrajectorySample> trace, const ObjectSpec& obj,
                                const RobotParams& robot, std::span<const Rect> obstacles, const TransportParams& tp) {
  TransportEvents ev;
  const double f_req = required_grip_force(obj, tp.safety);
  double over_run_ms = 0.0;
  double deficit_start = -1.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& s = trace[i];
    if (i > 0) {
      const auto& prev = trace[i - 1];
      const double dt_ms = s.t_ms - prev.t_ms;
      if (!(dt_ms > 0.0)) throw RejectedInput("trajectory timestamps must increase");
      const Point a = world_velocity(prev.pose.theta, prev.velocity);
      const Point b = world_velocity(s.pose.theta, s.velocity);
      const double lin = std::hypot(b.x - a.x, b.y - a.y) / (dt_ms / 1000.0);
      const double ang = std::fabs(s.velocity.omega - prev.velocity.omega) / (dt_ms / 1000.0);
      ev.max_linear_accel = std::max(ev.max_linear_accel, lin);
      ev.max_angular_accel = std::max(ev.max_angular_accel, ang);
      over_run_ms = (lin > tp.a_spill || ang > tp.alpha_spill) ? over_run_ms + dt_ms : 0.0;
      if (obj.liquid && !ev.spill && over_run_ms > tp.spill_duration_ms) {
        ev.spill = true;
        ev.spill_at_ms = s.t_ms;
      }
    }
    if (s.grip_force < f_req) {
      if (deficit_start < 0.0) deficit_start = s.t_ms;
      if (!ev.drop && s.t_ms - deficit_start > tp.slip_timeout_ms) {
        ev.drop = true;
        ev.drop_at_ms = s.t_ms;
      }
    } else {
      deficit_start = -1.0;
    }
    if (!ev.scrape) {
      const Point g{s.pose.x + robot.gripper_reach * std::cos(s.pose.theta),
                    s.pose.y + robot.gripper_reach * std::sin(s.pose.theta)};
      for (const auto& r : obstacles) {
        if (rect_distance(g, r) < robot.gripper_radius + robot.scrape_inflation) {
          ev.scrape = true;
          ev.scrape_at_ms = s.t_ms;
          break;
        }
      }
    }
  }
  return ev;
}

const char* release_strategy_name(ReleaseStrategy s) {
  switch (s) {
    case ReleaseStrategy::kLight: return "light";
    case ReleaseStrategy::kStandard: return "standard";
    case ReleaseStrategy::kGradual: return "gradual";
  }
  return "?";
}

const char* release_outcome_name(ReleaseOutcome o) {
  switch (o) {
    case ReleaseOutcome::kPlaced: return "PLACED";
    case ReleaseOutcome::kTipped: return "TIPPED";
    case ReleaseOutcome::kSpilled: return "SPILLED";
  }
  return "?";
}

double release_duration_s(ReleaseStrategy s) {
  switch (s) {
    case ReleaseStrategy::kLight: return 0.2;
    case ReleaseStrategy::kStandard: return 0.5;
    case ReleaseStrategy::kGradual: return 1.5;
  }
  return 0.0;
}

ReleaseOutcome release_outcome(const ObjectSpec& obj, ReleaseStrategy strategy) {
  if (obj.liquid && strategy != ReleaseStrategy::kGradual && obj.fill > 0.8) return ReleaseOutcome::kSpilled;
  // A quick drop from minimal force topples heavy items.
  if (strategy == ReleaseStrategy::kLight && obj.mass_g > 300.0) return ReleaseOutcome::kTipped;
  return ReleaseOutcome::kPlaced;
}

ReleaseResult release(World& w, const ObjectSpec& obj, ReleaseStrategy strategy) {
  if (!w.held) throw RejectedAction("nothing to release");
  const Twist& v = w.velocity();
  if (std::hypot(v.vx, v.vy) >= 0.02) throw RejectedAction("release requires a stationary base");
  const ReleaseResult r{release_outcome(obj, strategy), release_duration_s(strategy)};
  w.held.reset();
  w.grip_force = 0.0;
  w.aperture = kMaxAperture;
  return r;
}

// ---------------------------------------------------------------------------

double PathSpec::length() const {
  double total = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    total += std::hypot(waypoints[i].x - waypoints[i - 1].x, waypoints[i].y - waypoints[i - 1].y);
  }
  return total;
}

void PathSpec::validate() const {
  if (waypoints.size() < 2) throw InvalidSpec("path needs at least two waypoints");
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    if (waypoints[i] == waypoints[i - 1]) throw InvalidSpec("consecutive path waypoints coincide");
  }
  if (!(length() > 0.0)) throw InvalidSpec("path length must be positive");
}

double point_segment_distance(const Point& p, const Point& a, const Point& b) {
  const double ex = b.x - a.x, ey = b.y - a.y;
  const double len2 = ex * ex + ey * ey;
  double t = len2 > 0.0 ? ((p.x - a.x) * ex + (p.y - a.y) * ey) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * ex), p.y - (a.y + t * ey));
}

double point_polyline_distance(const Point& p, const PathSpec& path) {
  double best = kInf;
  for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
    best = std::min(best, point_segment_distance(p, path.waypoints[i - 1], path.waypoints[i]));
  }
  return best;
}

double trajectory_deviation_cm(std::span<const Point> executed, const PathSpec& ref) {
  if (executed.empty()) throw RejectedInput("executed path is empty");
  ref.validate();
  double sum = 0.0;
  for (const auto& p : executed) sum += point_polyline_distance(p, ref);
  return 100.0 * sum / static_cast<double>(executed.size());
}

}  // namespace mmg

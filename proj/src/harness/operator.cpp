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

#include "mmg/harness/operator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mmg {

namespace {

double wrap(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

double sign(double x) { return x < 0.0 ? -1.0 : 1.0; }

}  // namespace

bool seq_newer(std::uint16_t seq, std::uint16_t last) {
  return static_cast<std::int16_t>(static_cast<std::uint16_t>(seq - last)) > 0;
}

Point world_velocity_of(const TrajectorySample& s) {
  const double c = std::cos(s.pose.theta), sn = std::sin(s.pose.theta);
  return {s.velocity.vx * c - s.velocity.vy * sn, s.velocity.vx * sn + s.velocity.vy * c};
}

// ---------------------------------------------------------------------------

TeleopRig::TeleopRig(const HarnessConfig& cfg, World world, std::uint64_t link_seed)
    : cfg_(cfg), world_(std::move(world)), up_([&] {
        LinkConfig l = cfg.link;
        l.seed = derive_seed(link_seed, 1);
        return l;
      }()),
      down_([&] {
        LinkConfig l = cfg.link;
        l.seed = derive_seed(link_seed, 2);
        return l;
      }()) {
  next_tick_ms_ = world_.clock_ms();
  record();
}

void TeleopRig::press() { state_ = button_fsm(state_, {ButtonAction::kPress, now_ms()}, cfg_.control); }

void TeleopRig::release() { state_ = button_fsm(state_, {ButtonAction::kRelease, now_ms()}, cfg_.control); }

void TeleopRig::set_tilt(double pitch_deg, double roll_deg) {
  pitch_ = std::clamp(pitch_deg, -90.0, 90.0);
  roll_ = std::clamp(roll_deg, -90.0, 90.0);
}

SendResult TeleopRig::send_up(FrameKind kind, std::vector<std::uint8_t> payload) {
  return up_.submit({up_.next_seq(), kind, std::move(payload)}, now_ms());
}

SendResult TeleopRig::send_down(FrameKind kind, std::vector<std::uint8_t> payload) {
  return down_.submit({down_.next_seq(), kind, std::move(payload)}, now_ms());
}

StepResult TeleopRig::step() {
  const double t = now_ms();
  if (t + 1e-9 >= next_tick_ms_) {
    state_ = button_fsm(state_, {ButtonAction::kTick, t}, cfg_.control);
    const Twist v = tilt_to_velocity({pitch_, roll_, t}, state_.mode, cfg_.control).twist;
    send_up(FrameKind::kVel,
            pack(VelPayload{static_cast<float>(v.vx), static_cast<float>(v.vy), static_cast<float>(v.omega)}));
    next_tick_ms_ += cfg_.navigation.driver.tick_ms;
  }
  for (auto& d : up_.poll(t)) {
    if (d.frame.kind == FrameKind::kVel) {
      if (!last_vel_seq_ || seq_newer(d.frame.seq, *last_vel_seq_)) {
        const VelPayload p = unpack_vel(d.frame.payload);
        applied_ = {p.vx, p.vy, p.omega};
        last_vel_seq_ = d.frame.seq;
        last_vel_ms_ = d.t_ms;
      }
    } else if (on_robot_frame) {
      on_robot_frame(d);
    }
  }
  for (auto& d : down_.poll(t)) {
    if (on_wearable_frame) on_wearable_frame(d);
  }
  const Twist cmd = t - last_vel_ms_ > kWatchdogMs ? Twist{} : applied_;
  const StepResult r = world_.step(cmd);
  record();
  return r;
}

void TeleopRig::record() {
  trace_.push_back({world_.clock_ms(), world_.pose(), world_.velocity(), world_.grip_force});
}

const TrajectorySample& TeleopRig::seen(double delay_ms) const {
  const double dt_ms = world_.params().dt * 1000.0;
  const double back = std::floor(delay_ms / dt_ms + 0.5);
  const auto last = static_cast<long>(trace_.size()) - 1;
  return trace_[static_cast<std::size_t>(std::max(0L, last - static_cast<long>(back)))];
}

// ---------------------------------------------------------------------------

std::vector<Leg> legs_of(const std::vector<Point>& w) {
  std::vector<Point> keys;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i > 0 && i + 1 < w.size()) {
      const double a = std::atan2(w[i].y - w[i - 1].y, w[i].x - w[i - 1].x);
      const double b = std::atan2(w[i + 1].y - w[i].y, w[i + 1].x - w[i].x);
      if (std::fabs(wrap(b - a)) < 1e-6) continue;
    }
    keys.push_back(w[i]);
  }
  std::vector<Leg> legs;
  for (std::size_t i = 1; i < keys.size(); ++i) {
    const double dx = keys[i].x - keys[i - 1].x, dy = keys[i].y - keys[i - 1].y;
    legs.push_back({keys[i - 1], keys[i], std::atan2(dy, dx), std::hypot(dx, dy)});
  }
  return legs;
}

Driver::Driver(std::vector<Leg> legs, OperatorParams op, ControlParams control, RobotParams robot, DriverStyle style,
               std::uint64_t seed)
    : legs_(std::move(legs)), op_(op), control_(control), robot_(robot), style_(style), rng_(seed) {
  if (legs_.empty()) throw InvalidSpec("driver needs at least one leg");
  enter(Phase::kAlign);
}

void Driver::enter(Phase p) {
  phase_ = p;
  delay_ms_ = rng_.uniform(op_.reaction_min_ms, op_.reaction_max_ms);
}

double Driver::roll_for(double omega) const {
  if (std::fabs(omega) < 1e-9) return 0.0;
  const double span = control_.saturation_deg - control_.dead_zone_deg;
  return sign(omega) * (control_.dead_zone_deg + span * std::min(1.0, std::fabs(omega) / control_.omega_max));
}

TiltReading Driver::decide(const TeleopRig& rig) {
  const TrajectorySample& s = rig.seen(delay_ms_);
  // The operator extrapolates over what they take to be a typical lag.
  const double lead = 0.5e-3 * (op_.reaction_min_ms + op_.reaction_max_ms);
  const Point v = world_velocity_of(s);
  const Point p{s.pose.x + v.x * lead, s.pose.y + v.y * lead};
  const double theta = s.pose.theta + s.velocity.omega * lead;
  const double speed = std::hypot(v.x, v.y);
  const bool still = speed < 0.01 && std::fabs(s.velocity.omega) < 0.02;
  const bool turning_hard = style_.rough_turns;
  const double turn_cap = style_.gentle && !turning_hard ? op_.gentle_turn_rate : control_.omega_max;

  double pitch = 0.0, omega = 0.0;
  bool snap = turning_hard;
  if (phase_ == Phase::kAlign) {
    // Letting go while turning still carries the robot through its braking arc.
    const double brake = 0.5 * s.velocity.omega * std::fabs(s.velocity.omega) / robot_.alpha_max;
    const double err = wrap(legs_[leg_].heading - theta - brake);
    const double tol = op_.align_tolerance_deg * std::numbers::pi / 180.0;
    // Turns are discrete: rotate until the heading looks right, let go, and
    // only judge the result once the robot has settled.
    if (turn_dir_ != 0.0 && (std::fabs(err) <= tol || sign(err) != turn_dir_)) turn_dir_ = 0.0;
    if (turn_dir_ == 0.0 && still) {
      if (std::fabs(err) <= tol) {
        enter(Phase::kDrive);
      } else {
        turn_dir_ = sign(err);
      }
    }
    if (turn_dir_ != 0.0) omega = turn_dir_ * std::min(turn_cap, op_.turn_gain * std::fabs(err) + op_.min_turn_rate);
  }
  if (phase_ == Phase::kDrive) {
    const Leg& leg = legs_[leg_];
    const Point u{std::cos(leg.heading), std::sin(leg.heading)};
    const double cross = u.x * (p.y - leg.from.y) - u.y * (p.x - leg.from.x);
    const double dev = wrap(theta - leg.heading);
    omega = std::clamp(-op_.heading_gain * dev - op_.crosstrack_gain * cross, -op_.steer_limit, op_.steer_limit);
    omega = std::clamp(omega, -turn_cap, turn_cap);
    snap = false;
    const double remaining = u.x * (leg.to.x - p.x) + u.y * (leg.to.y - p.y);
    const double along = u.x * v.x + u.y * v.y;
    if (remaining <= along * along / (2.0 * robot_.a_max)) {
      omega = 0.0;
      enter(Phase::kStop);
    } else {
      pitch = control_.saturation_deg + control_.dead_zone_deg;
    }
  } else if (phase_ == Phase::kStop && still) {
    if (leg_ + 1 == legs_.size()) {
      phase_ = Phase::kDone;
    } else {
      ++leg_;
      enter(Phase::kAlign);
    }
  }

  const double target_roll = roll_for(omega);
  if (style_.gentle && !snap) {
    const double step = op_.gentle_roll_rate * op_.tick_ms * 1e-3;
    roll_ += std::clamp(target_roll - roll_, -step, step);
  } else {
    roll_ = target_roll;
  }
  return {pitch + rng_.normal(0.0, op_.tilt_noise_deg), roll_ + rng_.normal(0.0, op_.tilt_noise_deg), rig.now_ms()};
}

DriveOutcome drive(TeleopRig& rig, Driver& driver, double timeout_s, double tick_ms) {
  DriveOutcome out;
  const double start = rig.now_ms();
  const long c0 = rig.world().collisions(), e0 = rig.world().estops();
  double next_decision = start;
  while (rig.now_ms() - start < timeout_s * 1000.0) {
    if (rig.now_ms() + 1e-9 >= next_decision) {
      const TiltReading t = driver.decide(rig);
      rig.set_tilt(t.pitch_deg, t.roll_deg);
      next_decision += tick_ms;
    }
    rig.step();
    const Twist& v = rig.world().velocity();
    const bool moving = v.vx != 0.0 || v.vy != 0.0 || v.omega != 0.0;
    if (moving && out.first_motion_ms < 0.0) out.first_motion_ms = rig.now_ms() - rig.world().params().dt * 1000.0;
    if (driver.done() && !moving) {
      out.completed = true;
      out.end_ms = rig.now_ms();
      break;
    }
  }
  out.collisions = rig.world().collisions() - c0;
  out.estops = rig.world().estops() - e0;
  return out;
}

}  // namespace mmg

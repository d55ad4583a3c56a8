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

// Closed teleoperation loop used by the scripted experiments: a wearable
// (button machine plus tilt) sends frames over the simulated link to a robot
// stepping at a fixed rate, and a scripted driver closes the loop from a
// delayed view of the robot.

#include <functional>
#include <optional>
#include <vector>

#include "mmg/control.hpp"
#include "mmg/harness/config.hpp"
#include "mmg/link.hpp"
#include "mmg/random.hpp"
#include "mmg/robot.hpp"

namespace mmg {

inline constexpr double kWatchdogMs = 250.0;

/// True when `seq` is newer than `last` in 16-bit serial-number order.
bool seq_newer(std::uint16_t seq, std::uint16_t last);

class TeleopRig {
 public:
  TeleopRig(const HarnessConfig& cfg, World world, std::uint64_t link_seed);

  double now_ms() const { return world_.clock_ms(); }
  World& world() { return world_; }
  const World& world() const { return world_; }
  const ControlState& wearable() const { return state_; }

  void press();
  void release();
  void set_tilt(double pitch_deg, double roll_deg);

  /// Wearable to robot, for frames other than the periodic VEL stream.
  SendResult send_up(FrameKind kind, std::vector<std::uint8_t> payload);
  /// Robot to wearable.
  SendResult send_down(FrameKind kind, std::vector<std::uint8_t> payload);

  /// Called with every non-VEL frame the robot receives, and every frame the wearable receives.
  std::function<void(const Delivery&)> on_robot_frame;
  std::function<void(const Delivery&)> on_wearable_frame;

  /// Advances one robot step; runs a wearable tick first when one is due.
  StepResult step();

  const std::vector<TrajectorySample>& trace() const { return trace_; }
  /// The trace sample at `now - delay_ms`, clamped to the first sample.
  const TrajectorySample& seen(double delay_ms) const;
  const Channel& uplink() const { return up_; }

 private:
  void record();

  HarnessConfig cfg_;
  World world_;
  Channel up_;
  Channel down_;
  ControlState state_;
  double pitch_ = 0.0, roll_ = 0.0;
  double next_tick_ms_ = 0.0;
  std::optional<std::uint16_t> last_vel_seq_;
  Twist applied_;
  double last_vel_ms_ = -1e18;
  std::vector<TrajectorySample> trace_;
};

/// One straight leg between two turning points.
struct Leg {
  Point from, to;
  double heading;
  double length;
};

/// Drops collinear waypoints and returns the legs between the remaining ones.
std::vector<Leg> legs_of(const std::vector<Point>& waypoints);

struct DriverStyle {
  bool gentle = false;       // carrying liquid: slower, smoother turns
  bool rough_turns = false;  // snaps the hand over at turns regardless
};

/// Scripted operator: turn in place at each corner, then drive the leg while
/// steering on heading and cross-track error seen through a reaction delay.
class Driver {
 public:
  Driver(std::vector<Leg> legs, OperatorParams op, ControlParams control, RobotParams robot, DriverStyle style,
         std::uint64_t seed);

  /// Chooses the hand tilt for this operator tick.
  TiltReading decide(const TeleopRig& rig);
  /// The last leg has been driven and the operator saw the robot stop.
  bool done() const { return phase_ == Phase::kDone; }
  std::size_t leg() const { return leg_; }
  int phase() const { return static_cast<int>(phase_); }

 private:
  enum class Phase { kAlign, kDrive, kStop, kDone };

  double roll_for(double omega) const;
  void enter(Phase p);

  std::vector<Leg> legs_;
  OperatorParams op_;
  ControlParams control_;
  RobotParams robot_;
  DriverStyle style_;
  Rng rng_;
  Phase phase_ = Phase::kAlign;
  std::size_t leg_ = 0;
  double delay_ms_ = 300.0;
  double roll_ = 0.0;
  double turn_dir_ = 0.0;  // sign of the turn in progress, 0 when not turning
};

struct DriveOutcome {
  bool completed = false;
  double first_motion_ms = -1.0;
  double end_ms = -1.0;
  long collisions = 0;
  long estops = 0;
};

/// Runs `driver` on `rig` until it finishes and the robot is still, or until `timeout_s`.
DriveOutcome drive(TeleopRig& rig, Driver& driver, double timeout_s, double tick_ms);

/// World-frame velocity of a trace sample.
Point world_velocity_of(const TrajectorySample& s);

}  // namespace mmg

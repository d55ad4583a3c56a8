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

// Wearable-side control: the button mode machine, tilt steering, grip-force
// haptic feedback and the windowed gesture-to-command pipeline.

#include <deque>
#include <limits>
#include <optional>
#include <vector>

#include "mmg/classifier.hpp"
#include "mmg/error.hpp"
#include "mmg/gesture.hpp"
#include "mmg/robot.hpp"
#include "mmg/signal.hpp"

namespace mmg {

class RejectedEvent : public RejectedInput {
 public:
  explicit RejectedEvent(const std::string& what) : RejectedInput(what) {}
};

enum class Mode { kIdle, kMovement, kGrasp };
const char* mode_name(Mode m);

struct ControlParams {
  double hold_ms = 3000.0;
  double double_press_gap_ms = 400.0;  // first release to second press
  double dead_zone_deg = 5.0;
  double saturation_deg = 35.0;
  double v_max = 0.5;
  double omega_max = 1.0;
  double f_max_n = 12.0;

  void validate() const;
};

enum class ButtonAction { kPress, kRelease, kTick };

struct ButtonEvent {
  ButtonAction action;
  double t_ms;
};

struct ControlState {
  Mode mode = Mode::kIdle;
  bool pressed = false;
  double press_t_ms = 0.0;
  double last_t_ms = -std::numeric_limits<double>::infinity();
  bool hold_fired = false;
  std::optional<double> short_release_ms;  // first half of a possible double press
  bool double_armed = false;               // current press followed a short release in time
  int grip_level = 3;
  int force_bin = 1;
  int feedback_index = 1;

  /// Checks the state-level invariants.
  bool valid() const;
};

/// One event through the mode machine. Ticks let a held button switch mode
/// before it is released. Throws RejectedEvent on a timestamp going backwards.
ControlState button_fsm(ControlState s, const ButtonEvent& e, const ControlParams& p = {});

struct TiltReading {
  double pitch_deg = 0.0;
  double roll_deg = 0.0;
  double t_ms = 0.0;
};

struct VelocityCommand {
  Twist twist;
  double t_ms = 0.0;
};

/// Forward tilt drives +vx, positive roll turns counter-clockwise. Zero outside MOVEMENT.
VelocityCommand tilt_to_velocity(const TiltReading& t, Mode mode, const ControlParams& p = {});

inline constexpr int kForceBins = 6;
inline constexpr int kFeedbackSlip = 7;
inline constexpr int kFeedbackOverForce = 8;

int force_bin(double force_n, double f_max_n = 12.0);
/// Upper edge of a bin, the force commanded when a bin is selected.
double bin_force(int bin, double f_max_n = 12.0);
/// Vibration index 1..8: bins 1..6, then slip (7) and over-force (8) warnings.
int force_to_feedback(double force_n, bool slip, bool over_force, double f_max_n = 12.0);

/// +1 on slip, -1 if the grip exceeds the requirement by more than one bin, else 0.
int grip_adjust(double current_force_n, const ObjectSpec& obj, bool slip, double f_max_n = 12.0);

/// Force bin an operator selects for each classified intensity.
int level_to_bin(ForceLevel level);

struct GripCommand {
  int cls = 0;
  double t_ms = 0.0;

  GestureClass gesture_class() const { return GestureClass::from_index(cls); }
};

struct PipelineParams {
  double window_s = 1.0;
  double overlap = 0.5;
  int vote_window = 3;
  int vote_quorum = 2;
  double activity_threshold = 40.0;  // peak above the channel median, sensor units
  double processing_ms = 50.0;

  void validate() const;
};

/// Streams raw samples through segmentation, an activity gate, the classifier
/// and a majority vote. Emits a command when the voted class changes; with no
/// checkpoint it never emits.
class CommandPipeline {
 public:
  CommandPipeline(std::optional<Classifier> classifier, PipelineParams params = {},
                  double sample_rate_hz = kDefaultSampleRateHz);

  bool has_model() const { return classifier_.has_value(); }

  /// Appends samples; the chunk's t0 must continue the stream.
  std::vector<GripCommand> push(const Trace& chunk, Mode mode);
  /// Runs one already-segmented window ending at `t_end_ms`.
  std::optional<GripCommand> on_window(const SignalWindow& raw, double t_end_ms, Mode mode);
  void reset();

  static bool active(const SignalWindow& raw, double threshold);
  const std::deque<int>& votes() const { return votes_; }

 private:
  std::optional<Classifier> classifier_;
  PipelineParams params_;
  double fs_;
  std::size_t window_;
  std::size_t hop_;
  std::array<std::deque<double>, kChannels> buffer_;
  std::size_t total_ = 0;
  std::deque<int> votes_;
  std::optional<int> emitted_;
};

/// Majority over the recent votes; returns a class only with `quorum` agreeing.
std::optional<int> majority(const std::deque<int>& votes, int quorum);

}  // namespace mmg

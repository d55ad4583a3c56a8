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

// Interactive session driven by protocol messages: the simulation state that
// `serve` exposes over the WebSocket, and the JSON-lines log that replays it.

#include <deque>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmg/control.hpp"
#include "mmg/harness/config.hpp"
#include "mmg/harness/course.hpp"
#include "mmg/robot.hpp"

namespace mmg {

inline constexpr int kTelemetryEveryTicks = 4;  // 25 Hz at the default 10 ms step
inline constexpr int kLogVersion = 1;

struct SessionEvent {
  long tick = 0;
  double t_ms = 0.0;
  std::string kind;
  std::string detail;
};

nlohmann::json event_to_json(const SessionEvent& e);

/// Checks an inbound message against the protocol; throws RejectedInput.
void validate_input(const nlohmann::json& msg);

class LiveSession {
 public:
  /// Writes the log header to `log` when given; the stream must outlive the session.
  LiveSession(HarnessConfig cfg, Scenario scenario, std::ostream* log = nullptr);

  /// Queues a validated input; it takes effect at the start of the next tick.
  void submit(const nlohmann::json& msg);

  /// Advances one simulation step and returns outbound messages (feedback, telemetry).
  std::vector<nlohmann::json> tick();

  nlohmann::json telemetry(bool with_scenario = false) const;
  /// Writes the end record and returns the metrics. Later calls return the same metrics.
  nlohmann::json finish();
  nlohmann::json metrics() const;

  long ticks() const { return tick_; }
  double now_ms() const { return world_.clock_ms(); }
  Mode mode() const { return state_.mode; }
  const World& world() const { return world_; }
  const std::vector<SessionEvent>& events() const { return events_; }
  const std::vector<int>& feedback_sent() const { return feedback_sent_; }
  const Scenario& scenario() const { return scenario_; }
  const HarnessConfig& config() const { return cfg_; }

 private:
  void apply(const nlohmann::json& msg);
  void apply_grip(const nlohmann::json& msg);
  void emit(std::string kind, std::string detail = {});
  void check_transport();
  void log(const nlohmann::json& line);

  HarnessConfig cfg_;
  Scenario scenario_;
  std::ostream* log_;
  World world_;
  ControlState state_;
  double pitch_ = 0.0, roll_ = 0.0;
  ObjectSpec object_;
  Point object_at_;
  double f_req_ = 0.0;
  int cue_ = 0;        // current vibration index, 0 when none
  int cue_sent_ = 0;   // last index sent
  std::size_t held_from_ = 0;
  TransportEvents transport_;
  std::string grasp_result_, release_result_;
  long operator_estops_ = 0;
  bool in_collision_ = false, in_ultrasonic_stop_ = false;

  long tick_ = 0;
  std::deque<nlohmann::json> pending_;
  std::vector<TrajectorySample> trace_;
  std::vector<SessionEvent> events_;
  std::size_t events_reported_ = 0;
  std::vector<int> feedback_sent_;
  std::optional<nlohmann::json> final_;
};

struct ReplayResult {
  nlohmann::json metrics;
  nlohmann::json logged_metrics;
  std::vector<SessionEvent> events;
  bool identical = false;  // the re-run reproduced the log line for line
  long first_mismatch_line = -1;
};

/// Re-runs a session log in scripted mode.
ReplayResult replay(std::istream& log);

}  // namespace mmg

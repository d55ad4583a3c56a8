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

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mmg/classifier.hpp"
#include "mmg/control.hpp"
#include "mmg/link.hpp"
#include "mmg/robot.hpp"
#include "mmg/synth.hpp"

namespace mmg {

struct RecognitionConfig {
  int subjects = 5;
  int trials_per_class = 50;
  double subject_jitter = 0.60;  // half-width of the per-subject amplitude gain
  double rest_lead_min_s = 1.0;
  double rest_lead_max_s = 2.0;
  double hold_s = 3.0;
};

/// Scripted stand-in for a human driver.
struct OperatorParams {
  double reaction_min_ms = 200.0;
  double reaction_max_ms = 400.0;
  double tilt_noise_deg = 1.0;
  double tick_ms = 20.0;
  double heading_gain = 2.0;     // rad/s per rad
  double crosstrack_gain = 2.0;  // rad/s per m
  double steer_limit = 0.5;      // rad/s while driving
  double turn_gain = 2.0;        // rad/s per rad of remaining turn
  double min_turn_rate = 0.05;    // rad/s floor so a turn finishes promptly
  double align_tolerance_deg = 1.5;
  double gentle_turn_rate = 0.6;   // rad/s cap when carrying liquid
  double gentle_roll_rate = 45.0;  // deg/s tilt slew when carrying liquid
  double timeout_s = 120.0;
};

struct NavigationConfig {
  int operators = 5;
  int round_trips = 20;  // 5 x 20 = 100 seeded trials
  OperatorParams driver;
};

struct TransferConfig {
  int trials_per_combo = 5;
  double misjudge_probability = 0.15;
  double ignore_cue_probability = 0.10;
  double rough_turn_probability = 0.10;
  double light_release_probability = 0.20;
  double alignment_sd_m = 0.012;
  double transport_limit_s = 40.0;
  int max_gesture_attempts = 3;
  bool slip_escalation = true;
  double subject_jitter = 0.10;
};

struct HarnessConfig {
  std::uint64_t seed = 1;
  DatasetSpec dataset;
  ModelConfig model = ModelConfig::compact();
  ControlParams control;
  PipelineParams pipeline;
  LinkConfig link;
  RobotParams robot;
  TransportParams transport;
  RecognitionConfig recognition;
  NavigationConfig navigation;
  TransferConfig transfer;
  std::string checkpoint;  // path; empty means "none"
  std::string scenario;    // path; empty means the built-in course

  void validate() const;
};

nlohmann::json config_to_json(const HarnessConfig& c);
/// Missing keys keep defaults; unknown keys and wrong types raise InvalidSpec.
HarnessConfig config_from_json(const nlohmann::json& j);
HarnessConfig load_config(const std::filesystem::path& path);

}  // namespace mmg

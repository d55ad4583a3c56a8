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

// The three scripted experiments. Each trial owns its world and its seeds
// (derived from the config seed and the trial's coordinates), so trials are
// independent and the reports are byte-for-byte reproducible.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mmg/classifier.hpp"
#include "mmg/harness/config.hpp"
#include "mmg/harness/course.hpp"
#include "mmg/harness/report.hpp"
#include "mmg/robot.hpp"

namespace mmg {

// ---------------------------------------------------------------------------
// Live-style recognition

struct RecognitionTrial {
  int subject = 0;
  int trial = 0;
  int true_class = 0;
  int predicted = -1;  // -1: no command before the gesture ended
  double gain = 1.0;
  double onset_ms = 0.0;
  double latency_ms = -1.0;  // gesture onset to robot receipt of the command
};

struct RecognitionSummary {
  long trials = 0;
  long correct = 0;
  long no_command = 0;
  double accuracy = 0.0;
  std::array<double, kNumClasses> f1{};
  ConfusionMatrix confusion;  // trials that produced a command
  double mean_latency_ms = 0.0;
  double max_latency_ms = 0.0;
};

RecognitionSummary summarize(const std::vector<RecognitionTrial>& trials);

struct RecognitionResult {
  std::vector<RecognitionTrial> trials;
  RecognitionSummary summary;
};

RecognitionResult run_recognition(const HarnessConfig& cfg, const Classifier& classifier);
Report recognition_report(const RecognitionResult& r);

// ---------------------------------------------------------------------------
// Navigation

struct NavigationTrial {
  int operator_id = 0;
  int round_trip = 0;
  bool completed = false;
  bool success = false;
  double completion_s = 0.0;
  double deviation_cm = 0.0;
  long collisions = 0;
  long estops = 0;
};

struct NavigationSummary {
  long trials = 0;
  long successes = 0;
  double success_rate = 0.0;
  double mean_completion_s = 0.0;  // over completed trials
  double mean_deviation_cm = 0.0;  // over completed trials
  long collisions = 0;
};

NavigationSummary summarize(const std::vector<NavigationTrial>& trials);

struct NavigationResult {
  std::vector<NavigationTrial> trials;
  NavigationSummary summary;
};

/// One round trip; optionally returns the executed positions used for the deviation.
NavigationTrial run_navigation_trial(const HarnessConfig& cfg, const Scenario& scenario, int operator_id,
                                     int round_trip, std::vector<Point>* executed = nullptr);
NavigationResult run_navigation(const HarnessConfig& cfg, const Scenario& scenario);
Report navigation_report(const NavigationResult& r);

// ---------------------------------------------------------------------------
// Grasp, transport and release

struct TransferTrial {
  std::string object;
  Grit grit = Grit::kSmooth;
  int trial = 0;
  int intended_level = 0;   // 1 strong .. 3 light
  int classified = -1;      // class index of the accepted command, -1 if none
  int gesture_attempts = 0;
  std::string grasp;        // HELD / SLIP / DAMAGED / MISSED / NONE
  bool slipped = false;
  bool escalated = false;
  int final_bin = 0;
  bool grip_success = false;
  bool spill = false;
  bool drop = false;
  bool scrape = false;
  double transport_s = 0.0;
  bool transport_ok = false;
  std::string release_strategy;  // empty when release was not reached
  std::string release_outcome;
  bool release_success = false;
  bool full_success = false;
};

struct TransferSummary {
  long trials = 0;
  long grip_successes = 0;
  long releases_attempted = 0;
  long release_successes = 0;
  long full_successes = 0;
  double grip_rate = 0.0;
  double release_rate = 0.0;  // among trials that reached release
  double full_rate = 0.0;
  double mean_transport_s = 0.0;  // over trials that transported
  double max_transport_s = 0.0;
  long spills = 0, drops = 0, scrapes = 0;
};

TransferSummary summarize(const std::vector<TransferTrial>& trials);

struct TransferResult {
  std::vector<TransferTrial> trials;
  TransferSummary summary;
};

/// Runs every catalog object against every grit. Seeds depend only on the
/// trial coordinates, so the escalation ablation replays identical trials.
TransferResult run_transfer(const HarnessConfig& cfg, const Scenario& scenario, const Classifier& classifier);
Report transfer_report(const TransferResult& r, const TransferConfig& tc);

}  // namespace mmg

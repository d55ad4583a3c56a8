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

#include "mmg/harness/experiments.hpp"

#include "mmg/harness/operator.hpp"

namespace mmg {

namespace {

constexpr std::uint64_t kNavigationTag = 0x6e6176ull;

}  // namespace

NavigationSummary summarize(const std::vector<NavigationTrial>& trials) {
  NavigationSummary s;
  double time_sum = 0.0, dev_sum = 0.0;
  long completed = 0;
  for (const auto& t : trials) {
    ++s.trials;
    if (t.success) ++s.successes;
    s.collisions += t.collisions;
    if (t.completed) {
      ++completed;
      time_sum += t.completion_s;
      dev_sum += t.deviation_cm;
    }
  }
  s.success_rate = s.trials ? static_cast<double>(s.successes) / static_cast<double>(s.trials) : 0.0;
  s.mean_completion_s = completed ? time_sum / static_cast<double>(completed) : 0.0;
  s.mean_deviation_cm = completed ? dev_sum / static_cast<double>(completed) : 0.0;
  return s;
}

NavigationTrial run_navigation_trial(const HarnessConfig& cfg, const Scenario& scenario, int operator_id,
                                     int round_trip, std::vector<Point>* executed) {
  const std::uint64_t op_seed = derive_seed(cfg.seed ^ kNavigationTag, static_cast<std::uint64_t>(operator_id));
  const std::uint64_t seed = derive_seed(op_seed, 1000 + static_cast<std::uint64_t>(round_trip));
  // Operators differ in how steady their hand is.
  Rng op_rng(op_seed);
  OperatorParams op = cfg.navigation.driver;
  op.tilt_noise_deg *= op_rng.uniform(0.5, 1.5);

  TeleopRig rig(cfg, World(cfg.robot, scenario.obstacles, scenario.start), derive_seed(seed, 1));
  // Hold the button until the wearable switches to MOVEMENT.
  rig.press();
  while (rig.wearable().mode != Mode::kMovement) rig.step();
  rig.release();

  Driver driver(legs_of(scenario.path.waypoints), op, cfg.control, cfg.robot, {}, derive_seed(seed, 2));
  const DriveOutcome d = drive(rig, driver, op.timeout_s, op.tick_ms);

  NavigationTrial t;
  t.operator_id = operator_id;
  t.round_trip = round_trip;
  t.completed = d.completed;
  t.collisions = d.collisions;
  t.estops = d.estops;
  t.success = d.completed && d.collisions == 0;
  if (d.completed) {
    t.completion_s = (d.end_ms - d.first_motion_ms) / 1000.0;
    std::vector<Point> path;
    for (const auto& s : rig.trace()) {
      if (s.t_ms >= d.first_motion_ms && s.t_ms <= d.end_ms) path.push_back({s.pose.x, s.pose.y});
    }
    t.deviation_cm = trajectory_deviation_cm(path, scenario.path);
    if (executed) *executed = std::move(path);
  }
  return t;
}

NavigationResult run_navigation(const HarnessConfig& cfg, const Scenario& scenario) {
  cfg.validate();
  scenario.validate(cfg.robot.radius);
  NavigationResult r;
  for (int op = 0; op < cfg.navigation.operators; ++op) {
    for (int trip = 0; trip < cfg.navigation.round_trips; ++trip) {
      r.trials.push_back(run_navigation_trial(cfg, scenario, op, trip));
    }
  }
  r.summary = summarize(r.trials);
  return r;
}

Report navigation_report(const NavigationResult& r) {
  Report rep;
  rep.experiment = "navigation";
  rep.columns = {"operator", "round_trip", "completed", "success", "completion_s", "deviation_cm", "collisions",
                 "estops"};
  for (const auto& t : r.trials) {
    rep.rows.push_back({num(t.operator_id), num(t.round_trip), t.completed ? "1" : "0", t.success ? "1" : "0",
                        num(t.completion_s), num(t.deviation_cm), num(t.collisions), num(t.estops)});
  }
  const auto& s = r.summary;
  rep.summary = {{"trials", num(s.trials)},
                 {"successes", num(s.successes)},
                 {"success_rate", num(s.success_rate)},
                 {"mean_completion_s", num(s.mean_completion_s)},
                 {"mean_deviation_cm", num(s.mean_deviation_cm)},
                 {"collisions", num(s.collisions)}};

  rep.table.push_back({"operator", "trials", "completion (s)", "deviation (cm)", "success"});
  for (long op = 0;; ++op) {
    std::vector<NavigationTrial> mine;
    for (const auto& t : r.trials) {
      if (t.operator_id == op) mine.push_back(t);
    }
    if (mine.empty()) break;
    const auto m = summarize(mine);
    rep.table.push_back({"op" + num(op + 1), num(m.trials), fixed(m.mean_completion_s, 1),
                         fixed(m.mean_deviation_cm, 2), percent(m.success_rate)});
  }
  rep.table.push_back({"all", num(s.trials), fixed(s.mean_completion_s, 1), fixed(s.mean_deviation_cm, 2),
                       percent(s.success_rate)});
  rep.notes.push_back("success means the round trip finished with no collision");
  return rep;
}

}  // namespace mmg

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

#include <cmath>

#include "mmg/control.hpp"
#include "mmg/harness/operator.hpp"
#include "mmg/synth.hpp"

namespace mmg {

namespace {

constexpr std::uint64_t kTransferTag = 0x7472616eull;

constexpr std::array<Grit, 3> kGrits = {Grit::kSmooth, Grit::kFine1200, Grit::kCoarse120};

// A to B with one left turn; a wall runs along the first leg and a cabinet
// stands past the corner, both 0.35 m from the route.
const std::vector<Point> kRoute = {{0.0, 0.0}, {1.5, 0.0}, {1.5, 1.0}};
const std::vector<Rect> kObstacles = {{-0.3, -0.6, 1.6, -0.35}, {1.85, -0.3, 2.15, 0.5}};

ReleaseStrategy strategy_of_level(int level) {
  return level == 1 ? ReleaseStrategy::kLight : level == 2 ? ReleaseStrategy::kStandard : ReleaseStrategy::kGradual;
}

int level_of_strategy(ReleaseStrategy s) {
  return s == ReleaseStrategy::kLight ? 1 : s == ReleaseStrategy::kStandard ? 2 : 3;
}

// Lightest intensity whose force bin covers `need`; strong if none does.
int lightest_level(double need) {
  for (int level = 3; level >= 1; --level) {
    if (bin_force(level_to_bin(static_cast<ForceLevel>(level))) >= need) return level;
  }
  return 1;
}

void run_until(TeleopRig& rig, double t_ms) {
  while (rig.now_ms() + 1e-9 < t_ms) rig.step();
}

void hold_steps(TeleopRig& rig, double ms) { run_until(rig, rig.now_ms() + ms); }

void double_press(TeleopRig& rig) {
  rig.press();
  hold_steps(rig, 100.0);
  rig.release();
  hold_steps(rig, 150.0);
  rig.press();
  hold_steps(rig, 100.0);
  rig.release();
  hold_steps(rig, 20.0);
}

// Robot-side grip state, driven by the frames it receives.
struct GripServo {
  ObjectSpec obj;
  Point object_at;
  double f_req = 0.0;
  std::optional<GraspOutcome> first;
  std::size_t trace_from = 0;  // first trace sample with the object in the gripper
  bool slip = false;
  std::optional<ReleaseResult> released;
  std::vector<int> feedback;  // indices as received by the wearable
};

TransferTrial run_trial(const HarnessConfig& cfg, const ObjectSpec& base, Grit grit, int trial,
                        const Classifier& classifier, std::uint64_t seed) {
  const auto& tc = cfg.transfer;
  const OperatorParams& op = cfg.navigation.driver;
  Rng rng(seed);
  TransferTrial t;
  t.object = base.name;
  t.grit = grit;
  t.trial = trial;

  ObjectSpec obj = base;
  obj.roughness_ra_um = grit_roughness(grit);
  World world(cfg.robot, kObstacles, {kRoute[0].x, kRoute[0].y, 0.0});
  GripServo servo;
  servo.obj = obj;
  servo.f_req = required_grip_force(obj, cfg.transport.safety);
  const Point g = world.gripper_position();
  servo.object_at = {g.x + rng.normal(0.0, tc.alignment_sd_m), g.y + rng.normal(0.0, tc.alignment_sd_m)};
  const double gain = 1.0 + rng.uniform(-tc.subject_jitter, tc.subject_jitter);
  // Draw every policy coin up front so the ablation sees identical trials.
  const bool misjudge = rng.bernoulli(tc.misjudge_probability);
  const bool ignore_cue = rng.bernoulli(tc.ignore_cue_probability);
  const bool rough = rng.bernoulli(tc.rough_turn_probability);
  const bool light_release = rng.bernoulli(tc.light_release_probability);

  TeleopRig rig(cfg, std::move(world), derive_seed(seed, 1));
  rig.on_robot_frame = [&](const Delivery& d) {
    if (d.frame.kind != FrameKind::kGrip) return;
    const GripPayload p = unpack_grip(d.frame.payload);
    World& w = rig.world();
    if (p.gesture == 1) {
      if (w.held && !servo.released) servo.released = release(w, servo.obj, strategy_of_level(p.level));
      return;
    }
    const double force = bin_force(p.force_bin, cfg.control.f_max_n);
    if (!w.held) {
      if (servo.first) return;  // one grasp per trial
      servo.first = grasp(w, 0, servo.obj, servo.object_at, force);
      servo.trace_from = rig.trace().size();
    } else {
      w.grip_force = force;
    }
    servo.slip = w.held && w.grip_force < servo.f_req;
    const bool over = force > servo.obj.fragility_n;
    rig.send_down(FrameKind::kFeedback, pack_feedback(static_cast<std::uint8_t>(
                                            force_to_feedback(force, servo.slip, over, cfg.control.f_max_n))));
  };
  rig.on_wearable_frame = [&](const Delivery& d) {
    if (d.frame.kind == FrameKind::kFeedback) servo.feedback.push_back(unpack_feedback(d.frame.payload));
  };

  double_press(rig);
  if (rig.wearable().mode != Mode::kGrasp) throw RuntimeFailure("wearable failed to enter GRASP");

  // The boxes hide the surface, so the operator judges by weight alone and
  // assumes a medium texture.
  ObjectSpec guess = obj;
  guess.roughness_ra_um = grit_roughness(Grit::kFine1200);
  int level = lightest_level(required_grip_force(guess, cfg.transport.safety));
  if (misjudge && level < 3) ++level;
  t.intended_level = level;

  // Perform the gesture until the pipeline yields a GRIP command.
  const auto profiles = default_profiles();
  const int cls = GestureClass{Gesture::kGrip, static_cast<ForceLevel>(level)}.index();
  CommandPipeline pipe(classifier, cfg.pipeline, cfg.dataset.sample_rate_hz);
  std::optional<GripCommand> accepted;
  const double fs = cfg.dataset.sample_rate_hz;
  for (int attempt = 0; attempt < tc.max_gesture_attempts && !accepted; ++attempt) {
    ++t.gesture_attempts;
    const std::uint64_t s = derive_seed(seed, 100 + static_cast<std::uint64_t>(attempt));
    const double lead_s = rng.uniform(cfg.recognition.rest_lead_min_s, cfg.recognition.rest_lead_max_s);
    Trace rest = generate_rest(kDefaultBaseline, profiles.at(cls).muscles[0].noise_std, derive_seed(s, 1), lead_s, fs);
    Trace gesture =
        generate_trace(profiles.at(cls).scaled(gain), derive_seed(s, 2), cfg.recognition.hold_s, fs);
    const double t0 = rig.now_ms();
    rest.t0_us = static_cast<std::int64_t>(std::llround(t0 * 1000.0));
    gesture.t0_us = static_cast<std::int64_t>(std::llround((t0 + 1000.0 * static_cast<double>(rest.length()) / fs) * 1000.0));
    const double end_ms = t0 + 1000.0 * static_cast<double>(rest.length() + gesture.length()) / fs;
    pipe.reset();
    auto cmds = pipe.push(rest, rig.wearable().mode);
    if (cmds.empty()) cmds = pipe.push(gesture, rig.wearable().mode);
    if (!cmds.empty() && cmds.front().gesture_class().gesture == Gesture::kGrip) {
      accepted = cmds.front();
      run_until(rig, accepted->t_ms);
    } else {
      run_until(rig, end_ms + 500.0);
    }
  }
  if (!accepted) {
    t.grasp = "NONE";
    return t;
  }
  t.classified = accepted->cls;
  const GestureClass gc = accepted->gesture_class();
  int bin = level_to_bin(gc.level);
  rig.send_up(FrameKind::kGrip,
              pack(GripPayload{0, static_cast<std::uint8_t>(gc.level), static_cast<std::uint8_t>(bin)}));

  // Wait for the first haptic cue, then react to it.
  const double cue_deadline = rig.now_ms() + 2000.0;
  while (servo.feedback.empty() && rig.now_ms() < cue_deadline) rig.step();
  if (!servo.first) {
    t.grasp = "NONE";
    return t;
  }
  t.grasp = grasp_outcome_name(*servo.first);
  if (*servo.first == GraspOutcome::kMissed || *servo.first == GraspOutcome::kDamaged) {
    t.final_bin = bin;
    return t;
  }
  if (!servo.feedback.empty() && servo.feedback.back() == kFeedbackSlip) {
    t.slipped = true;
    hold_steps(rig, rng.uniform(op.reaction_min_ms, op.reaction_max_ms));
    if (tc.slip_escalation && !ignore_cue && bin < kForceBins) {
      ++bin;
      t.escalated = true;
      rig.send_up(FrameKind::kGrip, pack(GripPayload{0, static_cast<std::uint8_t>(gc.level),
                                                     static_cast<std::uint8_t>(bin)}));
    }
  }
  t.final_bin = bin;

  // Lift, then hold the button until MOVEMENT and carry the object to B.
  hold_steps(rig, 300.0);
  rig.press();
  while (rig.wearable().mode != Mode::kMovement) rig.step();
  rig.release();
  Driver driver(legs_of(kRoute), op, cfg.control, cfg.robot, {obj.liquid, rough && obj.liquid},
                derive_seed(seed, 2));
  const DriveOutcome d = drive(rig, driver, tc.transport_limit_s + 5.0, op.tick_ms);
  if (d.completed) t.transport_s = (d.end_ms - d.first_motion_ms) / 1000.0;

  const std::span<const TrajectorySample> carried(rig.trace().data() + servo.trace_from,
                                                  rig.trace().size() - servo.trace_from);
  const TransportEvents ev = transport_check(carried, obj, cfg.robot, kObstacles, cfg.transport);
  t.spill = ev.spill;
  t.drop = ev.drop;
  t.scrape = ev.scrape;
  t.grip_success = !ev.drop;
  t.transport_ok = d.completed && d.collisions == 0 && !ev.any() && t.transport_s <= tc.transport_limit_s;
  if (ev.drop || !d.completed || t.transport_s > tc.transport_limit_s) return t;

  // Release at B.
  const ReleaseStrategy strategy =
      obj.liquid ? ReleaseStrategy::kGradual : light_release ? ReleaseStrategy::kLight : ReleaseStrategy::kStandard;
  t.release_strategy = release_strategy_name(strategy);
  double_press(rig);
  rig.send_up(FrameKind::kGrip, pack(GripPayload{1, static_cast<std::uint8_t>(level_of_strategy(strategy)), 0}));
  const double release_deadline = rig.now_ms() + 1000.0;
  while (!servo.released && rig.now_ms() < release_deadline) rig.step();
  if (!servo.released) {
    t.release_outcome = "NONE";
    return t;
  }
  t.release_outcome = release_outcome_name(servo.released->outcome);
  t.release_success = servo.released->outcome == ReleaseOutcome::kPlaced && !ev.spill;
  t.full_success = t.grip_success && t.transport_ok && t.release_success;
  return t;
}

}  // namespace

TransferSummary summarize(const std::vector<TransferTrial>& trials) {
  TransferSummary s;
  double time_sum = 0.0;
  long transported = 0;
  for (const auto& t : trials) {
    ++s.trials;
    if (t.grip_success) ++s.grip_successes;
    if (!t.release_strategy.empty()) ++s.releases_attempted;
    if (t.release_success) ++s.release_successes;
    if (t.full_success) ++s.full_successes;
    if (t.transport_s > 0.0) {
      ++transported;
      time_sum += t.transport_s;
      s.max_transport_s = std::max(s.max_transport_s, t.transport_s);
    }
    s.spills += t.spill;
    s.drops += t.drop;
    s.scrapes += t.scrape;
  }
  const auto rate = [](long a, long b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  s.grip_rate = rate(s.grip_successes, s.trials);
  s.release_rate = rate(s.release_successes, s.releases_attempted);
  s.full_rate = rate(s.full_successes, s.trials);
  s.mean_transport_s = transported ? time_sum / static_cast<double>(transported) : 0.0;
  return s;
}

TransferResult run_transfer(const HarnessConfig& cfg, const Scenario& scenario, const Classifier& classifier) {
  cfg.validate();
  if (scenario.catalog.empty()) throw InvalidSpec("transfer needs a non-empty object catalog");
  for (const auto& o : scenario.catalog) o.validate();
  TransferResult r;
  for (std::size_t o = 0; o < scenario.catalog.size(); ++o) {
    for (std::size_t gi = 0; gi < kGrits.size(); ++gi) {
      for (int trial = 0; trial < cfg.transfer.trials_per_combo; ++trial) {
        const std::uint64_t seed = derive_seed(derive_seed(cfg.seed ^ kTransferTag, o * 16 + gi),
                                               static_cast<std::uint64_t>(trial));
        r.trials.push_back(run_trial(cfg, scenario.catalog[o], kGrits[gi], trial, classifier, seed));
      }
    }
  }
  r.summary = summarize(r.trials);
  return r;
}

Report transfer_report(const TransferResult& r, const TransferConfig& tc) {
  Report rep;
  rep.experiment = "transfer";
  rep.columns = {"object",  "grit",         "trial",         "intended_level",   "classified",     "gesture_attempts",
                 "grasp",   "slipped",      "escalated",     "final_bin",        "grip_success",   "spill",
                 "drop",    "scrape",       "transport_s",   "transport_ok",     "release_strategy", "release_outcome",
                 "release_success", "full_success"};
  const auto b = [](bool v) { return std::string(v ? "1" : "0"); };
  for (const auto& t : r.trials) {
    rep.rows.push_back({t.object, grit_name(t.grit), num(t.trial), num(t.intended_level),
                        t.classified < 0 ? "NONE" : std::string(kClassNames[static_cast<std::size_t>(t.classified)]),
                        num(t.gesture_attempts), t.grasp, b(t.slipped), b(t.escalated), num(t.final_bin),
                        b(t.grip_success), b(t.spill), b(t.drop), b(t.scrape), num(t.transport_s), b(t.transport_ok),
                        t.release_strategy, t.release_outcome, b(t.release_success), b(t.full_success)});
  }
  const auto& s = r.summary;
  rep.summary = {{"trials", num(s.trials)},
                 {"grip_successes", num(s.grip_successes)},
                 {"releases_attempted", num(s.releases_attempted)},
                 {"release_successes", num(s.release_successes)},
                 {"full_successes", num(s.full_successes)},
                 {"grip_rate", num(s.grip_rate)},
                 {"release_rate", num(s.release_rate)},
                 {"full_rate", num(s.full_rate)},
                 {"mean_transport_s", num(s.mean_transport_s)},
                 {"max_transport_s", num(s.max_transport_s)},
                 {"spills", num(s.spills)},
                 {"drops", num(s.drops)},
                 {"scrapes", num(s.scrapes)},
                 {"slip_escalation", tc.slip_escalation ? "1" : "0"}};

  rep.table.push_back({"object", "grit", "trials", "grip", "release", "full task", "transport (s)"});
  std::vector<std::pair<std::string, Grit>> combos;
  for (const auto& t : r.trials) {
    if (combos.empty() || combos.back() != std::pair{t.object, t.grit}) combos.push_back({t.object, t.grit});
  }
  for (const auto& [name, grit] : combos) {
    std::vector<TransferTrial> mine;
    for (const auto& t : r.trials) {
      if (t.object == name && t.grit == grit) mine.push_back(t);
    }
    const auto m = summarize(mine);
    rep.table.push_back({name, grit_name(grit), num(m.trials), percent(m.grip_rate), percent(m.release_rate),
                         percent(m.full_rate), fixed(m.mean_transport_s, 1)});
  }
  rep.table.push_back({"all", "", num(s.trials), percent(s.grip_rate), percent(s.release_rate), percent(s.full_rate),
                       fixed(s.mean_transport_s, 1)});
  rep.notes.push_back(num(static_cast<long>(combos.size())) + " object-texture combinations x " +
                      num(tc.trials_per_combo) + " trials each; counts are configurable");
  rep.notes.push_back("release rate is over trials that reached the release point; a spill in transport fails it");
  rep.notes.push_back(std::string("slip escalation ") + (tc.slip_escalation ? "enabled" : "disabled"));
  return rep;
}

}  // namespace mmg

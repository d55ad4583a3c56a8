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

#include <doctest.h>

#include <cmath>
#include <functional>

#include "mmg/control.hpp"
#include "mmg/synth.hpp"

using namespace mmg;

namespace {

ControlState run(const std::vector<ButtonEvent>& events) {
  ControlState s;
  for (const auto& e : events) s = button_fsm(s, e);
  return s;
}

constexpr auto P = ButtonAction::kPress;
constexpr auto R = ButtonAction::kRelease;
constexpr auto T = ButtonAction::kTick;

// Reference model written against completed presses rather than states.
Mode reference_mode(const std::vector<ButtonEvent>& events) {
  Mode mode = Mode::kIdle;
  bool down = false, hold_done = false;
  double down_at = 0.0;
  std::optional<double> open_short;  // release time of an unpaired short press
  bool paired = false;
  for (const auto& e : events) {
    if (e.action == P && !down) {
      down = true;
      hold_done = false;
      down_at = e.t_ms;
      paired = open_short && e.t_ms - *open_short <= 400.0;
      open_short.reset();
    } else if (e.action == T && down && !hold_done && e.t_ms - down_at >= 3000.0) {
      hold_done = true;
      mode = Mode::kMovement;
    } else if (e.action == R && down) {
      down = false;
      if (e.t_ms - down_at >= 3000.0) {
        mode = Mode::kMovement;
      } else if (paired && !hold_done) {
        mode = Mode::kGrasp;
      } else {
        open_short = e.t_ms;
      }
      paired = false;
    }
  }
  return mode;
}

}  // namespace

TEST_CASE("button examples") {
  CHECK(run({{P, 0}, {R, 3100}}).mode == Mode::kMovement);
  CHECK(run({{P, 0}, {R, 100}, {P, 300}, {R, 400}}).mode == Mode::kGrasp);
  CHECK(run({{P, 0}, {R, 100}}).mode == Mode::kIdle);
  CHECK(run({{P, 0}, {R, 2999}}).mode == Mode::kIdle);
  CHECK(run({{P, 0}, {R, 3000}}).mode == Mode::kMovement);
  CHECK(run({{P, 0}, {R, 100}, {P, 500}, {R, 600}}).mode == Mode::kGrasp);   // gap exactly 400
  CHECK(run({{P, 0}, {R, 100}, {P, 501}, {R, 600}}).mode == Mode::kIdle);    // gap 401
  CHECK(run({{P, 0}, {R, 100}, {P, 300}, {R, 3400}}).mode == Mode::kMovement);  // second press long
}

TEST_CASE("hold fires on a tick while still pressed") {
  auto s = run({{P, 0}, {T, 2999}});
  CHECK(s.mode == Mode::kIdle);
  s = button_fsm(s, {T, 3000});
  CHECK(s.mode == Mode::kMovement);
  s = button_fsm(s, {R, 5000});
  CHECK(s.mode == Mode::kMovement);
}

TEST_CASE("repeated triggers are no-ops and stray events are ignored") {
  auto s = run({{P, 0}, {R, 100}, {P, 200}, {R, 300}});
  REQUIRE(s.mode == Mode::kGrasp);
  s.force_bin = 4;
  s.feedback_index = 4;
  for (const auto& e : std::vector<ButtonEvent>{{P, 1000}, {R, 1100}, {P, 1200}, {R, 1300}}) s = button_fsm(s, e);
  CHECK(s.mode == Mode::kGrasp);
  CHECK(s.force_bin == 4);
  CHECK(s.feedback_index == 4);

  auto m = run({{R, 0}, {P, 10}, {P, 20}, {R, 3100}});
  CHECK(m.mode == Mode::kMovement);
  CHECK(m.valid());
}

TEST_CASE("entering grasp defines the feedback index") {
  auto s = run({{P, 0}, {R, 3100}});
  s.feedback_index = 8;
  for (const auto& e : std::vector<ButtonEvent>{{P, 4000}, {R, 4100}, {P, 4200}, {R, 4300}}) s = button_fsm(s, e);
  CHECK(s.mode == Mode::kGrasp);
  CHECK(s.feedback_index == 1);
}

TEST_CASE("non-monotone timestamps are rejected") {
  auto s = run({{P, 100}});
  CHECK_THROWS_AS(button_fsm(s, {R, 50}), RejectedEvent);
  CHECK_THROWS_AS(button_fsm(s, {R, NAN}), RejectedEvent);
}

TEST_CASE("exhaustive short sequences agree with the reference model") {
  const std::array<ButtonAction, 3> actions = {P, R, T};
  const std::array<double, 4> gaps = {50.0, 380.0, 420.0, 3000.0};
  long checked = 0;
  std::vector<ButtonEvent> seq;
  std::function<void(ControlState, double, int)> rec = [&](ControlState s, double t, int depth) {
    CHECK(s.valid());
    CHECK(s.mode == reference_mode(seq));
    ++checked;
    if (depth == 5) return;
    for (auto a : actions) {
      for (double g : gaps) {
        seq.push_back({a, t + g});
        rec(button_fsm(s, seq.back()), t + g, depth + 1);
        seq.pop_back();
      }
    }
  };
  rec(ControlState{}, 0.0, 0);
  CHECK(checked == 1 + 12 + 144 + 1728 + 20736 + 248832);
}

TEST_CASE("tilt mapping") {
  const ControlParams p;
  CHECK(tilt_to_velocity({0, 0}, Mode::kMovement).twist == Twist{});
  CHECK(tilt_to_velocity({35, 0}, Mode::kMovement).twist.vx == 0.5);
  CHECK(tilt_to_velocity({60, 0}, Mode::kMovement).twist.vx == 0.5);
  CHECK(tilt_to_velocity({20, 0}, Mode::kMovement).twist.vx == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(tilt_to_velocity({0, 20}, Mode::kMovement).twist.omega == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tilt_to_velocity({4.9, -4.9}, Mode::kMovement).twist == Twist{});
  CHECK(tilt_to_velocity({35, 35}, Mode::kGrasp).twist == Twist{});
  CHECK(tilt_to_velocity({35, 35}, Mode::kIdle).twist == Twist{});
  CHECK_THROWS_AS(tilt_to_velocity({91, 0}, Mode::kMovement), RejectedInput);

  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const TiltReading t{rng.uniform(-90, 90), rng.uniform(-90, 90)};
    const auto a = tilt_to_velocity(t, Mode::kMovement).twist;
    const auto b = tilt_to_velocity({-t.pitch_deg, -t.roll_deg}, Mode::kMovement).twist;
    CHECK(a.vx == -b.vx);
    CHECK(a.omega == -b.omega);
    CHECK(a.vy == 0.0);
    CHECK(std::fabs(a.vx) <= p.v_max);
    CHECK(std::fabs(a.omega) <= p.omega_max);
    for (Mode m : {Mode::kIdle, Mode::kGrasp}) CHECK(tilt_to_velocity(t, m).twist == Twist{});
  }
}

TEST_CASE("force feedback mapping") {
  CHECK(force_to_feedback(0.0, false, false) == 1);
  CHECK(force_to_feedback(5.0, false, false) == 3);
  CHECK(force_to_feedback(12.0, false, false) == 6);
  CHECK(force_to_feedback(2.0, false, false) == 1);
  CHECK(force_to_feedback(2.0001, false, false) == 2);
  for (double f : {0.0, 3.0, 11.9}) CHECK(force_to_feedback(f, true, false) == 7);
  CHECK(force_to_feedback(3.0, true, true) == 8);
  CHECK_THROWS_AS(force_to_feedback(-0.1, false, false), RejectedInput);

  int prev = 1;
  for (int i = 0; i <= 12000; ++i) {
    const double f = i * 1e-3;
    const int idx = force_to_feedback(f, false, false);
    CHECK(idx >= prev);
    CHECK(idx >= 1);
    CHECK(idx <= 6);
    prev = idx;
    CHECK(force_to_feedback(f, true, false) == 7);
    CHECK(force_to_feedback(f, false, true) == 8);
    CHECK(force_to_feedback(f, true, true) == 8);
  }
}

TEST_CASE("grip adjustment") {
  const ObjectSpec glass{"glass", 200, 5, grit_roughness(Grit::kSmooth)};
  CHECK(grip_adjust(2.0, glass, true) == 1);
  const ObjectSpec rough{"box", 300, 6, grit_roughness(Grit::kCoarse120)};
  REQUIRE(force_bin(required_grip_force(rough)) == 2);
  CHECK(grip_adjust(12.0, rough, false) == -1);
  CHECK(grip_adjust(bin_force(2), rough, false) == 0);
  CHECK(grip_adjust(bin_force(3), rough, false) == 0);
  CHECK(grip_adjust(bin_force(4), rough, false) == -1);
}

TEST_CASE("intensity levels map to force bins") {
  CHECK(level_to_bin(ForceLevel::kLight) == 2);
  CHECK(level_to_bin(ForceLevel::kModerate) == 3);
  CHECK(level_to_bin(ForceLevel::kStrong) == 5);
  CHECK(bin_force(5) == 10.0);
}

TEST_CASE("majority vote") {
  CHECK(majority({0, 0, 0}, 2) == 0);
  CHECK(majority({0, 1, 0}, 2) == 0);
  CHECK(majority({0, 1, 2}, 2) == std::nullopt);
  CHECK(majority({4}, 2) == std::nullopt);
}

TEST_CASE("pipeline fails closed without a checkpoint") {
  CommandPipeline pipe(std::nullopt);
  CHECK_FALSE(pipe.has_model());
  const auto g = generate_trace(default_profiles().at(0), 3, 4.0);
  CHECK(pipe.push(g, Mode::kGrasp).empty());
}

TEST_CASE("pipeline gating, mode and latency on a zero model") {
  // A zero network always predicts class 0, isolating the timing path.
  Classifier clf(ModelCheckpoint::zeros(ModelConfig::compact()));
  CommandPipeline pipe(clf);
  auto rest = generate_rest(kDefaultBaseline, 3.0, 1, 2.0);
  CHECK(pipe.push(rest, Mode::kGrasp).empty());
  auto g = generate_trace(default_profiles().at(1), 4, 3.0);
  g.t0_us = 2'000'000;
  const auto cmds = pipe.push(g, Mode::kGrasp);
  REQUIRE(cmds.size() == 1);
  CHECK(cmds[0].cls == 0);
  const double onset = 2000.0 + 20.0;  // first burst slot starts 2% into the cycle
  CHECK(cmds[0].t_ms - onset <= 1300.0);

  CommandPipeline idle(clf);
  CHECK(idle.push(g, Mode::kMovement).empty());
}

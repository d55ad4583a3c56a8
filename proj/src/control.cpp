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

#include "mmg/control.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mmg {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kIdle: return "IDLE";
    case Mode::kMovement: return "MOVEMENT";
    case Mode::kGrasp: return "GRASP";
  }
  return "?";
}

void ControlParams::validate() const {
  if (!(hold_ms > 0.0) || !(double_press_gap_ms > 0.0)) throw InvalidSpec("button timings must be positive");
  if (!(dead_zone_deg >= 0.0 && saturation_deg > dead_zone_deg && saturation_deg <= 90.0)) {
    throw InvalidSpec("tilt dead zone must be below saturation (<= 90 deg)");
  }
  if (!(v_max > 0.0) || !(omega_max > 0.0) || !(f_max_n > 0.0)) throw InvalidSpec("limits must be positive");
}

bool ControlState::valid() const {
  const bool mode_ok = mode == Mode::kIdle || mode == Mode::kMovement || mode == Mode::kGrasp;
  const bool ranges = grip_level >= 1 && grip_level <= 3 && force_bin >= 1 && force_bin <= kForceBins &&
                      feedback_index >= 1 && feedback_index <= kFeedbackOverForce;
  return mode_ok && ranges && !(hold_fired && !pressed) && !(double_armed && !pressed);
}

namespace {

void enter(ControlState& s, Mode m) {
  if (s.mode == m) return;
  s.mode = m;
  if (m == Mode::kGrasp) {
    s.force_bin = 1;
    s.feedback_index = 1;
  }
}

}  // namespace

ControlState button_fsm(ControlState s, const ButtonEvent& e, const ControlParams& p) {
  if (!std::isfinite(e.t_ms)) throw RejectedEvent("button timestamp is not finite");
  if (e.t_ms < s.last_t_ms) throw RejectedEvent("button timestamps must be monotone");
  s.last_t_ms = e.t_ms;
  switch (e.action) {
    case ButtonAction::kPress:
      if (s.pressed) break;
      s.pressed = true;
      s.press_t_ms = e.t_ms;
      s.hold_fired = false;
      s.double_armed = s.short_release_ms && e.t_ms - *s.short_release_ms <= p.double_press_gap_ms;
      s.short_release_ms.reset();
      break;
    case ButtonAction::kTick:
      if (s.pressed && !s.hold_fired && e.t_ms - s.press_t_ms >= p.hold_ms) {
        s.hold_fired = true;
        s.double_armed = false;
        enter(s, Mode::kMovement);
      }
      break;
    case ButtonAction::kRelease: {
      if (!s.pressed) break;
      const double held = e.t_ms - s.press_t_ms;
      s.pressed = false;
      if (held >= p.hold_ms) {
        if (!s.hold_fired) enter(s, Mode::kMovement);
        s.short_release_ms.reset();
      } else if (s.double_armed) {
        enter(s, Mode::kGrasp);
        s.short_release_ms.reset();
      } else {
        s.short_release_ms = e.t_ms;
      }
      s.hold_fired = false;
      s.double_armed = false;
      break;
    }
  }
  return s;
}

namespace {

double shaped(double angle_deg, double peak, const ControlParams& p) {
  const double mag = std::clamp((std::fabs(angle_deg) - p.dead_zone_deg) / (p.saturation_deg - p.dead_zone_deg), 0.0,
                                1.0);
  return angle_deg < 0.0 ? -peak * mag : peak * mag;
}

}  // namespace

VelocityCommand tilt_to_velocity(const TiltReading& t, Mode mode, const ControlParams& p) {
  if (!(std::fabs(t.pitch_deg) <= 90.0) || !(std::fabs(t.roll_deg) <= 90.0)) {
    throw RejectedInput("tilt angles must lie in [-90, 90] degrees");
  }
  VelocityCommand out;
  out.t_ms = t.t_ms;
  if (mode != Mode::kMovement) return out;
  out.twist.vx = shaped(t.pitch_deg, p.v_max, p);
  out.twist.omega = shaped(t.roll_deg, p.omega_max, p);
  return out;
}

int force_bin(double force_n, double f_max_n) {
  if (!(force_n >= 0.0)) throw RejectedInput("grip force must be non-negative");
  const double width = f_max_n / kForceBins;
  const int bin = static_cast<int>(std::ceil(force_n / width));
  return std::clamp(bin, 1, kForceBins);
}

double bin_force(int bin, double f_max_n) {
  if (bin < 1 || bin > kForceBins) throw RejectedInput("force bin must lie in 1..6");
  return f_max_n * bin / kForceBins;
}

int force_to_feedback(double force_n, bool slip, bool over_force, double f_max_n) {
  const int bin = force_bin(force_n, f_max_n);
  if (over_force) return kFeedbackOverForce;
  if (slip) return kFeedbackSlip;
  return bin;
}

int grip_adjust(double current_force_n, const ObjectSpec& obj, bool slip, double f_max_n) {
  if (slip) return +1;
  const int need = force_bin(std::min(required_grip_force(obj), f_max_n), f_max_n);
  return force_bin(current_force_n, f_max_n) - need > 1 ? -1 : 0;
}

int level_to_bin(ForceLevel level) {
  switch (level) {
    case ForceLevel::kStrong: return 5;
    case ForceLevel::kModerate: return 3;
    case ForceLevel::kLight: return 2;
  }
  return 1;
}

void PipelineParams::validate() const {
  if (!(window_s > 0.0) || !(overlap >= 0.0 && overlap < 1.0)) throw InvalidSpec("bad window/overlap");
  if (vote_window < 1 || vote_quorum < 1 || vote_quorum > vote_window) throw InvalidSpec("bad vote settings");
  if (!(activity_threshold >= 0.0) || !(processing_ms >= 0.0)) throw InvalidSpec("bad gate or delay");
}

std::optional<int> majority(const std::deque<int>& votes, int quorum) {
  std::map<int, int> tally;
  for (int v : votes) {
    if (++tally[v] >= quorum) return v;
  }
  return std::nullopt;
}

CommandPipeline::CommandPipeline(std::optional<Classifier> classifier, PipelineParams params, double sample_rate_hz)
    : classifier_(std::move(classifier)), params_(params), fs_(sample_rate_hz) {
  params_.validate();
  window_ = static_cast<std::size_t>(std::llround(params_.window_s * fs_));
  hop_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(window_) *
                                                                         (1.0 - params_.overlap))));
  if (classifier_ && classifier_->checkpoint().config.window_samples != static_cast<int>(window_)) {
    throw InvalidSpec("pipeline window does not match the checkpoint");
  }
}

void CommandPipeline::reset() {
  for (auto& b : buffer_) b.clear();
  total_ = 0;
  votes_.clear();
  emitted_.reset();
}

bool CommandPipeline::active(const SignalWindow& raw, double threshold) {
  for (const auto& ch : raw.samples) {
    if (ch.empty()) continue;
    std::vector<double> sorted = ch;
    const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double peak = *std::max_element(ch.begin(), ch.end());
    if (peak - *mid > threshold) return true;
  }
  return false;
}

std::optional<GripCommand> CommandPipeline::on_window(const SignalWindow& raw, double t_end_ms, Mode mode) {
  if (mode != Mode::kGrasp || !classifier_) return std::nullopt;
  if (!active(raw, params_.activity_threshold)) {
    votes_.clear();
    emitted_.reset();
    return std::nullopt;
  }
  const int cls = classifier_->classify(raw).predicted();
  votes_.push_back(cls);
  while (votes_.size() > static_cast<std::size_t>(params_.vote_window)) votes_.pop_front();
  const auto winner = majority(votes_, params_.vote_quorum);
  if (!winner || winner == emitted_) return std::nullopt;
  emitted_ = winner;
  return GripCommand{*winner, t_end_ms + params_.processing_ms};
}

std::vector<GripCommand> CommandPipeline::push(const Trace& chunk, Mode mode) {
  chunk.validate();
  std::vector<GripCommand> out;
  const double t0_ms = static_cast<double>(chunk.t0_us) / 1000.0;
  for (std::size_t i = 0; i < chunk.length(); ++i) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      buffer_[c].push_back(chunk.samples[c][i]);
      if (buffer_[c].size() > window_) buffer_[c].pop_front();
    }
    ++total_;
    if (total_ >= window_ && (total_ - window_) % hop_ == 0) {
      SignalWindow w;
      w.sample_rate_hz = fs_;
      for (std::size_t c = 0; c < kChannels; ++c) w.samples[c].assign(buffer_[c].begin(), buffer_[c].end());
      const double t_end = t0_ms + 1000.0 * static_cast<double>(i + 1) / fs_;
      w.t0_us = static_cast<std::int64_t>(std::llround((t_end - 1000.0 * params_.window_s) * 1000.0));
      if (auto cmd = on_window(w, t_end, mode)) out.push_back(*cmd);
    }
  }
  return out;
}

}  // namespace mmg

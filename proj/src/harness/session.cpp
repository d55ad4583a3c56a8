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

#include "mmg/harness/session.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "mmg/error.hpp"

namespace mmg {

namespace {

using nlohmann::json;

const char* const kReleaseNames[] = {"light", "standard", "gradual"};

ReleaseStrategy strategy_named(const std::string& s) {
  if (s == "light") return ReleaseStrategy::kLight;
  if (s == "standard") return ReleaseStrategy::kStandard;
  return ReleaseStrategy::kGradual;
}

void only_keys(const json& msg, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : msg.items()) {
    bool ok = key == "type" || key == "t_ms";
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw RejectedInput("unexpected field '" + key + "' in " + msg.at("type").get<std::string>() + " message");
  }
}

double finite_number(const json& msg, const char* key) {
  if (!msg.contains(key) || !msg.at(key).is_number()) throw RejectedInput(std::string("missing numeric field '") + key + "'");
  const double v = msg.at(key).get<double>();
  if (!std::isfinite(v)) throw RejectedInput(std::string("field '") + key + "' is not finite");
  return v;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json event_to_json(const SessionEvent& e) {
  json j{{"tick", e.tick}, {"t_ms", e.t_ms}, {"kind", e.kind}};
  if (!e.detail.empty()) j["detail"] = e.detail;
  return j;
}

void validate_input(const json& msg) {
  if (!msg.is_object()) throw RejectedInput("message must be a JSON object");
  if (!msg.contains("type") || !msg.at("type").is_string()) throw RejectedInput("message needs a string 'type'");
  if (msg.contains("t_ms") && !msg.at("t_ms").is_number()) throw RejectedInput("'t_ms' must be a number");
  const auto type = msg.at("type").get<std::string>();
  if (type == "tilt") {
    only_keys(msg, {"pitch_deg", "roll_deg"});
    for (const char* k : {"pitch_deg", "roll_deg"}) {
      if (std::fabs(finite_number(msg, k)) > 90.0) throw RejectedInput(std::string(k) + " outside [-90, 90]");
    }
  } else if (type == "button") {
    only_keys(msg, {"action"});
    if (!msg.contains("action") || !msg.at("action").is_string()) throw RejectedInput("button needs an 'action'");
    const auto a = msg.at("action").get<std::string>();
    if (a != "press" && a != "release") throw RejectedInput("button action must be press or release");
  } else if (type == "grip") {
    only_keys(msg, {"level", "bin", "release"});
    const int given = static_cast<int>(msg.contains("level")) + static_cast<int>(msg.contains("bin")) +
                      static_cast<int>(msg.contains("release"));
    if (given != 1) throw RejectedInput("grip needs exactly one of level, bin, release");
    if (msg.contains("level")) {
      const auto& v = msg.at("level");
      if (!v.is_number_integer() || v.get<int>() < 1 || v.get<int>() > 3) throw RejectedInput("grip level must be 1..3");
    } else if (msg.contains("bin")) {
      const auto& v = msg.at("bin");
      if (!v.is_number_integer() || v.get<int>() < 1 || v.get<int>() > kForceBins) {
        throw RejectedInput("grip bin must be 1..6");
      }
    } else {
      const auto& v = msg.at("release");
      bool ok = v.is_string();
      if (ok) {
        ok = false;
        for (const char* n : kReleaseNames) ok = ok || v.get<std::string>() == n;
      }
      if (!ok) throw RejectedInput("release must be light, standard or gradual");
    }
  } else if (type == "estop") {
    only_keys(msg, {"clear"});
    if (msg.contains("clear") && !msg.at("clear").is_boolean()) throw RejectedInput("'clear' must be a boolean");
  } else {
    throw RejectedInput("unknown inbound message type '" + type + "'");
  }
}

// ---------------------------------------------------------------------------

LiveSession::LiveSession(HarnessConfig cfg, Scenario scenario, std::ostream* log_stream)
    : cfg_(std::move(cfg)), scenario_(std::move(scenario)), log_(log_stream) {
  cfg_.validate();
  scenario_.validate(cfg_.robot.radius);
  world_ = World(cfg_.robot, scenario_.obstacles, scenario_.start);
  object_ = scenario_.catalog.front();
  object_at_ = scenario_.b();
  f_req_ = required_grip_force(object_, cfg_.transport.safety);
  trace_.push_back({world_.clock_ms(), world_.pose(), world_.velocity(), world_.grip_force});
  log({{"type", "header"},
       {"version", kLogVersion},
       {"config", config_to_json(cfg_)},
       {"scenario", scenario_to_json(scenario_)}});
}

void LiveSession::log(const json& line) {
  if (log_) *log_ << line.dump() << '\n';
}

void LiveSession::submit(const json& msg) {
  if (final_) throw RejectedAction("session has finished");
  validate_input(msg);
  pending_.push_back(msg);
}

void LiveSession::emit(std::string kind, std::string detail) {
  events_.push_back({tick_, world_.clock_ms(), std::move(kind), std::move(detail)});
}

void LiveSession::apply(const json& msg) {
  log({{"type", "input"}, {"tick", tick_}, {"msg", msg}});
  const auto type = msg.at("type").get<std::string>();
  const Mode before = state_.mode;
  if (type == "tilt") {
    pitch_ = msg.at("pitch_deg").get<double>();
    roll_ = msg.at("roll_deg").get<double>();
  } else if (type == "button") {
    const bool press = msg.at("action").get<std::string>() == "press";
    state_ = button_fsm(state_, {press ? ButtonAction::kPress : ButtonAction::kRelease, now_ms()}, cfg_.control);
  } else if (type == "grip") {
    apply_grip(msg);
  } else if (type == "estop") {
    if (msg.value("clear", false)) {
      world_.clear_estop();
      emit("estop_clear");
    } else {
      world_.emergency_stop();
      ++operator_estops_;
      emit("estop");
    }
  }
  if (state_.mode != before) emit("mode", mode_name(state_.mode));
}

void LiveSession::apply_grip(const json& msg) {
  if (state_.mode != Mode::kGrasp) {
    emit("rejected", "grip commands need GRASP mode");
    return;
  }
  if (msg.contains("release")) {
    if (!world_.held) {
      emit("rejected", "nothing to release");
      return;
    }
    check_transport();
    if (!world_.held) return;  // dropped on the way
    try {
      const ReleaseResult r = release(world_, object_, strategy_named(msg.at("release").get<std::string>()));
      release_result_ = release_outcome_name(r.outcome);
      object_at_ = world_.gripper_position();
      cue_ = 0;
      emit("release", release_result_);
    } catch (const RejectedAction& e) {
      emit("rejected", e.what());
    }
    return;
  }
  const int bin = msg.contains("bin") ? msg.at("bin").get<int>()
                                      : level_to_bin(static_cast<ForceLevel>(msg.at("level").get<int>()));
  const double force = bin_force(bin, cfg_.control.f_max_n);
  const bool over = force > object_.fragility_n;
  if (!world_.held) {
    cue_ = 0;
    const GraspOutcome g = grasp(world_, 0, object_, object_at_, force);
    grasp_result_ = grasp_outcome_name(g);
    emit("grasp", grasp_result_);
    if (world_.held) {
      held_from_ = trace_.size();
      transport_ = {};
    } else if (g == GraspOutcome::kDamaged) {
      cue_ = kFeedbackOverForce;
      return;
    } else {
      return;
    }
  } else {
    world_.grip_force = force;
  }
  cue_ = force_to_feedback(world_.grip_force, world_.grip_force < f_req_, over, cfg_.control.f_max_n);
}

void LiveSession::check_transport() {
  if (!world_.held || held_from_ >= trace_.size()) return;
  const std::span<const TrajectorySample> carried(trace_.data() + held_from_, trace_.size() - held_from_);
  const TransportEvents ev = transport_check(carried, object_, cfg_.robot, scenario_.obstacles, cfg_.transport);
  if (ev.spill && !transport_.spill) emit("spill");
  if (ev.scrape && !transport_.scrape) emit("scrape");
  if (ev.drop && !transport_.drop) {
    emit("drop");
    world_.held.reset();
    world_.grip_force = 0.0;
    world_.aperture = kMaxAperture;
    object_at_ = world_.gripper_position();
    cue_ = 0;
  }
  transport_.spill = transport_.spill || ev.spill;
  transport_.scrape = transport_.scrape || ev.scrape;
  transport_.drop = transport_.drop || ev.drop;
}

std::vector<json> LiveSession::tick() {
  if (final_) throw RejectedAction("session has finished");
  while (!pending_.empty()) {
    apply(pending_.front());
    pending_.pop_front();
  }
  const Mode before = state_.mode;
  state_ = button_fsm(state_, {ButtonAction::kTick, now_ms()}, cfg_.control);
  if (state_.mode != before) emit("mode", mode_name(state_.mode));

  const Twist cmd = tilt_to_velocity({pitch_, roll_, now_ms()}, state_.mode, cfg_.control).twist;
  const StepResult r = world_.step(cmd);
  ++tick_;
  trace_.push_back({world_.clock_ms(), world_.pose(), world_.velocity(), world_.grip_force});
  if (r.collision && !in_collision_) emit("collision");
  if (r.estop && !in_ultrasonic_stop_) emit("ultrasonic_stop");
  in_collision_ = r.collision;
  in_ultrasonic_stop_ = r.estop;

  std::vector<json> out;
  if (tick_ % kTelemetryEveryTicks == 0) check_transport();
  if (cue_ == 0) {
    cue_sent_ = 0;
  } else if (cue_ != cue_sent_) {
    cue_sent_ = cue_;
    feedback_sent_.push_back(cue_);
    out.push_back({{"type", "feedback"}, {"tick", tick_}, {"t_ms", now_ms()}, {"index", cue_}});
  }
  if (tick_ % kTelemetryEveryTicks == 0) {
    json t = telemetry();
    json ev = json::array();
    for (; events_reported_ < events_.size(); ++events_reported_) ev.push_back(event_to_json(events_[events_reported_]));
    t["events"] = std::move(ev);
    out.push_back(std::move(t));
  }
  for (const auto& m : out) log(m);
  return out;
}

json LiveSession::telemetry(bool with_scenario) const {
  const Pose& p = world_.pose();
  const Twist& v = world_.velocity();
  const Point at = world_.held ? world_.gripper_position() : object_at_;
  json t{{"type", "telemetry"},
         {"tick", tick_},
         {"t_ms", now_ms()},
         {"pose", {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}},
         {"velocity", {{"vx", v.vx}, {"vy", v.vy}, {"omega", v.omega}}},
         {"mode", mode_name(state_.mode)},
         {"force_n", world_.grip_force},
         {"force_bin", world_.grip_force > 0.0 ? json(force_bin(world_.grip_force, cfg_.control.f_max_n)) : json(nullptr)},
         {"feedback", cue_ ? json(cue_) : json(nullptr)},
         {"held", world_.held ? json(object_.name) : json(nullptr)},
         {"object", {{"name", object_.name}, {"x", at.x}, {"y", at.y}}},
         {"events", json::array()},
         {"estop", world_.estop_latched()}};
  if (with_scenario) t["scenario"] = scenario_to_json(scenario_);
  return t;
}

json LiveSession::metrics() const {
  const auto count = [&](const char* kind) {
    return std::count_if(events_.begin(), events_.end(), [&](const SessionEvent& e) { return e.kind == kind; });
  };
  double distance = 0.0;
  std::vector<Point> moved;
  for (std::size_t i = 0; i < trace_.size(); ++i) {
    if (i > 0) {
      distance += std::hypot(trace_[i].pose.x - trace_[i - 1].pose.x, trace_[i].pose.y - trace_[i - 1].pose.y);
    }
    if (!moved.empty() || trace_[i].velocity != Twist{}) moved.push_back({trace_[i].pose.x, trace_[i].pose.y});
  }
  const double deviation = moved.empty() ? NAN : trajectory_deviation_cm(moved, scenario_.path);
  return {{"ticks", tick_},
          {"duration_s", now_ms() / 1000.0},
          {"distance_m", distance},
          {"deviation_cm", nullable(deviation)},
          {"collisions", world_.collisions()},
          {"ultrasonic_stops", world_.estops()},
          {"operator_estops", operator_estops_},
          {"grasp", grasp_result_.empty() ? json(nullptr) : json(grasp_result_)},
          {"release", release_result_.empty() ? json(nullptr) : json(release_result_)},
          {"spills", count("spill")},
          {"drops", count("drop")},
          {"scrapes", count("scrape")},
          {"feedback_frames", feedback_sent_.size()},
          {"events", events_.size()}};
}

json LiveSession::finish() {
  if (final_) return *final_;
  check_transport();
  json ev = json::array();
  for (const auto& e : events_) ev.push_back(event_to_json(e));
  final_ = metrics();
  log({{"type", "end"}, {"tick", tick_}, {"metrics", *final_}, {"events", std::move(ev)}});
  return *final_;
}

// ---------------------------------------------------------------------------

ReplayResult replay(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw RejectedInput("session log is empty");
  const auto parse = [](const std::string& s, std::size_t n) {
    try {
      return json::parse(s);
    } catch (const json::parse_error& e) {
      throw RejectedInput("log line " + std::to_string(n + 1) + " is not JSON: " + e.what());
    }
  };
  const json header = parse(lines.front(), 0);
  if (header.value("type", "") != "header") throw RejectedInput("session log must start with a header record");
  if (header.value("version", 0) != kLogVersion) throw RejectedInput("unsupported session log version");

  std::ostringstream out;
  LiveSession s(config_from_json(header.at("config")), scenario_from_json(header.at("scenario")), &out);
  ReplayResult r;
  bool ended = false;
  for (std::size_t i = 1; i < lines.size() && !ended; ++i) {
    const json rec = parse(lines[i], i);
    const auto type = rec.value("type", "");
    if (type != "input" && type != "end") continue;
    const long at = rec.at("tick").get<long>();
    if (at < s.ticks()) throw RejectedInput("log line " + std::to_string(i + 1) + " goes back in time");
    while (s.ticks() < at) s.tick();
    if (type == "input") {
      s.submit(rec.at("msg"));
    } else {
      r.logged_metrics = rec.at("metrics");
      ended = true;
    }
  }
  if (!ended) throw RejectedInput("session log has no end record");
  r.metrics = s.finish();
  r.events = s.events();

  std::istringstream again(out.str());
  std::vector<std::string> produced;
  for (std::string line; std::getline(again, line);) produced.push_back(line);
  r.identical = produced == lines;
  if (!r.identical) {
    const std::size_t n = std::min(produced.size(), lines.size());
    r.first_mismatch_line = static_cast<long>(n) + 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (produced[i] != lines[i]) {
        r.first_mismatch_line = static_cast<long>(i) + 1;
        break;
      }
    }
  }
  return r;
}

}  // namespace mmg

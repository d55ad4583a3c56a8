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

#include "mmg/harness/config.hpp"

#include <fstream>
#include <set>

#include "mmg/error.hpp"
#include "mmg/json_io.hpp"

namespace mmg {

namespace {

using nlohmann::json;

// Each struct lists its fields once; the same list drives both directions.
template <typename V> void fields(V& v, ControlParams& c) {
  v("hold_ms", c.hold_ms);
  v("double_press_gap_ms", c.double_press_gap_ms);
  v("dead_zone_deg", c.dead_zone_deg);
  v("saturation_deg", c.saturation_deg);
  v("v_max", c.v_max);
  v("omega_max", c.omega_max);
  v("f_max_n", c.f_max_n);
}

template <typename V> void fields(V& v, PipelineParams& c) {
  v("window_s", c.window_s);
  v("overlap", c.overlap);
  v("vote_window", c.vote_window);
  v("vote_quorum", c.vote_quorum);
  v("activity_threshold", c.activity_threshold);
  v("processing_ms", c.processing_ms);
}

template <typename V> void fields(V& v, LinkConfig& c) {
  v("latency_mean_ms", c.latency_mean_ms);
  v("latency_jitter_ms", c.latency_jitter_ms);
  v("drop_probability", c.drop_probability);
  v("max_retries", c.max_retries);
  v("ack_timeout_ms", c.ack_timeout_ms);
  v("estop_lossless", c.estop_lossless);
  v("seed", c.seed);
}

template <typename V> void fields(V& v, RobotParams& c) {
  v("radius", c.radius);
  v("v_max", c.v_max);
  v("omega_max", c.omega_max);
  v("slew_limit", c.slew_limit);
  v("a_max", c.a_max);
  v("alpha_max", c.alpha_max);
  v("ultrasonic_enabled", c.ultrasonic_enabled);
  v("ultrasonic_range", c.ultrasonic_range);
  v("ultrasonic_threshold", c.ultrasonic_threshold);
  v("gripper_reach", c.gripper_reach);
  v("gripper_radius", c.gripper_radius);
  v("scrape_inflation", c.scrape_inflation);
  v("dt", c.dt);
}

template <typename V> void fields(V& v, TransportParams& c) {
  v("alpha_spill", c.alpha_spill);
  v("a_spill", c.a_spill);
  v("spill_duration_ms", c.spill_duration_ms);
  v("slip_timeout_ms", c.slip_timeout_ms);
  v("safety", c.safety);
}

template <typename V> void fields(V& v, RecognitionConfig& c) {
  v("subjects", c.subjects);
  v("trials_per_class", c.trials_per_class);
  v("subject_jitter", c.subject_jitter);
  v("rest_lead_min_s", c.rest_lead_min_s);
  v("rest_lead_max_s", c.rest_lead_max_s);
  v("hold_s", c.hold_s);
}

template <typename V> void fields(V& v, OperatorParams& c) {
  v("reaction_min_ms", c.reaction_min_ms);
  v("reaction_max_ms", c.reaction_max_ms);
  v("tilt_noise_deg", c.tilt_noise_deg);
  v("tick_ms", c.tick_ms);
  v("heading_gain", c.heading_gain);
  v("crosstrack_gain", c.crosstrack_gain);
  v("steer_limit", c.steer_limit);
  v("turn_gain", c.turn_gain);
  v("min_turn_rate", c.min_turn_rate);
  v("align_tolerance_deg", c.align_tolerance_deg);
  v("gentle_turn_rate", c.gentle_turn_rate);
  v("gentle_roll_rate", c.gentle_roll_rate);
  v("timeout_s", c.timeout_s);
}

template <typename V> void fields(V& v, NavigationConfig& c) {
  v("operators", c.operators);
  v("round_trips", c.round_trips);
  v("driver", c.driver);
}

template <typename V> void fields(V& v, TransferConfig& c) {
  v("trials_per_combo", c.trials_per_combo);
  v("misjudge_probability", c.misjudge_probability);
  v("ignore_cue_probability", c.ignore_cue_probability);
  v("rough_turn_probability", c.rough_turn_probability);
  v("light_release_probability", c.light_release_probability);
  v("alignment_sd_m", c.alignment_sd_m);
  v("transport_limit_s", c.transport_limit_s);
  v("max_gesture_attempts", c.max_gesture_attempts);
  v("slip_escalation", c.slip_escalation);
  v("subject_jitter", c.subject_jitter);
}

template <typename T> json write(T& value);
template <typename T> void read(const json& j, T& value, const std::string& where);

struct Writer {
  json out = json::object();
  template <typename T> void operator()(const char* key, T& value) { out[key] = write(value); }
};

struct Reader {
  const json& in;
  std::string where;
  std::set<std::string> known;
  template <typename T> void operator()(const char* key, T& value) {
    known.insert(key);
    if (auto it = in.find(key); it != in.end()) read(*it, value, where + "." + key);
  }
};

template <typename T> constexpr bool kStruct =
    std::is_same_v<T, ControlParams> || std::is_same_v<T, PipelineParams> || std::is_same_v<T, LinkConfig> ||
    std::is_same_v<T, RobotParams> || std::is_same_v<T, TransportParams> || std::is_same_v<T, RecognitionConfig> ||
    std::is_same_v<T, OperatorParams> || std::is_same_v<T, NavigationConfig> || std::is_same_v<T, TransferConfig>;

template <typename T> json write(T& value) {
  if constexpr (kStruct<T>) {
    Writer w;
    fields(w, value);
    return w.out;
  } else {
    return json(value);
  }
}

template <typename T> void read(const json& j, T& value, const std::string& where) {
  if constexpr (kStruct<T>) {
    if (!j.is_object()) throw InvalidSpec(where + " must be an object");
    Reader r{j, where, {}};
    fields(r, value);
    for (const auto& [key, _] : j.items()) {
      if (!r.known.contains(key)) throw InvalidSpec("unknown config key '" + where + "." + key + "'");
    }
  } else {
    try {
      value = j.get<T>();
    } catch (const json::exception& e) {
      throw InvalidSpec("config value " + where + " has the wrong type");
    }
  }
}

}  // namespace

void HarnessConfig::validate() const {
  dataset.validate();
  model.validate();
  control.validate();
  pipeline.validate();
  link.validate();
  robot.validate();
  if (model.window_samples != static_cast<int>(std::llround(pipeline.window_s * dataset.sample_rate_hz))) {
    throw InvalidSpec("model.window_samples must equal pipeline.window_s * sample rate");
  }
  if (robot.v_max < control.v_max || robot.omega_max < control.omega_max) {
    throw InvalidSpec("control limits exceed the robot limits");
  }
  const auto& r = recognition;
  if (r.subjects < 1 || r.trials_per_class < 1) throw InvalidSpec("recognition trials must be >= 1");
  if (!(r.subject_jitter >= 0.0 && r.subject_jitter < 1.0)) throw InvalidSpec("subject_jitter must lie in [0, 1)");
  if (!(r.rest_lead_min_s >= 0.0 && r.rest_lead_max_s >= r.rest_lead_min_s)) throw InvalidSpec("bad rest lead-in");
  if (!(r.hold_s > 0.0)) throw InvalidSpec("hold_s must be positive");
  const auto& d = navigation.driver;
  if (navigation.operators < 1 || navigation.round_trips < 1) throw InvalidSpec("navigation trials must be >= 1");
  if (!(d.reaction_min_ms >= 0.0 && d.reaction_max_ms >= d.reaction_min_ms)) throw InvalidSpec("bad reaction delay");
  if (!(d.tick_ms >= robot.dt * 1000.0) || !(d.timeout_s > 0.0)) throw InvalidSpec("bad operator tick or timeout");
  const auto& t = transfer;
  if (t.trials_per_combo < 1 || t.max_gesture_attempts < 1) throw InvalidSpec("transfer trials must be >= 1");
  for (double p : {t.misjudge_probability, t.ignore_cue_probability, t.rough_turn_probability,
                   t.light_release_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidSpec("transfer probabilities must lie in [0, 1]");
  }
  if (!(t.transport_limit_s > 0.0) || !(t.alignment_sd_m >= 0.0)) throw InvalidSpec("bad transfer limits");
}

json config_to_json(const HarnessConfig& c) {
  HarnessConfig m = c;
  json j;
  j["seed"] = m.seed;
  j["dataset"] = m.dataset;
  j["model"] = m.model;
  j["control"] = write(m.control);
  j["pipeline"] = write(m.pipeline);
  j["link"] = write(m.link);
  j["robot"] = write(m.robot);
  j["transport"] = write(m.transport);
  j["recognition"] = write(m.recognition);
  j["navigation"] = write(m.navigation);
  j["transfer"] = write(m.transfer);
  j["checkpoint"] = m.checkpoint;
  j["scenario"] = m.scenario;
  return j;
}

HarnessConfig config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidSpec("config must be a JSON object");
  static const std::set<std::string> known = {"seed",      "dataset",   "model",     "control",    "pipeline",
                                              "link",      "robot",     "transport", "recognition", "navigation",
                                              "transfer",  "checkpoint", "scenario"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw InvalidSpec("unknown config key '" + key + "'");
  }
  HarnessConfig c;
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<DatasetSpec>();
    if (j.contains("model")) {
      ModelConfig m = ModelConfig::compact();
      from_json(j.at("model"), m);
      c.model = m;
    }
    if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("scenario")) c.scenario = j.at("scenario").get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidSpec(std::string("bad config value: ") + e.what());
  }
  auto section = [&](const char* key, auto& value) {
    if (auto it = j.find(key); it != j.end()) read(*it, value, key);
  };
  section("control", c.control);
  section("pipeline", c.pipeline);
  section("link", c.link);
  section("robot", c.robot);
  section("transport", c.transport);
  section("recognition", c.recognition);
  section("navigation", c.navigation);
  section("transfer", c.transfer);
  c.validate();
  return c;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidSpec("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace mmg

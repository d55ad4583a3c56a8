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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "mmg/error.hpp"
#include "mmg/harness/config.hpp"
#include "mmg/harness/course.hpp"
#include "mmg/harness/experiments.hpp"
#include "mmg/harness/operator.hpp"
#include "mmg/harness/report.hpp"
#include "mmg/harness/serve.hpp"
#include "mmg/harness/session.hpp"

using namespace mmg;
using nlohmann::json;

namespace {

HarnessConfig small_config() {
  HarnessConfig cfg;
  cfg.navigation.operators = 2;
  cfg.navigation.round_trips = 1;
  cfg.recognition.subjects = 1;
  cfg.recognition.trials_per_class = 2;
  cfg.transfer.trials_per_combo = 1;
  return cfg;
}

std::map<std::string, std::string> summary_map(const Report& r) {
  std::map<std::string, std::string> m;
  for (const auto& [k, v] : r.summary) m[k] = v;
  return m;
}

std::size_t column(const Report& r, const std::string& name) {
  for (std::size_t i = 0; i < r.columns.size(); ++i) {
    if (r.columns[i] == name) return i;
  }
  FAIL("no column " << name);
  return 0;
}

// Session whose gripper starts over the object at B.
Scenario grasp_ready_course() {
  Scenario s = default_course();
  const Point b = s.b();
  s.start = {b.x + RobotParams{}.gripper_reach, b.y, std::numbers::pi};
  return s;
}

void run_ticks(LiveSession& s, int n, std::vector<json>* out = nullptr) {
  for (int i = 0; i < n; ++i) {
    auto msgs = s.tick();
    if (out) out->insert(out->end(), msgs.begin(), msgs.end());
  }
}

void enter_grasp(LiveSession& s) {
  s.submit({{"type", "button"}, {"action", "press"}});
  run_ticks(s, 10);
  s.submit({{"type", "button"}, {"action", "release"}});
  run_ticks(s, 15);
  s.submit({{"type", "button"}, {"action", "press"}});
  run_ticks(s, 10);
  s.submit({{"type", "button"}, {"action", "release"}});
  run_ticks(s, 2);
}

void enter_movement(LiveSession& s) {
  s.submit({{"type", "button"}, {"action", "press"}});
  run_ticks(s, 305);
  s.submit({{"type", "button"}, {"action", "release"}});
  run_ticks(s, 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration and scenario files

TEST_CASE("config JSON round trip and strictness") {
  HarnessConfig c;
  c.seed = 42;
  c.navigation.driver.turn_gain = 1.5;
  c.recognition.subject_jitter = 0.25;
  const json j = config_to_json(c);
  CHECK(config_to_json(config_from_json(j)) == j);
  CHECK(config_from_json(json::object()).seed == HarnessConfig{}.seed);

  json bad = j;
  bad["navigation"]["driver"]["no_such_key"] = 1;
  CHECK_THROWS_AS(config_from_json(bad), InvalidSpec);
  bad = j;
  bad["seed"] = "one";
  CHECK_THROWS_AS(config_from_json(bad), InvalidSpec);
  bad = j;
  bad["transfer"]["trials_per_combo"] = 0;
  CHECK_THROWS_AS(config_from_json(bad), InvalidSpec);
}

TEST_CASE("default course geometry") {
  const Scenario s = default_course();
  CHECK_NOTHROW(s.validate(RobotParams{}.radius));
  CHECK(s.path.length() == doctest::Approx(8.0).epsilon(1e-3));
  int right = 0, half = 0;
  for (double c : corner_angles(s.path.waypoints)) {
    if (std::fabs(std::fabs(c) - 90.0) < 1e-6) ++right;
    if (std::fabs(std::fabs(c) - 45.0) < 1e-6) ++half;
  }
  CHECK(right == 3);
  CHECK(half == 2);
  // B sits on a straight, so it does not split a leg.
  CHECK(legs_of(s.path.waypoints).size() == 6);
}

TEST_CASE("scenario validation rejects bad layouts") {
  const double radius = RobotParams{}.radius;
  Scenario s = default_course();
  // A thin wall across the middle of the first straight.
  s.obstacles.push_back({0.60, -0.40, 0.62, 0.40});
  CHECK_THROWS_AS(s.validate(radius), InvalidSpec);

  s = default_course();
  s.obstacles.push_back({0.5, 0.05, 0.7, 0.3});  // closer than the footprint
  CHECK_THROWS_AS(s.validate(radius), InvalidSpec);

  s = default_course();
  s.path.waypoints.back() = {0.1, 0.0};
  CHECK_THROWS_AS(s.validate(radius), InvalidSpec);

  s = default_course();
  s.path.waypoints[2].x += 0.2;  // skews two corners away from 90 degrees
  CHECK_THROWS_AS(s.validate(radius), InvalidSpec);

  s = default_course();
  s.catalog.clear();
  CHECK_THROWS_AS(s.validate(radius), InvalidSpec);
}

TEST_CASE("scenario JSON round trip") {
  const Scenario s = default_course();
  const json j = scenario_to_json(s);
  const Scenario back = scenario_from_json(j);
  CHECK(scenario_to_json(back) == j);
  CHECK(back.b() == s.b());
  CHECK(back.catalog.size() == 3);

  json no_catalog = j;
  no_catalog.erase("catalog");
  CHECK(scenario_from_json(no_catalog).catalog.size() == default_catalog().size());
  json extra = j;
  extra["colour"] = "red";
  CHECK_THROWS_AS(scenario_from_json(extra), InvalidSpec);
}

TEST_CASE("sequence numbers compare across wrap-around") {
  CHECK(seq_newer(1, 0));
  CHECK_FALSE(seq_newer(0, 1));
  CHECK_FALSE(seq_newer(5, 5));
  CHECK(seq_newer(2, 65535));
  CHECK_FALSE(seq_newer(65535, 2));
  CHECK(seq_newer(32767, 0));
}

// ---------------------------------------------------------------------------
// Reports

TEST_CASE("report number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 36.41, 1e-9, 123456.789}) CHECK(std::stod(num(v)) == v);
  CHECK(num(7L) == "7");
  CHECK(fixed(1.23456, 2) == "1.23");
  CHECK(percent(0.9333) == "93.3%");
  const auto rows = parse_csv("a,b\n1,2\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][1] == "2");
}

TEST_CASE("navigation aggregates recompute from the trial file") {
  const HarnessConfig cfg = small_config();
  const auto r = run_navigation(cfg, default_course());
  const Report rep = navigation_report(r);
  const auto rows = parse_csv(rep.trials_csv());
  REQUIRE(rows.size() == r.trials.size() + 1);

  std::vector<NavigationTrial> back;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    NavigationTrial t;
    t.operator_id = std::stoi(rows[i][column(rep, "operator")]);
    t.completed = rows[i][column(rep, "completed")] == "1";
    t.success = rows[i][column(rep, "success")] == "1";
    t.completion_s = std::stod(rows[i][column(rep, "completion_s")]);
    t.deviation_cm = std::stod(rows[i][column(rep, "deviation_cm")]);
    t.collisions = std::stol(rows[i][column(rep, "collisions")]);
    back.push_back(t);
  }
  const auto s = summarize(back);
  const auto m = summary_map(rep);
  CHECK(m.at("success_rate") == num(s.success_rate));
  CHECK(m.at("mean_completion_s") == num(s.mean_completion_s));
  CHECK(m.at("mean_deviation_cm") == num(s.mean_deviation_cm));
  CHECK(m.at("successes") == num(s.successes));
}

TEST_CASE("experiment reports are byte-identical across runs") {
  const HarnessConfig cfg = small_config();
  const Report a = navigation_report(run_navigation(cfg, default_course()));
  const Report b = navigation_report(run_navigation(cfg, default_course()));
  CHECK(a.trials_csv() == b.trials_csv());
  CHECK(a.summary_csv() == b.summary_csv());
  CHECK(a.text() == b.text());

  HarnessConfig other = cfg;
  other.seed = cfg.seed + 1;
  CHECK(navigation_report(run_navigation(other, default_course())).trials_csv() != a.trials_csv());
}

TEST_CASE("a scripted round trip follows the course") {
  HarnessConfig cfg;
  std::vector<Point> executed;
  const auto t = run_navigation_trial(cfg, default_course(), 0, 0, &executed);
  CHECK(t.completed);
  CHECK(t.success);
  CHECK(t.deviation_cm < 4.0);
  CHECK(t.completion_s > 20.0);
  CHECK(t.completion_s < 40.0);
  REQUIRE(!executed.empty());
  CHECK(trajectory_deviation_cm(executed, default_course().path) == t.deviation_cm);
}

TEST_CASE("recognition and transfer plumbing on a constant classifier") {
  // A zero network always answers GRIP_L1, which pins down the bookkeeping.
  const Classifier clf(ModelCheckpoint::zeros(ModelConfig::compact()));
  const HarnessConfig cfg = small_config();

  const auto rec = run_recognition(cfg, clf);
  REQUIRE(rec.trials.size() == 12);
  for (const auto& t : rec.trials) {
    if (t.predicted >= 0) {
      CHECK(t.predicted == 0);
      CHECK(t.latency_ms > 0.0);
    }
  }
  const auto rs = rec.summary;
  CHECK(rs.correct <= 2);
  CHECK(rs.accuracy == doctest::Approx(static_cast<double>(rs.correct) / 12.0));
  const Report rrep = recognition_report(rec);
  CHECK(rrep.rows.size() == 12);
  CHECK(summary_map(rrep).at("accuracy") == num(rs.accuracy));

  const auto tr = run_transfer(cfg, default_course(), clf);
  REQUIRE(tr.trials.size() == 9);
  long grips = 0;
  for (const auto& t : tr.trials) grips += t.grip_success;
  CHECK(tr.summary.grip_successes == grips);
  const Report trep = transfer_report(tr, cfg.transfer);
  CHECK(summary_map(trep).at("grip_rate") == num(tr.summary.grip_rate));
  CHECK(trep.table.size() == 1 + 9 + 1);
}

// ---------------------------------------------------------------------------
// Live session and replay

TEST_CASE("inbound messages are validated") {
  CHECK_NOTHROW(validate_input({{"type", "tilt"}, {"pitch_deg", 10}, {"roll_deg", -3.5}}));
  CHECK_NOTHROW(validate_input({{"type", "button"}, {"action", "press"}, {"t_ms", 12.0}}));
  CHECK_NOTHROW(validate_input({{"type", "grip"}, {"level", 2}}));
  CHECK_NOTHROW(validate_input({{"type", "grip"}, {"release", "gradual"}}));
  CHECK_NOTHROW(validate_input({{"type", "estop"}, {"clear", true}}));
  CHECK_THROWS_AS(validate_input({{"type", "tilt"}, {"pitch_deg", 100}, {"roll_deg", 0}}), RejectedInput);
  CHECK_THROWS_AS(validate_input({{"type", "tilt"}, {"pitch_deg", 1}}), RejectedInput);
  CHECK_THROWS_AS(validate_input({{"type", "button"}, {"action", "hold"}}), RejectedInput);
  CHECK_THROWS_AS(validate_input({{"type", "grip"}, {"level", 2}, {"bin", 3}}), RejectedInput);
  CHECK_THROWS_AS(validate_input({{"type", "grip"}, {"level", 4}}), RejectedInput);
  CHECK_THROWS_AS(validate_input({{"type", "telemetry"}}), RejectedInput);
  CHECK_THROWS_AS(validate_input(json::array()), RejectedInput);
  CHECK_THROWS_AS(validate_input({{"type", "estop"}, {"why", "x"}}), RejectedInput);
}

TEST_CASE("session telemetry rate and content") {
  LiveSession s(HarnessConfig{}, default_course());
  std::vector<json> out;
  run_ticks(s, 100, &out);
  long telemetry = 0;
  for (const auto& m : out) telemetry += m.at("type") == "telemetry";
  CHECK(telemetry == 25);  // 1 s of simulation
  const json t = s.telemetry(true);
  for (const char* k : {"type", "t_ms", "tick", "pose", "velocity", "mode", "force_n", "force_bin", "feedback", "held",
                        "events", "estop", "scenario"}) {
    CHECK_MESSAGE(t.contains(k), k);
  }
  CHECK(t.at("mode") == "IDLE");
  CHECK_FALSE(s.telemetry().contains("scenario"));
}

TEST_CASE("tilt drives only in MOVEMENT and estop stops within one step") {
  LiveSession s(HarnessConfig{}, default_course());
  s.submit({{"type", "tilt"}, {"pitch_deg", 30}, {"roll_deg", 0}});
  run_ticks(s, 50);
  CHECK(s.world().velocity() == Twist{});
  enter_movement(s);
  CHECK(s.mode() == Mode::kMovement);
  run_ticks(s, 40);
  CHECK(s.world().velocity().vx > 0.1);
  s.submit({{"type", "estop"}});
  run_ticks(s, 1);
  CHECK(s.world().velocity() == Twist{});
  run_ticks(s, 20);
  CHECK(s.world().velocity() == Twist{});
  s.submit({{"type", "estop"}, {"clear", true}});
  run_ticks(s, 40);
  CHECK(s.world().velocity().vx > 0.1);
  const json m = s.finish();
  CHECK(m.at("operator_estops") == 1);
}

TEST_CASE("feedback frames are edge-triggered") {
  LiveSession s(HarnessConfig{}, grasp_ready_course());
  enter_grasp(s);
  REQUIRE(s.mode() == Mode::kGrasp);
  std::vector<json> out;
  // Strong grip on the smooth watch, then the same again, then the lightest bin.
  s.submit({{"type", "grip"}, {"level", 1}});
  run_ticks(s, 20, &out);
  s.submit({{"type", "grip"}, {"level", 1}});
  run_ticks(s, 20, &out);
  s.submit({{"type", "grip"}, {"bin", 1}});
  run_ticks(s, 15, &out);
  s.submit({{"type", "grip"}, {"bin", 1}});
  run_ticks(s, 15, &out);

  std::vector<int> sent;
  for (const auto& m : out) {
    if (m.at("type") == "feedback") sent.push_back(m.at("index").get<int>());
  }
  REQUIRE(sent.size() == 2);
  CHECK(sent[0] != sent[1]);
  CHECK(sent[1] == kFeedbackSlip);  // 1 bin is far below what the watch needs
  for (int i : sent) CHECK((i >= 1 && i <= 8));
  CHECK(s.feedback_sent() == sent);
  CHECK(s.telemetry().at("held") == "watch");
}

TEST_CASE("grip outside GRASP is refused and release places the object") {
  LiveSession s(HarnessConfig{}, grasp_ready_course());
  s.submit({{"type", "grip"}, {"level", 1}});
  run_ticks(s, 2);
  REQUIRE(!s.events().empty());
  CHECK(s.events().back().kind == "rejected");
  enter_grasp(s);
  s.submit({{"type", "grip"}, {"level", 1}});
  run_ticks(s, 2);
  s.submit({{"type", "grip"}, {"release", "standard"}});
  run_ticks(s, 2);
  const json m = s.finish();
  CHECK(m.at("grasp") == "HELD");
  CHECK(m.at("release") == "PLACED");
  CHECK(s.telemetry().at("held").is_null());
}

TEST_CASE("a logged session replays to the identical log and metrics") {
  std::ostringstream log;
  {
    LiveSession s(HarnessConfig{}, grasp_ready_course(), &log);
    enter_movement(s);
    s.submit({{"type", "tilt"}, {"pitch_deg", 20}, {"roll_deg", 12}});
    run_ticks(s, 80);
    s.submit({{"type", "tilt"}, {"pitch_deg", -15}, {"roll_deg", -20}});
    run_ticks(s, 60);
    s.submit({{"type", "estop"}});
    run_ticks(s, 5);
    enter_grasp(s);
    s.submit({{"type", "grip"}, {"level", 3}});
    s.submit({{"type", "tilt"}, {"pitch_deg", 0}, {"roll_deg", 0}});
    run_ticks(s, 33);
    s.finish();
  }
  std::istringstream in(log.str());
  const ReplayResult r = replay(in);
  CHECK(r.identical);
  CHECK(r.metrics == r.logged_metrics);
  CHECK(r.metrics.at("ticks").get<long>() > 500);

  // A tampered input changes the outcome and is caught.
  std::string text = log.str();
  const auto at = text.find("\"pitch_deg\":20");
  REQUIRE(at != std::string::npos);
  text.replace(at, 14, "\"pitch_deg\":25");
  std::istringstream tampered(text);
  const ReplayResult t = replay(tampered);
  CHECK_FALSE(t.identical);
  CHECK(t.first_mismatch_line > 1);

  std::istringstream truncated(log.str().substr(0, log.str().rfind("{\"events\"")));
  CHECK_THROWS_AS(replay(truncated), RejectedInput);
  std::istringstream junk("not json\n");
  CHECK_THROWS_AS(replay(junk), RejectedInput);
}

// ---------------------------------------------------------------------------
// WebSocket server

TEST_CASE("serve round trip over a WebSocket") {
  namespace net = boost::asio;
  namespace beast = boost::beast;
  const auto log_path = std::filesystem::temp_directory_path() / "mmg_serve_test.jsonl";
  ServeOptions opts;
  opts.port = 0;
  opts.log_path = log_path;
  Server server(HarnessConfig{}, default_course(), opts);
  const auto port = server.port();
  REQUIRE(port != 0);
  json metrics;
  std::thread sim([&] { metrics = server.run(); });

  net::io_context ioc;
  net::ip::tcp::resolver resolver(ioc);
  beast::websocket::stream<net::ip::tcp::socket> ws(ioc);
  net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1", "/");
  const auto read = [&] {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  };
  const json hello = read();
  CHECK(hello.at("type") == "telemetry");
  CHECK(hello.contains("scenario"));

  ws.text(true);
  ws.write(net::buffer(json{{"type", "button"}, {"action", "wiggle"}}.dump()));
  ws.write(net::buffer(json{{"type", "estop"}}.dump()));
  bool saw_error = false, saw_estop = false;
  long telemetry = 0;
  const auto start = std::chrono::steady_clock::now();
  while (std::chrono::steady_clock::now() - start < std::chrono::milliseconds(600)) {
    const json m = read();
    if (m.at("type") == "error") saw_error = true;
    if (m.at("type") == "telemetry") {
      ++telemetry;
      saw_estop = saw_estop || m.at("estop").get<bool>();
    }
  }
  CHECK(saw_error);
  CHECK(saw_estop);
  CHECK(telemetry >= 10);  // at least 20 Hz over the window

  server.stop();
  sim.join();
  CHECK(metrics.at("operator_estops") == 1);
  std::ifstream in(log_path);
  const ReplayResult r = replay(in);
  CHECK(r.identical);
  CHECK(r.metrics == metrics);
  std::filesystem::remove(log_path);
}

TEST_CASE("serve reports a busy port at startup") {
  ServeOptions opts;
  opts.port = 0;
  Server first(HarnessConfig{}, default_course(), opts);
  opts.port = first.port();
  CHECK_THROWS_AS(Server(HarnessConfig{}, default_course(), opts), RuntimeFailure);
}

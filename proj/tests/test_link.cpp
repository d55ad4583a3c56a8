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

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mmg/link.hpp"

using namespace mmg;

namespace {

// Bitwise CRC straight from the polynomial, MSB first.
std::uint16_t crc_oracle(const std::vector<std::uint8_t>& bytes) {
  std::uint32_t reg = 0xFFFF;
  for (std::uint8_t byte : bytes) {
    for (int bit = 7; bit >= 0; --bit) {
      const std::uint32_t in = (byte >> bit) & 1u;
      const std::uint32_t top = (reg >> 15) & 1u;
      reg = (reg << 1) & 0xFFFF;
      if (top ^ in) reg ^= 0x1021;
    }
  }
  return static_cast<std::uint16_t>(reg);
}

Frame random_frame(Rng& rng) {
  Frame f;
  f.seq = static_cast<std::uint16_t>(rng.uniform_int(0, 65535));
  f.kind = static_cast<FrameKind>(rng.uniform_int(0, 4));
  f.payload.resize(static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(kMaxPayloadBytes))));
  for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return f;
}

}  // namespace

TEST_CASE("crc-16 check value and oracle agreement") {
  const std::string check = "123456789";
  const std::vector<std::uint8_t> bytes(check.begin(), check.end());
  CHECK(crc16_ccitt(bytes) == 0x29B1);
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    std::vector<std::uint8_t> v(static_cast<std::size_t>(rng.uniform_int(0, 40)));
    for (auto& b : v) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    CHECK(crc16_ccitt(v) == crc_oracle(v));
  }
}

TEST_CASE("frame round trip for every kind") {
  Rng rng(11);
  std::set<int> kinds;
  for (int t = 0; t < 1000; ++t) {
    const Frame f = random_frame(rng);
    kinds.insert(static_cast<int>(f.kind));
    const auto bytes = encode(f);
    CHECK(bytes.size() <= kMaxFrameBytes);
    CHECK(bytes.size() == kFrameHeaderBytes + f.payload.size() + kFrameCrcBytes);
    CHECK(decode(bytes) == f);
  }
  CHECK(kinds.size() == 5);
}

TEST_CASE("byte layout is little-endian with trailing crc") {
  Frame f{0x1234, FrameKind::kGrip, {0xAA, 0xBB}};
  const auto b = encode(f);
  REQUIRE(b.size() == 8);
  CHECK(b[0] == 0x34);
  CHECK(b[1] == 0x12);
  CHECK(b[2] == 1);
  CHECK(b[3] == 2);
  CHECK(b[4] == 0xAA);
  CHECK(b[5] == 0xBB);
  const std::uint16_t crc = crc_oracle({b.begin(), b.begin() + 6});
  CHECK(b[6] == (crc & 0xFF));
  CHECK(b[7] == (crc >> 8));
}

TEST_CASE("size bound and malformed input") {
  Frame big{1, FrameKind::kVel, std::vector<std::uint8_t>(27, 0)};
  CHECK_THROWS_AS((void)encode(big), FrameError);
  big.payload.resize(26);
  CHECK(encode(big).size() == 32);
  CHECK_THROWS_AS((void)decode(std::vector<std::uint8_t>{1, 2, 3}), FrameError);
  auto b = encode(Frame{5, FrameKind::kAck, pack_ack(4)});
  b[3] = 3;  // length lies
  CHECK_THROWS_AS((void)decode(b), FrameError);
}

TEST_CASE("single bit flips are rejected") {
  Rng rng(19);
  long rejected = 0;
  const long trials = 100000;
  for (long t = 0; t < trials; ++t) {
    auto b = encode(random_frame(rng));
    const auto bit = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(b.size() * 8) - 1));
    b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      (void)decode(b);
    } catch (const FrameError&) {
      ++rejected;
    }
  }
  CHECK(static_cast<double>(rejected) / trials >= 0.9999);
}

TEST_CASE("typed payloads round trip") {
  const VelPayload v{0.25f, -0.125f, 1.0f};
  CHECK(unpack_vel(pack(v)) == v);
  const GripPayload g{1, 3, 6};
  CHECK(unpack_grip(pack(g)) == g);
  CHECK(unpack_feedback(pack_feedback(7)) == 7);
  CHECK(unpack_ack(pack_ack(0xBEEF)) == 0xBEEF);
  CHECK_THROWS_AS((void)unpack_vel(pack(g)), FrameError);
}

TEST_CASE("lossless link delivers after the fixed latency") {
  LinkConfig cfg;
  cfg.drop_probability = 0.0;
  cfg.latency_mean_ms = 10.0;
  cfg.latency_jitter_ms = 0.0;
  Link link(cfg);
  const auto r = link.send(Frame{1, FrameKind::kVel, pack(VelPayload{})}, 100.0);
  REQUIRE(r.deliveries_ms.size() == 1);
  CHECK(r.deliveries_ms[0] == 110.0);
  CHECK(r.acknowledged);
  CHECK(r.attempts == 1);
  CHECK(r.finished_ms == 120.0);
}

TEST_CASE("forced loss fails after every retry") {
  LinkConfig cfg;
  cfg.drop_probability = 1.0;
  cfg.max_retries = 3;
  Link link(cfg);
  const auto r = link.send(Frame{1, FrameKind::kGrip, pack(GripPayload{})}, 0.0);
  CHECK(r.failed());
  CHECK(r.attempts == 4);
  CHECK(r.deliveries_ms.empty());
  CHECK(link.stats().failures == 1);

  // The safety channel ignores configured loss by default.
  const auto e = link.send(Frame{2, FrameKind::kEstop, {}}, 0.0);
  CHECK(e.acknowledged);
  CHECK(e.deliveries_ms.size() == 1);
  cfg.estop_lossless = false;
  Link strict(cfg);
  CHECK(strict.send(Frame{2, FrameKind::kEstop, {}}, 0.0).failed());
}

TEST_CASE("empirical first-attempt drop rate matches configuration") {
  LinkConfig cfg;
  cfg.drop_probability = 0.3;
  cfg.seed = 99;
  Link link(cfg);
  for (int i = 0; i < 10000; ++i) link.send(Frame{static_cast<std::uint16_t>(i), FrameKind::kVel, {}}, i * 10.0);
  const double rate = static_cast<double>(link.stats().first_attempt_drops) / 10000.0;
  CHECK(std::fabs(rate - 0.3) <= 0.02);
}

TEST_CASE("delivery schedule is deterministic under a fixed seed") {
  LinkConfig cfg;
  cfg.drop_probability = 0.2;
  cfg.seed = 42;
  auto run = [&]() {
    Link link(cfg);
    std::vector<double> sched;
    for (int i = 0; i < 2000; ++i) {
      const auto r = link.send(Frame{static_cast<std::uint16_t>(i), FrameKind::kVel, {}}, i * 5.0);
      sched.insert(sched.end(), r.deliveries_ms.begin(), r.deliveries_ms.end());
      sched.push_back(r.finished_ms);
    }
    return sched;
  };
  CHECK(run() == run());
  cfg.seed = 43;
  const auto other = run();
  cfg.seed = 42;
  CHECK(other != run());
}

TEST_CASE("channel deduplicates and orders deliveries") {
  LinkConfig cfg;
  cfg.drop_probability = 0.4;  // plenty of ack loss, hence duplicates
  cfg.seed = 5;
  Channel ch(cfg);
  long copies = 0;
  std::map<std::uint16_t, int> seen;
  double last = -1.0;
  for (int i = 0; i < 3000; ++i) {
    const auto r = ch.submit(Frame{ch.next_seq(), FrameKind::kVel, {}}, i * 10.0);
    copies += static_cast<long>(r.deliveries_ms.size());
    for (const auto& d : ch.poll(i * 10.0)) {
      CHECK(d.t_ms >= last);
      last = d.t_ms;
      ++seen[d.frame.seq];
    }
  }
  for (const auto& d : ch.poll(1e12)) ++seen[d.frame.seq];
  for (const auto& [seq, n] : seen) CHECK(n == 1);
  CHECK(copies > static_cast<long>(seen.size()));  // duplicates did occur
}

TEST_CASE("default link latency p99 stays under 100 ms") {
  Channel ch(LinkConfig{});
  for (int i = 0; i < 20000; ++i) ch.submit(Frame{ch.next_seq(), FrameKind::kVel, {}}, i * 50.0);
  auto lat = ch.latencies();
  std::sort(lat.begin(), lat.end());
  const double p99 = lat[static_cast<std::size_t>(0.99 * static_cast<double>(lat.size()))];
  CHECK(p99 <= 100.0);
}

TEST_CASE("config validation") {
  LinkConfig cfg;
  cfg.drop_probability = 1.5;
  CHECK_THROWS_AS(cfg.validate(), InvalidSpec);
  cfg = {};
  cfg.ack_timeout_ms = 0;
  CHECK_THROWS_AS(Link{cfg}, InvalidSpec);
}

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

// Simulated radio link between the wearable and the robot. Frames are small
// and fixed-layout (see docs/link_frame.md); the channel is a discrete-event
// model with seeded latency, loss, acknowledgements and retransmission.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "mmg/error.hpp"
#include "mmg/random.hpp"

namespace mmg {

enum class FrameKind : std::uint8_t { kVel = 0, kGrip = 1, kFeedback = 2, kEstop = 3, kAck = 4 };

inline constexpr std::size_t kFrameHeaderBytes = 4;
inline constexpr std::size_t kFrameCrcBytes = 2;
inline constexpr std::size_t kMaxPayloadBytes = 26;
inline constexpr std::size_t kMaxFrameBytes = kFrameHeaderBytes + kMaxPayloadBytes + kFrameCrcBytes;

const char* frame_kind_name(FrameKind k);

struct Frame {
  std::uint16_t seq = 0;
  FrameKind kind = FrameKind::kVel;
  std::vector<std::uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

class FrameError : public RejectedInput {
 public:
  explicit FrameError(const std::string& what) : RejectedInput(what) {}
};

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
std::uint16_t crc16_ccitt(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode(const Frame& f);
Frame decode(std::span<const std::uint8_t> bytes);

// Typed payloads carried by the command frames.
struct VelPayload {
  float vx = 0, vy = 0, omega = 0;
  bool operator==(const VelPayload&) const = default;
};
struct GripPayload {
  std::uint8_t gesture = 0;  // 0 grip, 1 wrist
  std::uint8_t level = 1;    // 1 strong .. 3 light
  std::uint8_t force_bin = 1;
  bool operator==(const GripPayload&) const = default;
};

std::vector<std::uint8_t> pack(const VelPayload& p);
std::vector<std::uint8_t> pack(const GripPayload& p);
std::vector<std::uint8_t> pack_feedback(std::uint8_t index);
std::vector<std::uint8_t> pack_ack(std::uint16_t acked_seq);
VelPayload unpack_vel(std::span<const std::uint8_t> payload);
GripPayload unpack_grip(std::span<const std::uint8_t> payload);
std::uint8_t unpack_feedback(std::span<const std::uint8_t> payload);
std::uint16_t unpack_ack(std::span<const std::uint8_t> payload);

struct LinkConfig {
  double latency_mean_ms = 20.0;
  double latency_jitter_ms = 10.0;  // uniform +/- around the mean
  double drop_probability = 0.01;   // per transmission, data and ack alike
  int max_retries = 3;
  double ack_timeout_ms = 50.0;
  bool estop_lossless = true;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SendResult {
  std::vector<double> deliveries_ms;  // every copy that reached the receiver
  int attempts = 0;
  bool acknowledged = false;
  double finished_ms = 0.0;  // ack arrival, or when the sender gave up

  bool failed() const { return !acknowledged; }
};

struct LinkStats {
  long frames = 0;
  long attempts = 0;
  long first_attempt_drops = 0;
  long data_drops = 0;
  long ack_drops = 0;
  long failures = 0;
};

/// Stop-and-wait transmitter over a lossy channel. Each call consumes the
/// link's RNG stream, so identical traffic gives an identical schedule.
class Link {
 public:
  explicit Link(LinkConfig cfg);

  SendResult send(const Frame& f, double t_ms);
  const LinkStats& stats() const { return stats_; }
  const LinkConfig& config() const { return cfg_; }

 private:
  double sample_latency();

  LinkConfig cfg_;
  Rng rng_;
  LinkStats stats_;
};

/// Receiver-side duplicate filter over a sliding window of recent seqs.
class SeqDeduplicator {
 public:
  explicit SeqDeduplicator(std::size_t window = 1024) : window_(window) {}
  /// True the first time a seq is seen inside the window.
  bool accept(std::uint16_t seq);

 private:
  std::size_t window_;
  std::deque<std::uint16_t> order_;
  std::unordered_set<std::uint16_t> seen_;
};

struct Delivery {
  double t_ms;
  Frame frame;
};

/// Queue of in-flight frames. `submit` runs the link model; `poll` returns
/// deduplicated frames whose delivery time has passed, in time order.
class Channel {
 public:
  explicit Channel(LinkConfig cfg) : link_(cfg) {}

  SendResult submit(const Frame& f, double t_ms);
  std::vector<Delivery> poll(double now_ms);
  /// Emit-to-first-delivery latency of every frame that got through.
  const std::vector<double>& latencies() const { return latencies_; }
  const LinkStats& stats() const { return link_.stats(); }
  std::uint16_t next_seq() { return seq_++; }

 private:
  struct Pending {
    double t_ms;
    std::uint64_t order;
    Frame frame;
    bool operator>(const Pending& o) const { return t_ms != o.t_ms ? t_ms > o.t_ms : order > o.order; }
  };

  Link link_;
  SeqDeduplicator dedup_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::uint64_t counter_ = 0;
  std::uint16_t seq_ = 0;
  std::vector<double> latencies_;
};

}  // namespace mmg

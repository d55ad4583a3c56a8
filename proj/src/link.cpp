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

#include "mmg/link.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace mmg {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[at + static_cast<std::size_t>(i)]) << (8 * i);
  return std::bit_cast<float>(bits);
}

void expect_len(std::span<const std::uint8_t> p, std::size_t n, const char* what) {
  if (p.size() != n) throw FrameError(std::string(what) + " payload must be " + std::to_string(n) + " bytes");
}

}  // namespace

const char* frame_kind_name(FrameKind k) {
  switch (k) {
    case FrameKind::kVel: return "VEL";
    case FrameKind::kGrip: return "GRIP";
    case FrameKind::kFeedback: return "FEEDBACK";
    case FrameKind::kEstop: return "ESTOP";
    case FrameKind::kAck: return "ACK";
  }
  return "?";
}

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> bytes) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : bytes) {
    crc ^= static_cast<std::uint16_t>(b << 8);
    for (int i = 0; i < 8; ++i) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021) : static_cast<std::uint16_t>(crc << 1);
    }
  }
  return crc;
}

std::vector<std::uint8_t> encode(const Frame& f) {
  if (f.payload.size() > kMaxPayloadBytes) {
    throw FrameError("payload of " + std::to_string(f.payload.size()) + " bytes exceeds " +
                     std::to_string(kMaxPayloadBytes));
  }
  if (static_cast<std::uint8_t>(f.kind) > static_cast<std::uint8_t>(FrameKind::kAck)) {
    throw FrameError("unknown frame kind");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderBytes + f.payload.size() + kFrameCrcBytes);
  put_u16(out, f.seq);
  out.push_back(static_cast<std::uint8_t>(f.kind));
  out.push_back(static_cast<std::uint8_t>(f.payload.size()));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  put_u16(out, crc16_ccitt(out));
  return out;
}

Frame decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderBytes + kFrameCrcBytes) throw FrameError("frame too short");
  if (bytes.size() > kMaxFrameBytes) throw FrameError("frame too long");
  const std::size_t len = bytes[3];
  if (len > kMaxPayloadBytes || bytes.size() != kFrameHeaderBytes + len + kFrameCrcBytes) {
    throw FrameError("frame length field does not match");
  }
  const std::size_t body = kFrameHeaderBytes + len;
  if (crc16_ccitt(bytes.first(body)) != get_u16(bytes, body)) throw FrameError("crc mismatch");
  if (bytes[2] > static_cast<std::uint8_t>(FrameKind::kAck)) throw FrameError("unknown frame kind");
  Frame f;
  f.seq = get_u16(bytes, 0);
  f.kind = static_cast<FrameKind>(bytes[2]);
  f.payload.assign(bytes.begin() + kFrameHeaderBytes, bytes.begin() + static_cast<std::ptrdiff_t>(body));
  return f;
}

std::vector<std::uint8_t> pack(const VelPayload& p) {
  std::vector<std::uint8_t> out;
  put_f32(out, p.vx);
  put_f32(out, p.vy);
  put_f32(out, p.omega);
  return out;
}

std::vector<std::uint8_t> pack(const GripPayload& p) { return {p.gesture, p.level, p.force_bin}; }

std::vector<std::uint8_t> pack_feedback(std::uint8_t index) { return {index}; }

std::vector<std::uint8_t> pack_ack(std::uint16_t acked_seq) {
  std::vector<std::uint8_t> out;
  put_u16(out, acked_seq);
  return out;
}

VelPayload unpack_vel(std::span<const std::uint8_t> p) {
  expect_len(p, 12, "VEL");
  return {get_f32(p, 0), get_f32(p, 4), get_f32(p, 8)};
}

GripPayload unpack_grip(std::span<const std::uint8_t> p) {
  expect_len(p, 3, "GRIP");
  return {p[0], p[1], p[2]};
}

std::uint8_t unpack_feedback(std::span<const std::uint8_t> p) {
  expect_len(p, 1, "FEEDBACK");
  return p[0];
}

std::uint16_t unpack_ack(std::span<const std::uint8_t> p) {
  expect_len(p, 2, "ACK");
  return get_u16(p, 0);
}

void LinkConfig::validate() const {
  if (!(latency_mean_ms >= 0.0)) throw InvalidSpec("link latency must be non-negative");
  if (!(latency_jitter_ms >= 0.0)) throw InvalidSpec("link jitter must be non-negative");
  if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) {
    throw InvalidSpec("drop probability must lie in [0, 1]");
  }
  if (max_retries < 0) throw InvalidSpec("max_retries must be non-negative");
  if (!(ack_timeout_ms > 0.0)) throw InvalidSpec("ack timeout must be positive");
}

Link::Link(LinkConfig cfg) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

double Link::sample_latency() {
  const double j = cfg_.latency_jitter_ms;
  const double u = rng_.uniform(-j, j);
  return std::max(0.0, cfg_.latency_mean_ms + u);
}

SendResult Link::send(const Frame& f, double t_ms) {
  (void)encode(f);  // size and kind checks
  const bool lossless = f.kind == FrameKind::kEstop && cfg_.estop_lossless;
  SendResult r;
  ++stats_.frames;
  double t = t_ms;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    ++r.attempts;
    ++stats_.attempts;
    // Fixed draw order per attempt: data loss, data latency, ack loss, ack latency.
    const bool data_lost = !lossless && rng_.bernoulli(cfg_.drop_probability);
    const double data_latency = sample_latency();
    const bool ack_lost = !lossless && rng_.bernoulli(cfg_.drop_probability);
    const double ack_latency = sample_latency();
    if (data_lost) {
      ++stats_.data_drops;
      if (attempt == 0) ++stats_.first_attempt_drops;
    } else {
      const double arrive = t + data_latency;
      r.deliveries_ms.push_back(arrive);
      if (ack_lost) {
        ++stats_.ack_drops;
      } else if (data_latency + ack_latency <= cfg_.ack_timeout_ms || lossless) {
        r.acknowledged = true;
        r.finished_ms = arrive + ack_latency;
        return r;
      }
    }
    t += cfg_.ack_timeout_ms;
  }
  ++stats_.failures;
  r.finished_ms = t;
  return r;
}

bool SeqDeduplicator::accept(std::uint16_t seq) {
  if (seen_.contains(seq)) return false;
  seen_.insert(seq);
  order_.push_back(seq);
  if (order_.size() > window_) {
    seen_.erase(order_.front());
    order_.pop_front();
  }
  return true;
}

SendResult Channel::submit(const Frame& f, double t_ms) {
  SendResult r = link_.send(f, t_ms);
  for (double t : r.deliveries_ms) queue_.push({t, counter_++, f});
  if (!r.deliveries_ms.empty()) latencies_.push_back(r.deliveries_ms.front() - t_ms);
  return r;
}

std::vector<Delivery> Channel::poll(double now_ms) {
  std::vector<Delivery> out;
  while (!queue_.empty() && queue_.top().t_ms <= now_ms) {
    Pending p = queue_.top();
    queue_.pop();
    if (dedup_.accept(p.frame.seq)) out.push_back({p.t_ms, std::move(p.frame)});
  }
  return out;
}

}  // namespace mmg

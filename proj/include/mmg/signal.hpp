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

// Five-channel MMG signal handling: windows, Savitzky-Golay smoothing,
// zero-phase band-pass, one-sided spectra, peak picking, normalization and
// fixed-hop segmentation. Everything here is a pure function.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mmg {

inline constexpr std::size_t kChannels = 5;
inline constexpr double kDefaultSampleRateHz = 2600.0;

using Signal = std::vector<double>;

/// Fixed-length block of the five forearm channels.
struct SignalWindow {
  std::array<Signal, kChannels> samples;
  double sample_rate_hz = kDefaultSampleRateHz;
  std::int64_t t0_us = 0;
  std::optional<int> label;

  std::size_t length() const { return samples[0].size(); }

  /// Throws RejectedInput unless every invariant holds.
  void validate() const;
};

/// A continuous multi-channel recording; same layout as a window.
using Trace = SignalWindow;

struct FilterSpec {
  int sg_window = 51;
  int sg_order = 3;
  double band_low_hz = 20.0;
  double band_high_hz = 1200.0;

  void validate_sg() const;
  void validate_band(double sample_rate_hz) const;
};

struct Spectrum {
  double bin_hz = 0.0;
  std::vector<double> magnitudes;
  std::size_t fft_length = 0;

  std::size_t argmax() const;
};

struct Peak {
  std::size_t index;
  double amplitude;

  bool operator==(const Peak&) const = default;
};

struct NormStats {
  std::array<double, kChannels> mean{};
  std::array<double, kChannels> stddev{};
  // Channels whose raw std was zero; their stddev entry was replaced by 1.
  std::array<bool, kChannels> degenerate{};

  static NormStats fit(std::span<const SignalWindow> windows);
};

/// Smoothing coefficients c_{-k..k} for a centred least-squares fit.
std::vector<double> savitzky_golay_coefficients(int window, int order);

Signal savitzky_golay(std::span<const double> x, const FilterSpec& spec = {});

/// Fourth-order Butterworth high-pass and low-pass sections, applied
/// forward then backward.
Signal bandpass(std::span<const double> x, const FilterSpec& spec,
                double sample_rate_hz);

Spectrum fft_spectrum(std::span<const double> x, double sample_rate_hz);

std::vector<Peak> detect_peaks(std::span<const double> x, double min_prominence,
                               std::size_t min_separation);

SignalWindow normalize(const SignalWindow& w, const NormStats& stats);
SignalWindow denormalize(const SignalWindow& w, const NormStats& stats);

struct Segmentation {
  std::vector<SignalWindow> windows;
  std::optional<std::string> warning;
};

Segmentation segment_windows(const Trace& stream, double window_s = 1.0,
                             double overlap = 0.5);

/// Sub-range [begin, begin+length) of a trace as its own window.
SignalWindow slice(const Trace& trace, std::size_t begin, std::size_t length);

// CSV trace format: header `t_us,ch1,ch2,ch3,ch4,ch5[,label]`.
struct TraceRow {
  std::int64_t t_us;
  std::array<double, kChannels> ch;
  std::optional<int> label;
};

void write_trace_csv(std::ostream& out, std::span<const SignalWindow> windows,
                     bool with_label);
std::vector<TraceRow> read_trace_csv(std::istream& in);

/// Groups consecutive rows into windows of `window_length` samples.
std::vector<SignalWindow> rows_to_windows(std::span<const TraceRow> rows,
                                          std::size_t window_length,
                                          double sample_rate_hz);

}  // namespace mmg

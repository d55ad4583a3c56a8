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

// Seeded generator of forearm MMG traces. Each gesture class is described by
// per-muscle burst statistics; a trace is baseline + Gaussian noise + one
// Gaussian bump per burst, clipped to the sensor range.

#include <array>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "mmg/gesture.hpp"
#include "mmg/signal.hpp"

namespace mmg {

enum class Muscle { kFCR = 0, kFCU = 1, kED = 2, kECRL = 3, kECRB = 4 };

inline constexpr std::array<std::string_view, kChannels> kMuscleNames = {"FCR", "FCU", "ED",
                                                                         "ECRL", "ECRB"};

inline constexpr double kSensorMin = 0.0;
inline constexpr double kSensorMax = 1023.0;
inline constexpr double kDefaultBaseline = 128.0;

struct MuscleProfile {
  std::pair<int, int> peak_count{0, 0};
  // Absolute peak value in sensor units (baseline included).
  std::pair<double, double> peak_amplitude{kDefaultBaseline, kDefaultBaseline};
  // Full width at half maximum of each burst.
  std::pair<double, double> peak_width_ms{40.0, 120.0};
  double baseline = kDefaultBaseline;
  double noise_std = 3.0;

  bool active() const { return peak_count.second > 0; }
};

struct GestureProfile {
  GestureClass cls{Gesture::kGrip, ForceLevel::kStrong};
  std::array<MuscleProfile, kChannels> muscles{};
  // Bursts repeat with this period while the gesture is held.
  double cycle_s = 1.0;
  // Burst centre jitter as a fraction of the per-burst slot.
  double timing_jitter = 0.05;

  void validate() const;

  /// Multiplies every burst height above baseline by `gain`.
  GestureProfile scaled(double gain) const;

  const MuscleProfile& muscle(Muscle m) const { return muscles[static_cast<std::size_t>(m)]; }
};

std::map<int, GestureProfile> default_profiles();

/// Continuous trace of a held gesture; identical (profile, seed) give
/// bit-identical output.
Trace generate_trace(const GestureProfile& profile, std::uint64_t seed, double duration_s,
                     double sample_rate_hz = kDefaultSampleRateHz);

/// Baseline-plus-noise trace with no bursts (hand at rest).
Trace generate_rest(double baseline, double noise_std, std::uint64_t seed, double duration_s,
                    double sample_rate_hz = kDefaultSampleRateHz);

struct DatasetSpec {
  int samples_per_class = 100;
  std::uint64_t seed = 1;
  double window_s = 1.0;
  std::array<int, kNumClasses> classes = {0, 1, 2, 3, 4, 5};
  // Half-width of the multiplicative burst-height jitter per sample.
  double variability = 0.10;
  double sample_rate_hz = kDefaultSampleRateHz;
  double train_fraction = 0.8;
  // Share of windows that catch the gesture onset: rest first, then the
  // gesture from its start. Live streams present such windows first.
  double onset_fraction = 0.3;
  // Longest rest lead-in of an onset window, as a share of the window.
  double onset_rest_max = 0.6;

  void validate() const;
};

struct Dataset {
  std::vector<SignalWindow> train;
  std::vector<SignalWindow> test;
};

Dataset generate_dataset(const DatasetSpec& spec,
                         const std::map<int, GestureProfile>& profiles = default_profiles());

/// Single-channel sine plus Gaussian noise, modelling the bench buzzer.
Signal buzzer_bench(double freq_hz = 1000.0, double fs = kDefaultSampleRateHz,
                    double duration_s = 1.0, double noise_std = 0.0, double amplitude = 100.0,
                    std::uint64_t seed = 0);

}  // namespace mmg

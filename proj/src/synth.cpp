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

#include "mmg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mmg/error.hpp"
#include "mmg/random.hpp"

namespace mmg {

namespace {

constexpr double kFwhmToSigma = 1.0 / 2.3548200450309493;  // 2*sqrt(2 ln 2)

void check_range(const std::pair<double, double>& r, const char* what) {
  if (!(r.first <= r.second)) throw InvalidSpec(std::string(what) + " range is empty");
}

}  // namespace

void GestureProfile::validate() const {
  if (!(cycle_s > 0.0)) throw InvalidSpec("gesture cycle must be positive");
  if (!(timing_jitter >= 0.0 && timing_jitter < 0.5)) throw InvalidSpec("timing jitter must lie in [0, 0.5)");
  for (const auto& m : muscles) {
    if (m.peak_count.first < 0 || m.peak_count.first > m.peak_count.second) {
      throw InvalidSpec("peak count range is empty");
    }
    check_range(m.peak_amplitude, "peak amplitude");
    check_range(m.peak_width_ms, "peak width");
    if (m.peak_amplitude.first < kSensorMin || m.peak_amplitude.second > kSensorMax ||
        m.baseline < kSensorMin || m.baseline > kSensorMax) {
      throw InvalidSpec("profile amplitudes fall outside the sensor range");
    }
    if (m.peak_width_ms.first <= 0.0) throw InvalidSpec("peak width must be positive");
    if (m.noise_std < 0.0) throw InvalidSpec("noise std must be non-negative");
  }
}

GestureProfile GestureProfile::scaled(double gain) const {
  GestureProfile out = *this;
  for (auto& m : out.muscles) {
    m.peak_amplitude.first = m.baseline + (m.peak_amplitude.first - m.baseline) * gain;
    m.peak_amplitude.second = m.baseline + (m.peak_amplitude.second - m.baseline) * gain;
  }
  return out;
}

std::map<int, GestureProfile> default_profiles() {
  struct Row {
    GestureClass cls;
    std::pair<int, int> count;
    std::pair<double, double> amp;
    std::pair<double, double> width;
  };
  // Grip bursts show on FCU/ECRL/ECRB, wrist bursts on FCR/ECRL.
  const std::array<Row, kNumClasses> rows = {{
      {{Gesture::kGrip, ForceLevel::kStrong}, {3, 4}, {256.0, 270.0}, {40.0, 80.0}},
      {{Gesture::kGrip, ForceLevel::kModerate}, {2, 2}, {248.0, 262.0}, {60.0, 100.0}},
      {{Gesture::kGrip, ForceLevel::kLight}, {1, 1}, {228.0, 242.0}, {80.0, 120.0}},
      {{Gesture::kWrist, ForceLevel::kStrong}, {1, 2}, {263.0, 277.0}, {40.0, 80.0}},
      {{Gesture::kWrist, ForceLevel::kModerate}, {2, 2}, {250.0, 260.0}, {60.0, 100.0}},
      {{Gesture::kWrist, ForceLevel::kLight}, {1, 1}, {244.0, 256.0}, {80.0, 120.0}},
  }};
  std::map<int, GestureProfile> out;
  for (const auto& row : rows) {
    GestureProfile p;
    p.cls = row.cls;
    const auto dominant = row.cls.gesture == Gesture::kGrip
                              ? std::vector<Muscle>{Muscle::kFCU, Muscle::kECRL, Muscle::kECRB}
                              : std::vector<Muscle>{Muscle::kFCR, Muscle::kECRL};
    for (Muscle m : dominant) {
      auto& mp = p.muscles[static_cast<std::size_t>(m)];
      mp.peak_count = row.count;
      mp.peak_amplitude = row.amp;
      mp.peak_width_ms = row.width;
    }
    out.emplace(row.cls.index(), p);
  }
  return out;
}

Trace generate_trace(const GestureProfile& profile, std::uint64_t seed, double duration_s,
                     double sample_rate_hz) {
  profile.validate();
  if (!(duration_s > 0.0) || !(sample_rate_hz > 0.0)) {
    throw InvalidSpec("trace duration and sample rate must be positive");
  }
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  Trace trace;
  trace.sample_rate_hz = sample_rate_hz;
  trace.label = profile.cls.index();
  for (std::size_t c = 0; c < kChannels; ++c) {
    trace.samples[c].assign(n, profile.muscles[c].baseline);
  }

  // Bursts: all active muscles fire together; counts follow the first one.
  const MuscleProfile* lead = nullptr;
  for (const auto& m : profile.muscles) {
    if (m.active()) {
      lead = &m;
      break;
    }
  }
  const double cycle_samples = profile.cycle_s * sample_rate_hz;
  const auto cycles = static_cast<std::size_t>(std::ceil(duration_s / profile.cycle_s));
  if (lead != nullptr) {
    for (std::size_t cyc = 0; cyc < cycles; ++cyc) {
      const int count = rng.uniform_int(lead->peak_count.first, lead->peak_count.second);
      if (count == 0) continue;
      // Each cycle contracts then relaxes: bursts sit in equal slots across
      // the first half, so a fresh gesture shows its pattern early.
      const double slot = 0.5 * cycle_samples / count;
      for (int b = 0; b < count; ++b) {
        const double jitter = rng.uniform(-profile.timing_jitter, profile.timing_jitter) * slot;
        const double centre_f = static_cast<double>(cyc) * cycle_samples + 0.02 * cycle_samples +
                                (b + 0.5) * slot + jitter;
        const auto centre = static_cast<std::ptrdiff_t>(std::llround(centre_f));
        for (std::size_t c = 0; c < kChannels; ++c) {
          const auto& m = profile.muscles[c];
          // Draws happen for every muscle to keep the stream layout fixed.
          const double width_ms = rng.uniform(m.peak_width_ms.first, m.peak_width_ms.second);
          const double amp = rng.uniform(m.peak_amplitude.first, m.peak_amplitude.second);
          if (!m.active()) continue;
          if (b >= m.peak_count.second) continue;
          const double sigma = width_ms * 1e-3 * sample_rate_hz * kFwhmToSigma;
          const double height = amp - m.baseline;
          const auto reach = static_cast<std::ptrdiff_t>(std::ceil(6.0 * sigma));
          const auto lo = std::max<std::ptrdiff_t>(0, centre - reach);
          const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, centre + reach);
          auto& ch = trace.samples[c];
          for (std::ptrdiff_t i = lo; i <= hi; ++i) {
            const double z = static_cast<double>(i - centre) / sigma;
            ch[static_cast<std::size_t>(i)] += height * std::exp(-0.5 * z * z);
          }
        }
      }
    }
  }

  for (std::size_t c = 0; c < kChannels; ++c) {
    const double sd = profile.muscles[c].noise_std;
    for (double& v : trace.samples[c]) {
      if (sd > 0.0) v += rng.normal(0.0, sd);
      v = std::clamp(v, kSensorMin, kSensorMax);
    }
  }
  return trace;
}

Trace generate_rest(double baseline, double noise_std, std::uint64_t seed, double duration_s,
                    double sample_rate_hz) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  Trace trace;
  trace.sample_rate_hz = sample_rate_hz;
  for (auto& ch : trace.samples) {
    ch.resize(n);
    for (double& v : ch) v = std::clamp(baseline + rng.normal(0.0, noise_std), kSensorMin, kSensorMax);
  }
  return trace;
}

void DatasetSpec::validate() const {
  if (samples_per_class < 1) throw InvalidSpec("samples_per_class must be >= 1");
  if (!(window_s > 0.0)) throw InvalidSpec("window_s must be positive");
  if (!(variability >= 0.0 && variability < 1.0)) throw InvalidSpec("variability must lie in [0, 1)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidSpec("train_fraction must lie in (0, 1)");
  if (!(onset_fraction >= 0.0 && onset_fraction <= 1.0)) throw InvalidSpec("onset_fraction must lie in [0, 1]");
  if (!(onset_rest_max >= 0.0 && onset_rest_max < 1.0)) throw InvalidSpec("onset_rest_max must lie in [0, 1)");
  auto sorted = classes;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < kNumClasses; ++i) {
    if (sorted[static_cast<std::size_t>(i)] != i) throw InvalidSpec("dataset must list the six classes once each");
  }
}

Dataset generate_dataset(const DatasetSpec& spec, const std::map<int, GestureProfile>& profiles) {
  spec.validate();
  const auto window_len = static_cast<std::size_t>(std::llround(spec.window_s * spec.sample_rate_hz));
  const int n_train = std::clamp(
      static_cast<int>(std::lround(spec.samples_per_class * spec.train_fraction)), 0, spec.samples_per_class);

  Dataset ds;
  std::int64_t next_t0 = 0;
  const auto window_us = static_cast<std::int64_t>(std::llround(spec.window_s * 1e6));
  // Class-interleaved order keeps the CSV readable as a balanced stream.
  for (int i = 0; i < spec.samples_per_class; ++i) {
    for (int cls : spec.classes) {
      const auto it = profiles.find(cls);
      if (it == profiles.end()) throw InvalidSpec("no profile for class " + std::to_string(cls));
      const std::uint64_t sample_seed =
          derive_seed(spec.seed, static_cast<std::uint64_t>(cls) * 1'000'003ull + static_cast<std::uint64_t>(i));
      Rng rng(sample_seed);
      const double gain = 1.0 + rng.uniform(-spec.variability, spec.variability);
      const GestureProfile& base = it->second;
      SignalWindow w;
      Rng onset_rng(derive_seed(sample_seed, 0x6f6e));
      if (onset_rng.uniform(0.0, 1.0) < spec.onset_fraction) {
        const auto lead = static_cast<std::size_t>(
            std::llround(onset_rng.uniform(0.0, spec.onset_rest_max) * static_cast<double>(window_len)));
        const Trace rest = generate_rest(kDefaultBaseline, base.muscles[0].noise_std, onset_rng.next(),
                                         static_cast<double>(lead + 1) / spec.sample_rate_hz, spec.sample_rate_hz);
        const Trace held = generate_trace(base.scaled(gain), rng.next(), spec.window_s, spec.sample_rate_hz);
        w = slice(held, 0, window_len);
        const SignalWindow pre = slice(rest, 0, lead);
        for (std::size_t ch = 0; ch < kChannels; ++ch) {
          auto& x = w.samples[ch];
          x.insert(x.begin(), pre.samples[ch].begin(), pre.samples[ch].end());
          x.resize(window_len);
        }
      } else {
        // The window starts at a random phase of a held gesture.
        const double phase = rng.uniform(0.0, base.cycle_s);
        const Trace held = generate_trace(base.scaled(gain), rng.next(), phase + spec.window_s,
                                          spec.sample_rate_hz);
        const auto start = std::min(held.length() - window_len,
                                    static_cast<std::size_t>(std::llround(phase * spec.sample_rate_hz)));
        w = slice(held, start, window_len);
      }
      w.label = cls;
      w.t0_us = next_t0;
      next_t0 += window_us + window_us / 10;
      (i < n_train ? ds.train : ds.test).push_back(std::move(w));
    }
  }
  return ds;
}

Signal buzzer_bench(double freq_hz, double fs, double duration_s, double noise_std, double amplitude,
                    std::uint64_t seed) {
  if (!(fs > 0.0)) throw InvalidSpec("sample rate must be positive");
  if (!(freq_hz >= 0.0) || !(freq_hz < fs / 2.0)) {
    throw InvalidSpec("buzzer frequency " + std::to_string(freq_hz) + " Hz is not below Nyquist");
  }
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  Signal x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / fs);
    if (noise_std > 0.0) x[i] += rng.normal(0.0, noise_std);
  }
  return x;
}

}  // namespace mmg

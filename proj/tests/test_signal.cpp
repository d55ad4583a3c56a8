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
#include <cmath>
#include <numbers>
#include <sstream>

#include "mmg/error.hpp"
#include "mmg/random.hpp"
#include "mmg/signal.hpp"
#include "mmg/synth.hpp"

using namespace mmg;

namespace {

// Independent least-squares oracle: fit a polynomial of `order` to the
// window around `centre` through the normal equations (solved by Gaussian
// elimination) and evaluate it at the centre.
double lsq_fit_at_centre(const std::vector<double>& x, std::size_t centre, int k, int order) {
  const int m = order + 1;
  std::vector<double> ata(static_cast<std::size_t>(m * m), 0.0), atb(static_cast<std::size_t>(m), 0.0);
  for (int j = -k; j <= k; ++j) {
    const double u = static_cast<double>(j) / k;
    std::vector<double> row(static_cast<std::size_t>(m));
    double p = 1.0;
    for (int i = 0; i < m; ++i, p *= u) row[static_cast<std::size_t>(i)] = p;
    const double y = x[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(centre) + j)];
    for (int a = 0; a < m; ++a) {
      atb[static_cast<std::size_t>(a)] += row[static_cast<std::size_t>(a)] * y;
      for (int b = 0; b < m; ++b) ata[static_cast<std::size_t>(a * m + b)] += row[static_cast<std::size_t>(a)] * row[static_cast<std::size_t>(b)];
    }
  }
  for (int col = 0; col < m; ++col) {
    int piv = col;
    for (int r = col + 1; r < m; ++r) {
      if (std::fabs(ata[static_cast<std::size_t>(r * m + col)]) > std::fabs(ata[static_cast<std::size_t>(piv * m + col)])) piv = r;
    }
    for (int c = 0; c < m; ++c) std::swap(ata[static_cast<std::size_t>(col * m + c)], ata[static_cast<std::size_t>(piv * m + c)]);
    std::swap(atb[static_cast<std::size_t>(col)], atb[static_cast<std::size_t>(piv)]);
    for (int r = col + 1; r < m; ++r) {
      const double f = ata[static_cast<std::size_t>(r * m + col)] / ata[static_cast<std::size_t>(col * m + col)];
      for (int c = col; c < m; ++c) ata[static_cast<std::size_t>(r * m + c)] -= f * ata[static_cast<std::size_t>(col * m + c)];
      atb[static_cast<std::size_t>(r)] -= f * atb[static_cast<std::size_t>(col)];
    }
  }
  std::vector<double> beta(static_cast<std::size_t>(m));
  for (int r = m - 1; r >= 0; --r) {
    double s = atb[static_cast<std::size_t>(r)];
    for (int c = r + 1; c < m; ++c) s -= ata[static_cast<std::size_t>(r * m + c)] * beta[static_cast<std::size_t>(c)];
    beta[static_cast<std::size_t>(r)] = s / ata[static_cast<std::size_t>(r * m + r)];
  }
  return beta[0];  // polynomial evaluated at u = 0
}

std::vector<double> random_signal(Rng& rng, std::size_t n, double scale) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform(-scale, scale);
  return x;
}

double tone_amplitude(const Signal& x, double freq, double fs, std::size_t skip) {
  // Projection onto sin/cos over an interior stretch.
  double s = 0.0, c = 0.0;
  std::size_t n = 0;
  for (std::size_t i = skip; i + skip < x.size(); ++i, ++n) {
    const double ph = 2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs;
    s += x[i] * std::sin(ph);
    c += x[i] * std::cos(ph);
  }
  return 2.0 * std::hypot(s, c) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("savitzky_golay reproduces constants and low-order polynomials") {
  const std::vector<double> flat(200, 5.0);
  const auto y = savitzky_golay(flat);
  for (double v : y) CHECK(v == doctest::Approx(5.0).epsilon(1e-12));

  std::vector<double> sq(300);
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = std::pow(static_cast<double>(i) * 0.01, 2);
  const auto ys = savitzky_golay(sq, FilterSpec{51, 3});
  for (std::size_t i = 25; i + 25 < sq.size(); ++i) CHECK(std::fabs(ys[i] - sq[i]) < 1e-9);
}

TEST_CASE("savitzky_golay matches the brute-force least-squares oracle") {
  Rng rng(7);
  const FilterSpec spec{51, 3};
  const int k = spec.sg_window / 2;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_signal(rng, 160, 100.0);
    const auto y = savitzky_golay(x, spec);
    for (std::size_t i = static_cast<std::size_t>(k); i + static_cast<std::size_t>(k) < x.size(); ++i) {
      worst = std::max(worst, std::fabs(y[i] - lsq_fit_at_centre(x, i, k, spec.sg_order)));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("savitzky_golay is linear and keeps length") {
  Rng rng(3);
  const auto a = random_signal(rng, 400, 50.0);
  const auto b = random_signal(rng, 400, 50.0);
  std::vector<double> mix(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 2.5 * a[i] - 0.75 * b[i];
  const auto fa = savitzky_golay(a), fb = savitzky_golay(b), fm = savitzky_golay(mix);
  REQUIRE(fm.size() == mix.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(fm[i] - (2.5 * fa[i] - 0.75 * fb[i])) < 1e-9);
}

TEST_CASE("savitzky_golay rejects bad windows") {
  const std::vector<double> x(30, 1.0);
  CHECK_THROWS_AS(savitzky_golay(x, FilterSpec{51, 3}), RejectedInput);
  CHECK_THROWS_AS(savitzky_golay(x, FilterSpec{10, 3}), InvalidSpec);
  CHECK_THROWS_AS(savitzky_golay(x, FilterSpec{5, 5}), InvalidSpec);
}

TEST_CASE("bandpass keeps the 1 kHz bench tone and removes DC") {
  const double fs = 2600.0;
  const FilterSpec spec;  // [20, 1200] Hz
  const auto tone = buzzer_bench(1000.0, fs, 1.0, 0.0, 1.0);
  const auto out = bandpass(tone, spec, fs);
  const double gain_db = 20.0 * std::log10(tone_amplitude(out, 1000.0, fs, 200) / 1.0);
  CHECK(std::fabs(gain_db) <= 1.0);

  const std::vector<double> dc(2600, 40.0);
  const auto dc_out = bandpass(dc, spec, fs);
  double mean = 0.0;
  for (double v : dc_out) mean += v;
  mean /= static_cast<double>(dc_out.size());
  CHECK(std::fabs(mean) < 0.01 * 40.0);
}

TEST_CASE("bandpass attenuates 10 Hz by at least 40 dB") {
  const double fs = 2600.0;
  const auto low = buzzer_bench(10.0, fs, 4.0, 0.0, 1.0);
  const auto high = buzzer_bench(1000.0, fs, 4.0, 0.0, 1.0);
  std::vector<double> x(low.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = low[i] + high[i];
  const auto y = bandpass(x, FilterSpec{}, fs);
  const auto sin_spec = fft_spectrum(x, fs);
  const auto sout_spec = fft_spectrum(y, fs);
  const auto bin = static_cast<std::size_t>(std::lround(10.0 / sin_spec.bin_hz));
  // Peak magnitude in a small neighbourhood of 10 Hz.
  auto peak_near = [&](const Spectrum& s) {
    double m = 0.0;
    for (std::size_t b = bin - 3; b <= bin + 3; ++b) m = std::max(m, s.magnitudes[b]);
    return m;
  };
  const double drop_db = 20.0 * std::log10(peak_near(sin_spec) / peak_near(sout_spec));
  CHECK(drop_db >= 40.0);
}

TEST_CASE("bandpass passband ripple stays within 1 dB") {
  const double fs = 2600.0;
  for (double f : {80.0, 200.0, 500.0, 800.0, 1000.0}) {
    const auto x = buzzer_bench(f, fs, 2.0, 0.0, 1.0);
    const auto y = bandpass(x, FilterSpec{}, fs);
    CHECK(std::fabs(20.0 * std::log10(tone_amplitude(y, f, fs, 600))) <= 1.0);
  }
}

TEST_CASE("bandpass rejects edges at or above Nyquist") {
  const std::vector<double> x(100, 0.0);
  CHECK_THROWS_AS(bandpass(x, FilterSpec{51, 3, 20.0, 1300.0}, 2600.0), InvalidSpec);
  CHECK_THROWS_AS(bandpass(x, FilterSpec{51, 3, 500.0, 400.0}, 2600.0), InvalidSpec);
}

TEST_CASE("fft_spectrum locates the bench tone and is flat for an impulse") {
  const auto tone = buzzer_bench(1000.0, 2600.0, 1.0, 0.0);
  const auto s = fft_spectrum(tone, 2600.0);
  CHECK(s.fft_length == 4096);
  CHECK(s.magnitudes.size() == 2049);
  CHECK(s.bin_hz == doctest::Approx(2600.0 / 4096.0));
  CHECK(std::fabs(static_cast<double>(s.argmax()) * s.bin_hz - 1000.0) <= s.bin_hz);

  std::vector<double> impulse(1024, 0.0);
  impulse[0] = 1.0;
  const auto si = fft_spectrum(impulse, 2600.0);
  for (double m : si.magnitudes) CHECK(std::fabs(m - 1.0) < 1e-9);

  const auto sz = fft_spectrum(std::vector<double>(300, 0.0), 2600.0);
  for (double m : sz.magnitudes) CHECK(m == 0.0);

  CHECK_THROWS_AS(fft_spectrum(std::vector<double>{}, 2600.0), RejectedInput);
}

TEST_CASE("fft_spectrum satisfies Parseval") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_signal(rng, 100 + static_cast<std::size_t>(rng.uniform_int(0, 900)), 10.0);
    const auto s = fft_spectrum(x, 1000.0);
    double time_energy = 0.0;
    for (double v : x) time_energy += v * v;
    double freq_energy = 0.0;
    for (std::size_t k = 0; k < s.magnitudes.size(); ++k) {
      const bool edge = k == 0 || k == s.magnitudes.size() - 1;
      freq_energy += (edge ? 1.0 : 2.0) * s.magnitudes[k] * s.magnitudes[k];
    }
    freq_energy /= static_cast<double>(s.fft_length);
    CHECK(std::fabs(freq_energy - time_energy) / time_energy < 1e-6);
  }
}

TEST_CASE("detect_peaks basics") {
  std::vector<double> ramp(100);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
  CHECK(detect_peaks(ramp, 1.0, 1).empty());

  std::vector<double> twin(50, 0.0);
  twin[20] = 10.0;
  twin[24] = 10.0;
  const auto one = detect_peaks(twin, 1.0, 10);
  REQUIRE(one.size() == 1);
  CHECK(one[0].index == 20);

  const auto both = detect_peaks(twin, 1.0, 3);
  CHECK(both.size() == 2);
}

TEST_CASE("detect_peaks output is ordered and separated") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_signal(rng, 300, 10.0);
    const auto sep = static_cast<std::size_t>(rng.uniform_int(1, 30));
    const auto peaks = detect_peaks(x, 0.5, sep);
    for (std::size_t i = 1; i < peaks.size(); ++i) {
      CHECK(peaks[i].index > peaks[i - 1].index);
      CHECK(peaks[i].index - peaks[i - 1].index >= sep);
    }
  }
}

TEST_CASE("detect_peaks counts configured bursts on synthetic strong grips") {
  const auto profiles = default_profiles();
  const auto& strong = profiles.at(GestureClass{Gesture::kGrip, ForceLevel::kStrong}.index());
  int hits = 0;
  const int trials = 1000;
  for (int s = 0; s < trials; ++s) {
    // Count oracle: regenerate without noise to read the configured burst count.
    auto clean = strong;
    for (auto& m : clean.muscles) m.noise_std = 0.0;
    const auto truth = generate_trace(clean, static_cast<std::uint64_t>(s), 1.0);
    const auto fcu_clean = truth.samples[static_cast<std::size_t>(Muscle::kFCU)];
    const auto configured = detect_peaks(fcu_clean, 30.0, 130).size();

    const auto trace = generate_trace(strong, static_cast<std::uint64_t>(s), 1.0);
    const auto fcu = savitzky_golay(trace.samples[static_cast<std::size_t>(Muscle::kFCU)]);
    const auto found = detect_peaks(fcu, 30.0, 130).size();
    if (found == configured && found >= 3 && found <= 4) ++hits;
  }
  CHECK(hits >= 990);
}

TEST_CASE("normalize uses stored stats") {
  SignalWindow w;
  for (auto& ch : w.samples) ch.assign(10, 192.0);
  NormStats st;
  st.mean.fill(128.0);
  st.stddev.fill(32.0);
  const auto n = normalize(w, st);
  CHECK(n.samples[2][4] == doctest::Approx(2.0));

  for (auto& ch : w.samples) ch.assign(10, 128.0);
  const auto flat = normalize(w, st);
  for (const auto& ch : flat.samples) {
    for (double v : ch) CHECK(v == 0.0);
  }
}

TEST_CASE("normalize self-stats and inverse") {
  Rng rng(9);
  std::vector<SignalWindow> set(4);
  for (auto& w : set) {
    for (std::size_t c = 0; c < kChannels; ++c) w.samples[c] = random_signal(rng, 64, 30.0 + 10.0 * static_cast<double>(c));
  }
  // A dead channel.
  for (auto& w : set) w.samples[4].assign(64, 7.0);
  const auto st = NormStats::fit(set);
  CHECK(st.degenerate[4]);
  CHECK(st.stddev[4] == 1.0);
  for (std::size_t c = 0; c < 4; ++c) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const auto& w : set) {
      const auto z = normalize(w, st);
      for (double v : z.samples[c]) {
        sum += v;
        sq += v * v;
        n += 1.0;
      }
    }
    CHECK(std::fabs(sum / n) < 1e-9);
    CHECK(std::fabs(std::sqrt(sq / n) - 1.0) < 1e-9);
  }
  const auto back = denormalize(normalize(set[0], st), st);
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::fabs(back.samples[c][i] - set[0].samples[c][i]) < 1e-9);
  }
}

TEST_CASE("segment_windows counts") {
  auto make = [](double seconds) {
    Trace t;
    for (auto& ch : t.samples) ch.assign(static_cast<std::size_t>(seconds * 2600.0), 1.0);
    t.t0_us = 1000;
    return t;
  };
  const auto five = segment_windows(make(3.0));
  CHECK(five.windows.size() == 5);
  CHECK(five.windows[1].t0_us == 1000 + 500000);
  CHECK(five.windows[0].length() == 2600);

  const auto none = segment_windows(make(0.5));
  CHECK(none.windows.empty());
  CHECK(none.warning.has_value());

  const auto single = segment_windows(make(1.0));
  REQUIRE(single.windows.size() == 1);
  CHECK(single.windows[0].length() == 2600);
}

TEST_CASE("trace CSV round trip") {
  const auto profiles = default_profiles();
  std::vector<SignalWindow> ws;
  for (int i = 0; i < 2; ++i) {
    auto w = generate_trace(profiles.at(i), 40 + static_cast<std::uint64_t>(i), 0.1);
    w.t0_us = i * 200000;
    ws.push_back(w);
  }
  std::stringstream ss;
  write_trace_csv(ss, ws, true);
  const std::string text = ss.str();
  CHECK(text.rfind("t_us,ch1,ch2,ch3,ch4,ch5,label\n", 0) == 0);
  const auto rows = read_trace_csv(ss);
  const auto back = rows_to_windows(rows, 260, 2600.0);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].label == ws[i].label);
    CHECK(back[i].t0_us == ws[i].t0_us);
    CHECK(back[i].samples == ws[i].samples);
  }

  std::stringstream bad("t_us,ch1,ch2,ch3,ch4,ch5\n10,1,2,3,4,5\n5,1,2,3,4,5\n");
  CHECK_THROWS_AS(read_trace_csv(bad), RejectedInput);
  std::stringstream nonfinite("t_us,ch1,ch2,ch3,ch4,ch5\n10,1,2,nan,4,5\n");
  CHECK_THROWS_AS(read_trace_csv(nonfinite), RejectedInput);
}

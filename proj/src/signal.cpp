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

#include "mmg/signal.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mmg/error.hpp"

namespace mmg {

void SignalWindow::validate() const {
  const std::size_t n = samples[0].size();
  if (n == 0) throw RejectedInput("signal window is empty");
  for (const auto& ch : samples) {
    if (ch.size() != n) throw RejectedInput("signal window channels differ in length");
    for (double v : ch) {
      if (!std::isfinite(v)) throw RejectedInput("signal window holds a non-finite sample");
    }
  }
  if (!(sample_rate_hz > 0.0)) throw RejectedInput("sample rate must be positive");
}

void FilterSpec::validate_sg() const {
  if (sg_window < 1 || sg_window % 2 == 0) {
    throw InvalidSpec("Savitzky-Golay window must be a positive odd integer, got " +
                      std::to_string(sg_window));
  }
  if (sg_order < 0 || sg_order >= sg_window) {
    throw InvalidSpec("Savitzky-Golay order must satisfy 0 <= order < window");
  }
}

void FilterSpec::validate_band(double sample_rate_hz) const {
  const double nyquist = sample_rate_hz / 2.0;
  if (!(band_low_hz >= 0.0) || !(band_low_hz < band_high_hz)) {
    throw InvalidSpec("band edges must satisfy 0 <= low < high");
  }
  if (!(band_high_hz < nyquist)) {
    throw InvalidSpec("band edge " + std::to_string(band_high_hz) +
                      " Hz is not below Nyquist (" + std::to_string(nyquist) + " Hz)");
  }
}

std::size_t Spectrum::argmax() const {
  return static_cast<std::size_t>(
      std::distance(magnitudes.begin(), std::max_element(magnitudes.begin(), magnitudes.end())));
}

// ---------------------------------------------------------------------------
// Savitzky-Golay

std::vector<double> savitzky_golay_coefficients(int window, int order) {
  FilterSpec{window, order}.validate_sg();
  const int k = window / 2;
  const double scale = k > 0 ? static_cast<double>(k) : 1.0;
  Eigen::MatrixXd vander(window, order + 1);
  for (int j = -k; j <= k; ++j) {
    const double u = j / scale;
    double p = 1.0;
    for (int i = 0; i <= order; ++i) {
      vander(j + k, i) = p;
      p *= u;
    }
  }
  // Row 0 of the pseudo-inverse evaluates the fitted polynomial at u = 0.
  const Eigen::MatrixXd pinv = vander.colPivHouseholderQr().solve(
      Eigen::MatrixXd::Identity(window, window));
  std::vector<double> c(static_cast<std::size_t>(window));
  for (int j = 0; j < window; ++j) c[static_cast<std::size_t>(j)] = pinv(0, j);
  return c;
}

namespace {

// Reflection about the edge sample, without repeating it.
double mirrored(std::span<const double> x, std::ptrdiff_t i) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (n == 1) return x[0];
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return x[static_cast<std::size_t>(i)];
}

}  // namespace

Signal savitzky_golay(std::span<const double> x, const FilterSpec& spec) {
  spec.validate_sg();
  if (x.size() < static_cast<std::size_t>(spec.sg_window)) {
    throw RejectedInput("Savitzky-Golay window (" + std::to_string(spec.sg_window) +
                        ") is longer than the signal (" + std::to_string(x.size()) + ")");
  }
  const auto c = savitzky_golay_coefficients(spec.sg_window, spec.sg_order);
  const std::ptrdiff_t k = spec.sg_window / 2;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  Signal y(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    if (i >= k && i + k < n) {
      const double* base = x.data() + (i - k);
      for (std::ptrdiff_t j = 0; j <= 2 * k; ++j) acc += c[static_cast<std::size_t>(j)] * base[j];
    } else {
      for (std::ptrdiff_t j = -k; j <= k; ++j) {
        acc += c[static_cast<std::size_t>(j + k)] * mirrored(x, i + j);
      }
    }
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Band-pass

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

enum class Pass { kLow, kHigh };

// RBJ cookbook section; the bilinear transform pre-warps at the corner.
Biquad design_section(Pass pass, double corner_hz, double q, double fs) {
  const double w0 = 2.0 * std::numbers::pi * corner_hz / fs;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Biquad s{};
  if (pass == Pass::kLow) {
    s.b0 = (1.0 - cw) / 2.0 / a0;
    s.b1 = (1.0 - cw) / a0;
    s.b2 = s.b0;
  } else {
    s.b0 = (1.0 + cw) / 2.0 / a0;
    s.b1 = -(1.0 + cw) / a0;
    s.b2 = s.b0;
  }
  s.a1 = -2.0 * cw / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

// Pole-pair Q values of a 4th-order Butterworth prototype.
constexpr std::array<double, 2> kButterworth4Q = {0.54119610014619698, 1.3065629648763766};

std::vector<Biquad> design_bandpass(const FilterSpec& spec, double fs) {
  std::vector<Biquad> sections;
  if (spec.band_low_hz > 0.0) {
    for (double q : kButterworth4Q) sections.push_back(design_section(Pass::kHigh, spec.band_low_hz, q, fs));
  }
  for (double q : kButterworth4Q) sections.push_back(design_section(Pass::kLow, spec.band_high_hz, q, fs));
  return sections;
}

// Transposed direct form II, started in the steady state for a constant
// input equal to the first sample.
void run_cascade(const std::vector<Biquad>& sections, std::vector<double>& x) {
  if (x.empty()) return;
  double level = x.front();
  for (const auto& s : sections) {
    const double y_ss = s.dc_gain() * level;
    double z2 = s.b2 * level - s.a2 * y_ss;
    double z1 = y_ss - s.b0 * level;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    level = y_ss;
  }
}

}  // namespace

Signal bandpass(std::span<const double> x, const FilterSpec& spec, double sample_rate_hz) {
  spec.validate_band(sample_rate_hz);
  if (x.size() < 2) throw RejectedInput("band-pass needs at least two samples");
  const auto sections = design_bandpass(spec, sample_rate_hz);

  const double slowest = spec.band_low_hz > 0.0 ? spec.band_low_hz : spec.band_high_hz;
  const std::size_t pad = std::min<std::size_t>(
      x.size() - 1, static_cast<std::size_t>(std::ceil(3.0 * sample_rate_hz / slowest)));

  // Odd extension at both ends keeps the end slopes continuous.
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[x.size() - 1 - i]);

  run_cascade(sections, ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(sections, ext);
  std::reverse(ext.begin(), ext.end());

  return Signal(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                ext.begin() + static_cast<std::ptrdiff_t>(pad + x.size()));
}

// ---------------------------------------------------------------------------
// Spectrum

namespace {
// FFTW planning is not re-entrant.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

Spectrum fft_spectrum(std::span<const double> x, double sample_rate_hz) {
  if (x.size() < 2) throw RejectedInput("spectrum needs at least two samples");
  if (!(sample_rate_hz > 0.0)) throw RejectedInput("sample rate must be positive");
  std::size_t n = 1;
  while (n < x.size()) n <<= 1;

  std::vector<double> in(n, 0.0);
  std::copy(x.begin(), x.end(), in.begin());
  const std::size_t bins = n / 2 + 1;
  auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out, FFTW_ESTIMATE);
  }
  fftw_execute(plan);

  Spectrum s;
  s.fft_length = n;
  s.bin_hz = sample_rate_hz / static_cast<double>(n);
  s.magnitudes.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) s.magnitudes[k] = std::hypot(out[k][0], out[k][1]);

  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(out);
  return s;
}

// ---------------------------------------------------------------------------
// Peaks

std::vector<Peak> detect_peaks(std::span<const double> x, double min_prominence,
                               std::size_t min_separation) {
  if (!(min_prominence > 0.0)) throw InvalidSpec("min_prominence must be positive");
  if (min_separation < 1) throw InvalidSpec("min_separation must be >= 1");
  const std::size_t n = x.size();
  std::vector<std::size_t> candidates;
  if (n >= 3) {
    std::size_t i = 1;
    while (i + 1 < n) {
      if (x[i] > x[i - 1]) {
        // Walk across a plateau; its left edge stands for the peak.
        std::size_t j = i;
        while (j + 1 < n && x[j + 1] == x[i]) ++j;
        if (j + 1 < n && x[j + 1] < x[i]) {
          candidates.push_back(i);
        }
        i = j + 1;
      } else {
        ++i;
      }
    }
  }

  std::vector<Peak> prominent;
  for (std::size_t p : candidates) {
    const double h = x[p];
    double left_min = h;
    for (std::size_t j = p; j-- > 0;) {
      if (x[j] > h) break;
      left_min = std::min(left_min, x[j]);
    }
    double right_min = h;
    for (std::size_t j = p + 1; j < n; ++j) {
      if (x[j] > h) break;
      right_min = std::min(right_min, x[j]);
    }
    if (h - std::max(left_min, right_min) >= min_prominence) prominent.push_back({p, h});
  }

  // Tallest first; equal heights resolved toward the earlier index.
  std::vector<Peak> order = prominent;
  std::stable_sort(order.begin(), order.end(),
                   [](const Peak& a, const Peak& b) { return a.amplitude > b.amplitude; });
  std::vector<Peak> kept;
  for (const auto& cand : order) {
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](const Peak& k) {
      const std::size_t d = cand.index > k.index ? cand.index - k.index : k.index - cand.index;
      return d < min_separation;
    });
    if (clear) kept.push_back(cand);
  }
  std::sort(kept.begin(), kept.end(), [](const Peak& a, const Peak& b) { return a.index < b.index; });
  return kept;
}

// ---------------------------------------------------------------------------
// Normalization

NormStats NormStats::fit(std::span<const SignalWindow> windows) {
  if (windows.empty()) throw RejectedInput("cannot fit normalization stats on no windows");
  NormStats s;
  for (std::size_t c = 0; c < kChannels; ++c) {
    double count = 0.0;
    double sum = 0.0;
    for (const auto& w : windows) {
      for (double v : w.samples[c]) sum += v;
      count += static_cast<double>(w.samples[c].size());
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (const auto& w : windows) {
      for (double v : w.samples[c]) sq += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(sq / count);
    s.mean[c] = mean;
    s.degenerate[c] = !(sd > 0.0);
    s.stddev[c] = s.degenerate[c] ? 1.0 : sd;
  }
  return s;
}

SignalWindow normalize(const SignalWindow& w, const NormStats& stats) {
  SignalWindow out = w;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double sd = stats.stddev[c] > 0.0 ? stats.stddev[c] : 1.0;
    for (double& v : out.samples[c]) v = (v - stats.mean[c]) / sd;
  }
  return out;
}

SignalWindow denormalize(const SignalWindow& w, const NormStats& stats) {
  SignalWindow out = w;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double sd = stats.stddev[c] > 0.0 ? stats.stddev[c] : 1.0;
    for (double& v : out.samples[c]) v = v * sd + stats.mean[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation

SignalWindow slice(const Trace& trace, std::size_t begin, std::size_t length) {
  if (begin + length > trace.length()) throw RejectedInput("slice runs past the end of the trace");
  SignalWindow w;
  w.sample_rate_hz = trace.sample_rate_hz;
  w.label = trace.label;
  w.t0_us = trace.t0_us +
            std::llround(static_cast<double>(begin) * 1e6 / trace.sample_rate_hz);
  for (std::size_t c = 0; c < kChannels; ++c) {
    const auto first = trace.samples[c].begin() + static_cast<std::ptrdiff_t>(begin);
    w.samples[c].assign(first, first + static_cast<std::ptrdiff_t>(length));
  }
  return w;
}

Segmentation segment_windows(const Trace& stream, double window_s, double overlap) {
  if (!(window_s > 0.0)) throw InvalidSpec("window length must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidSpec("overlap must lie in [0, 1)");
  const auto length = static_cast<std::size_t>(std::llround(window_s * stream.sample_rate_hz));
  const auto hop = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(static_cast<double>(length) * (1.0 - overlap))));
  Segmentation seg;
  if (length == 0 || stream.length() < length) {
    seg.warning = "stream of " + std::to_string(stream.length()) +
                  " samples is shorter than one window (" + std::to_string(length) + ")";
    return seg;
  }
  for (std::size_t start = 0; start + length <= stream.length(); start += hop) {
    seg.windows.push_back(slice(stream, start, length));
  }
  return seg;
}

// ---------------------------------------------------------------------------
// CSV traces

namespace {

void append_number(std::string& line, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  line.append(buf, res.ptr);
}

template <typename T>
T parse_field(std::string_view field, std::size_t line_no) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw RejectedInput("trace line " + std::to_string(line_no) + ": cannot parse '" +
                        std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

void write_trace_csv(std::ostream& out, std::span<const SignalWindow> windows, bool with_label) {
  out << "t_us,ch1,ch2,ch3,ch4,ch5" << (with_label ? ",label" : "") << '\n';
  std::int64_t last_t = std::numeric_limits<std::int64_t>::min();
  std::string line;
  for (const auto& w : windows) {
    w.validate();
    for (std::size_t i = 0; i < w.length(); ++i) {
      const std::int64_t t =
          w.t0_us + std::llround(static_cast<double>(i) * 1e6 / w.sample_rate_hz);
      if (t <= last_t) throw RejectedInput("trace timestamps must increase monotonically");
      last_t = t;
      line = std::to_string(t);
      for (std::size_t c = 0; c < kChannels; ++c) {
        line.push_back(',');
        append_number(line, w.samples[c][i]);
      }
      if (with_label) {
        line.push_back(',');
        line += w.label ? std::to_string(*w.label) : std::string();
      }
      out << line << '\n';
    }
  }
}

std::vector<TraceRow> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw RejectedInput("trace file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool has_label = false;
  if (line == "t_us,ch1,ch2,ch3,ch4,ch5,label") {
    has_label = true;
  } else if (line != "t_us,ch1,ch2,ch3,ch4,ch5") {
    throw RejectedInput("unexpected trace header: " + line);
  }
  std::vector<TraceRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != (has_label ? 7u : 6u)) {
      throw RejectedInput("trace line " + std::to_string(line_no) + ": wrong column count");
    }
    TraceRow row{};
    row.t_us = parse_field<std::int64_t>(fields[0], line_no);
    for (std::size_t c = 0; c < kChannels; ++c) {
      row.ch[c] = parse_field<double>(fields[c + 1], line_no);
      if (!std::isfinite(row.ch[c])) {
        throw RejectedInput("trace line " + std::to_string(line_no) + ": non-finite value");
      }
    }
    if (has_label && !fields[6].empty()) row.label = parse_field<int>(fields[6], line_no);
    if (!rows.empty() && row.t_us <= rows.back().t_us) {
      throw RejectedInput("trace line " + std::to_string(line_no) + ": t_us not increasing");
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<SignalWindow> rows_to_windows(std::span<const TraceRow> rows, std::size_t window_length,
                                          double sample_rate_hz) {
  if (window_length == 0) throw InvalidSpec("window length must be positive");
  if (rows.size() % window_length != 0) {
    throw RejectedInput("trace holds " + std::to_string(rows.size()) +
                        " rows, not a multiple of the window length " +
                        std::to_string(window_length));
  }
  std::vector<SignalWindow> out;
  for (std::size_t start = 0; start < rows.size(); start += window_length) {
    SignalWindow w;
    w.sample_rate_hz = sample_rate_hz;
    w.t0_us = rows[start].t_us;
    w.label = rows[start].label;
    for (auto& ch : w.samples) ch.resize(window_length);
    for (std::size_t i = 0; i < window_length; ++i) {
      const auto& r = rows[start + i];
      if (r.label != w.label) throw RejectedInput("label changes inside a window");
      for (std::size_t c = 0; c < kChannels; ++c) w.samples[c][i] = r.ch[c];
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace mmg

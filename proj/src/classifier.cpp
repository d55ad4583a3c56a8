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

#include "mmg/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "mmg/error.hpp"
#include "mmg/json_io.hpp"
#include "mmg/random.hpp"

namespace mmg {

// ---------------------------------------------------------------------------
// Configuration

ModelConfig ModelConfig::compact() {
  ModelConfig c;
  c.conv_filters = 16;
  c.lstm_layers = 2;
  c.lstm_hidden = 32;
  c.decimation = 40;
  c.learning_rate = 3e-3;
  c.epochs = 60;
  return c;
}

void ModelConfig::validate() const {
  if (channels != static_cast<int>(kChannels)) throw InvalidSpec("model expects 5 input channels");
  if (classes != kNumClasses) throw InvalidSpec("model must predict exactly six classes");
  if (conv_filters < 1 || lstm_layers < 1 || lstm_hidden < 1) throw InvalidSpec("model dimensions must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw InvalidSpec("convolution kernel must be a positive odd size");
  if (window_samples < 1 || decimation < 1 || window_samples % decimation != 0) {
    throw InvalidSpec("window_samples must be a positive multiple of decimation");
  }
  if (sg_window > 1) FilterSpec{sg_window, sg_order}.validate_sg();
  for (double w : class_weights) {
    if (!(w > 0.0)) throw InvalidSpec("class weights must be positive");
  }
  if (!(learning_rate > 0.0) || batch_size < 1 || epochs < 1) throw InvalidSpec("invalid optimizer settings");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw InvalidSpec("validation_fraction must lie in [0, 1)");
  }
}

std::vector<TensorInfo> tensor_layout(const ModelConfig& cfg) {
  std::vector<TensorInfo> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    const std::size_t size =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    out.push_back({std::move(name), std::move(shape), offset, size});
    offset += size;
  };
  const auto F = static_cast<std::size_t>(cfg.conv_filters);
  const auto C = static_cast<std::size_t>(cfg.channels);
  const auto K = static_cast<std::size_t>(cfg.kernel);
  const auto H = static_cast<std::size_t>(cfg.lstm_hidden);
  add("conv.weight", {F, C, K});
  add("conv.bias", {F});
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const std::size_t in = l == 0 ? F : H;
    const std::string p = "lstm." + std::to_string(l);
    add(p + ".w_input", {4 * H, in});
    add(p + ".w_hidden", {4 * H, H});
    add(p + ".bias", {4 * H});
  }
  add("dense.weight", {static_cast<std::size_t>(cfg.classes), H});
  add("dense.bias", {static_cast<std::size_t>(cfg.classes)});
  return out;
}

std::size_t ModelConfig::parameter_count() const {
  const auto layout = tensor_layout(*this);
  return layout.back().offset + layout.back().size;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

std::uint64_t ModelConfig::shape_hash() const {
  std::string canon = "seq=" + std::to_string(sequence_length()) + ";";
  for (const auto& t : tensor_layout(*this)) {
    canon += t.name + ":";
    for (std::size_t d : t.shape) canon += std::to_string(d) + "x";
    canon += ";";
  }
  return fnv1a(canon);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw InvalidSpec(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw InvalidSpec(std::string("unknown ") + what + " key '" + key + "'");
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"channels", c.channels},
      {"conv_filters", c.conv_filters},
      {"kernel", c.kernel},
      {"lstm_layers", c.lstm_layers},
      {"lstm_hidden", c.lstm_hidden},
      {"classes", c.classes},
      {"window_samples", c.window_samples},
      {"decimation", c.decimation},
      {"sg_window", c.sg_window},
      {"sg_order", c.sg_order},
      {"class_weights", c.class_weights},
      {"auto_class_weights", c.auto_class_weights},
      {"learning_rate", c.learning_rate},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"plateau_patience", c.plateau_patience},
      {"plateau_factor", c.plateau_factor},
      {"min_learning_rate", c.min_learning_rate},
      {"early_stop_patience", c.early_stop_patience},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"validation_fraction", c.validation_fraction},
      {"seed", c.seed},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> known = {
      "channels", "conv_filters", "kernel", "lstm_layers", "lstm_hidden", "classes",
      "window_samples", "decimation", "sg_window", "sg_order", "class_weights",
      "auto_class_weights", "learning_rate", "beta1", "beta2", "adam_eps", "plateau_patience",
      "plateau_factor", "min_learning_rate", "early_stop_patience", "epochs", "batch_size",
      "validation_fraction", "seed", "preset"};
  reject_unknown_keys(j, known, "model");
  if (auto it = j.find("preset"); it != j.end()) {
    const auto preset = it->get<std::string>();
    if (preset == "compact") {
      c = ModelConfig::compact();
    } else if (preset == "full") {
      c = ModelConfig{};
    } else {
      throw InvalidSpec("unknown model preset '" + preset + "'");
    }
  }
  read_opt(j, "channels", c.channels);
  read_opt(j, "conv_filters", c.conv_filters);
  read_opt(j, "kernel", c.kernel);
  read_opt(j, "lstm_layers", c.lstm_layers);
  read_opt(j, "lstm_hidden", c.lstm_hidden);
  read_opt(j, "classes", c.classes);
  read_opt(j, "window_samples", c.window_samples);
  read_opt(j, "decimation", c.decimation);
  read_opt(j, "sg_window", c.sg_window);
  read_opt(j, "sg_order", c.sg_order);
  read_opt(j, "class_weights", c.class_weights);
  read_opt(j, "auto_class_weights", c.auto_class_weights);
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "beta1", c.beta1);
  read_opt(j, "beta2", c.beta2);
  read_opt(j, "adam_eps", c.adam_eps);
  read_opt(j, "plateau_patience", c.plateau_patience);
  read_opt(j, "plateau_factor", c.plateau_factor);
  read_opt(j, "min_learning_rate", c.min_learning_rate);
  read_opt(j, "early_stop_patience", c.early_stop_patience);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "validation_fraction", c.validation_fraction);
  read_opt(j, "seed", c.seed);
}

void to_json(nlohmann::json& j, const DatasetSpec& s) {
  j = nlohmann::json{{"samples_per_class", s.samples_per_class},
                     {"seed", s.seed},
                     {"window_s", s.window_s},
                     {"classes", s.classes},
                     {"variability", s.variability},
                     {"sample_rate_hz", s.sample_rate_hz},
                     {"train_fraction", s.train_fraction},
                     {"onset_fraction", s.onset_fraction},
                     {"onset_rest_max", s.onset_rest_max}};
}

void from_json(const nlohmann::json& j, DatasetSpec& s) {
  reject_unknown_keys(j, {"samples_per_class", "seed", "window_s", "classes", "variability",
                          "sample_rate_hz", "train_fraction", "onset_fraction", "onset_rest_max"},
                      "dataset");
  read_opt(j, "samples_per_class", s.samples_per_class);
  read_opt(j, "seed", s.seed);
  read_opt(j, "window_s", s.window_s);
  read_opt(j, "classes", s.classes);
  read_opt(j, "variability", s.variability);
  read_opt(j, "sample_rate_hz", s.sample_rate_hz);
  read_opt(j, "train_fraction", s.train_fraction);
  read_opt(j, "onset_fraction", s.onset_fraction);
  read_opt(j, "onset_rest_max", s.onset_rest_max);
}

// ---------------------------------------------------------------------------
// Checkpoint construction

namespace {

std::array<std::string, kNumClasses> default_labels() {
  std::array<std::string, kNumClasses> out;
  for (std::size_t i = 0; i < kNumClasses; ++i) out[i] = std::string(kClassNames[i]);
  return out;
}

NormStats identity_stats() {
  NormStats s;
  s.mean.fill(0.0);
  s.stddev.fill(1.0);
  s.degenerate.fill(false);
  return s;
}

}  // namespace

ModelCheckpoint ModelCheckpoint::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelCheckpoint ck;
  ck.config = cfg;
  ck.params.assign(cfg.parameter_count(), 0.0);
  ck.stats = identity_stats();
  ck.labels = default_labels();
  return ck;
}

ModelCheckpoint ModelCheckpoint::initialised(const ModelConfig& cfg, std::uint64_t seed) {
  ModelCheckpoint ck = zeros(cfg);
  Rng rng(seed);
  const auto H = static_cast<std::size_t>(cfg.lstm_hidden);
  for (const auto& t : tensor_layout(cfg)) {
    double* p = ck.params.data() + t.offset;
    if (t.shape.size() == 1) {
      // Biases start at zero except the LSTM forget gate.
      if (t.name.starts_with("lstm.")) {
        for (std::size_t i = H; i < 2 * H; ++i) p[i] = 1.0;
      }
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < t.shape.size(); ++d) fan_in *= t.shape[d];
    std::size_t fan_out = t.shape[0];
    if (t.name.starts_with("lstm.")) fan_out /= 4;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < t.size; ++i) p[i] = rng.uniform(-bound, bound);
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O (little-endian; layout documented in docs/checkpoint_format.md)

namespace {

constexpr char kMagic[8] = {'M', 'M', 'G', 'C', 'K', 'P', 'T', '\0'};

class ByteWriter {
 public:
  void raw(const void* data, std::size_t n) { buf_.append(static_cast<const char*>(data), n); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw RejectedInput("checkpoint is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void ModelCheckpoint::save(std::ostream& out) const {
  if (params.size() != config.parameter_count()) throw RejectedInput("checkpoint parameters do not match config");
  nlohmann::json header;
  header["config"] = config;
  header["labels"] = labels;
  header["config_hash"] = hex64(config.shape_hash());
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : tensor_layout(config)) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  header["tensors"] = tensors;
  const std::string header_text = header.dump();

  ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(header_text.size()));
  w.raw(header_text.data(), header_text.size());
  for (double m : stats.mean) w.f64(m);
  for (double s : stats.stddev) w.f64(s);
  for (bool d : stats.degenerate) w.u8(d ? 1 : 0);
  w.u64(params.size());
  for (double p : params) w.f64(p);
  const std::uint64_t checksum = fnv1a(w.bytes());
  w.u64(checksum);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw RuntimeFailure("failed writing checkpoint");
}

void ModelCheckpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  save(out);
}

ModelCheckpoint ModelCheckpoint::load(std::istream& in) {
  const std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (data.size() < sizeof kMagic + 8 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0) {
    throw RejectedInput("not a checkpoint file (bad magic)");
  }
  {
    ByteReader tail(std::string_view(data).substr(data.size() - 8));
    if (tail.u64() != fnv1a(std::string_view(data).substr(0, data.size() - 8))) {
      throw RejectedInput("checkpoint checksum mismatch");
    }
  }
  ByteReader r(std::string_view(data).substr(0, data.size() - 8));
  char magic[8];
  r.raw(magic, sizeof magic);
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) throw RejectedInput("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t header_len = r.u32();
  std::string header_text(header_len, '\0');
  r.raw(header_text.data(), header_len);

  ModelCheckpoint ck;
  try {
    const auto header = nlohmann::json::parse(header_text);
    ck.config = header.at("config").get<ModelConfig>();
    ck.labels = header.at("labels").get<std::array<std::string, kNumClasses>>();
    ck.config.validate();
    if (header.at("config_hash").get<std::string>() != hex64(ck.config.shape_hash())) {
      throw RejectedInput("checkpoint config hash does not match its tensor shapes");
    }
  } catch (const nlohmann::json::exception& e) {
    throw RejectedInput(std::string("malformed checkpoint header: ") + e.what());
  }
  for (double& m : ck.stats.mean) m = r.f64();
  for (double& s : ck.stats.stddev) s = r.f64();
  for (bool& d : ck.stats.degenerate) d = r.u8() != 0;
  const std::uint64_t count = r.u64();
  if (count != ck.config.parameter_count() || r.remaining() != count * 8) {
    throw RejectedInput("checkpoint parameter block does not match its config");
  }
  ck.params.resize(count);
  for (double& p : ck.params) p = r.f64();
  return ck;
}

ModelCheckpoint ModelCheckpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open checkpoint " + path.string());
  return load(in);
}

// ---------------------------------------------------------------------------
// Front end

SignalWindow preprocess(const SignalWindow& raw, const ModelConfig& cfg) {
  raw.validate();
  if (raw.length() != static_cast<std::size_t>(cfg.window_samples)) {
    throw RejectedInput("window has " + std::to_string(raw.length()) + " samples, model expects " +
                        std::to_string(cfg.window_samples));
  }
  const auto d = static_cast<std::size_t>(cfg.decimation);
  const std::size_t out_len = raw.length() / d;
  SignalWindow out;
  out.sample_rate_hz = raw.sample_rate_hz / static_cast<double>(d);
  out.t0_us = raw.t0_us;
  out.label = raw.label;
  const FilterSpec sg{cfg.sg_window, cfg.sg_order};
  const bool smooth = cfg.sg_window > 1 && raw.length() >= static_cast<std::size_t>(cfg.sg_window);
  for (std::size_t c = 0; c < kChannels; ++c) {
    const Signal src = smooth ? savitzky_golay(raw.samples[c], sg) : raw.samples[c];
    auto& dst = out.samples[c];
    dst.resize(out_len);
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += src[t * d + k];
      dst[t] = acc / static_cast<double>(d);
    }
  }
  return out;
}

Features to_features(const SignalWindow& preprocessed, const NormStats& stats) {
  const SignalWindow n = normalize(preprocessed, stats);
  Features f;
  f.x = n.samples;
  f.label = n.label.value_or(-1);
  return f;
}

// ---------------------------------------------------------------------------
// Network

int ForwardResult::predicted() const {
  return static_cast<int>(std::distance(probabilities.begin(),
                                        std::max_element(probabilities.begin(), probabilities.end())));
}

std::array<double, kNumClasses> softmax(std::span<const double, kNumClasses> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::array<double, kNumClasses> p{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double loss(std::span<const double, kNumClasses> probabilities, int true_class,
            std::span<const double, kNumClasses> class_weights) {
  if (true_class < 0 || true_class >= kNumClasses) throw RejectedInput("true class out of range");
  const auto y = static_cast<std::size_t>(true_class);
  return -class_weights[y] * std::log(std::max(probabilities[y], 1e-12));
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Dims {
  std::size_t C, F, K, H, L, T, classes;
};

struct Offsets {
  std::size_t conv_w, conv_b;
  std::vector<std::size_t> wx, wh, b;
  std::size_t dense_w, dense_b;
};

Offsets offsets_of(const ModelConfig& cfg) {
  const auto layout = tensor_layout(cfg);
  Offsets o{};
  o.conv_w = layout[0].offset;
  o.conv_b = layout[1].offset;
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    o.wx.push_back(layout[2 + 3 * static_cast<std::size_t>(l)].offset);
    o.wh.push_back(layout[3 + 3 * static_cast<std::size_t>(l)].offset);
    o.b.push_back(layout[4 + 3 * static_cast<std::size_t>(l)].offset);
  }
  o.dense_w = layout[layout.size() - 2].offset;
  o.dense_b = layout.back().offset;
  return o;
}

struct LayerCache {
  std::vector<double> gates;  // T x 4H post-activation, order i f g o
  std::vector<double> c;      // T x H
  std::vector<double> tc;     // T x H, tanh(c)
  std::vector<double> h;      // T x H
};

struct Cache {
  std::vector<double> conv_pre;  // T x F
  std::vector<double> conv_act;  // T x F
  std::vector<LayerCache> layers;
  std::array<double, kNumClasses> logits{};
  std::array<double, kNumClasses> probs{};
};

class Network {
 public:
  explicit Network(const ModelCheckpoint& ck)
      : cfg_(ck.config), p_(ck.params.data()), off_(offsets_of(ck.config)) {
    d_.C = static_cast<std::size_t>(cfg_.channels);
    d_.F = static_cast<std::size_t>(cfg_.conv_filters);
    d_.K = static_cast<std::size_t>(cfg_.kernel);
    d_.H = static_cast<std::size_t>(cfg_.lstm_hidden);
    d_.L = static_cast<std::size_t>(cfg_.lstm_layers);
    d_.T = static_cast<std::size_t>(cfg_.sequence_length());
    d_.classes = static_cast<std::size_t>(cfg_.classes);
  }

  void run(const Features& in, Cache& cache) const {
    const auto [C, F, K, H, L, T, NC] = d_;
    if (in.length() != T) {
      throw RejectedInput("input has " + std::to_string(in.length()) + " steps, model expects " +
                          std::to_string(T));
    }
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
    const double* cw = p_ + off_.conv_w;
    const double* cb = p_ + off_.conv_b;
    cache.conv_pre.assign(T * F, 0.0);
    cache.conv_act.assign(T * F, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        double z = cb[f];
        for (std::size_t c = 0; c < C; ++c) {
          const double* w = cw + (f * C + c) * K;
          const auto& xc = in.x[c];
          for (std::size_t k = 0; k < K; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
            z += w[k] * xc[static_cast<std::size_t>(src)];
          }
        }
        cache.conv_pre[t * F + f] = z;
        cache.conv_act[t * F + f] = z > 0.0 ? z : 0.0;
      }
    }

    cache.layers.resize(L);
    std::vector<double> pre(4 * H);
    for (std::size_t l = 0; l < L; ++l) {
      auto& lc = cache.layers[l];
      lc.gates.assign(T * 4 * H, 0.0);
      lc.c.assign(T * H, 0.0);
      lc.tc.assign(T * H, 0.0);
      lc.h.assign(T * H, 0.0);
      const std::size_t in_dim = l == 0 ? F : H;
      const std::vector<double>& input = l == 0 ? cache.conv_act : cache.layers[l - 1].h;
      const double* wx = p_ + off_.wx[l];
      const double* wh = p_ + off_.wh[l];
      const double* b = p_ + off_.b[l];
      for (std::size_t t = 0; t < T; ++t) {
        const double* xt = input.data() + t * in_dim;
        const double* hprev = t > 0 ? lc.h.data() + (t - 1) * H : nullptr;
        for (std::size_t r = 0; r < 4 * H; ++r) {
          double acc = b[r];
          const double* row = wx + r * in_dim;
          for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * xt[j];
          if (hprev != nullptr) {
            const double* hrow = wh + r * H;
            for (std::size_t j = 0; j < H; ++j) acc += hrow[j] * hprev[j];
          }
          pre[r] = acc;
        }
        double* g = lc.gates.data() + t * 4 * H;
        for (std::size_t j = 0; j < H; ++j) {
          g[j] = sigmoid(pre[j]);
          g[H + j] = sigmoid(pre[H + j]);
          g[2 * H + j] = std::tanh(pre[2 * H + j]);
          g[3 * H + j] = sigmoid(pre[3 * H + j]);
          const double cprev = t > 0 ? lc.c[(t - 1) * H + j] : 0.0;
          const double c = g[H + j] * cprev + g[j] * g[2 * H + j];
          lc.c[t * H + j] = c;
          lc.tc[t * H + j] = std::tanh(c);
          lc.h[t * H + j] = g[3 * H + j] * lc.tc[t * H + j];
        }
      }
    }

    const double* hT = cache.layers.back().h.data() + (T - 1) * H;
    const double* dw = p_ + off_.dense_w;
    const double* db = p_ + off_.dense_b;
    for (std::size_t k = 0; k < NC; ++k) {
      double z = db[k];
      for (std::size_t j = 0; j < H; ++j) z += dw[k * H + j] * hT[j];
      cache.logits[k] = z;
    }
    cache.probs = softmax(cache.logits);
  }

  // Accumulates scale * d(-log p_y)/d(params) into grad.
  void backprop(const Features& in, const Cache& cache, int y, double scale, double* grad) const {
    const auto [C, F, K, H, L, T, NC] = d_;
    std::array<double, kNumClasses> dlogits{};
    for (std::size_t k = 0; k < NC; ++k) {
      dlogits[k] = scale * (cache.probs[k] - (static_cast<int>(k) == y ? 1.0 : 0.0));
    }
    const double* hT = cache.layers.back().h.data() + (T - 1) * H;
    const double* dw = p_ + off_.dense_w;
    double* g_dw = grad + off_.dense_w;
    double* g_db = grad + off_.dense_b;
    // Gradient arriving at each layer's h outputs, T x H.
    std::vector<double> dh_ext(T * H, 0.0);
    for (std::size_t k = 0; k < NC; ++k) {
      g_db[k] += dlogits[k];
      for (std::size_t j = 0; j < H; ++j) {
        g_dw[k * H + j] += dlogits[k] * hT[j];
        dh_ext[(T - 1) * H + j] += dw[k * H + j] * dlogits[k];
      }
    }

    std::vector<double> da(4 * H), dh_next(H), dc_next(H);
    for (std::size_t li = L; li-- > 0;) {
      const auto& lc = cache.layers[li];
      const std::size_t in_dim = li == 0 ? F : H;
      const std::vector<double>& input = li == 0 ? cache.conv_act : cache.layers[li - 1].h;
      const double* wx = p_ + off_.wx[li];
      const double* wh = p_ + off_.wh[li];
      double* g_wx = grad + off_.wx[li];
      double* g_wh = grad + off_.wh[li];
      double* g_b = grad + off_.b[li];
      std::vector<double> dx(T * in_dim, 0.0);
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      std::fill(dc_next.begin(), dc_next.end(), 0.0);
      for (std::size_t t = T; t-- > 0;) {
        const double* g = lc.gates.data() + t * 4 * H;
        for (std::size_t j = 0; j < H; ++j) {
          const double ig = g[j], fg = g[H + j], gg = g[2 * H + j], og = g[3 * H + j];
          const double tc = lc.tc[t * H + j];
          const double cprev = t > 0 ? lc.c[(t - 1) * H + j] : 0.0;
          const double dh = dh_ext[t * H + j] + dh_next[j];
          const double dc = dc_next[j] + dh * og * (1.0 - tc * tc);
          da[j] = dc * gg * ig * (1.0 - ig);
          da[H + j] = dc * cprev * fg * (1.0 - fg);
          da[2 * H + j] = dc * ig * (1.0 - gg * gg);
          da[3 * H + j] = dh * tc * og * (1.0 - og);
          dc_next[j] = dc * fg;
        }
        const double* xt = input.data() + t * in_dim;
        const double* hprev = t > 0 ? lc.h.data() + (t - 1) * H : nullptr;
        double* dxt = dx.data() + t * in_dim;
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (std::size_t r = 0; r < 4 * H; ++r) {
          const double a = da[r];
          g_b[r] += a;
          double* gx = g_wx + r * in_dim;
          const double* row = wx + r * in_dim;
          for (std::size_t j = 0; j < in_dim; ++j) {
            gx[j] += a * xt[j];
            dxt[j] += row[j] * a;
          }
          if (hprev != nullptr) {
            double* gh = g_wh + r * H;
            const double* hrow = wh + r * H;
            for (std::size_t j = 0; j < H; ++j) {
              gh[j] += a * hprev[j];
              dh_next[j] += hrow[j] * a;
            }
          }
        }
      }
      if (li > 0) {
        dh_ext = std::move(dx);
      } else {
        // Through the ReLU into the convolution.
        const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);
        double* g_cw = grad + off_.conv_w;
        double* g_cb = grad + off_.conv_b;
        for (std::size_t t = 0; t < T; ++t) {
          for (std::size_t f = 0; f < F; ++f) {
            if (!(cache.conv_pre[t * F + f] > 0.0)) continue;
            const double dz = dx[t * F + f];
            g_cb[f] += dz;
            for (std::size_t c = 0; c < C; ++c) {
              double* gw = g_cw + (f * C + c) * K;
              const auto& xc = in.x[c];
              for (std::size_t k = 0; k < K; ++k) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
                gw[k] += dz * xc[static_cast<std::size_t>(src)];
              }
            }
          }
        }
      }
    }
  }

 private:
  const ModelConfig& cfg_;
  const double* p_;
  Offsets off_;
  Dims d_{};
};

}  // namespace

ForwardResult forward(const ModelCheckpoint& ckpt, const Features& input) {
  if (ckpt.params.size() != ckpt.config.parameter_count()) throw RejectedInput("checkpoint is inconsistent");
  Network net(ckpt);
  Cache cache;
  net.run(input, cache);
  return {cache.probs, cache.logits};
}

ForwardResult forward(const ModelCheckpoint& ckpt, const SignalWindow& normalized) {
  normalized.validate();
  Features f;
  f.x = normalized.samples;
  return forward(ckpt, f);
}

BatchGradient backward(const ModelCheckpoint& ckpt, std::span<const Features> batch) {
  if (batch.empty()) throw RejectedInput("backward needs a non-empty batch");
  Network net(ckpt);
  BatchGradient out;
  out.grad.assign(ckpt.params.size(), 0.0);
  std::vector<double> sample_grad(ckpt.params.size());
  Cache cache;
  for (const auto& item : batch) {
    if (item.label < 0 || item.label >= kNumClasses) throw RejectedInput("batch item has no valid label");
    net.run(item, cache);
    const double w = ckpt.config.class_weights[static_cast<std::size_t>(item.label)];
    out.loss += loss(cache.probs, item.label, ckpt.config.class_weights);
    std::fill(sample_grad.begin(), sample_grad.end(), 0.0);
    net.backprop(item, cache, item.label, w, sample_grad.data());
    for (std::size_t i = 0; i < sample_grad.size(); ++i) out.grad[i] += sample_grad[i];
  }
  const double n = static_cast<double>(batch.size());
  out.loss /= n;
  for (double& g : out.grad) g /= n;
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::string first_nan_tensor(const ModelConfig& cfg, std::span<const double> params,
                             std::span<const double> grad) {
  for (const auto& t : tensor_layout(cfg)) {
    for (std::size_t i = 0; i < t.size; ++i) {
      if (!std::isfinite(params[t.offset + i])) return t.name + " (weights)";
    }
  }
  for (const auto& t : tensor_layout(cfg)) {
    for (std::size_t i = 0; i < t.size; ++i) {
      if (!std::isfinite(grad[t.offset + i])) return t.name + " (gradient)";
    }
  }
  return "none (loss only)";
}

struct Scores {
  double loss = 0.0;
  double accuracy = 0.0;
};

Scores score(const ModelCheckpoint& ck, std::span<const Features> set) {
  Scores s;
  if (set.empty()) return s;
  long correct = 0;
  for (const auto& f : set) {
    const auto r = forward(ck, f);
    s.loss += loss(r.probabilities, f.label, ck.config.class_weights);
    if (r.predicted() == f.label) ++correct;
  }
  s.loss /= static_cast<double>(set.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  return s;
}

}  // namespace

TrainResult train(const ModelConfig& config, std::span<const SignalWindow> train_windows,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_windows.empty()) throw RejectedInput("training set is empty");

  // Stratified hold-out: the tail of each class goes to validation.
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < train_windows.size(); ++i) {
    const auto& lbl = train_windows[i].label;
    if (!lbl || *lbl < 0 || *lbl >= kNumClasses) throw RejectedInput("training window without a valid label");
    by_class[static_cast<std::size_t>(*lbl)].push_back(i);
  }
  std::vector<std::size_t> fit_idx, val_idx;
  for (const auto& members : by_class) {
    std::size_t n_val = 0;
    if (members.size() >= 2 && config.validation_fraction > 0.0) {
      n_val = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(config.validation_fraction * static_cast<double>(members.size()))));
      n_val = std::min(n_val, members.size() - 1);
    }
    fit_idx.insert(fit_idx.end(), members.begin(), members.end() - static_cast<std::ptrdiff_t>(n_val));
    val_idx.insert(val_idx.end(), members.end() - static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(fit_idx.begin(), fit_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  std::vector<SignalWindow> pre_fit, pre_val;
  for (std::size_t i : fit_idx) pre_fit.push_back(preprocess(train_windows[i], config));
  for (std::size_t i : val_idx) pre_val.push_back(preprocess(train_windows[i], config));

  ModelConfig cfg = config;
  if (cfg.auto_class_weights) {
    std::array<double, kNumClasses> counts{};
    for (const auto& w : pre_fit) counts[static_cast<std::size_t>(*w.label)] += 1.0;
    const double present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }));
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      cfg.class_weights[c] = counts[c] > 0 ? static_cast<double>(pre_fit.size()) / (present * counts[c]) : 1.0;
    }
  }

  ModelCheckpoint ck = ModelCheckpoint::initialised(cfg, cfg.seed);
  ck.stats = NormStats::fit(pre_fit);
  std::vector<Features> fit, val;
  for (const auto& w : pre_fit) fit.push_back(to_features(w, ck.stats));
  for (const auto& w : pre_val) val.push_back(to_features(w, ck.stats));
  const std::span<const Features> val_set = val.empty() ? std::span<const Features>(fit) : std::span<const Features>(val);

  const std::size_t P = ck.params.size();
  std::vector<double> m(P, 0.0), v(P, 0.0);
  double lr = cfg.learning_rate;
  long step = 0;
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5348));

  TrainResult result;
  result.checkpoint = ck;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int since_plateau_reset = 0;
  double plateau_best = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(fit.size());
  std::vector<Features> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle_rng.next() % i);
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    const auto B = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += B) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + B); ++k) batch.push_back(fit[order[k]]);
      const BatchGradient bg = backward(ck, batch);
      const bool grad_ok = std::all_of(bg.grad.begin(), bg.grad.end(), [](double g) { return std::isfinite(g); });
      if (!std::isfinite(bg.loss) || !grad_ok) {
        throw TrainingError("NaN loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(start / B) + "; first NaN tensor: " +
                            first_nan_tensor(cfg, ck.params, bg.grad));
      }
      epoch_loss += bg.loss * static_cast<double>(batch.size());
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < P; ++i) {
        const double g = bg.grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        ck.params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
      }
    }
    const Scores vs = score(ck, val_set);
    const EpochLog entry{epoch, epoch_loss / static_cast<double>(fit.size()), vs.loss, vs.accuracy, lr};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (!std::isfinite(vs.loss)) {
      throw TrainingError("NaN validation loss at epoch " + std::to_string(epoch) +
                          "; first NaN tensor: " + first_nan_tensor(cfg, ck.params, std::vector<double>(P, 0.0)));
    }

    if (vs.loss < best_val) {
      best_val = vs.loss;
      result.checkpoint = ck;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (vs.loss < plateau_best) {
      plateau_best = vs.loss;
      since_plateau_reset = 0;
    } else if (++since_plateau_reset >= cfg.plateau_patience) {
      lr = std::max(cfg.min_learning_rate, lr * cfg.plateau_factor);
      since_plateau_reset = 0;
    }
    if (since_best >= cfg.early_stop_patience) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

long ConfusionMatrix::total() const {
  long t = 0;
  for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), 0L);
  return t;
}

long ConfusionMatrix::correct() const {
  long t = 0;
  for (std::size_t i = 0; i < kNumClasses; ++i) t += counts[i][i];
  return t;
}

double ConfusionMatrix::accuracy() const {
  const long t = total();
  return t == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(t);
}

double ConfusionMatrix::precision(int c) const {
  const auto k = static_cast<std::size_t>(c);
  long col = 0;
  for (std::size_t i = 0; i < kNumClasses; ++i) col += counts[i][k];
  return col == 0 ? 0.0 : static_cast<double>(counts[k][k]) / static_cast<double>(col);
}

double ConfusionMatrix::recall(int c) const {
  const auto k = static_cast<std::size_t>(c);
  const long row = std::accumulate(counts[k].begin(), counts[k].end(), 0L);
  return row == 0 ? 0.0 : static_cast<double>(counts[k][k]) / static_cast<double>(row);
}

double ConfusionMatrix::f1(int c) const {
  const double p = precision(c);
  const double r = recall(c);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double ConfusionMatrix::intra_category_error_share() const {
  long errors = 0, intra = 0;
  for (int i = 0; i < kNumClasses; ++i) {
    for (int j = 0; j < kNumClasses; ++j) {
      if (i == j) continue;
      const long n = counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      errors += n;
      if (same_category(i, j)) intra += n;
    }
  }
  return errors == 0 ? 1.0 : static_cast<double>(intra) / static_cast<double>(errors);
}

Evaluation evaluate_predictions(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.empty()) throw RejectedInput("cannot evaluate an empty set");
  if (truth.size() != predicted.size()) throw RejectedInput("truth and predictions differ in length");
  Evaluation ev;
  for (std::size_t i = 0; i < truth.size(); ++i) ev.confusion.add(truth[i], predicted[i]);
  ev.accuracy = ev.confusion.accuracy();
  for (int c = 0; c < kNumClasses; ++c) ev.f1[static_cast<std::size_t>(c)] = ev.confusion.f1(c);
  return ev;
}

Evaluation evaluate(const ModelCheckpoint& ckpt, std::span<const SignalWindow> test_windows) {
  if (test_windows.empty()) throw RejectedInput("cannot evaluate an empty set");
  const Classifier clf(ckpt);
  std::vector<int> truth, pred;
  for (const auto& w : test_windows) {
    if (!w.label) throw RejectedInput("test window without a label");
    truth.push_back(*w.label);
    pred.push_back(clf.classify(w).predicted());
  }
  return evaluate_predictions(truth, pred);
}

ForwardResult Classifier::classify(const SignalWindow& raw) const {
  return forward(ckpt_, to_features(preprocess(raw, ckpt_.config), ckpt_.stats));
}

}  // namespace mmg

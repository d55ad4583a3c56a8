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

#include <cmath>
#include <sstream>

#include "mmg/classifier.hpp"
#include "mmg/error.hpp"
#include "mmg/random.hpp"
#include "mmg/synth.hpp"

using namespace mmg;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.conv_filters = 4;
  c.lstm_hidden = 8;
  c.lstm_layers = 2;
  c.window_samples = 32;
  c.decimation = 1;
  c.sg_window = 1;
  return c;
}

Features random_features(Rng& rng, std::size_t T, int label) {
  Features f;
  for (auto& ch : f.x) {
    ch.resize(T);
    for (double& v : ch) v = rng.normal();
  }
  f.label = label;
  return f;
}

// Central finite differences of the batch loss, one parameter at a time.
std::vector<double> numeric_gradient(ModelCheckpoint ck, std::span<const Features> batch, double eps) {
  std::vector<double> g(ck.params.size());
  auto batch_loss = [&]() {
    double l = 0.0;
    for (const auto& f : batch) {
      const auto r = forward(ck, f);
      l += loss(r.probabilities, f.label, ck.config.class_weights);
    }
    return l / static_cast<double>(batch.size());
  };
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const double orig = ck.params[i];
    ck.params[i] = orig + eps;
    const double up = batch_loss();
    ck.params[i] = orig - eps;
    const double down = batch_loss();
    ck.params[i] = orig;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-6});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("softmax values") {
  const std::array<double, 6> flat = {1, 1, 1, 1, 1, 1};
  for (double p : softmax(flat)) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-12));

  const std::array<double, 6> lead = {2, 0, 0, 0, 0, 0};
  const double expect = std::exp(2.0) / (std::exp(2.0) + 5.0);
  CHECK(softmax(lead)[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::fabs(expect - 0.59642) < 1e-5);
}

TEST_CASE("softmax shift invariance and simplex") {
  Rng rng(21);
  for (int t = 0; t < 500; ++t) {
    std::array<double, 6> z{};
    for (double& v : z) v = rng.uniform(-20.0, 20.0);
    const double shift = rng.uniform(-100.0, 100.0);
    std::array<double, 6> zs = z;
    for (double& v : zs) v += shift;
    const auto p = softmax(z), ps = softmax(zs);
    double sum = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(std::fabs(p[i] - ps[i]) < 1e-9);
      CHECK(p[i] > 0.0);
      CHECK(p[i] < 1.0);
      sum += p[i];
    }
    CHECK(std::fabs(sum - 1.0) < 1e-9);
    const auto arg_p = std::distance(p.begin(), std::max_element(p.begin(), p.end()));
    const auto arg_z = std::distance(z.begin(), std::max_element(z.begin(), z.end()));
    CHECK(arg_p == arg_z);
  }
}

TEST_CASE("weighted cross-entropy") {
  const std::array<double, 6> ones = {1, 1, 1, 1, 1, 1};
  std::array<double, 6> sure{};
  sure[2] = 1.0;
  CHECK(loss(sure, 2, ones) == 0.0);
  std::array<double, 6> uniform{};
  uniform.fill(1.0 / 6.0);
  CHECK(loss(uniform, 0, ones) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  CHECK(std::log(6.0) == doctest::Approx(1.7918).epsilon(1e-4));
  std::array<double, 6> twos = ones;
  twos[0] = 2.0;
  CHECK(loss(uniform, 0, twos) == doctest::Approx(2.0 * std::log(6.0)).epsilon(1e-12));
  std::array<double, 6> zero{};
  zero[1] = 1.0;
  CHECK(loss(zero, 0, ones) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("zero network gives uniform probabilities") {
  const auto ck = ModelCheckpoint::zeros(tiny_config());
  Rng rng(1);
  const auto r = forward(ck, random_features(rng, 32, 0));
  for (double p : r.probabilities) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  for (double z : r.logits) CHECK(z == 0.0);
}

TEST_CASE("forward rejects shape mismatches") {
  const auto ck = ModelCheckpoint::zeros(tiny_config());
  Rng rng(1);
  CHECK_THROWS_AS(forward(ck, random_features(rng, 31, 0)), RejectedInput);
}

TEST_CASE("full configuration parameter count") {
  const ModelConfig full;
  // conv 5*128*5+128, LSTM 4*256*(128+256+1) + 4 * 4*256*(256+256+1), dense 256*6+6.
  const std::size_t expected = 3328 + 394240 + 4 * 525312 + 1542;
  CHECK(full.parameter_count() == expected);
  MESSAGE("full configuration parameters: " << full.parameter_count()
                                             << " (target ~1.6e6, ratio "
                                             << static_cast<double>(full.parameter_count()) / 1.6e6 << ")");
}

TEST_CASE("analytic gradients match central finite differences") {
  const ModelConfig cfg = tiny_config();
  auto ck = ModelCheckpoint::initialised(cfg, 5);
  // Push weights into a regime with non-trivial gate activations.
  Rng rng(17);
  for (double& p : ck.params) p += rng.uniform(-0.3, 0.3);
  ck.config.class_weights = {1.0, 2.0, 0.5, 1.5, 1.0, 3.0};
  std::vector<Features> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(random_features(rng, 32, i * 2));
  const auto analytic = backward(ck, batch);
  const auto numeric = numeric_gradient(ck, batch, 1e-4);
  const double err = max_relative_error(analytic.grad, numeric);
  MESSAGE("max relative gradient error: " << err);
  CHECK(err < 1e-3);

  // Dense rows for classes absent from the batch still receive softmax-induced gradient.
  const auto layout = tensor_layout(cfg);
  const auto& dense_b = layout.back();
  CHECK(std::fabs(analytic.grad[dense_b.offset + 1]) > 0.0);
  CHECK(std::fabs(analytic.grad[dense_b.offset + 1] - numeric[dense_b.offset + 1]) < 1e-7);
}

TEST_CASE("batch gradient uses mean reduction") {
  auto ck = ModelCheckpoint::initialised(tiny_config(), 9);
  Rng rng(2);
  const auto f = random_features(rng, 32, 3);
  const std::vector<Features> single = {f};
  const std::vector<Features> doubled = {f, f};
  const auto g1 = backward(ck, single);
  const auto g2 = backward(ck, doubled);
  CHECK(g1.loss == g2.loss);
  CHECK(g1.grad == g2.grad);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  auto ck = ModelCheckpoint::initialised(tiny_config(), 3);
  ck.stats.mean = {1.5, 2.5, 3.5, 4.5, 5.5};
  ck.stats.stddev = {0.1, 0.2, 0.3, 0.4, 1.0};
  ck.stats.degenerate = {false, false, false, false, true};
  std::stringstream ss;
  ck.save(ss);
  const std::string bytes = ss.str();
  std::stringstream in(bytes);
  const auto back = ModelCheckpoint::load(in);
  CHECK(back.params == ck.params);
  CHECK(back.stats.mean == ck.stats.mean);
  CHECK(back.stats.stddev == ck.stats.stddev);
  CHECK(back.stats.degenerate == ck.stats.degenerate);
  CHECK(back.labels == ck.labels);

  std::stringstream again;
  back.save(again);
  CHECK(again.str() == bytes);

  Rng rng(4);
  const auto f = random_features(rng, 32, 0);
  CHECK(forward(ck, f).logits == forward(back, f).logits);

  std::string corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x10;
  std::stringstream bad(corrupt);
  CHECK_THROWS_AS(ModelCheckpoint::load(bad), RejectedInput);
}

TEST_CASE("confusion matrix metrics") {
  std::vector<int> truth, perfect, constant;
  for (int c = 0; c < 6; ++c) {
    for (int i = 0; i < 10; ++i) {
      truth.push_back(c);
      perfect.push_back(c);
      constant.push_back(0);
    }
  }
  const auto ev = evaluate_predictions(truth, perfect);
  CHECK(ev.accuracy == 1.0);
  for (double f : ev.f1) CHECK(f == 1.0);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      CHECK(ev.confusion.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] == (i == j ? 10 : 0));
    }
  }
  const auto cv = evaluate_predictions(truth, constant);
  CHECK(cv.accuracy == doctest::Approx(1.0 / 6.0));
  CHECK(cv.f1[0] == doctest::Approx(2.0 * (1.0 / 6.0) * 1.0 / (1.0 / 6.0 + 1.0)));
  CHECK(cv.f1[3] == 0.0);
  // Errors into class 0 from classes 1, 2 are intra-category; from 3..5 are not.
  CHECK(cv.confusion.intra_category_error_share() == doctest::Approx(20.0 / 50.0));
  CHECK_THROWS_AS(evaluate_predictions(std::vector<int>{}, std::vector<int>{}), RejectedInput);
}

TEST_CASE("training separates a two-class toy set") {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 50;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-2;
  cfg.validation_fraction = 0.0;
  Rng rng(8);
  std::vector<SignalWindow> set;
  for (int i = 0; i < 32; ++i) {
    SignalWindow w;
    const int label = i % 2 == 0 ? 0 : 4;
    for (std::size_t c = 0; c < kChannels; ++c) {
      w.samples[c].resize(32);
      for (double& v : w.samples[c]) v = (label == 0 ? 1.0 : -1.0) * (c == 1 ? 3.0 : 0.0) + rng.normal(0.0, 0.5);
    }
    w.label = label;
    set.push_back(w);
  }
  const auto result = train(cfg, set);
  const auto ev = evaluate(result.checkpoint, set);
  CHECK(ev.accuracy == 1.0);

  const auto again = train(cfg, set);
  CHECK(again.checkpoint.params == result.checkpoint.params);
}

TEST_CASE("class weighting follows inverse frequency on an imbalanced set") {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.validation_fraction = 0.0;
  Rng rng(6);
  std::vector<SignalWindow> set;
  for (int i = 0; i < 12; ++i) {
    SignalWindow w;
    for (auto& ch : w.samples) {
      ch.resize(32);
      for (double& v : ch) v = rng.normal();
    }
    w.label = i < 9 ? 1 : 2;  // 9 vs 3
    set.push_back(w);
  }
  const auto r = train(cfg, set);
  CHECK(r.checkpoint.config.class_weights[1] == doctest::Approx(12.0 / (2.0 * 9.0)));
  CHECK(r.checkpoint.config.class_weights[2] == doctest::Approx(12.0 / (2.0 * 3.0)));
  CHECK(r.checkpoint.config.class_weights[0] == 1.0);
}

TEST_CASE("training aborts on NaN and names the tensor") {
  ModelConfig cfg = tiny_config();
  cfg.epochs = 1;
  cfg.learning_rate = 1e300;
  cfg.validation_fraction = 0.0;
  Rng rng(6);
  std::vector<SignalWindow> set;
  for (int i = 0; i < 16; ++i) {
    SignalWindow w;
    for (auto& ch : w.samples) {
      ch.resize(32);
      for (double& v : ch) v = rng.normal();
    }
    w.label = i % 6;
    set.push_back(w);
  }
  try {
    (void)train(cfg, set);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("first NaN tensor") != std::string::npos);
  }
}

TEST_CASE("preprocess decimates and keeps labels") {
  ModelConfig cfg = ModelConfig::compact();
  const auto w = generate_trace(default_profiles().at(2), 1, 1.0);
  const auto p = preprocess(w, cfg);
  CHECK(p.length() == 65);
  CHECK(p.label == w.label);
  CHECK(p.sample_rate_hz == doctest::Approx(65.0));
}

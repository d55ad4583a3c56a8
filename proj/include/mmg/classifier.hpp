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

// CNN-LSTM gesture/force classifier written out by hand: one same-padded
// 1-D convolution with ReLU, a stack of LSTM layers read out at the final
// time step, and a dense softmax head. Forward, backprop-through-time,
// adaptive-moment training and evaluation all live here.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mmg/gesture.hpp"
#include "mmg/signal.hpp"

namespace mmg {

struct ModelConfig {
  // Architecture.
  int channels = static_cast<int>(kChannels);
  int conv_filters = 128;
  int kernel = 5;
  int lstm_layers = 5;
  int lstm_hidden = 256;
  int classes = kNumClasses;

  // Front end: raw window length in samples, Savitzky-Golay smoothing and
  // block-mean decimation ahead of the network.
  int window_samples = 2600;
  int decimation = 1;
  int sg_window = 51;
  int sg_order = 3;

  // Loss weighting; `auto_class_weights` recomputes inverse frequencies at train time.
  std::array<double, kNumClasses> class_weights = {1, 1, 1, 1, 1, 1};
  bool auto_class_weights = true;

  // Optimizer and schedule.
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int plateau_patience = 5;
  double plateau_factor = 0.5;
  double min_learning_rate = 1e-6;
  int early_stop_patience = 15;
  int epochs = 40;
  int batch_size = 16;
  double validation_fraction = 0.1;
  std::uint64_t seed = 1;

  /// Reduced network used by the harness so CPU training stays in minutes.
  static ModelConfig compact();

  int sequence_length() const { return window_samples / decimation; }
  std::size_t parameter_count() const;
  void validate() const;
  /// FNV-1a over the tensor shapes; stored in checkpoints.
  std::uint64_t shape_hash() const;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset;
  std::size_t size;
};

std::vector<TensorInfo> tensor_layout(const ModelConfig& cfg);

struct ModelCheckpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig config;
  std::vector<double> params;
  NormStats stats;
  std::array<std::string, kNumClasses> labels;

  /// Zero weights with identity normalization.
  static ModelCheckpoint zeros(const ModelConfig& cfg);
  /// Seeded Glorot-style initialisation, forget-gate bias 1.
  static ModelCheckpoint initialised(const ModelConfig& cfg, std::uint64_t seed);

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static ModelCheckpoint load(std::istream& in);
  static ModelCheckpoint load(const std::filesystem::path& path);
};

/// Network input: decimated, normalized features laid out [channel][time].
struct Features {
  std::array<std::vector<double>, kChannels> x;
  int label = -1;

  std::size_t length() const { return x[0].size(); }
};

/// Smooths and decimates a raw window (no normalization).
SignalWindow preprocess(const SignalWindow& raw, const ModelConfig& cfg);
Features to_features(const SignalWindow& preprocessed, const NormStats& stats);

struct ForwardResult {
  std::array<double, kNumClasses> probabilities;
  std::array<double, kNumClasses> logits;

  int predicted() const;
};

std::array<double, kNumClasses> softmax(std::span<const double, kNumClasses> logits);

ForwardResult forward(const ModelCheckpoint& ckpt, const Features& input);
/// Convenience overload for an already-normalized window.
ForwardResult forward(const ModelCheckpoint& ckpt, const SignalWindow& normalized);

double loss(std::span<const double, kNumClasses> probabilities, int true_class,
            std::span<const double, kNumClasses> class_weights);

struct BatchGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean weighted cross-entropy over the batch and its exact gradient.
BatchGradient backward(const ModelCheckpoint& ckpt, std::span<const Features> batch);

struct EpochLog {
  int epoch;
  double train_loss;
  double val_loss;
  double val_accuracy;
  double learning_rate;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on labelled raw windows; returns the best-validation checkpoint.
TrainResult train(const ModelConfig& config, std::span<const SignalWindow> train_windows,
                  const EpochCallback& on_epoch = {});

struct ConfusionMatrix {
  std::array<std::array<long, kNumClasses>, kNumClasses> counts{};

  void add(int true_class, int predicted) {
    ++counts[static_cast<std::size_t>(true_class)][static_cast<std::size_t>(predicted)];
  }
  long total() const;
  long correct() const;
  double accuracy() const;
  double precision(int c) const;
  double recall(int c) const;
  double f1(int c) const;
  /// Share of misclassifications that stay within GRIP or within WRIST.
  double intra_category_error_share() const;
};

struct Evaluation {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::array<double, kNumClasses> f1{};
};

Evaluation evaluate(const ModelCheckpoint& ckpt, std::span<const SignalWindow> test_windows);
/// Scores arbitrary predictions; used for the harness reports too.
Evaluation evaluate_predictions(std::span<const int> truth, std::span<const int> predicted);

/// Raw window in, class probabilities out. Read-only after construction.
class Classifier {
 public:
  explicit Classifier(ModelCheckpoint ckpt) : ckpt_(std::move(ckpt)) {}

  ForwardResult classify(const SignalWindow& raw) const;
  const ModelCheckpoint& checkpoint() const { return ckpt_; }

 private:
  ModelCheckpoint ckpt_;
};

}  // namespace mmg

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

// Command-line front end: dataset generation, training, evaluation, the
// scripted experiments, live serving and log replay.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "mmg/classifier.hpp"
#include "mmg/error.hpp"
#include "mmg/harness/config.hpp"
#include "mmg/harness/course.hpp"
#include "mmg/harness/experiments.hpp"
#include "mmg/harness/serve.hpp"
#include "mmg/harness/session.hpp"
#include "mmg/synth.hpp"

namespace fs = std::filesystem;
using namespace mmg;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

HarnessConfig load(const Globals& g) {
  HarnessConfig cfg = g.config.empty() ? HarnessConfig{} : load_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.dataset.seed = *g.seed;
  }
  cfg.validate();
  return cfg;
}

Scenario scenario_of(const HarnessConfig& cfg) {
  Scenario s = cfg.scenario.empty() ? default_course() : load_scenario(cfg.scenario);
  s.validate(cfg.robot.radius);
  return s;
}

Classifier classifier_of(const HarnessConfig& cfg, const std::string& override_path) {
  const std::string path = override_path.empty() ? cfg.checkpoint : override_path;
  if (path.empty()) throw InvalidSpec("a trained checkpoint is required (set \"checkpoint\" or pass --checkpoint)");
  if (!fs::exists(path)) throw InvalidSpec("checkpoint not found: " + path);
  return Classifier(ModelCheckpoint::load(fs::path(path)));
}

std::vector<SignalWindow> read_windows(const fs::path& csv, const HarnessConfig& cfg) {
  std::ifstream in(csv);
  if (!in) throw InvalidSpec("cannot read " + csv.string());
  const auto rows = read_trace_csv(in);
  const auto len = static_cast<std::size_t>(std::llround(cfg.dataset.window_s * cfg.dataset.sample_rate_hz));
  return rows_to_windows(rows, len, cfg.dataset.sample_rate_hz);
}

void write_windows(const fs::path& csv, const std::vector<SignalWindow>& windows) {
  std::ofstream out(csv);
  if (!out) throw RuntimeFailure("cannot write " + csv.string());
  write_trace_csv(out, windows, true);
}

void print_evaluation(const Evaluation& ev) {
  std::printf("accuracy %.4f\n", ev.accuracy);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::printf("  %-9s F1 %.3f\n", std::string(kClassNames[c]).c_str(), ev.f1[c]);
  }
  std::printf("intra-category share of errors %.3f\n", ev.confusion.intra_category_error_share());
  std::printf("confusion (rows true, columns predicted):\n");
  for (const auto& row : ev.confusion.counts) {
    for (long n : row) std::printf(" %5ld", n);
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmgctl: wearable MMG teleoperation toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed (also seeds the dataset)");
  app.add_option("--out", g.out, "output directory");

  auto* gen = app.add_subcommand("gen-data", "write the synthetic train/test windows as CSV");

  std::string data_dir, ckpt_path;
  auto* trn = app.add_subcommand("train", "train the classifier");
  trn->add_option("--data", data_dir, "directory with train.csv (default: generate from the config)");
  trn->add_option("--checkpoint", ckpt_path, "where to save (default: <out>/model.ckpt)");

  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on the held-out windows");
  evl->add_option("--data", data_dir, "directory with test.csv (default: generate from the config)");
  evl->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate");

  std::string log_path;
  auto* rep = app.add_subcommand("replay", "re-run a session log and compare");
  rep->add_option("log", log_path, "session log (JSON lines)")->required()->check(CLI::ExistingFile);

  std::string experiment;
  auto* exp = app.add_subcommand("run-exp", "run a scripted experiment and write its report");
  exp->add_option("experiment", experiment, "recognition, navigation or transfer")
      ->required()
      ->check(CLI::IsMember({"recognition", "navigation", "transfer"}));
  exp->add_option("--checkpoint", ckpt_path, "checkpoint for recognition and transfer");

  ServeOptions serve_opts;
  std::string serve_log;
  auto* srv = app.add_subcommand("serve", "run a live session over WebSocket");
  srv->add_option("--port", serve_opts.port, "TCP port (0 picks one)");
  srv->add_option("--host", serve_opts.host, "bind address");
  srv->add_option("--duration", serve_opts.duration_s, "stop after this many seconds (0 = until SIGINT)");
  srv->add_option("--log", serve_log, "session log path (default: <out>/session.jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const HarnessConfig cfg = load(g);
    const fs::path out(g.out);
    fs::create_directories(out);

    if (*gen) {
      const Dataset ds = generate_dataset(cfg.dataset);
      write_windows(out / "train.csv", ds.train);
      write_windows(out / "test.csv", ds.test);
      std::printf("wrote %zu train and %zu test windows to %s\n", ds.train.size(), ds.test.size(), out.c_str());
    } else if (*trn) {
      const auto windows = data_dir.empty() ? generate_dataset(cfg.dataset).train
                                            : read_windows(fs::path(data_dir) / "train.csv", cfg);
      const TrainResult r = train(cfg.model, windows, [](const EpochLog& e) {
        std::printf("epoch %3d  loss %.4f  val loss %.4f  val acc %.4f  lr %.2e\n", e.epoch, e.train_loss,
                    e.val_loss, e.val_accuracy, e.learning_rate);
        std::fflush(stdout);
      });
      const fs::path dest = ckpt_path.empty() ? out / "model.ckpt" : fs::path(ckpt_path);
      r.checkpoint.save(dest);
      std::printf("best epoch %d, saved %s\n", r.best_epoch, dest.c_str());
    } else if (*evl) {
      const Classifier clf = classifier_of(cfg, ckpt_path);
      const auto windows = data_dir.empty() ? generate_dataset(cfg.dataset).test
                                            : read_windows(fs::path(data_dir) / "test.csv", cfg);
      print_evaluation(evaluate(clf.checkpoint(), windows));
    } else if (*rep) {
      std::ifstream in(log_path);
      const ReplayResult r = replay(in);
      std::printf("%s\n", r.metrics.dump(2).c_str());
      std::printf("events %zu, metrics %s, log %s\n", r.events.size(),
                  r.metrics == r.logged_metrics ? "match" : "DIFFER",
                  r.identical ? "reproduced line for line"
                              : ("diverges at line " + std::to_string(r.first_mismatch_line)).c_str());
      if (!r.identical || r.metrics != r.logged_metrics) return kExitRuntime;
    } else if (*exp) {
      const Scenario scenario = scenario_of(cfg);
      Report report;
      if (experiment == "navigation") {
        report = navigation_report(run_navigation(cfg, scenario));
      } else if (experiment == "recognition") {
        report = recognition_report(run_recognition(cfg, classifier_of(cfg, ckpt_path)));
      } else {
        report = transfer_report(run_transfer(cfg, scenario, classifier_of(cfg, ckpt_path)), cfg.transfer);
      }
      report.write(out);
      std::printf("%s", report.text().c_str());
    } else if (*srv) {
      serve_opts.log_path = serve_log.empty() ? out / "session.jsonl" : fs::path(serve_log);
      serve_opts.handle_signals = true;
      Server server(cfg, scenario_of(cfg), serve_opts);
      std::printf("listening on ws://%s:%u, log %s\n", serve_opts.host.c_str(), server.port(),
                  serve_opts.log_path.c_str());
      std::fflush(stdout);
      const auto metrics = server.run();
      std::printf("%s\n", metrics.dump(2).c_str());
    }
  } catch (const InvalidSpec& e) {
    std::fprintf(stderr, "invalid: %s\n", e.what());
    return kExitValidation;
  } catch (const RejectedInput& e) {
    std::fprintf(stderr, "rejected: %s\n", e.what());
    return kExitValidation;
  } catch (const RejectedAction& e) {
    std::fprintf(stderr, "rejected: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}

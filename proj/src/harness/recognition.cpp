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

#include "mmg/harness/experiments.hpp"

#include <algorithm>

#include "mmg/control.hpp"
#include "mmg/link.hpp"
#include "mmg/random.hpp"
#include "mmg/synth.hpp"

namespace mmg {

namespace {

constexpr std::uint64_t kRecognitionTag = 0x7265636f67ull;

}  // namespace

RecognitionSummary summarize(const std::vector<RecognitionTrial>& trials) {
  RecognitionSummary s;
  std::array<long, kNumClasses> tp{}, predicted{}, actual{};
  double latency_sum = 0.0;
  long latency_n = 0;
  for (const auto& t : trials) {
    ++s.trials;
    ++actual[static_cast<std::size_t>(t.true_class)];
    if (t.predicted < 0) {
      ++s.no_command;
      continue;
    }
    s.confusion.add(t.true_class, t.predicted);
    ++predicted[static_cast<std::size_t>(t.predicted)];
    if (t.predicted == t.true_class) {
      ++s.correct;
      ++tp[static_cast<std::size_t>(t.true_class)];
    }
    latency_sum += t.latency_ms;
    ++latency_n;
    s.max_latency_ms = std::max(s.max_latency_ms, t.latency_ms);
  }
  s.accuracy = s.trials ? static_cast<double>(s.correct) / static_cast<double>(s.trials) : 0.0;
  s.mean_latency_ms = latency_n ? latency_sum / static_cast<double>(latency_n) : 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    // Trials without a command count against recall only.
    const double p = predicted[c] ? static_cast<double>(tp[c]) / static_cast<double>(predicted[c]) : 0.0;
    const double r = actual[c] ? static_cast<double>(tp[c]) / static_cast<double>(actual[c]) : 0.0;
    s.f1[c] = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return s;
}

RecognitionResult run_recognition(const HarnessConfig& cfg, const Classifier& classifier) {
  cfg.validate();
  const auto& rc = cfg.recognition;
  const auto profiles = default_profiles();
  const double fs = cfg.dataset.sample_rate_hz;
  CommandPipeline pipe(classifier, cfg.pipeline, fs);
  RecognitionResult out;
  for (int subject = 0; subject < rc.subjects; ++subject) {
    Rng subject_rng(derive_seed(cfg.seed ^ kRecognitionTag, static_cast<std::uint64_t>(subject)));
    const double subject_gain = 1.0 + subject_rng.uniform(-rc.subject_jitter, rc.subject_jitter);
    for (int cls = 0; cls < kNumClasses; ++cls) {
      for (int trial = 0; trial < rc.trials_per_class; ++trial) {
        const std::uint64_t seed =
            derive_seed(derive_seed(cfg.seed ^ kRecognitionTag, 1000 + static_cast<std::uint64_t>(subject)),
                        static_cast<std::uint64_t>(cls * 100000 + trial));
        Rng rng(seed);
        RecognitionTrial t;
        t.subject = subject;
        t.trial = trial;
        t.true_class = cls;
        const double variability = cfg.dataset.variability;
        t.gain = subject_gain * (1.0 + rng.uniform(-variability, variability));
        const double lead_s = rng.uniform(rc.rest_lead_min_s, rc.rest_lead_max_s);

        Trace rest = generate_rest(kDefaultBaseline, profiles.at(cls).muscles[0].noise_std, derive_seed(seed, 1),
                                   lead_s, fs);
        Trace gesture = generate_trace(profiles.at(cls).scaled(t.gain), derive_seed(seed, 2), rc.hold_s, fs);
        t.onset_ms = 1000.0 * static_cast<double>(rest.length()) / fs;
        rest.t0_us = 0;
        gesture.t0_us = static_cast<std::int64_t>(std::llround(t.onset_ms * 1000.0));

        pipe.reset();
        auto cmds = pipe.push(rest, Mode::kGrasp);
        if (cmds.empty()) cmds = pipe.push(gesture, Mode::kGrasp);
        if (!cmds.empty()) {
          LinkConfig lc = cfg.link;
          lc.seed = derive_seed(seed, 3);
          Channel link(lc);
          const GestureClass g = cmds.front().gesture_class();
          const GripPayload payload{static_cast<std::uint8_t>(g.gesture == Gesture::kGrip ? 0 : 1),
                                    static_cast<std::uint8_t>(g.level),
                                    static_cast<std::uint8_t>(level_to_bin(g.level))};
          const SendResult sent = link.submit({link.next_seq(), FrameKind::kGrip, pack(payload)}, cmds.front().t_ms);
          if (!sent.deliveries_ms.empty()) {
            t.predicted = cmds.front().cls;
            t.latency_ms = sent.deliveries_ms.front() - t.onset_ms;
          }
        }
        out.trials.push_back(t);
      }
    }
  }
  out.summary = summarize(out.trials);
  return out;
}

Report recognition_report(const RecognitionResult& r) {
  Report rep;
  rep.experiment = "recognition";
  rep.columns = {"subject", "trial", "true_class", "predicted", "gain", "onset_ms", "latency_ms"};
  for (const auto& t : r.trials) {
    rep.rows.push_back({num(t.subject), num(t.trial), std::string(kClassNames[static_cast<std::size_t>(t.true_class)]),
                        t.predicted < 0 ? "NONE" : std::string(kClassNames[static_cast<std::size_t>(t.predicted)]),
                        num(t.gain), num(t.onset_ms), t.predicted < 0 ? "" : num(t.latency_ms)});
  }
  const auto& s = r.summary;
  rep.summary = {{"trials", num(s.trials)},
                 {"correct", num(s.correct)},
                 {"no_command", num(s.no_command)},
                 {"accuracy", num(s.accuracy)},
                 {"mean_latency_ms", num(s.mean_latency_ms)},
                 {"max_latency_ms", num(s.max_latency_ms)}};
  for (std::size_t c = 0; c < kNumClasses; ++c) rep.summary.push_back({"f1_" + std::string(kClassNames[c]), num(s.f1[c])});

  rep.table.push_back({"class", "trials", "accuracy", "F1"});
  std::array<long, kNumClasses> n{}, ok{};
  for (const auto& t : r.trials) {
    ++n[static_cast<std::size_t>(t.true_class)];
    if (t.predicted == t.true_class) ++ok[static_cast<std::size_t>(t.true_class)];
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    rep.table.push_back({std::string(kClassNames[c]), num(n[c]),
                         percent(n[c] ? static_cast<double>(ok[c]) / static_cast<double>(n[c]) : 0.0),
                         fixed(s.f1[c], 3)});
  }
  rep.table.push_back({"overall", num(s.trials), percent(s.accuracy), ""});
  rep.notes.push_back("mean gesture-to-command latency " + fixed(s.mean_latency_ms / 1000.0, 3) + " s (max " +
                      fixed(s.max_latency_ms / 1000.0, 3) + " s)");
  rep.notes.push_back("trials without a command: " + num(s.no_command));
  std::string conf = "confusion (rows true, columns predicted):";
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    conf += i ? " |" : " ";
    for (std::size_t j = 0; j < kNumClasses; ++j) conf += " " + num(s.confusion.counts[i][j]);
  }
  rep.notes.push_back(conf);
  return rep;
}

}  // namespace mmg

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

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace mmg {

/// Per-trial records plus aggregates, written as CSV and as a text table.
/// Numbers in the CSV files use the shortest round-trip form, so every
/// aggregate can be recomputed exactly from the trial file.
struct Report {
  std::string experiment;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::pair<std::string, std::string>> summary;
  // Human-readable table: first row is the header.
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> notes;

  std::string trials_csv() const;
  std::string summary_csv() const;
  std::string text() const;
  /// Writes <experiment>_trials.csv, <experiment>_summary.csv and <experiment>.txt.
  void write(const std::filesystem::path& dir) const;
};

/// Shortest decimal that parses back to the same double.
std::string num(double v);
std::string num(long v);
std::string num(int v);
/// Fixed-point rendering for the text table.
std::string fixed(double v, int decimals);
std::string percent(double fraction, int decimals = 1);

/// Minimal CSV reader for the files written above (no quoting needed).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

}  // namespace mmg

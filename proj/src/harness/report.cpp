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

#include "mmg/harness/report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mmg/error.hpp"

namespace mmg {

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string num(long v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

std::string fixed(double v, int decimals) { return fmt::format("{:.{}f}", v, decimals); }

std::string percent(double fraction, int decimals) { return fixed(100.0 * fraction, decimals) + "%"; }

namespace {

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    if (cells[i].find_first_of(",\n\"") != std::string::npos) throw RuntimeFailure("CSV cell needs quoting");
    out += cells[i];
  }
  return out + "\n";
}

}  // namespace

std::string Report::trials_csv() const {
  std::string out = join(columns);
  for (const auto& r : rows) out += join(r);
  return out;
}

std::string Report::summary_csv() const {
  std::string out = "metric,value\n";
  for (const auto& [k, v] : summary) out += join({k, v});
  return out;
}

std::string Report::text() const {
  std::string out = fmt::format("== {} ==\n", experiment);
  std::vector<std::size_t> width;
  for (const auto& row : table) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  for (std::size_t r = 0; r < table.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < table[r].size(); ++i) {
      line += i == 0 ? fmt::format("{:<{}}", table[r][i], width[i]) : fmt::format("  {:>{}}", table[r][i], width[i]);
    }
    out += line + "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i ? 2 : 0);
      out += std::string(total, '-') + "\n";
    }
  }
  for (const auto& n : notes) out += "note: " + n + "\n";
  return out;
}

void Report::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto put = [&](const std::string& name, const std::string& body) {
    std::ofstream f(dir / name, std::ios::binary);
    f << body;
    if (!f) throw RuntimeFailure("cannot write " + (dir / name).string());
  };
  put(experiment + "_trials.csv", trials_csv());
  put(experiment + "_summary.csv", summary_csv());
  put(experiment + ".txt", text());
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    out.push_back(std::move(cells));
  }
  return out;
}

}  // namespace mmg

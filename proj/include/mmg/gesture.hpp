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

#include <array>
#include <optional>
#include <string_view>

namespace mmg {

enum class Gesture { kGrip, kWrist };

// Level 1 is the strongest contraction, level 3 the lightest.
enum class ForceLevel { kStrong = 1, kModerate = 2, kLight = 3 };

inline constexpr int kNumClasses = 6;

/// Class index 0..5: GRIP_L1, GRIP_L2, GRIP_L3, WRIST_L1, WRIST_L2, WRIST_L3.
struct GestureClass {
  Gesture gesture;
  ForceLevel level;

  int index() const {
    return (gesture == Gesture::kGrip ? 0 : 3) + static_cast<int>(level) - 1;
  }
  static GestureClass from_index(int i) {
    return {i < 3 ? Gesture::kGrip : Gesture::kWrist, static_cast<ForceLevel>(i % 3 + 1)};
  }
  bool operator==(const GestureClass&) const = default;
};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "GRIP_L1", "GRIP_L2", "GRIP_L3", "WRIST_L1", "WRIST_L2", "WRIST_L3"};

inline std::optional<int> class_index(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[static_cast<std::size_t>(i)] == name) return i;
  }
  return std::nullopt;
}

inline bool same_category(int a, int b) { return (a < 3) == (b < 3); }

}  // namespace mmg

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

#include <stdexcept>
#include <string>

namespace mmg {

// Malformed configuration: bad window, band edges above Nyquist, ...
class InvalidSpec : public std::invalid_argument {
 public:
  explicit InvalidSpec(const std::string& what) : std::invalid_argument(what) {}
};

// Well-formed configuration applied to input it cannot handle.
class RejectedInput : public std::invalid_argument {
 public:
  explicit RejectedInput(const std::string& what) : std::invalid_argument(what) {}
};

// Action not permitted in the current state (grasp while holding, ...).
class RejectedAction : public std::logic_error {
 public:
  explicit RejectedAction(const std::string& what) : std::logic_error(what) {}
};

class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mmg

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

// WebSocket front end for a live session. Network I/O runs on its own thread;
// the simulation thread owns the session and exchanges messages with it
// through mutex-guarded queues.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "mmg/harness/config.hpp"
#include "mmg/harness/course.hpp"

namespace mmg {

struct ServeOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8765;     // 0 picks a free port
  double duration_s = 0.0;       // 0 runs until stop()
  std::filesystem::path log_path;  // empty means no log
  bool handle_signals = false;   // stop on SIGINT/SIGTERM
};

class Server {
 public:
  /// Binds the listening socket; throws RuntimeFailure when the port is taken.
  Server(HarnessConfig cfg, Scenario scenario, ServeOptions opts);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;
  /// Runs the session in real time until stop() or the duration elapses.
  /// Returns the session metrics.
  nlohmann::json run();
  /// Thread-safe.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mmg

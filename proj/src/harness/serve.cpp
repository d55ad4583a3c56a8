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

#include "mmg/harness/serve.hpp"

#include <chrono>
#include <csignal>
#include <deque>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "mmg/error.hpp"
#include "mmg/harness/session.hpp"

namespace mmg {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

class Connection;

// State shared by the network thread and the simulation thread.
struct Hub {
  std::mutex mu;
  std::deque<json> inbound;
  json snapshot;  // latest telemetry, scenario included
  std::set<std::shared_ptr<Connection>> conns;  // network thread only
};

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->hub_.conns.insert(self);
      json hello;
      {
        std::lock_guard lock(self->hub_.mu);
        hello = self->hub_.snapshot;
      }
      self->send(hello.dump());
      self->read();
    });
  }

  void send(std::string text) {
    if (closing_) return;
    out_.push_back(std::move(text));
    if (out_.size() == 1) write();
  }

  /// Flushes queued messages, then closes the handshake.
  void close() {
    if (closing_) return;
    closing_ = true;
    if (out_.empty()) finish_close();
  }

 private:
  void finish_close() {
    beast::get_lowest_layer(ws_).expires_after(std::chrono::seconds(1));
    ws_.async_close(websocket::close_code::going_away,
                    [self = shared_from_this()](beast::error_code) { self->hub_.conns.erase(self); });
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub_.conns.erase(self);
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      try {
        json msg = json::parse(text);
        validate_input(msg);
        std::lock_guard lock(self->hub_.mu);
        self->hub_.inbound.push_back(std::move(msg));
      } catch (const std::exception& e) {
        self->send(json{{"type", "error"}, {"message", e.what()}}.dump());
      }
      if (!self->closing_) self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub_.conns.erase(self);
        return;
      }
      self->out_.pop_front();
      if (!self->out_.empty()) {
        self->write();
      } else if (self->closing_) {
        self->finish_close();
      }
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  std::deque<std::string> out_;
  bool closing_ = false;
};

}  // namespace

struct Server::Impl {
  HarnessConfig cfg;
  Scenario scenario;
  ServeOptions opts;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::optional<net::signal_set> signals;
  Hub hub;
  std::atomic<bool> stopping{false};

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Connection>(std::move(socket), hub)->start();
      accept();
    });
  }

  void broadcast(std::vector<json> msgs) {
    net::post(ioc, [this, msgs = std::move(msgs)] {
      for (const auto& m : msgs) {
        const std::string text = m.dump();
        for (const auto& c : std::vector(hub.conns.begin(), hub.conns.end())) c->send(text);
      }
    });
  }

  void shutdown_network() {
    net::post(ioc, [this] {
      beast::error_code ec;
      acceptor.close(ec);
      if (signals) signals->cancel();
      for (const auto& c : std::vector(hub.conns.begin(), hub.conns.end())) c->close();
    });
  }
};

Server::Server(HarnessConfig cfg, Scenario scenario, ServeOptions opts) : impl_(std::make_unique<Impl>()) {
  cfg.validate();
  scenario.validate(cfg.robot.radius);
  impl_->cfg = std::move(cfg);
  impl_->scenario = std::move(scenario);
  impl_->opts = std::move(opts);
  try {
    const tcp::endpoint ep(net::ip::make_address(impl_->opts.host), impl_->opts.port);
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(net::socket_base::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen();
  } catch (const boost::system::system_error& e) {
    throw RuntimeFailure("cannot listen on " + impl_->opts.host + ":" + std::to_string(impl_->opts.port) + ": " +
                         e.code().message());
  }
  if (impl_->opts.handle_signals) {
    impl_->signals.emplace(impl_->ioc, SIGINT, SIGTERM);
    impl_->signals->async_wait([this](beast::error_code ec, int) {
      if (!ec) stop();
    });
  }
}

Server::~Server() = default;

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::stop() { impl_->stopping = true; }

json Server::run() {
  Impl& m = *impl_;
  std::ofstream file;
  if (!m.opts.log_path.empty()) {
    file.open(m.opts.log_path);
    if (!file) throw RuntimeFailure("cannot write session log " + m.opts.log_path.string());
  }
  LiveSession session(m.cfg, m.scenario, file.is_open() ? &file : nullptr);
  const auto snapshot = [&] {
    std::lock_guard lock(m.hub.mu);
    m.hub.snapshot = session.telemetry(true);
  };
  snapshot();

  m.accept();
  std::atomic<bool> io_done{false};
  std::thread io([&] {
    m.ioc.run();
    io_done = true;
  });

  using clock = std::chrono::steady_clock;
  const auto step = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(m.cfg.robot.dt));
  auto next = clock::now();
  const long max_ticks =
      m.opts.duration_s > 0.0 ? static_cast<long>(std::llround(m.opts.duration_s / m.cfg.robot.dt)) : -1;
  while (!m.stopping && (max_ticks < 0 || session.ticks() < max_ticks)) {
    std::deque<json> in;
    {
      std::lock_guard lock(m.hub.mu);
      in.swap(m.hub.inbound);
    }
    for (auto& msg : in) session.submit(msg);
    auto out = session.tick();
    if (!out.empty()) {
      if (out.back().value("type", "") == "telemetry") {
        snapshot();
        if (file.is_open()) file.flush();
      }
      m.broadcast(std::move(out));
    }
    next += step;
    const auto now = clock::now();
    if (now - next > std::chrono::seconds(1)) next = now;  // do not try to catch up after a stall
    std::this_thread::sleep_until(next);
  }
  const json metrics = session.finish();
  if (file.is_open()) file.close();

  m.broadcast({json{{"type", "end"}, {"metrics", metrics}}});
  m.shutdown_network();
  const auto deadline = clock::now() + std::chrono::seconds(2);
  while (!io_done && clock::now() < deadline) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  m.ioc.stop();
  io.join();
  return metrics;
}

}  // namespace mmg

#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <thread>

#include <httplib.h>

#include "mvre/error.hpp"
#include "mvre/geotile/fetch.hpp"

namespace mvre::geotile {

/// Serves a tile store directory over HTTP on 127.0.0.1 at
/// /tiles/<quadkey>.png. The first `fail_first` requests answer 503 so that
/// retry behaviour can be scripted.
class MockTileServer {
 public:
  explicit MockTileServer(std::filesystem::path root, std::size_t fail_first = 0)
      : root_(std::move(root)), failures_left_(fail_first) {
    server_.Get(R"(/tiles/([0-3]+)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      if (failures_left_ > 0) {
        --failures_left_;
        res.status = 503;
        return;
      }
      const Quadkey q(req.matches[1].str());
      const auto path = DirectoryStore::tile_path(root_, q);
      if (!std::filesystem::exists(path)) {
        res.status = 404;
        return;
      }
      const auto bytes = read_file_bytes(path);
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    });
  }

  ~MockTileServer() { stop(); }
  MockTileServer(const MockTileServer&) = delete;
  MockTileServer& operator=(const MockTileServer&) = delete;

  /// Binds an ephemeral port (or `port` when non-zero) and starts serving.
  int start(int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port("127.0.0.1") : (server_.bind_to_port("127.0.0.1", port) ? port : -1);
    if (port_ <= 0) throw Error("mock tile server: cannot bind");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  /// Blocks serving on the calling thread.
  void serve_forever(int port) {
    port_ = server_.bind_to_port("127.0.0.1", port) ? port : -1;
    if (port_ <= 0) throw Error("mock tile server: cannot bind port " + std::to_string(port));
    server_.listen_after_bind();
  }

  std::string url_template() const { return "http://127.0.0.1:" + std::to_string(port_) + "/tiles/{quadkey}.png"; }
  std::size_t requests() const noexcept { return requests_; }
  void fail_next(std::size_t n) { failures_left_ = n; }

 private:
  std::filesystem::path root_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> failures_left_;
};

}  // namespace mvre::geotile

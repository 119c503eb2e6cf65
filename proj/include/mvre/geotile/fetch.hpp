#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "mvre/error.hpp"
#include "mvre/geotile/image.hpp"
#include "mvre/geotile/tile_math.hpp"

namespace mvre::geotile {

/// Where tile bytes come from. Implementations signal a definitive absence
/// with MissingTileError and a retryable failure with TransientFetchError.
class TileSource {
 public:
  virtual ~TileSource() = default;
  virtual std::vector<unsigned char> fetch_bytes(const Quadkey& q) = 0;
  virtual bool remote() const = 0;
};

/// Local store laid out as <root>/<level>/<quadkey>.png.
class DirectoryStore final : public TileSource {
 public:
  explicit DirectoryStore(std::filesystem::path root) : root_(std::move(root)) {}

  static std::filesystem::path tile_path(const std::filesystem::path& root, const Quadkey& q) {
    return root / std::to_string(q.level()) / (q.str() + ".png");
  }

  std::vector<unsigned char> fetch_bytes(const Quadkey& q) override {
    const auto path = tile_path(root_, q);
    if (!std::filesystem::exists(path)) throw MissingTileError("tile " + q.str() + " not found in " + root_.string());
    return read_file_bytes(path);
  }
  bool remote() const override { return false; }
  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
};

/// HTTP endpoint addressed by a URL template containing "{quadkey}",
/// e.g. "http://127.0.0.1:8080/tiles/{quadkey}.png". 404 means missing;
/// connection errors and other non-200 statuses are transient.
class RemoteEndpoint final : public TileSource {
 public:
  explicit RemoteEndpoint(std::string url_template, std::chrono::milliseconds timeout = std::chrono::seconds(10))
      : template_(std::move(url_template)), timeout_(timeout) {
    if (template_.find("{quadkey}") == std::string::npos)
      throw InvalidArgument("tile URL template must contain {quadkey}");
    const auto scheme_end = template_.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("tile URL template must include a scheme");
    const auto path_start = template_.find('/', scheme_end + 3);
    if (path_start == std::string::npos) throw InvalidArgument("tile URL template must include a path");
    host_ = template_.substr(0, path_start);
    path_ = template_.substr(path_start);
  }

  std::vector<unsigned char> fetch_bytes(const Quadkey& q) override {
    std::string path = path_;
    path.replace(path.find("{quadkey}"), 9, q.str());
    httplib::Client client(host_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    auto res = client.Get(path);
    if (!res) throw TransientFetchError("tile " + q.str() + ": " + httplib::to_string(res.error()));
    if (res->status == 404) throw MissingTileError("tile " + q.str() + " not found at endpoint");
    if (res->status != 200)
      throw TransientFetchError("tile " + q.str() + ": HTTP status " + std::to_string(res->status));
    return {res->body.begin(), res->body.end()};
  }
  bool remote() const override { return true; }

 private:
  std::string template_;
  std::string host_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

struct FetchOptions {
  std::size_t max_retries = 3;
  std::chrono::milliseconds base_backoff{100};
  std::size_t workers = 4;
  std::optional<std::filesystem::path> cache_dir;
};

struct FetchStats {
  std::atomic<std::size_t> source_requests{0};
  std::atomic<std::size_t> retries{0};
  std::atomic<std::size_t> cache_hits{0};
};

/// Picks the tile source: MVRE_TILE_ENDPOINT overrides everything, then an
/// explicit URL template, then a directory store.
inline std::shared_ptr<TileSource> make_source(const std::string& location) {
  if (const char* env = std::getenv("MVRE_TILE_ENDPOINT"); env && *env)
    return std::make_shared<RemoteEndpoint>(env);
  if (location.find("{quadkey}") != std::string::npos) return std::make_shared<RemoteEndpoint>(location);
  return std::make_shared<DirectoryStore>(location);
}

/// Fetches and decodes tiles with an optional on-disk cache, bounded
/// retries with exponential backoff, and a bounded worker pool.
class TileFetcher {
 public:
  TileFetcher(std::shared_ptr<TileSource> source, FetchOptions options = {})
      : source_(std::move(source)), options_(std::move(options)) {
    if (!source_) throw InvalidArgument("tile fetcher needs a source");
  }

  ImageTensor fetch(const Quadkey& q) {
    if (options_.cache_dir) {
      const auto cached = DirectoryStore::tile_path(*options_.cache_dir, q);
      if (std::filesystem::exists(cached)) {
        ++stats_.cache_hits;
        return decode_png(read_file_bytes(cached));
      }
    }
    std::vector<unsigned char> bytes;
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        ++stats_.source_requests;
        bytes = source_->fetch_bytes(q);
        break;
      } catch (const TransientFetchError& e) {
        if (attempt >= options_.max_retries)
          throw RetryExhaustedError("tile " + q.str() + ": gave up after " + std::to_string(attempt) +
                                    " retries: " + e.what());
        ++stats_.retries;
        std::this_thread::sleep_for(options_.base_backoff * (1u << std::min<std::size_t>(attempt, 16)));
      }
    }
    auto image = decode_png(bytes);
    if (options_.cache_dir) write_file_atomic(DirectoryStore::tile_path(*options_.cache_dir, q), bytes);
    return image;
  }

  /// Fetches every quadkey with at most `workers` requests in flight.
  /// The first failure is rethrown after all workers stop.
  std::vector<ImageTensor> fetch_all(std::span<const Quadkey> keys) {
    std::vector<ImageTensor> out(keys.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
      for (std::size_t i = next++; i < keys.size() && !failed; i = next++) {
        try {
          out[i] = fetch(keys[i]);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    };
    const std::size_t width = std::max<std::size_t>(1, std::min(options_.workers, keys.size()));
    if (width == 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < width; ++w) pool.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);
    return out;
  }

  const FetchStats& stats() const noexcept { return stats_; }

 private:
  std::shared_ptr<TileSource> source_;
  FetchOptions options_;
  FetchStats stats_;
};

}  // namespace mvre::geotile

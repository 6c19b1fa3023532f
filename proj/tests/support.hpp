#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/ostream_sink.h>

#include "gae/common/image.hpp"
#include "gae/common/log.hpp"
#include "gae/trajectory/action_spaces.hpp"
#include "gae/trajectory/corpus.hpp"

namespace gae::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "gae") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// Captures everything logged on the "gae" logger while alive.
class LogCapture {
 public:
  LogCapture() : sink_(std::make_shared<spdlog::sinks::ostream_sink_mt>(stream_)) {
    logger()->sinks().push_back(sink_);
  }
  ~LogCapture() {
    auto& sinks = logger()->sinks();
    sinks.erase(std::remove(sinks.begin(), sinks.end(), sink_), sinks.end());
  }
  std::string text() const { return stream_.str(); }

 private:
  std::ostringstream stream_;
  std::shared_ptr<spdlog::sinks::ostream_sink_mt> sink_;
};

inline RgbImage solid_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto* p = img.at(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  }
  return img;
}

/// Hand-built trajectory under the Mind2Web action space. Screenshots are
/// "<id>_<i>.png" unless `paths` overrides them.
inline trajectory::TrajectoryRecord make_trajectory(const std::string& id, int n,
                                                    std::vector<std::string> paths = {}) {
  trajectory::TrajectoryRecord t;
  t.id = id;
  t.source = "Mind2Web";
  t.query = "Open the " + id + " page";
  t.action_space = trajectory::builtin_action_space("Mind2Web");
  for (int i = 1; i <= n; ++i) {
    trajectory::Step s;
    s.state.index = i;
    s.state.screenshot.path = paths.empty() ? id + "_" + std::to_string(i) + ".png" : paths[i - 1];
    s.state.screenshot.width = 8;
    s.state.screenshot.height = 8;
    s.state.description = "State " + std::to_string(i) + " of " + id + ".";
    s.action.operation = "click";
    s.action.value = nullptr;
    s.action.target = trajectory::BoundingBox{0.1, 0.2, 0.3, 0.4};
    t.steps.push_back(std::move(s));
  }
  return t;
}

/// Writes PNGs for every referenced screenshot (colour derived from the
/// path, so equal paths give equal bytes) plus `manifest.jsonl`.
inline void write_fixture(const std::filesystem::path& root, const std::vector<trajectory::TrajectoryRecord>& corpus) {
  std::filesystem::create_directories(root);
  for (const auto& t : corpus) {
    for (const auto& s : t.steps) {
      const auto target = root / s.state.screenshot.path;
      if (std::filesystem::exists(target)) continue;
      std::filesystem::create_directories(target.parent_path());
      const auto h = std::hash<std::string>{}(s.state.screenshot.path);
      write_png(target, solid_image(s.state.screenshot.width, s.state.screenshot.height,
                                    static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
                                    static_cast<std::uint8_t>(h >> 16)));
    }
  }
  trajectory::write_manifest(root / "manifest.jsonl", corpus);
}

}  // namespace gae::test

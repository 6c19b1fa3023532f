#include "gae/common/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

namespace gae {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto existing = spdlog::get("gae");
    if (existing) return existing;
    auto l = spdlog::stderr_color_mt("gae");
    l->set_pattern("[%l] %v");
    return l;
  }();
  return instance;
}

}  // namespace gae

#pragma once

#include <spdlog/spdlog.h>

#include <memory>

namespace gae {

/// Shared logger for library warnings ("gae"). Tests may swap sinks on it.
std::shared_ptr<spdlog::logger> logger();

}  // namespace gae

#include "mosden/log.hpp"

#include <cstdlib>
#include <string_view>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace mosden {

namespace {

spdlog::level::level_enum level_from_env() {
  const char* env = std::getenv("MOSDEN_LOG");
  std::string_view v = env ? env : "";
  if (v == "debug") return spdlog::level::debug;
  if (v == "info") return spdlog::level::info;
  if (v == "error") return spdlog::level::err;
  return spdlog::level::warn;
}

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = spdlog::stderr_color_mt("mosden");
  logger->set_level(level_from_env());
  logger->set_pattern("%Y-%m-%dT%H:%M:%S.%e [%^%l%$] %v");
  return logger;
}

} // namespace

spdlog::logger& log() {
  static auto logger = make_logger();
  return *logger;
}

} // namespace mosden

#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace mosden {

/// Process-wide logger. Level comes from MOSDEN_LOG (debug|info|warn),
/// default warn; output goes to stderr.
spdlog::logger& log();

} // namespace mosden

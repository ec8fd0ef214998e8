#pragma once

#include <string>

namespace rpcate {

/// Verbosity from the RPCATE_LOG environment variable:
/// 0 silent, 1 progress (default), 2 debug.
int log_level();

/// Writes to stderr when log_level() >= level. Thread-safe.
void log(int level, const std::string& message);

}  // namespace rpcate

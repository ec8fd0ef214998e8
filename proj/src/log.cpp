#include "rpcate/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace rpcate {

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("RPCATE_LOG");
        if (env == nullptr || *env == '\0') return 1;
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0') return 1;
        return static_cast<int>(v);
    }();
    return level;
}

void log(int level, const std::string& message) {
    if (log_level() < level) return;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << message << "\n";
}

}  // namespace rpcate

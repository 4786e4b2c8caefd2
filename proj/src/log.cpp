#include "plvcsar/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <unordered_set>

namespace plvcsar {

namespace {
std::atomic<bool> g_warnings_enabled{true};
std::mutex g_mutex;
std::unordered_set<std::string>& seen_messages() {
  static std::unordered_set<std::string> seen;
  return seen;
}
}  // namespace

void warn(const std::string& message) {
  if (!g_warnings_enabled.load(std::memory_order_relaxed)) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  if (seen_messages().insert(message).second) {
    std::cerr << "[plvcsar] warning: " << message << '\n';
  }
}

void set_warnings_enabled(bool enabled) {
  g_warnings_enabled.store(enabled, std::memory_order_relaxed);
}

}  // namespace plvcsar

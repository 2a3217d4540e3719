#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace vrf {

namespace detail {
inline std::atomic<std::size_t>& thread_limit_override() {
  static std::atomic<std::size_t> v{0};
  return v;
}
}  // namespace detail

/// Intra-op thread cap: `VRF_THREADS` if set to a positive integer, else 1.
inline std::size_t max_threads() {
  if (std::size_t o = detail::thread_limit_override().load(); o != 0) return o;
  static const std::size_t from_env = [] {
    const char* env = std::getenv("VRF_THREADS");
    if (env == nullptr) return std::size_t{1};
    try {
      const long v = std::stol(env);
      return v > 0 ? static_cast<std::size_t>(v) : std::size_t{1};
    } catch (...) {
      return std::size_t{1};
    }
  }();
  return from_env;
}

/// Overrides the thread cap for the lifetime of the guard.
class ScopedThreadLimit {
 public:
  explicit ScopedThreadLimit(std::size_t n) : prev_(detail::thread_limit_override().exchange(n)) {}
  ~ScopedThreadLimit() { detail::thread_limit_override().store(prev_); }
  ScopedThreadLimit(const ScopedThreadLimit&) = delete;
  ScopedThreadLimit& operator=(const ScopedThreadLimit&) = delete;

 private:
  std::size_t prev_;
};

/// Runs f(i) for i in [0, count). Work items must write disjoint outputs;
/// each item is computed identically whatever the thread count.
template <class F>
void parallel_for(std::size_t count, F&& f) {
  const std::size_t threads = std::min(max_threads(), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) f(i);
    });
  }
}

}  // namespace vrf

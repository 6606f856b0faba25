#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace veil {

/// Invalid configuration or usage: bad shapes, bad hyperparameters, bad flags.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem and codec failures: missing files, undecodable images, bad model files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical aborts: NaN/Inf where finite values are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void concat_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void concat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  concat_into(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string concat(const Parts&... parts) {
  std::ostringstream os;
  detail::concat_into(os, parts...);
  return os.str();
}

template <typename Err = ConfigError, typename... Parts>
void require(bool cond, const Parts&... parts) {
  if (!cond) throw Err(concat(parts...));
}

/// FNV-1a 64-bit over a byte range. Used for model-file payload checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t state = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state ^= p[i];
    state *= 1099511628211ull;
  }
  return state;
}

/// Process-wide worker count for parallel_for. Defaults to the hardware
/// concurrency; set_thread_count(1) forces fully sequential execution.
inline int& thread_count_ref() {
  static int n = static_cast<int>(std::thread::hardware_concurrency() > 0
                                      ? std::thread::hardware_concurrency()
                                      : 1);
  return n;
}

inline void set_thread_count(int n) { thread_count_ref() = n > 0 ? n : 1; }
inline int thread_count() { return thread_count_ref(); }

/// Splits [0, n) into contiguous chunks, one worker per chunk. Each index is
/// processed by exactly one worker, so results are bit-stable for any thread
/// count as long as the body writes only to locations owned by its indices.
/// Body signature: f(int64_t begin, int64_t end).
template <typename F>
void parallel_for(std::int64_t n, F&& f) {
  if (n <= 0) return;
  int workers = thread_count();
  if (workers > n) workers = static_cast<int>(n);
  if (workers <= 1 || n < 2) {
    f(std::int64_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  std::exception_ptr first_error;
  std::mutex err_mu;
  const std::int64_t chunk = (n + workers - 1) / workers;
  auto run = [&](std::int64_t b, std::int64_t e) {
    try {
      f(b, e);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  for (int w = 1; w < workers; ++w) {
    std::int64_t b = w * chunk;
    std::int64_t e = std::min<std::int64_t>(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back(run, b, e);
  }
  run(0, std::min<std::int64_t>(n, chunk));
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace veil

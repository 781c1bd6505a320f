#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

namespace thermo {

inline unsigned default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// out[k] = fn(k) for k < count on up to `workers` threads. Results keep index order;
/// the exception of the lowest failing index is rethrown.
template <class R>
std::vector<R> parallel_map(std::size_t count, unsigned workers, const std::function<R(std::size_t)>& fn) {
  std::vector<std::optional<R>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        slots[k].emplace(fn(k));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers == 0 ? default_workers() : workers,
                                                     static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace thermo

#include "citeval/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace citeval {

void parallel_for_bounded(std::size_t n, std::size_t max_in_flight,
                          const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (max_in_flight <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::jthread> workers;
  const std::size_t count = std::min(n, max_in_flight);
  workers.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  workers.clear();  // joins
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace citeval

#pragma once

#include <cstddef>
#include <functional>

namespace citeval {

/// Runs fn(i) for i in [0, n) on at most `max_in_flight` threads. The first
/// exception thrown by fn is rethrown after all workers finish.
void parallel_for_bounded(std::size_t n, std::size_t max_in_flight,
                          const std::function<void(std::size_t)>& fn);

}  // namespace citeval

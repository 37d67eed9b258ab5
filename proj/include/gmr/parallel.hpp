#pragma once

#include <cstddef>
#include <functional>

namespace gmr {

/// Worker count used when a caller passes 0: the value set through
/// set_default_threads, else the GMR_THREADS environment variable, else 1.
std::size_t default_threads();
void set_default_threads(std::size_t threads);

/// Runs fn(i) for i in [0, count) on up to `threads` workers (0 = default).
/// Each index is visited exactly once; the first exception thrown by any
/// worker is rethrown on the calling thread.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace gmr

#pragma once

#include <cstddef>
#include <functional>

namespace aoct {

/// Worker count: AOCT_THREADS when set, otherwise hardware concurrency.
int thread_count();

/// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
/// The chunk partition depends only on (n, chunk_size), never on the worker
/// count, so per-chunk outputs can be reduced in chunk order for results that
/// are independent of scheduling.
void parallel_chunks(size_t n, size_t chunk_size,
                     const std::function<void(size_t, size_t, size_t)>& fn);

inline size_t chunk_count(size_t n, size_t chunk_size) {
  return n == 0 ? 0 : (n + chunk_size - 1) / chunk_size;
}

}  // namespace aoct

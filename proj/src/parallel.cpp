#include "aoct/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace aoct {

int thread_count() {
  if (const char* env = std::getenv("AOCT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_chunks(size_t n, size_t chunk_size,
                     const std::function<void(size_t, size_t, size_t)>& fn) {
  if (n == 0) return;
  const size_t chunks = chunk_count(n, chunk_size);
  const size_t workers = std::min<size_t>(static_cast<size_t>(thread_count()), chunks);

  if (workers <= 1) {
    for (size_t c = 0; c < chunks; ++c)
      fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }

  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace aoct

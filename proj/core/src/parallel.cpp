#include "stpd/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stpd {

namespace {

int initial_threads()
{
  if (char const *env = std::getenv("STPD_THREADS")) {
    int const n = std::atoi(env);
    if (n > 0) { return n; }
  }
  return 1;
}

std::atomic<int> &thread_setting()
{
  static std::atomic<int> n{initial_threads()};
  return n;
}

} // namespace

int num_threads() { return thread_setting().load(); }

void set_num_threads(int n) { thread_setting().store(std::max(1, n)); }

void parallel_for(std::size_t n, std::function<void(std::size_t)> const &body)
{
  auto const workers = std::min<std::size_t>(static_cast<std::size_t>(num_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) { body(i); }
    return;
  }

  // Static contiguous partition: which thread computes an index never depends
  // on timing.
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t const lo = n * w / workers;
    std::size_t const hi = n * (w + 1) / workers;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) { body(i); }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) { error = std::current_exception(); }
      }
    });
  }
  for (auto &t : pool) { t.join(); }
  if (error) { std::rethrow_exception(error); }
}

} // namespace stpd

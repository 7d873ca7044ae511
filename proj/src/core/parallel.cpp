#include "asplat/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

namespace asplat {
namespace {

std::mutex g_mutex;
int g_threads = 1;
std::unique_ptr<tbb::task_arena> g_arena;

}  // namespace

void set_thread_count(int n) {
  std::lock_guard<std::mutex> lock(g_mutex);
  n = std::max(1, n);
  if (n == g_threads && (n == 1 || g_arena)) return;
  g_threads = n;
  g_arena.reset();
  if (n > 1) g_arena = std::make_unique<tbb::task_arena>(n);
}

int thread_count() {
  std::lock_guard<std::mutex> lock(g_mutex);
  return g_threads;
}

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ASPLAT_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return 1;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  tbb::task_arena* arena = nullptr;
  {
    std::lock_guard<std::mutex> lock(g_mutex);
    arena = g_arena.get();
  }
  if (arena == nullptr || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  arena->execute([&] {
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n),
                      [&](const tbb::blocked_range<std::size_t>& r) {
                        for (std::size_t i = r.begin(); i != r.end(); ++i) body(i);
                      });
  });
}

}  // namespace asplat

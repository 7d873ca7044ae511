#pragma once

#include <cstddef>
#include <functional>

namespace asplat {

// Worker count used by every parallel loop in the library. Results never
// depend on it: each index writes a disjoint output and reductions happen
// in index order afterwards.
void set_thread_count(int n);
int thread_count();

// Resolves `requested` (0 = unset) against ASPLAT_THREADS, defaulting to 1.
int resolve_thread_count(int requested);

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace asplat

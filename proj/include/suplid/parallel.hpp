#pragma once

#include <cstddef>
#include <functional>

namespace suplid {

// Worker count used by parallel_for. Initialized from SUPLID_THREADS when set,
// otherwise from std::thread::hardware_concurrency().
unsigned num_threads();
void set_num_threads(unsigned n);

// Calls body(begin, end) over contiguous chunks of [0, n). Chunks are disjoint,
// so bodies that write only to their own indices produce schedule-independent
// results. Nested calls run serially on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace suplid

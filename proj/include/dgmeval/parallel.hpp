#pragma once

#include <cstddef>
#include <functional>

namespace dgmeval {

// Worker count: explicit value if > 0, else DGMEVAL_THREADS, else hardware.
unsigned resolve_threads(unsigned requested = 0);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items must
// write only to their own output slots; the first exception is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace dgmeval

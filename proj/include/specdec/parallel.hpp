#pragma once

#include <cstddef>
#include <functional>

namespace specdec {

int hardware_threads();

// Runs fn(i) for i in [0, n). threads <= 1 takes the serial reference path;
// larger counts fan out across OpenMP workers. Callers must make fn's result
// a pure function of i (counter-based RNG, preallocated output slots) so the
// outcome is identical for every thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace specdec

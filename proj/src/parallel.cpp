#include "specdec/parallel.hpp"

#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace specdec {

int hardware_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
#ifdef _OPENMP
    if (threads > 1) {
        // First exception wins; the remaining iterations still run (OpenMP
        // cannot break), then it is rethrown on the calling thread.
        std::exception_ptr err;
        std::mutex err_mu;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            try {
                fn(static_cast<std::size_t>(i));
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        }
        if (err) std::rethrow_exception(err);
        return;
    }
#else
    (void)threads;
#endif
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace specdec

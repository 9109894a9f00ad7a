#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nashpar {

// serial runs every node loop in order; openmp splits per-level node maps
// across threads. Reductions are never parallelized, so both policies give
// bit-identical results.
struct ExecPolicy {
    enum class Kind { serial, openmp };
    Kind kind = Kind::serial;
    int threads = 1;

    static ExecPolicy sequential() { return {}; }

    static ExecPolicy with_threads(int n) {
        ExecPolicy p;
#ifdef _OPENMP
        if (n > 1) {
            p.kind = Kind::openmp;
            p.threads = n;
        }
#else
        (void)n;
#endif
        return p;
    }
};

// Apply f to every tree node index in [0, n). Each slot is written by exactly
// one invocation, so the parallel path is a pure map.
template <class F>
void for_each_node(const ExecPolicy& exec, std::int64_t n, F&& f) {
#ifdef _OPENMP
    if (exec.kind == ExecPolicy::Kind::openmp && n > 1) {
#pragma omp parallel for schedule(static) num_threads(exec.threads)
        for (std::int64_t p = 0; p < n; ++p) f(p);
        return;
    }
#endif
    for (std::int64_t p = 0; p < n; ++p) f(p);
}

} // namespace nashpar

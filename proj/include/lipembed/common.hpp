#pragma once

// Shared error types and small utilities used across the library.

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace lipembed {

// Error categories. Bad user input (configs, malformed arguments) is a
// config_error and maps to CLI exit code 2; everything else maps to 1.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Request outside the representable range (window exhausted, horizon exceeded).
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// A documented precondition of an operation does not hold.
struct precondition_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Internal consistency check failed on data that should be valid.
struct integrity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Rejection sampling exhausted its try budget.
struct sampling_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Uniform double in [0,1) with a fully specified mapping from engine output,
// so seeded runs replay bit-identically on any platform.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Derive a per-stage seed from a base seed (splitmix64 step).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Worker count: LIPEMBED_WORKERS if set and positive, else hardware threads.
inline unsigned worker_count() {
    if (const char* env = std::getenv("LIPEMBED_WORKERS")) {
        long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<unsigned>(n);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

// Chunked parallel loop over [0, n). Results must be written to
// index-addressed storage by the body; reduction order is then independent
// of the worker count, which keeps reports deterministic.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    unsigned workers = worker_count();
    if (workers <= 1 || n < 2 * workers) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace lipembed

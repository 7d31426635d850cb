#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace resstream {

// ---- hashing ---------------------------------------------------------------

inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 1469598103934665603ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 1469598103934665603ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

inline std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Short 8-hex-digit form used in artifact filenames.
inline std::string hex32(uint64_t v) {
    char buf[9];
    std::snprintf(buf, sizeof(buf), "%08x", static_cast<unsigned>(v ^ (v >> 32)));
    return buf;
}

// ---- seeded rng ------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

// ---- formatting ------------------------------------------------------------

/// Round-trippable float formatting for CSV/JSON-ish text artifacts.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

// ---- job-level parallelism --------------------------------------------------

/// Runs fn(i) for i in [0, n). `workers` <= 0 selects hardware concurrency.
/// The first exception thrown by any worker is rethrown after all join.
inline void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 2;
    int w = workers > 0 ? workers : hw;
    if (w > n) w = static_cast<int>(n);
    if (w <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int64_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(w));
    for (int t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                int64_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace resstream

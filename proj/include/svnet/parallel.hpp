#pragma once

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace svnet {

// Paths are independent work units, but results must not depend on how many
// workers happen to run. The scheme here: items are cut into fixed-size
// chunks, workers claim chunk indices from an atomic counter, each chunk is
// processed sequentially in item order, and the caller combines the per-chunk
// results in chunk order afterwards.

inline constexpr std::size_t kPathChunk = 4096;

// SVNET_THREADS overrides the worker count (any positive integer); otherwise
// hardware concurrency is used.
inline std::size_t worker_count() {
    if (const char* env = std::getenv("SVNET_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0 && v <= 1024) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// work(begin, end) -> Result for the half-open item range of one chunk.
// Returns the per-chunk results indexed by chunk, independent of scheduling.
template <typename Result, typename Work>
std::vector<Result> run_chunks(std::size_t n_items, std::size_t chunk_size, Work&& work) {
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t n_chunks = (n_items + chunk_size - 1) / chunk_size;
    std::vector<Result> results(n_chunks);
    if (n_chunks == 0) return results;

    auto run_one = [&](std::size_t c) {
        const std::size_t begin = c * chunk_size;
        const std::size_t end = begin + chunk_size < n_items ? begin + chunk_size : n_items;
        results[c] = work(begin, end);
    };

    const std::size_t workers = std::min(worker_count(), n_chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) run_one(c);
        return results;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                run_one(c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

} // namespace svnet

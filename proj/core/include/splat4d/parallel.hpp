#pragma once

#include <cstddef>
#include <functional>

namespace splat4d {

/// Number of worker threads used by the data-parallel kernels. 0 selects
/// std::thread::hardware_concurrency().
void set_thread_count(std::size_t n);
[[nodiscard]] std::size_t thread_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and `grain`, never on the thread count, so callers that
/// reduce per chunk and merge in chunk order get bit-identical results for
/// any number of threads.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Number of chunks parallel_for will create for (n, grain).
[[nodiscard]] constexpr std::size_t chunk_count(std::size_t n, std::size_t grain) {
    return grain == 0 ? 0 : (n + grain - 1) / grain;
}

}  // namespace splat4d

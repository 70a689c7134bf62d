#pragma once

#include <cstddef>
#include <functional>

namespace splat {

inline constexpr int kRenderChunks = 16;

/// Split [0, n) into `chunks` contiguous ranges and run `fn(chunk, begin,
/// end)` for each, distributing chunks over worker threads. The chunk
/// decomposition is fixed, so any per-chunk buffers combined in chunk order
/// give results independent of the thread count.
void parallel_chunks(std::size_t n, int chunks,
                     const std::function<void(int, std::size_t, std::size_t)>& fn);

}  // namespace splat

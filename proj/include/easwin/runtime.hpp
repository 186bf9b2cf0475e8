// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace easwin {

/// Worker threads to use: EASWIN_THREADS if set and positive, otherwise the
/// hardware concurrency (at least 1).
int worker_threads();

/// Calls fn(i) for i in [0, n) on up to worker_threads() threads. Work is
/// split into contiguous ranges, so results written by index are identical
/// for any thread count. The first exception thrown is rethrown.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

/// Keeps freed tensor buffers in the process heap instead of returning them
/// to the OS. Training allocates and frees the same large buffers every step,
/// and fresh pages cost more than the arithmetic. No-op outside glibc.
void tune_allocator();

}  // namespace easwin

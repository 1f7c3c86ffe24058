#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace vsi {

/// Worker count: VSI_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
unsigned thread_count();

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
/// write only to slot i so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Stateless seed derivation (splitmix64) for per-item RNG streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

} // namespace vsi

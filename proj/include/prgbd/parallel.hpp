#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace prgbd {

/// Worker count: PRGBD_THREADS when set (>= 1), else hardware concurrency.
int worker_count();

/// Run fn(i) for i in [0, n). Work is split into contiguous chunks; callers
/// that write only to slot i get results independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// splitmix64 over (root, stream): independent deterministic seeds per module.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

}  // namespace prgbd

#pragma once

#include <cstddef>
#include <functional>

namespace mesoforge {

/// Worker count used by parallel_for. Defaults to 1. Results of every
/// primitive are independent of this value: work is split by batch item or
/// channel and reductions are combined in a fixed order.
void set_num_threads(int threads);
int num_threads();

/// Keeps freed tensor buffers in the process heap instead of unmapping them,
/// so the large per-step activations are not page-faulted in again on every
/// training step. No effect outside glibc.
void tune_allocator();

/// Calls body(i) for i in [0, count), statically partitioned across workers.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t)>& body);

}  // namespace mesoforge

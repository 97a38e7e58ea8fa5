#pragma once

#include <cstddef>
#include <functional>

namespace cascs {

/// Worker cap used by per-block and per-tile loops. 0 means hardware concurrency.
void set_num_threads(int n);
int num_threads();

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker, so
/// results are bitwise identical to the serial loop as long as fn only writes
/// to slots owned by i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cascs

#pragma once

#include <functional>

namespace srrn {

// Global worker count for op-internal parallelism. Work is split into
// disjoint index ranges, so results are bit-identical for any count.
void set_thread_count(int n);
int thread_count();

// Runs fn(i) for i in [begin, end), statically partitioned across workers.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace srrn

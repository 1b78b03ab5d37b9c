#pragma once

#include <functional>

namespace stvnn {

// Worker count: STVNN_THREADS when set (>= 1), else the hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. The first
// exception thrown by any task is rethrown after all workers finish.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace stvnn

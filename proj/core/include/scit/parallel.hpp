#pragma once

#include <cstddef>
#include <functional>

namespace scit {

// Number of evaluation worker threads: min(SCIT_THREADS, hardware). Training
// never uses this; it stays single-threaded for bit-reproducibility.
int eval_thread_count();

// Runs fn(i) for i in [0, n) across eval threads. Each index writes its own
// result slot, so the outcome is independent of scheduling.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace scit

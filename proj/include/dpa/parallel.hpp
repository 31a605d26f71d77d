#pragma once

#include <cstddef>
#include <functional>

namespace dpa {

// Runs task(i) for i in [0, n) on up to `workers` threads. Each index runs
// exactly once; callers write results into slot i so the output never
// depends on scheduling. If any task throws, the exception from the lowest
// failing index is rethrown after all workers have joined.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& task);

// Number of workers to use for a requested count; <= 0 means hardware concurrency.
int resolve_workers(int requested);

} // namespace dpa

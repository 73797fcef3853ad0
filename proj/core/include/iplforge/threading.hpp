#pragma once

#include <cstddef>
#include <functional>

namespace iplforge {

// Worker cap used by utterance-parallel loops. Defaults to the hardware
// concurrency; the CLI lowers it via --threads.
void set_worker_threads(std::size_t n);
std::size_t worker_threads();

// Runs fn(i) for i in [0, n). Work is pulled from a shared atomic counter,
// so callers must not depend on assignment order; results should be written
// to index i of a pre-sized buffer. The first exception is rethrown after
// all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace iplforge

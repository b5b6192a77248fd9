#pragma once

#include <cstddef>
#include <functional>

namespace maxentmil {

/// Worker count used by parallel_for: the value set by set_thread_count, else
/// MAXENTMIL_THREADS, else the hardware concurrency.
int thread_count();
void set_thread_count(int threads);

/// Runs body(i) for i in [0, n) on a bounded pool. Work items must write only
/// to their own slot; the first exception thrown is rethrown after all
/// workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace maxentmil

#pragma once

#include <cstddef>
#include <functional>

namespace estas {

// Worker cap for the pure data-pipeline stages; reads ESTAS_LAB_THREADS once
// (default: all cores).
std::size_t thread_budget();

// Runs fn(0..n-1) across the budget. Each index writes only its own slot, so
// callers reduce afterwards in index order and results do not depend on the
// schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace estas

#pragma once

#include <cstddef>
#include <functional>

namespace nrc {

/// Worker count used by parallel_for. 0 means hardware concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(i) for i in [begin, end) split into contiguous chunks. Each
/// index is visited exactly once; callers write to disjoint outputs, so the
/// result does not depend on the thread count.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

}  // namespace nrc

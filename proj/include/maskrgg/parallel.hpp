#pragma once

#include <cstddef>
#include <functional>

namespace maskrgg {

/// Environment variable that overrides the default worker count.
inline constexpr const char* kThreadsEnvVar = "MASKRGG_THREADS";

/// Resolves a worker count: a positive `requested` wins, then the
/// MASKRGG_THREADS environment variable, then hardware concurrency.
unsigned resolve_threads(int requested = 0);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Indices are
/// handed out in contiguous blocks; callers write results into per-index
/// slots and reduce afterwards in index order, so the outcome does not
/// depend on the worker count.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace maskrgg

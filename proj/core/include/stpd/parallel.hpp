#pragma once

#include <cstddef>
#include <functional>

namespace stpd {

/// Worker count used by the frame/view-parallel loops. Initialised from the
/// STPD_THREADS environment variable (default 1). One thread gives bitwise
/// reproducible results; more threads only split work into disjoint output
/// ranges, so values stay identical as well.
int num_threads();
void set_num_threads(int n);

/// Runs body(i) for i in [0, n). Iterations must write disjoint outputs.
void parallel_for(std::size_t n, std::function<void(std::size_t)> const &body);

} // namespace stpd

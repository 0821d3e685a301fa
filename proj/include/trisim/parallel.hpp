// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace trisim {

/// Worker count: TRISIM_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Each index must write only to its own
/// output slot; results are then independent of scheduling. The first
/// exception thrown by any body is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace trisim

#pragma once

#include "coderain/container.hpp"

namespace coderain {

/// Caps the iteration count of a loaded model. Extending past the trained
/// count is only meaningful for benchmark sweeps; the multiscale variant
/// then reuses its final per-iteration thresholds.
void set_iterations(AnyModel& m, int T, bool allow_extend = false);

void apply_toggles(AnyModel& m, const Toggles& t);

}  // namespace coderain

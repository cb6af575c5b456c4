#pragma once

namespace wain {

/// True when WAIN_DETERMINISTIC=1 is set in the environment.
bool deterministic_mode();

/// Applies the process-wide execution mode. In deterministic mode torch runs
/// single-threaded with deterministic kernels; otherwise threading is left at
/// the library default.
void configure_runtime();

}  // namespace wain

#pragma once

namespace otag {

// Number of worker threads for the OpenMP kernels. Honors the OTAG_THREADS
// environment variable (0 or unset = OpenMP default); always 1 in builds
// without OpenMP. Every parallel kernel in this project is a fan-out over
// independent work items with a serial reduction, so results are bitwise
// identical for any thread count.
int thread_count();

// Force a thread count programmatically (tests, benchmarks). 0 restores
// the environment-driven behavior.
void set_thread_override(int n);

}  // namespace otag

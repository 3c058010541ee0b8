#include "otag/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace otag {

namespace {
int g_override = 0;
}

void set_thread_override(int n) { g_override = n; }

int thread_count() {
#ifdef _OPENMP
  if (g_override > 0) return g_override;
  if (const char* env = std::getenv("OTAG_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace otag

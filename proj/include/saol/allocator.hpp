#pragma once

// Training allocates and frees many multi-megabyte buffers per step. glibc
// serves those with mmap by default, which makes every step pay for page
// faults. Raising the thresholds keeps them on the heap.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace saol {

inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

} // namespace saol

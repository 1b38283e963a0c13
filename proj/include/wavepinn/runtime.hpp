#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace wavepinn {

/// Keeps freed jet buffers in the process heap. Without this glibc hands large
/// blocks back to the kernel after every tape and page faults dominate.
inline void configure_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

}  // namespace wavepinn

#pragma once

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#define PBL_HAS_MXCSR 1
#endif

namespace pbl::detail {

// Scoped flush-to-zero / denormals-are-zero for the float execution paths.
// Subnormal arithmetic in the backward pass costs roughly a third of the
// step time on x86 and contributes nothing at float precision.
class FlushDenormals {
 public:
  FlushDenormals() {
#ifdef PBL_HAS_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);  // FTZ | DAZ
#endif
  }
  ~FlushDenormals() {
#ifdef PBL_HAS_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace pbl::detail

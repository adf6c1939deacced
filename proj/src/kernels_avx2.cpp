// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0

// AVX2 variants of the double-accumulation inner loops. Each routine keeps
// the scalar reference's operation order exactly: plain mul + add (no FMA,
// which would round once instead of twice) and the (s0 + s2) + (s1 + s3)
// lane reduction, so results are bit-identical to kernels_scalar.cpp.
#include "specsv/kernels.hpp"

#if defined(SPECSV_HAVE_AVX2)
#include <immintrin.h>

namespace specsv::kernels {

namespace {

double dot_f32_avx2(const float* a, const float* b, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  // lanes hold (s0, s1, s2, s3); reduce as (s0 + s2) + (s1 + s3)
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  __m128d pair = _mm_add_pd(lo, hi);
  double r = _mm_cvtsd_f64(pair) + _mm_cvtsd_f64(_mm_unpackhi_pd(pair, pair));
  for (; i < n; ++i) {
    r += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return r;
}

void axpy_f32_avx2(double w, const float* v, double* out, size_t n) {
  __m256d vw = _mm256_set1_pd(w);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vv = _mm256_cvtps_pd(_mm_loadu_ps(v + i));
    __m256d vo = _mm256_loadu_pd(out + i);
    _mm256_storeu_pd(out + i, _mm256_add_pd(vo, _mm256_mul_pd(vw, vv)));
  }
  for (; i < n; ++i) {
    out[i] += w * static_cast<double>(v[i]);
  }
}

void accum_f32_avx2(const float* v, double* acc, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vv = _mm256_cvtps_pd(_mm_loadu_ps(v + i));
    __m256d va = _mm256_loadu_pd(acc + i);
    _mm256_storeu_pd(acc + i, _mm256_add_pd(va, vv));
  }
  for (; i < n; ++i) {
    acc[i] += static_cast<double>(v[i]);
  }
}

void scale_f64_avx2(double s, double* v, size_t n) {
  __m256d vs = _mm256_set1_pd(s);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(v + i, _mm256_mul_pd(vs, _mm256_loadu_pd(v + i)));
  }
  for (; i < n; ++i) {
    v[i] *= s;
  }
}

}  // namespace

const Kernels* avx2_kernels() {
  if (!__builtin_cpu_supports("avx2")) return nullptr;
  static const Kernels k{dot_f32_avx2, axpy_f32_avx2, accum_f32_avx2,
                         scale_f64_avx2, "avx2"};
  return &k;
}

}  // namespace specsv::kernels

#else

namespace specsv::kernels {
const Kernels* avx2_kernels() { return nullptr; }
}  // namespace specsv::kernels

#endif

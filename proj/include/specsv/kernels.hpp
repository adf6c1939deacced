// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace specsv::kernels {

// Inner loops of the attention and projection paths. Inputs are stored at
// single width, accumulation is double width.
//
// Contract: every implementation of `dot_f32` must produce bit-identical
// results for identical inputs. The canonical reduction order is four
// interleaved partial sums (lane l accumulates indices i with i % 4 == l,
// ascending), combined as (s0 + s2) + (s1 + s3), followed by a sequential
// tail for n % 4 trailing elements. `axpy_f32` and `accum_f32` are
// elementwise and therefore order-free.
struct Kernels {
  // sum_i a[i] * b[i], widened to double before multiplying
  double (*dot_f32)(const float* a, const float* b, size_t n);
  // out[i] += w * v[i]
  void (*axpy_f32)(double w, const float* v, double* out, size_t n);
  // acc[i] += v[i]
  void (*accum_f32)(const float* v, double* acc, size_t n);
  // v[i] *= s
  void (*scale_f64)(double s, double* v, size_t n);
  std::string_view name;
};

const Kernels& scalar_kernels();

// null when this build or this CPU lacks AVX2
const Kernels* avx2_kernels();

// Active implementation: AVX2 when available, else scalar.
// SPECSV_KERNEL=scalar|avx2 in the environment overrides the choice at
// first use; force_implementation overrides it programmatically.
const Kernels& active();
bool force_implementation(std::string_view name);

}  // namespace specsv::kernels

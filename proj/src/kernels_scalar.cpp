// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace specsv::kernels {

namespace {

double dot_f32_scalar(const float* a, const float* b, size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i + 0]) * static_cast<double>(b[i + 0]);
    s1 += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
    s2 += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
    s3 += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
  }
  double r = (s0 + s2) + (s1 + s3);
  for (; i < n; ++i) {
    r += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return r;
}

void axpy_f32_scalar(double w, const float* v, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    out[i] += w * static_cast<double>(v[i]);
  }
}

void accum_f32_scalar(const float* v, double* acc, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    acc[i] += static_cast<double>(v[i]);
  }
}

void scale_f64_scalar(double s, double* v, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    v[i] *= s;
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k{dot_f32_scalar, axpy_f32_scalar, accum_f32_scalar,
                         scale_f64_scalar, "scalar"};
  return k;
}

namespace {

const Kernels* pick_active() {
  const char* env = std::getenv("SPECSV_KERNEL");
  if (env != nullptr) {
    std::string_view want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2_kernels() != nullptr) return avx2_kernels();
  }
  if (const Kernels* simd = avx2_kernels()) return simd;
  return &scalar_kernels();
}

const Kernels*& active_slot() {
  static const Kernels* slot = pick_active();
  return slot;
}

}  // namespace

const Kernels& active() { return *active_slot(); }

bool force_implementation(std::string_view name) {
  if (name == "scalar") {
    active_slot() = &scalar_kernels();
    return true;
  }
  if (name == "avx2" && avx2_kernels() != nullptr) {
    active_slot() = avx2_kernels();
    return true;
  }
  return false;
}

}  // namespace specsv::kernels

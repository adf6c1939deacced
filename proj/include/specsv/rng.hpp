// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstddef>

namespace specsv {

// splitmix64 stream. Weight init, synthetic prompts and test fixtures all
// draw from this instead of <random> so that sequences are bit-stable
// across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [-a, a]
  float next_symmetric(float a) {
    return static_cast<float>((2.0 * next_unit() - 1.0) * a);
  }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // derive an independent stream; `salt` distinguishes consumers
  Rng fork(uint64_t salt) const {
    Rng r(state_ ^ (0x6a09e667f3bcc909ull + salt * 0x9e3779b97f4a7c15ull));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace specsv

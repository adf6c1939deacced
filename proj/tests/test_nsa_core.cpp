// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "specsv/nsa/attention.hpp"
#include "specsv/nsa/cache.hpp"
#include "test_util.hpp"

using namespace specsv;
using namespace specsv::test;

TEST_CASE("config invariants are enforced") {
  nsa::NsaConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  nsa::NsaConfig bad = cfg;
  bad.d = cfg.l + 1;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.l_sel = cfg.d + 1;  // not a multiple of d
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.n = 2;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.n_q_heads = 3;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("compressed block count follows the stride formula") {
  nsa::NsaConfig cfg;
  cfg.l = 32;
  cfg.d = 16;
  CHECK(nsa::compressed_block_count(64, cfg) == 3);   // [0,32) [16,48) [32,64)
  CHECK(nsa::compressed_block_count(31, cfg) == 0);
  CHECK(nsa::compressed_block_count(32, cfg) == 1);
}

TEST_CASE("compressed blocks pool the documented ranges") {
  auto cfg = small_config();  // l=8 d=4
  Rng rng(21);
  auto kv = random_layer_kv(rng, cfg, 16);
  std::vector<float> pe(cfg.l * cfg.d_head);
  for (auto& x : pe) x = rng.next_symmetric(0.2f);

  auto cc = nsa::build_compressed_layer(kv, 16, cfg, pe.data());
  REQUIRE(cc.block_count == 3);  // floor((16-8)/4)+1

  // independent pooling oracle
  for (int64_t b = 0; b < cc.block_count; ++b) {
    for (int64_t x = 0; x < cfg.d_head; ++x) {
      long double mk = 0.0L, mv = 0.0L;
      for (int64_t o = 0; o < cfg.l; ++o) {
        mk += kv.k_row(0, b * cfg.d + o)[x] + pe[o * cfg.d_head + x];
        mv += kv.v_row(0, b * cfg.d + o)[x];
      }
      mk /= cfg.l;
      mv /= cfg.l;
      CHECK(cc.k_block(0, b)[x] == doctest::Approx((double)mk).epsilon(1e-5));
      CHECK(cc.v_block(0, b)[x] == doctest::Approx((double)mv).epsilon(1e-5));
    }
  }
}

TEST_CASE("selection scores: singleton softmax and symmetry") {
  auto cfg = small_config();
  Rng rng(22);

  SUBCASE("one visible compressed block carries total mass 1") {
    auto kv = random_layer_kv(rng, cfg, cfg.l);  // exactly one block
    auto cc = nsa::build_compressed_layer(kv, cfg.l, cfg, nullptr);
    REQUIRE(cc.block_count == 1);
    auto q = random_query(rng, cfg);
    auto scores = nsa::selection_scores(q.data(), cc, cfg.l, cfg);
    const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("identical blocks get equal mass 0.5/0.5 before the remap") {
    // all K rows identical -> both compressed keys identical -> equal
    // logits -> masses 0.5/0.5; with l_sel = l the overlap remap puts
    // 0.5 + 0.25 on selection block 0 and 0.25 on block 1
    nsa::NsaConfig c2 = cfg;
    c2.l_sel = c2.l;  // 8, a multiple of d = 4
    nsa::LayerKv kv(c2.n_kv_heads, c2.d_head);
    std::vector<float> k(c2.n_kv_heads * c2.d_head), v(k.size());
    for (auto& x : k) x = rng.next_symmetric(1.0f);
    for (int64_t r = 0; r < c2.l + c2.d; ++r) {
      for (auto& x : v) x = rng.next_symmetric(1.0f);
      kv.append(k.data(), v.data());
    }
    auto cc = nsa::build_compressed_layer(kv, c2.l + c2.d, c2, nullptr);
    REQUIRE(cc.block_count == 2);
    auto q = random_query(rng, c2);
    auto scores = nsa::selection_scores(q.data(), cc, c2.l + c2.d, c2);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(scores[1] == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("selection scores match a dense recomputation oracle") {
  auto cfg = small_config();
  Rng rng(23);
  const int64_t N = 256;
  auto kv = random_layer_kv(rng, cfg, N);
  std::vector<float> pe(cfg.l * cfg.d_head);
  for (auto& x : pe) x = rng.next_symmetric(0.2f);
  auto cc = nsa::build_compressed_layer(kv, N, cfg, pe.data());
  auto q = random_query(rng, cfg);

  const int64_t visible = 256;
  auto scores = nsa::selection_scores(q.data(), cc, visible, cfg);

  // oracle: explicit softmax over compressed keys per head, mean over
  // heads, overlap-weighted remap
  const int64_t m = cc.visible_blocks(visible, cfg);
  std::vector<double> mass(m, 0.0);
  for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
    std::vector<const float*> keys, vals;
    for (int64_t i = 0; i < m; ++i) {
      keys.push_back(cc.k_block(h / cfg.gqa_group_size(), i));
      vals.push_back(cc.v_block(h / cfg.gqa_group_size(), i));
    }
    auto o = dense_attention_oracle(q.data() + h * cfg.d_head, keys, vals, cfg.d_head);
    // recover per-key weights
    const double scale = 1.0 / std::sqrt((double)cfg.d_head);
    for (int64_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int64_t x = 0; x < cfg.d_head; ++x)
        dot += (double)q[h * cfg.d_head + x] * (double)keys[i][x];
      mass[i] += std::exp(dot * scale - o.mx) / o.den;
    }
  }
  std::vector<double> expect(nsa::selection_block_count(visible, cfg), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    const int64_t lo = i * cfg.d, hi = lo + cfg.l;
    for (int64_t b = lo / cfg.l_sel; b * cfg.l_sel < hi; ++b) {
      const int64_t olo = std::max(lo, b * cfg.l_sel);
      const int64_t ohi = std::min(hi, (b + 1) * cfg.l_sel);
      if (ohi > olo)
        expect[b] += mass[i] / cfg.n_q_heads * (double)(ohi - olo) / (double)cfg.l;
    }
  }
  REQUIRE(scores.size() == expect.size());
  for (size_t i = 0; i < scores.size(); ++i)
    CHECK(scores[i] == doctest::Approx(expect[i]).epsilon(1e-10));
}

TEST_CASE("select_blocks: argsort oracle with explicit forced set") {
  nsa::NsaConfig cfg;
  cfg.l_sel = 64;
  cfg.d = 16;
  const std::vector<double> scores{0.9, 0.1, 0.8, 0.2, 0.7};
  const std::vector<int64_t> forced{0, 4};
  auto idx = nsa::select_blocks(scores, 3, 5 * cfg.l_sel, cfg, forced);
  CHECK(idx.indices == std::vector<int64_t>{0, 2, 4});
  CHECK(idx.forced == std::vector<bool>{true, false, true});
}

TEST_CASE("select_blocks: supply below n selects everything") {
  auto cfg = small_config();
  const std::vector<double> scores{0.3, 0.7};
  auto idx = nsa::select_blocks(scores, 16, 2 * cfg.l_sel, cfg);
  CHECK(idx.indices == std::vector<int64_t>{0, 1});
}

TEST_CASE("select_blocks: derived forced set gives the s >= 3 floor") {
  auto cfg = small_config();  // n = 4
  Rng rng(24);
  const int64_t visible = 8 * cfg.l_sel;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s1(8), s2(8);
    for (auto& x : s1) x = rng.next_unit();
    for (auto& x : s2) x = rng.next_unit();
    // adjacent queries in the same selection block share the visible range
    auto a = nsa::select_blocks(s1, cfg.n, visible, cfg);
    auto b = nsa::select_blocks(s2, cfg.n, visible, cfg);
    int64_t shared = 0;
    for (int64_t x : a.indices)
      for (int64_t y : b.indices)
        if (x == y) ++shared;
    CHECK(shared >= 3);
  }
}

TEST_CASE("compressed branch: trivial and oracle cases") {
  auto cfg = small_config();
  Rng rng(25);

  SUBCASE("zero visible blocks give the empty partial") {
    auto kv = random_layer_kv(rng, cfg, cfg.l);
    auto cc = nsa::build_compressed_layer(kv, cfg.l, cfg, nullptr);
    auto q = random_query(rng, cfg);
    auto parts = nsa::branch_attend_compressed(q.data(), cc, cfg.l - 1, cfg);
    for (const auto& p : parts) {
      CHECK(p.empty());
      for (double x : p.out) CHECK(x == 0.0);
    }
  }

  SUBCASE("one block: output equals its value vector") {
    auto kv = random_layer_kv(rng, cfg, cfg.l);
    auto cc = nsa::build_compressed_layer(kv, cfg.l, cfg, nullptr);
    auto q = random_query(rng, cfg);
    auto parts = nsa::branch_attend_compressed(q.data(), cc, cfg.l, cfg);
    for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
      auto norm = normalized(parts[h]);
      for (int64_t x = 0; x < cfg.d_head; ++x)
        CHECK(norm[x] == static_cast<double>(cc.v_block(0, 0)[x]));
    }
  }

  SUBCASE("three blocks match the two-pass oracle within 1e-12") {
    auto kv = random_layer_kv(rng, cfg, cfg.l + 2 * cfg.d);
    auto cc = nsa::build_compressed_layer(kv, cfg.l + 2 * cfg.d, cfg, nullptr);
    REQUIRE(cc.block_count == 3);
    auto q = random_query(rng, cfg);
    auto parts = nsa::branch_attend_compressed(q.data(), cc, kv.rows, cfg);
    for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
      std::vector<const float*> keys, vals;
      for (int64_t i = 0; i < 3; ++i) {
        keys.push_back(cc.k_block(0, i));
        vals.push_back(cc.v_block(0, i));
      }
      auto o = dense_attention_oracle(q.data() + h * cfg.d_head, keys, vals, cfg.d_head);
      CHECK(max_abs_diff(normalized(parts[h]), o.out) <= 1e-12);
    }
  }
}

TEST_CASE("selected branch: dense limit and ownership exactness") {
  auto cfg = small_config();
  Rng rng(26);
  const int64_t N = 4 * cfg.l_sel;
  auto kv = random_layer_kv(rng, cfg, N);
  auto q = random_query(rng, cfg);

  SUBCASE("empty index set gives the empty partial") {
    auto parts = nsa::branch_attend_selected(q.data(), kv, std::vector<int64_t>{}, nullptr, N, cfg);
    for (const auto& p : parts) CHECK(p.empty());
  }

  SUBCASE("full coverage equals dense attention") {
    std::vector<int64_t> blocks{0, 1, 2, 3};
    auto parts = nsa::branch_attend_selected(q.data(), kv, blocks, nullptr, N, cfg);
    for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
      std::vector<const float*> keys, vals;
      for (int64_t t = 0; t < N; ++t) {
        keys.push_back(kv.k_row(0, t));
        vals.push_back(kv.v_row(0, t));
      }
      auto o = dense_attention_oracle(q.data() + h * cfg.d_head, keys, vals, cfg.d_head);
      CHECK(max_abs_diff(normalized(parts[h]), o.out) <= 1e-12);
    }
  }

  SUBCASE("ownership masking is bit-identical to dropping the block") {
    std::vector<int64_t> all{0, 1, 2, 3};
    std::vector<bool> own{true, false, true, true};
    auto masked = nsa::branch_attend_selected(q.data(), kv, all, &own, N, cfg);
    std::vector<int64_t> dropped{0, 2, 3};
    auto plain = nsa::branch_attend_selected(q.data(), kv, dropped, nullptr, N, cfg);
    for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
      CHECK(masked[h].run_max == plain[h].run_max);
      CHECK(masked[h].run_den == plain[h].run_den);
      for (int64_t x = 0; x < cfg.d_head; ++x) CHECK(masked[h].out[x] == plain[h].out[x]);
    }
  }

  SUBCASE("block beyond the causal bound contributes nothing") {
    std::vector<int64_t> blocks{0, 3};
    auto bounded = nsa::branch_attend_selected(q.data(), kv, blocks, nullptr, cfg.l_sel, cfg);
    std::vector<int64_t> first{0};
    auto plain = nsa::branch_attend_selected(q.data(), kv, first, nullptr, cfg.l_sel, cfg);
    for (int64_t h = 0; h < cfg.n_q_heads; ++h)
      CHECK(max_abs_diff(normalized(bounded[h]), normalized(plain[h])) == 0.0);
  }
}

TEST_CASE("window branch ranges and draft ancestors") {
  auto cfg = small_config();
  cfg.w = 512;
  Rng rng(27);

  SUBCASE("pos=100 w=512 covers 0..100") {
    auto kv = random_layer_kv(rng, cfg, 128);
    auto q = random_query(rng, cfg);
    auto parts = nsa::branch_attend_window(q.data(), kv, 100, cfg.w, 128, nullptr, cfg);
    for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
      std::vector<const float*> keys, vals;
      for (int64_t t = 0; t <= 100; ++t) {
        keys.push_back(kv.k_row(0, t));
        vals.push_back(kv.v_row(0, t));
      }
      auto o = dense_attention_oracle(q.data() + h * cfg.d_head, keys, vals, cfg.d_head);
      CHECK(max_abs_diff(normalized(parts[h]), o.out) <= 1e-12);
    }
  }

  SUBCASE("pos=1000 w=512 covers 489..1000") {
    auto kv = random_layer_kv(rng, cfg, 1001);
    auto q = random_query(rng, cfg);
    auto parts = nsa::branch_attend_window(q.data(), kv, 1000, cfg.w, 1001, nullptr, cfg);
    for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
      std::vector<const float*> keys, vals;
      for (int64_t t = 489; t <= 1000; ++t) {
        keys.push_back(kv.k_row(0, t));
        vals.push_back(kv.v_row(0, t));
      }
      REQUIRE(keys.size() == 512);
      auto o = dense_attention_oracle(q.data() + h * cfg.d_head, keys, vals, cfg.d_head);
      CHECK(max_abs_diff(normalized(parts[h]), o.out) <= 1e-12);
    }
  }

  SUBCASE("draft query with two masked-in ancestors matches the dense oracle") {
    const int64_t c = 64;
    auto kv = random_layer_kv(rng, cfg, c);
    auto scratch = random_layer_kv(rng, cfg, 3);
    auto q = random_query(rng, cfg);
    std::vector<int32_t> admitted{0, 2};  // ancestor chain rows
    nsa::TreeRowsView intra{&scratch, admitted};
    const int64_t pos = c + 1;
    auto parts = nsa::branch_attend_window(q.data(), kv, pos, cfg.w, c, &intra, cfg);
    for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
      std::vector<const float*> keys, vals;
      for (int64_t t = 0; t < c; ++t) {
        keys.push_back(kv.k_row(0, t));
        vals.push_back(kv.v_row(0, t));
      }
      for (int32_t r : admitted) {
        keys.push_back(scratch.k_row(0, r));
        vals.push_back(scratch.v_row(0, r));
      }
      auto o = dense_attention_oracle(q.data() + h * cfg.d_head, keys, vals, cfg.d_head);
      CHECK(max_abs_diff(normalized(parts[h]), o.out) <= 1e-12);
    }
  }
}

TEST_CASE("merge_partials: identity, chunk invariance, commutativity") {
  auto cfg = small_config();
  Rng rng(28);
  const int64_t N = 40;
  auto kv = random_layer_kv(rng, cfg, N);
  auto q = random_query(rng, cfg);

  std::vector<int64_t> whole;
  for (int64_t b = 0; b * cfg.l_sel < N; ++b) whole.push_back(b);
  auto full = nsa::branch_attend_selected(q.data(), kv, whole, nullptr, N, cfg);

  SUBCASE("merge with the empty partial is identity") {
    nsa::BranchPartial empty(cfg.d_head);
    auto merged = nsa::merge_partials(full[0], empty);
    CHECK(merged.run_den == full[0].run_den);
    CHECK(max_abs_diff(merged.out, full[0].out) == 0.0);
  }

  SUBCASE("chunked split merges back within 1e-12") {
    for (int64_t split = 1; split < (int64_t)whole.size(); ++split) {
      std::vector<int64_t> lo(whole.begin(), whole.begin() + split);
      std::vector<int64_t> hi(whole.begin() + split, whole.end());
      auto pl = nsa::branch_attend_selected(q.data(), kv, lo, nullptr, N, cfg);
      auto ph = nsa::branch_attend_selected(q.data(), kv, hi, nullptr, N, cfg);
      for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
        auto merged = nsa::merge_partials(pl[h], ph[h]);
        CHECK(max_abs_diff(normalized(merged), normalized(full[h])) <= 1e-12);
      }
    }
  }

  SUBCASE("merge is commutative on seeded inputs") {
    std::vector<int64_t> lo{0}, hi{1, 2};
    auto pl = nsa::branch_attend_selected(q.data(), kv, lo, nullptr, N, cfg);
    auto ph = nsa::branch_attend_selected(q.data(), kv, hi, nullptr, N, cfg);
    for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
      auto ab = nsa::merge_partials(pl[h], ph[h]);
      auto ba = nsa::merge_partials(ph[h], pl[h]);
      CHECK(ab.run_den == ba.run_den);
      CHECK(max_abs_diff(ab.out, ba.out) == 0.0);
    }
  }
}

TEST_CASE("gated_combine: one-hot gates, empty partials, formula oracle") {
  auto cfg = small_config();
  Rng rng(29);
  auto kv = random_layer_kv(rng, cfg, 32);
  auto q = random_query(rng, cfg);
  std::vector<int64_t> b0{0}, b1{1};
  auto cmp = nsa::branch_attend_selected(q.data(), kv, b0, nullptr, 32, cfg);
  auto slc = nsa::branch_attend_selected(q.data(), kv, b1, nullptr, 32, cfg);
  auto win = nsa::branch_attend_window(q.data(), kv, 31, cfg.w, 32, nullptr, cfg);

  SUBCASE("g=(0,0,1) returns the normalized window branch") {
    nsa::GateVector g{0.0, 0.0, 1.0};
    auto out = nsa::gated_combine(cmp[0], slc[0], win[0], g);
    CHECK(max_abs_diff(out, normalized(win[0])) == 0.0);
  }

  SUBCASE("all empty partials give the zero vector") {
    nsa::BranchPartial e(cfg.d_head);
    nsa::GateVector g{0.9, 0.9, 0.9};
    auto out = nsa::gated_combine(e, e, e, g);
    for (double x : out) CHECK(x == 0.0);
  }

  SUBCASE("matches the scalar formula oracle") {
    nsa::GateVector g{0.3, 0.5, 0.7};
    auto out = nsa::gated_combine(cmp[0], slc[0], win[0], g);
    for (int64_t x = 0; x < cfg.d_head; ++x) {
      const double expect = g.g_cmp * (cmp[0].out[x] / cmp[0].run_den) +
                            g.g_slc * (slc[0].out[x] / slc[0].run_den) +
                            g.g_win * (win[0].out[x] / win[0].run_den);
      CHECK(out[x] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("determinism: identical inputs give bit-identical partials") {
  auto cfg = small_config();
  for (int run = 0; run < 2; ++run) {
    Rng rng(31);
    auto kv = random_layer_kv(rng, cfg, 64);
    auto q = random_query(rng, cfg);
    std::vector<int64_t> blocks{0, 2};
    static std::vector<double> first;
    auto parts = nsa::branch_attend_selected(q.data(), kv, blocks, nullptr, 64, cfg);
    if (run == 0) {
      first = parts[0].out;
    } else {
      CHECK(max_abs_diff(first, parts[0].out) == 0.0);
    }
  }
}

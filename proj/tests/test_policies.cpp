// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <bit>
#include <random>
#include <vector>

#include "zigzag/budget.hpp"
#include "zigzag/metrics.hpp"
#include "zigzag/model.hpp"
#include "zigzag/policies.hpp"
#include "zigzag/rng.hpp"

using namespace zigzag;

namespace {

LayerState make_state(const std::vector<Matrix>& attn) {
  LayerState s;
  s.layer = 0;
  s.attn = attn;
  return s;
}

Matrix random_attention(std::mt19937_64& rng, int w, int n) {
  Matrix a(w, n);
  for (int r = 0; r < w; ++r) {
    double sum = 0.0;
    for (int c = 0; c < n; ++c) {
      a(r, c) = uniform_unit(rng) + 1e-3;
      sum += a(r, c);
    }
    a.row(r) /= sum;
  }
  return a;
}

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

TEST_CASE("policy names round-trip") {
  for (PolicyKind kind :
       {PolicyKind::FullKV, PolicyKind::StreamingLLM, PolicyKind::H2O,
        PolicyKind::SnapKV, PolicyKind::PyramidKV, PolicyKind::ZigZagKV}) {
    CHECK(policy_from_name(policy_name(kind)) == kind);
  }
  CHECK_THROWS_AS(policy_from_name("h20"), ConfigError);
  CHECK_THROWS_AS(policy_from_name(""), ConfigError);
}

TEST_CASE("attention column sums, hand case") {
  Matrix a(3, 5);
  a << 0.2, 0.3, 0.5, 0.0, 0.0,
       0.1, 0.1, 0.4, 0.4, 0.0,
       0.1, 0.1, 0.2, 0.3, 0.3;
  LayerState s = make_state({a});
  Vector sums = attention_column_sums(s, 0);
  REQUIRE(sums.size() == 5);
  CHECK(sums[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(sums[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sums[2] == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(sums[3] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(sums[4] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(attention_column_sums(s, 1), ShapeError);
  CHECK_THROWS_AS(attention_column_sums(s, -1), ShapeError);
}

TEST_CASE("importance scores truncate to the prefix and pool") {
  Matrix a(3, 5);
  a << 0.2, 0.3, 0.5, 0.0, 0.0,
       0.1, 0.1, 0.4, 0.4, 0.0,
       0.1, 0.1, 0.2, 0.3, 0.3;
  LayerState s = make_state({a});

  std::vector<Vector> raw = importance_scores(s, 1);
  REQUIRE(raw.size() == 1);
  REQUIRE(raw[0].size() == 2);  // prefix is n - w = 5 - 3
  CHECK(raw[0][0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(raw[0][1] == doctest::Approx(0.5).epsilon(1e-12));

  std::vector<Vector> pooled = importance_scores(s, 3);
  CHECK(pooled[0][0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pooled[0][1] == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(importance_scores(s, 0), ConfigError);
  CHECK_THROWS_AS(importance_scores(s, 2), ConfigError);
  CHECK_THROWS_AS(importance_scores(s, -3), ConfigError);
}

TEST_CASE("importance scores with a window covering the whole sequence") {
  // Prefix is empty; the raw column sums remain available separately.
  Matrix a = Matrix::Constant(3, 3, 1.0 / 3.0);
  LayerState s = make_state({a});
  std::vector<Vector> scores = importance_scores(s, 1);
  REQUIRE(scores.size() == 1);
  CHECK(scores[0].size() == 0);
  CHECK(attention_column_sums(s, 0).size() == 3);
}

TEST_CASE("streaming keeps sinks plus the most recent positions") {
  BudgetPlan plan = uniform_plan(5, 1);
  EvictionDecision d = decide_streaming(10, plan, 2, 2);
  REQUIRE(d.num_layers() == 1);
  REQUIRE(d.num_heads() == 2);
  CHECK(d.kept[0][0] == std::vector<int>{0, 1, 7, 8, 9});
  CHECK(d.kept[0][1] == std::vector<int>{0, 1, 7, 8, 9});

  EvictionDecision d4 = decide_streaming(10, plan, 4, 1);
  CHECK(d4.kept[0][0] == std::vector<int>{0, 1, 2, 3, 9});

  // Budget below the sink count: sinks absorb the whole budget.
  EvictionDecision tiny = decide_streaming(10, uniform_plan(3, 1), 4, 1);
  CHECK(tiny.kept[0][0] == std::vector<int>{0, 1, 2});

  // Budget at the sequence length keeps everything.
  EvictionDecision all = decide_streaming(10, uniform_plan(10, 1), 4, 1);
  CHECK(all.kept == full_decision(10, 1, 1).kept);

  CHECK_THROWS_AS(decide_streaming(10, plan, -1, 1), ConfigError);
  CHECK_THROWS_AS(decide_streaming(10, BudgetPlan{}, 2, 1), ConfigError);
  CHECK_THROWS_AS(decide_streaming(0, plan, 2, 1), ConfigError);
}

TEST_CASE("h2o keeps heavy hitters plus a recency block") {
  Matrix a = Matrix::Constant(2, 8, 0.125);
  LayerState s = make_state({a});
  s.all_query_sums = {Vector(8)};
  s.all_query_sums[0] << 1, 1, 50, 1, 1, 1, 3, 3;
  std::vector<LayerState> states = {s};

  EvictionDecision d = decide_h2o(states, uniform_plan(4, 1), 0.5);
  CHECK(d.kept[0][0] == std::vector<int>{0, 2, 6, 7});

  // recent_fraction 1: pure recency.
  EvictionDecision rec = decide_h2o(states, uniform_plan(4, 1), 1.0);
  CHECK(rec.kept[0][0] == std::vector<int>{4, 5, 6, 7});

  // recent_fraction 0: pure heavy hitters (50, the two 3s, then the tie at
  // index 0).
  EvictionDecision heavy = decide_h2o(states, uniform_plan(4, 1), 0.0);
  CHECK(heavy.kept[0][0] == std::vector<int>{0, 2, 6, 7});

  CHECK_THROWS_AS(decide_h2o(states, uniform_plan(4, 1), -0.1), ConfigError);
  CHECK_THROWS_AS(decide_h2o(states, uniform_plan(4, 1), 1.1), ConfigError);
}

TEST_CASE("h2o falls back to window sums when full sums are absent") {
  Matrix a(2, 8);
  a << 0, 0, 1, 0, 0, 0, 0, 0,
       0, 0, 1, 0, 0, 0, 0, 0;
  LayerState s = make_state({a});  // no all_query_sums
  std::vector<LayerState> states = {s};
  EvictionDecision d = decide_h2o(states, uniform_plan(4, 1), 0.5);
  CHECK(d.kept[0][0] == std::vector<int>{0, 2, 6, 7});
}

TEST_CASE("snapkv prefix selection matches the exhaustive mass optimum") {
  std::mt19937_64 rng(501);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 6 + static_cast<int>(uniform_below(rng, 7));   // 6..12
    const int w = 2 + static_cast<int>(uniform_below(rng, 3));   // 2..4
    const int b =
        w + 1 + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n - w - 1)));
    Matrix a = random_attention(rng, w, n);
    std::vector<LayerState> states = {make_state({a})};

    EvictionDecision d = decide_snapkv(states, uniform_plan(b, 1), 1);
    const std::vector<int>& kept = d.kept[0][0];
    CHECK(static_cast<int>(kept.size()) == b);
    for (int p = n - w; p < n; ++p) CHECK(contains(kept, p));

    // Column sums by plain loops.
    std::vector<double> sums(n, 0.0);
    for (int r = 0; r < w; ++r) {
      for (int c = 0; c < n; ++c) sums[c] += a(r, c);
    }
    double kept_mass = 0.0;
    for (int p : kept) {
      if (p < n - w) kept_mass += sums[p];
    }
    // Exhaustive best (b - w)-subset of the prefix.
    const int prefix = n - w;
    double best = 0.0;
    for (unsigned mask = 0; mask < (1u << prefix); ++mask) {
      if (std::popcount(mask) != b - w) continue;
      double m = 0.0;
      for (int i = 0; i < prefix; ++i) {
        if (mask & (1u << i)) m += sums[i];
      }
      best = std::max(best, m);
    }
    CHECK(kept_mass == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("snapkv rejects budgets that do not exceed the window") {
  std::mt19937_64 rng(7);
  Matrix a = random_attention(rng, 3, 8);
  std::vector<LayerState> states = {make_state({a})};
  CHECK_THROWS_AS(decide_snapkv(states, uniform_plan(3, 1), 1), ConfigError);
  CHECK_THROWS_AS(decide_snapkv(states, uniform_plan(2, 1), 1), ConfigError);
  CHECK_NOTHROW(decide_snapkv(states, uniform_plan(4, 1), 1));
}

TEST_CASE("pyramidkv uses the snapkv selector per layer") {
  std::mt19937_64 rng(19);
  std::vector<LayerState> states = {
      make_state({random_attention(rng, 2, 10)}),
      make_state({random_attention(rng, 2, 10)})};

  // min_ratio 1 degenerates the pyramid to uniform budgets, so the decision
  // must coincide with snapkv at the same mean budget.
  BudgetPlan flat = pyramid_plan(6, 2, 1.0);
  CHECK(decide_pyramidkv(states, flat, 1).kept ==
        decide_snapkv(states, uniform_plan(6, 2), 1).kept);

  // A real pyramid: kept sizes follow the descending plan.
  BudgetPlan steep = pyramid_plan(6, 2, 0.5);  // budgets {9, 3}
  REQUIRE(steep.budgets == std::vector<int>{9, 3});
  EvictionDecision d = decide_pyramidkv(states, steep, 1);
  CHECK(d.kept[0][0].size() == 9);
  CHECK(d.kept[1][0].size() == 3);
}

TEST_CASE("zigzag allocates by uncertainty and selects like snapkv") {
  // Layer A: uniform attention over n=12, LMBA 11. Layer B: one-hot, LMBA 1.
  // With B=6, b_bound=2: raw = 2 + 8u -> {9.33, 2.67} -> plan {9, 3}.
  Matrix diffuse = Matrix::Constant(2, 12, 1.0 / 12.0);
  Matrix peaked = Matrix::Zero(2, 12);
  peaked(0, 0) = 1.0;
  peaked(1, 0) = 1.0;
  std::vector<LayerState> states = {make_state({diffuse}), make_state({peaked})};

  PolicyResult r = decide_zigzag(states, 6, 2, 1);
  CHECK(r.plan.budgets == std::vector<int>{9, 3});
  CHECK(r.plan.total == 12);
  CHECK(r.decision.kept[0][0] ==
        std::vector<int>{0, 1, 2, 3, 4, 5, 6, 10, 11});
  CHECK(r.decision.kept[1][0] == std::vector<int>{0, 10, 11});

  // Default bound is budget / 2 = 3: raw = 3 + 6u -> {8.5, 3.5} -> {9, 3}
  // after largest-remainder rounding (both remainders 0.5, lower layer wins).
  PolicyResult rd = decide_zigzag(states, 6, -1, 1);
  CHECK(rd.plan.budgets == std::vector<int>{9, 3});
}

TEST_CASE("zigzag degrades gracefully when a layer budget falls in the window") {
  Matrix diffuse = Matrix::Constant(2, 12, 1.0 / 12.0);
  Matrix peaked = Matrix::Zero(2, 12);
  peaked(0, 0) = 1.0;
  peaked(1, 0) = 1.0;
  std::vector<LayerState> states = {make_state({diffuse}), make_state({peaked})};

  // B=2, b_bound=0: raw = 4u -> {3.67, 0.33} -> rounded {4, 0} -> floor 1
  // steals from the smaller raw donor's complement -> {3, 1}.
  PolicyResult r = decide_zigzag(states, 2, 0, 1);
  CHECK(r.plan.budgets == std::vector<int>{3, 1});
  CHECK(r.decision.kept[0][0] == std::vector<int>{0, 10, 11});
  CHECK(r.decision.kept[1][0] == std::vector<int>{11});  // most recent only
}

TEST_CASE("zigzag short-circuits to full retention at budget >= n") {
  Matrix diffuse = Matrix::Constant(2, 12, 1.0 / 12.0);
  std::vector<LayerState> states = {make_state({diffuse}),
                                    make_state({diffuse})};
  PolicyResult r = decide_zigzag(states, 12, -1, 1);
  CHECK(r.decision.kept == full_decision(12, 2, 1).kept);
  CHECK(r.plan.total == 24);  // the plan itself stays conserving, uncapped
}

TEST_CASE("score-based selection beats recency on middle-heavy attention") {
  const int n = 10;
  Matrix a(2, n);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < n; ++c) a(r, c) = 0.2 / 9.0;
    a(r, 5) = 0.8;
  }
  std::vector<LayerState> states = {make_state({a})};
  EvictionDecision snap = decide_snapkv(states, uniform_plan(4, 1), 1);
  EvictionDecision stream = decide_streaming(n, uniform_plan(4, 1), 2, 1);
  CHECK(contains(snap.kept[0][0], 5));
  CHECK(!contains(stream.kept[0][0], 5));
  for (int r = 0; r < 2; ++r) {
    Vector row = a.row(r).transpose();
    CHECK(retained_attention_mass(row, snap.kept[0][0]) >
          retained_attention_mass(row, stream.kept[0][0]));
  }
}

TEST_CASE("every policy degenerates to full retention at budget >= n") {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.head_dim = 4;
  cfg.model_dim = 8;
  cfg.vocab_size = 32;
  cfg.seed = 41;
  ToyModel model = build_model(cfg);
  std::vector<int> tokens = make_tokens(5, 10, cfg.vocab_size);
  PrefillResult pre = prefill(model, tokens, 3);
  EvictionDecision full = full_decision(10, 2, 2);

  for (PolicyKind kind :
       {PolicyKind::FullKV, PolicyKind::StreamingLLM, PolicyKind::H2O,
        PolicyKind::SnapKV, PolicyKind::PyramidKV, PolicyKind::ZigZagKV}) {
    for (int budget : {10, 20}) {
      PolicyResult r = run_policy(kind, pre.layers, budget);
      CHECK(r.decision.kept == full.kept);
    }
  }
}

TEST_CASE("run_policy dispatches every policy deterministically") {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.head_dim = 4;
  cfg.model_dim = 8;
  cfg.vocab_size = 32;
  cfg.seed = 41;
  ToyModel model = build_model(cfg);
  std::vector<int> tokens = make_tokens(5, 12, cfg.vocab_size);
  PrefillResult pre = prefill(model, tokens, 3);
  const int n = 12;

  PolicyConfig config;
  config.pyramid_min_ratio = 0.7;  // keeps the top layer above the window
  for (PolicyKind kind :
       {PolicyKind::FullKV, PolicyKind::StreamingLLM, PolicyKind::H2O,
        PolicyKind::SnapKV, PolicyKind::PyramidKV, PolicyKind::ZigZagKV}) {
    PolicyResult r = run_policy(kind, pre.layers, 6, config);
    REQUIRE(r.decision.num_layers() == 2);
    REQUIRE(r.decision.num_heads() == 2);
    for (int l = 0; l < 2; ++l) {
      for (int h = 0; h < 2; ++h) {
        const std::vector<int>& kept = r.decision.kept[l][h];
        CHECK(!kept.empty());
        CHECK(static_cast<int>(kept.size()) <= n);
        CHECK(std::is_sorted(kept.begin(), kept.end()));
        if (kind != PolicyKind::FullKV) {
          CHECK(static_cast<int>(kept.size()) ==
                std::min(r.plan.budgets[l], n));
        }
      }
    }
    PolicyResult again = run_policy(kind, pre.layers, 6, config);
    CHECK(again.decision.kept == r.decision.kept);
    CHECK(again.plan.budgets == r.plan.budgets);
  }
}

TEST_CASE("snap-family decisions always contain the observation window") {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.head_dim = 4;
  cfg.model_dim = 8;
  cfg.vocab_size = 32;
  cfg.seed = 9;
  ToyModel model = build_model(cfg);
  std::vector<int> tokens = make_tokens(2, 14, cfg.vocab_size);
  PrefillResult pre = prefill(model, tokens, 4);
  const int n = 14, w = 4;

  PolicyConfig config;
  config.pyramid_min_ratio = 0.9;
  for (PolicyKind kind :
       {PolicyKind::SnapKV, PolicyKind::PyramidKV, PolicyKind::ZigZagKV}) {
    PolicyResult r = run_policy(kind, pre.layers, 8, config);
    for (int l = 0; l < 2; ++l) {
      for (int h = 0; h < 2; ++h) {
        if (r.plan.budgets[l] <= w) continue;  // zigzag graceful range
        for (int p = n - w; p < n; ++p) {
          CHECK(contains(r.decision.kept[l][h], p));
        }
      }
    }
  }
}

// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <doctest.h>

#include "oracles.hpp"
#include "trisim/errors.hpp"
#include "trisim/metrics.hpp"
#include "trisim/pruning.hpp"
#include "trisim/toymodel.hpp"

using namespace trisim;
using doctest::Approx;

namespace {

Eigen::Index count_zero_weights(const Checkpoint& c) {
  Eigen::Index n = 0;
  for (const auto& l : c.layers) n += (l.weight.array() == 0.0).count();
  return n;
}

// Weights drawn from a handful of magnitudes so ties are everywhere.
Checkpoint tied(const std::string& arch, std::uint64_t seed) {
  Checkpoint c = init_mlp(parse_arch(arch), seed);
  oracle::Lcg rng(seed);
  for (auto& l : c.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) {
      l.weight.data()[i] = (rng.below(2) ? 1.0 : -1.0) * (1 + rng.below(4)) * 0.25;
    }
  }
  return c;
}

// Sort-by-magnitude oracle: flattened (layer, row-major) positions of the
// weights that should be zeroed.
std::vector<std::size_t> oracle_zeroed(const Checkpoint& c, double s) {
  std::vector<double> flat;
  for (const auto& l : c.layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) flat.push_back(l.weight(i, j));
    }
  }
  std::vector<std::size_t> idx(flat.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double fa = std::fabs(flat[a]), fb = std::fabs(flat[b]);
    return fa != fb ? fa < fb : a < b;
  });
  idx.resize(static_cast<std::size_t>(std::llround(s * static_cast<double>(flat.size()))));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> zeroed_positions(const PruneMask& m) {
  std::vector<std::size_t> out;
  std::size_t base = 0;
  for (const auto& k : m.keep) {
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
      for (Eigen::Index j = 0; j < k.cols(); ++j) {
        if (!k(i, j)) out.push_back(base + static_cast<std::size_t>(i * k.cols() + j));
      }
    }
    base += static_cast<std::size_t>(k.size());
  }
  return out;
}

}  // namespace

TEST_CASE("four-weight example") {
  Checkpoint c = init_mlp(parse_arch("2:2"), 1);
  c.layers[0].weight << 0.1, -0.5, 0.3, -0.2;
  c.layers[0].bias << 0.01, -0.02;
  const Checkpoint p = prune(c, 0.5);
  Eigen::Matrix2d expected;
  expected << 0.0, -0.5, 0.3, 0.0;
  CHECK(p.layers[0].weight == expected);
  CHECK(p.layers[0].bias == c.layers[0].bias);
}

TEST_CASE("counts follow round-half-away-from-zero") {
  CHECK(pruned_count(0.5, 5) == 3);
  CHECK(pruned_count(0.25, 10) == 3);
  CHECK(pruned_count(0.0, 10) == 0);
  CHECK(pruned_count(1.0, 10) == 10);
  CHECK_THROWS_AS(pruned_count(-0.1, 10), ValidationError);
  CHECK_THROWS_AS(pruned_count(1.1, 10), ValidationError);
}

TEST_CASE("masks match the sorting oracle, ties included") {
  for (const char* arch : {"3:4:2", "5:5", "2:7:3:4"}) {
    const Checkpoint c = tied(arch, 3);
    for (int k = 0; k <= 20; ++k) {
      const double s = k / 20.0;
      const PruneMask m = global_magnitude_mask(c, s);
      CHECK(zeroed_positions(m) == oracle_zeroed(c, s));
      CHECK(m.zeroed_count == pruned_count(s, m.prunable_count));
    }
  }
}

TEST_CASE("extremes") {
  const Checkpoint c = init_mlp(parse_arch("4:6:3"), 2);
  const PruneMask none = global_magnitude_mask(c, 0.0);
  CHECK(none.zeroed_count == 0);
  CHECK(none.prunable_count == 4 * 6 + 6 * 3);
  const Checkpoint same = apply_mask(c, none);
  for (std::size_t l = 0; l < c.layers.size(); ++l) {
    CHECK(same.layers[l].weight == c.layers[l].weight);
    CHECK(same.layers[l].bias == c.layers[l].bias);
  }
  Checkpoint biased = c;
  biased.layers[1].bias << 1, 2, 3;
  const Checkpoint all = prune(biased, 1.0);
  CHECK(count_zero_weights(all) == 42);
  CHECK(all.layers[1].bias == biased.layers[1].bias);
  CHECK(all.model_id == c.model_id);
}

TEST_CASE("exact counts, nesting and idempotence over a fine grid") {
  for (const char* arch : {"3:5:2", "8:16:4", "4:4:4:4", "10:3", "6:9:5"}) {
    for (bool with_ties : {false, true}) {
      const Checkpoint c = with_ties ? tied(arch, 5) : init_mlp(parse_arch(arch), 5);
      std::vector<std::size_t> previous;
      for (int k = 0; k <= 100; ++k) {
        const double s = k / 100.0;
        const PruneMask m = global_magnitude_mask(c, s);
        const Checkpoint p = apply_mask(c, m);
        CHECK(count_zero_weights(p) == pruned_count(s, m.prunable_count));
        const auto z = zeroed_positions(m);
        CHECK(std::includes(z.begin(), z.end(), previous.begin(), previous.end()));
        previous = z;
        const Checkpoint twice = apply_mask(p, m);
        for (std::size_t l = 0; l < p.layers.size(); ++l) CHECK(twice.layers[l].weight == p.layers[l].weight);
      }
    }
  }
}

TEST_CASE("mask shape mismatch") {
  const Checkpoint a = init_mlp(parse_arch("3:4:2"), 1);
  const Checkpoint b = init_mlp(parse_arch("3:5:2"), 1);
  CHECK_THROWS_AS(apply_mask(b, global_magnitude_mask(a, 0.5)), ValidationError);
}

TEST_CASE("sweep anchors") {
  const Dataset data = make_blobs(30, 4, 3, 0.4, 1);
  const Eigen::MatrixXd probe = make_blobs(10, 4, 3, 0.4, 2).X;
  TrainConfig cfg;
  cfg.epochs = 10;
  const Checkpoint a = train_sgd(init_mlp(parse_arch("4:8:8:3"), 1), data, cfg);
  cfg.seed = 1;
  const Checkpoint b = train_sgd(init_mlp(parse_arch("4:8:8:3"), 2), data, cfg);

  const SparsitySweepResult r0 = sparsity_sweep(a, b, data, probe, {0.0});
  CHECK(r0.self_sim_a[0] == 1.0);
  CHECK(r0.self_sim_b[0] == 1.0);
  CHECK(r0.acc_a[0] == accuracy(a, data));
  CHECK(r0.acc_b[0] == accuracy(b, data));
  const double matched =
      mean_matched_layer_similarity(forward(a, probe, "p").activations, forward(b, probe, "p").activations, Metric::cka);
  CHECK(*r0.cross_sim[0] == Approx(matched).epsilon(1e-12));
  CHECK_FALSE(r0.cross_sim_full_matrix_fallback);

  const std::vector<double> levels = {0.0, 0.3, 0.6, 0.9, 1.0};
  const SparsitySweepResult self = sparsity_sweep(a, a, data, probe, levels);
  REQUIRE(self.cross_sim.size() == levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (self.cross_sim[i]) CHECK(*self.cross_sim[i] == 1.0);
    CHECK(self.acc_a[i] == self.acc_b[i]);
  }
  // All weights gone: every hidden layer is constant, so similarity is missing.
  CHECK_FALSE(self.self_sim_a.back().has_value());
  CHECK(self.acc_a.back() >= 0.0);

  const SparsitySweepResult back = sweep_from_json(to_json(self));
  CHECK(back.levels == self.levels);
  CHECK(back.cross_sim == self.cross_sim);
  CHECK(back.self_layers_a == self.self_layers_a);
  const std::string csv = to_csv(self);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(levels.size() + 1));

  CHECK_THROWS_AS(sparsity_sweep(a, b, data, probe, {0.2, 0.4}), ValidationError);
  CHECK_THROWS_AS(sparsity_sweep(a, b, data, probe, {0.0, 0.4, 0.4}), ValidationError);
  CHECK_THROWS_AS(sparsity_sweep(a, b, data, probe, {}), ValidationError);
}

TEST_CASE("sweep across architectures falls back to the full matrix") {
  const Dataset data = make_blobs(20, 4, 3, 0.4, 1);
  const Eigen::MatrixXd probe = make_blobs(8, 4, 3, 0.4, 2).X;
  const Checkpoint a = init_mlp(parse_arch("4:8:3"), 1);
  const Checkpoint b = init_mlp(parse_arch("4:6:5:3"), 2);
  const SparsitySweepResult r = sparsity_sweep(a, b, data, probe, {0.0, 0.5});
  CHECK(r.cross_sim_full_matrix_fallback);
  CHECK(r.cross_layers.empty());
  const double full = layerwise_similarity_matrix(forward(a, probe, "p").activations,
                                                  forward(b, probe, "p").activations, Metric::cka)
                          .mean();
  CHECK(*r.cross_sim[0] == Approx(full).epsilon(1e-12));
}

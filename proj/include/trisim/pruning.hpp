// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0
//
// One-shot global magnitude pruning of weight matrices (biases are never
// pruned) and the sparsity sweep that tracks accuracy and representational
// similarity of two models as both are pruned.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "trisim/tensorio.hpp"
#include "trisim/toymodel.hpp"

namespace trisim {

using KeepMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct PruneMask {
  std::vector<KeepMatrix> keep;  // true = keep; one per weight matrix
  double sparsity = 0.0;
  Eigen::Index prunable_count = 0;  // total weights across all layers
  Eigen::Index zeroed_count = 0;    // round(sparsity * prunable_count)
};

/// Number of weights zeroed at sparsity s: round half away from zero.
Eigen::Index pruned_count(double sparsity, Eigen::Index prunable);

/// Marks the round(s * P) smallest-magnitude weights, pooled over all layers,
/// for removal. Ties in magnitude are broken by (layer index, row-major
/// position), lower first, so masks are nested in s.
PruneMask global_magnitude_mask(const Checkpoint& ckpt, double sparsity);

/// Zeroes masked weights; everything else is copied bit for bit.
Checkpoint apply_mask(const Checkpoint& ckpt, const PruneMask& mask);

inline Checkpoint prune(const Checkpoint& ckpt, double sparsity) {
  return apply_mask(ckpt, global_magnitude_mask(ckpt, sparsity));
}

using OptionalSeries = std::vector<std::optional<double>>;

struct SparsitySweepResult {
  std::vector<double> levels;
  std::vector<double> acc_a, acc_b;
  OptionalSeries self_sim_a, self_sim_b;  // mean over layers, pruned vs original
  OptionalSeries cross_sim;               // pruned A vs pruned B

  // Per level, per layer. cross_layers is empty when the models' layers do
  // not align and cross_sim falls back to the full-matrix mean.
  std::vector<std::string> layers_a, layers_b;
  std::vector<OptionalSeries> self_layers_a, self_layers_b, cross_layers;

  bool cross_sim_full_matrix_fallback = false;
};

/// Mean of the present values; nullopt when none are present.
std::optional<double> mean_present(const OptionalSeries& values);

/// For each level: prune both checkpoints, score accuracy on eval_data,
/// record activations on probe and compare them with the unpruned originals
/// (self similarity) and with each other (cross similarity), all with linear
/// CKA. Degenerate similarity cells are recorded as missing. Levels must be
/// ascending and start at 0.
SparsitySweepResult sparsity_sweep(const Checkpoint& ckpt_a, const Checkpoint& ckpt_b,
                                   const Dataset& eval_data, const Eigen::MatrixXd& probe,
                                   const std::vector<double>& levels);

void validate_levels(const std::vector<double>& levels);

nlohmann::json to_json(const SparsitySweepResult& r);
SparsitySweepResult sweep_from_json(const nlohmann::json& j);
std::string to_csv(const SparsitySweepResult& r);

}  // namespace trisim

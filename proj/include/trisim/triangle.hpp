// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Functional view (linear mode connectivity, predictive JSD), the per-pair
// three-panel report, and statistics across many pair reports.

#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "trisim/metrics.hpp"
#include "trisim/pruning.hpp"
#include "trisim/tensorio.hpp"
#include "trisim/toymodel.hpp"

namespace trisim {

inline constexpr double kDisagreementThreshold = 0.15;
inline constexpr int kDefaultAlphaCount = 11;

/// 0.0, 0.1, ..., 0.9
std::vector<double> default_sparsity_levels();

/// Parameterwise a + alpha * (b - a). alpha == 0 and alpha == 1 return the
/// endpoints bit for bit. Throws ArchMismatchError for different
/// architectures.
Checkpoint interpolate(const Checkpoint& a, const Checkpoint& b, double alpha);

struct LmcCurve {
  std::vector<double> alphas;
  std::vector<double> accuracies;
  double acc_a = 0.0;
  double acc_b = 0.0;
};

/// Accuracy along the straight path on a uniform grid of n_alphas >= 2 points.
LmcCurve lmc_curve(const Checkpoint& a, const Checkpoint& b, const Dataset& data,
                   int n_alphas = kDefaultAlphaCount);

/// Largest drop of the path accuracy below the straight line between the
/// endpoint accuracies, floored at 0.
double barrier_height(const LmcCurve& curve);

struct PruningBarrier {
  double sparsity = 0.0;
  double barrier = 0.0;
};

/// Barrier between a model and its own pruned copy, per sparsity level.
std::vector<PruningBarrier> self_lmc_under_pruning(const Checkpoint& ckpt, const Dataset& data,
                                                   const std::vector<double>& levels,
                                                   int n_alphas = kDefaultAlphaCount);

// ---------------------------------------------------------------------------

struct StaticPanel {
  SimilarityMatrix cka;
  SimilarityMatrix procrustes;
  double cka_mean = 0.0;  // mean over the full matrix
  double procrustes_mean = 0.0;
  std::optional<double> cka_matched;  // mean of the diagonal, when layers align
  std::optional<double> procrustes_matched;

  double cka_static() const { return cka_matched.value_or(cka_mean); }
  double procrustes_static() const { return procrustes_matched.value_or(procrustes_mean); }
};

StaticPanel static_panel(const ActivationSet& a, const ActivationSet& b);

struct LmcPanel {
  LmcCurve curve;
  double barrier = 0.0;
};

struct JsdPanel {
  double score = 0.0;
  JsdMode mode = JsdMode::mean_dist;
};

using FunctionalPanel = std::variant<LmcPanel, JsdPanel>;

struct TriangleReport {
  std::string model_a, model_b;
  bool same_architecture = true;
  StaticPanel panel1;
  FunctionalPanel panel2;
  SparsitySweepResult panel3;

  double threshold = kDisagreementThreshold;
  double static_score = 0.0;      // CKA static summary
  double procrustes_score = 0.0;  // Procrustes static summary
  std::optional<double> robustness_score;
  bool disagreement = false;

  std::string pair_id() const { return model_a + "|" + model_b; }
  bool uses_lmc() const { return std::holds_alternative<LmcPanel>(panel2); }
};

/// Fills the derived scalars from the panels:
///   static_score     = matched-layer CKA mean if layers align, else full-matrix mean
///   robustness_score = mean of cross_sim over levels s > 0, missing values skipped
///   disagreement     = |CKA static - Procrustes static| > threshold
/// Throws if the panel-2 variant does not match same_architecture.
TriangleReport assemble_triangle_report(std::string model_a, std::string model_b, bool same_architecture,
                                        StaticPanel panel1, FunctionalPanel panel2,
                                        SparsitySweepResult panel3,
                                        double threshold = kDisagreementThreshold);

struct TriangleConfig {
  std::vector<double> levels = default_sparsity_levels();
  int n_alphas = kDefaultAlphaCount;
  JsdMode jsd_mode = JsdMode::mean_dist;
  double threshold = kDisagreementThreshold;
};

/// Static panel from activations on probe, LMC (same architecture) or
/// predictive JSD (different architectures) on eval_data, and the sparsity
/// sweep.
TriangleReport build_triangle_report(const Checkpoint& a, const Checkpoint& b, const Dataset& eval_data,
                                     const Eigen::MatrixXd& probe, const TriangleConfig& cfg = {});

// ---------------------------------------------------------------------------

struct CrossViewStats {
  std::size_t n_pairs = 0;
  double threshold = kDisagreementThreshold;

  // Pairs with a defined robustness score enter the correlation.
  std::vector<std::string> correlated_pairs;
  std::vector<double> static_scores;
  std::vector<double> robustness_scores;
  double pearson_r = 0.0;

  // Every pair, for the CKA-vs-Procrustes agreement view.
  std::vector<std::string> pair_ids;
  std::vector<double> cka_scores;
  std::vector<double> procrustes_scores;
  std::vector<std::string> disagreements;
  double disagreement_rate = 0.0;
};

/// Needs at least 3 reports with defined robustness; throws
/// DegenerateInputError if either score vector is constant.
CrossViewStats crossview_stats(const std::vector<TriangleReport>& reports,
                               double threshold = kDisagreementThreshold);

nlohmann::json to_json(const LmcCurve& c);
LmcCurve lmc_curve_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StaticPanel& p);
StaticPanel static_panel_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TriangleReport& r);
TriangleReport triangle_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CrossViewStats& s);

}  // namespace trisim

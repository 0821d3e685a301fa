// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "trisim/triangle.hpp"

#include <algorithm>
#include <cmath>

#include "trisim/errors.hpp"
#include "trisim/parallel.hpp"

using nlohmann::json;

namespace trisim {

std::vector<double> default_sparsity_levels() {
  std::vector<double> levels;
  for (int i = 0; i <= 9; ++i) levels.push_back(i / 10.0);
  return levels;
}

Checkpoint interpolate(const Checkpoint& a, const Checkpoint& b, double alpha) {
  if (!(a.arch == b.arch)) {
    throw ArchMismatchError("linear interpolation needs identical architectures (" + format_arch(a.arch) +
                            " vs " + format_arch(b.arch) + "); compare predictions instead");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (alpha == 0.0) return a;
  if (alpha == 1.0) return b;
  Checkpoint out = a;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    out.layers[l].weight += alpha * (b.layers[l].weight - a.layers[l].weight);
    out.layers[l].bias += alpha * (b.layers[l].bias - a.layers[l].bias);
  }
  out.model_id = a.model_id + "~" + b.model_id + "@" + json(alpha).dump();
  out.provenance = json{{"interpolation", {{"a", a.model_id}, {"b", b.model_id}, {"alpha", alpha}}}};
  return out;
}

LmcCurve lmc_curve(const Checkpoint& a, const Checkpoint& b, const Dataset& data, int n_alphas) {
  if (n_alphas < 2) throw ValidationError("need at least 2 interpolation points");
  if (!(a.arch == b.arch)) {
    throw ArchMismatchError("LMC is not applicable to different architectures (" + format_arch(a.arch) +
                            " vs " + format_arch(b.arch) + ")");
  }
  LmcCurve curve;
  const auto n = static_cast<std::size_t>(n_alphas);
  curve.alphas.resize(n);
  curve.accuracies.resize(n);
  for (std::size_t i = 0; i < n; ++i) curve.alphas[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  parallel_for(n, [&](std::size_t i) { curve.accuracies[i] = accuracy(interpolate(a, b, curve.alphas[i]), data); });
  curve.acc_a = curve.accuracies.front();
  curve.acc_b = curve.accuracies.back();
  return curve;
}

double barrier_height(const LmcCurve& curve) {
  if (curve.alphas.size() != curve.accuracies.size() || curve.alphas.empty()) {
    throw ValidationError("malformed LMC curve");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
    const double baseline = curve.acc_a + curve.alphas[i] * (curve.acc_b - curve.acc_a);
    worst = std::max(worst, baseline - curve.accuracies[i]);
  }
  return worst;
}

std::vector<PruningBarrier> self_lmc_under_pruning(const Checkpoint& ckpt, const Dataset& data,
                                                   const std::vector<double>& levels, int n_alphas) {
  validate_levels(levels);
  std::vector<PruningBarrier> out;
  out.reserve(levels.size());
  for (double s : levels) out.push_back({s, barrier_height(lmc_curve(ckpt, prune(ckpt, s), data, n_alphas))});
  return out;
}

// ---------------------------------------------------------------------------

StaticPanel static_panel(const ActivationSet& a, const ActivationSet& b) {
  StaticPanel p;
  p.cka = layerwise_similarity_matrix(a, b, Metric::cka);
  p.procrustes = layerwise_similarity_matrix(a, b, Metric::procrustes);
  p.cka_mean = p.cka.mean();
  p.procrustes_mean = p.procrustes.mean();
  if (layers_match(a, b)) {
    p.cka_matched = p.cka.scores.diagonal().mean();
    p.procrustes_matched = p.procrustes.scores.diagonal().mean();
  }
  return p;
}

TriangleReport assemble_triangle_report(std::string model_a, std::string model_b, bool same_architecture,
                                        StaticPanel panel1, FunctionalPanel panel2,
                                        SparsitySweepResult panel3, double threshold) {
  if (std::holds_alternative<LmcPanel>(panel2) != same_architecture) {
    throw ValidationError(same_architecture ? "same-architecture pair must carry an LMC panel"
                                            : "LMC is not applicable to different architectures");
  }
  TriangleReport r;
  r.model_a = std::move(model_a);
  r.model_b = std::move(model_b);
  r.same_architecture = same_architecture;
  r.panel1 = std::move(panel1);
  r.panel2 = std::move(panel2);
  r.panel3 = std::move(panel3);
  r.threshold = threshold;

  r.static_score = r.panel1.cka_static();
  r.procrustes_score = r.panel1.procrustes_static();
  OptionalSeries positive;
  for (std::size_t i = 0; i < r.panel3.levels.size(); ++i) {
    if (r.panel3.levels[i] > 0.0) positive.push_back(r.panel3.cross_sim[i]);
  }
  r.robustness_score = mean_present(positive);
  r.disagreement = std::abs(r.static_score - r.procrustes_score) > threshold;
  return r;
}

TriangleReport build_triangle_report(const Checkpoint& a, const Checkpoint& b, const Dataset& eval_data,
                                     const Eigen::MatrixXd& probe, const TriangleConfig& cfg) {
  validate(eval_data);
  const bool same_arch = a.arch == b.arch;

  StaticPanel p1 = static_panel(forward(a, probe, "probe").activations, forward(b, probe, "probe").activations);

  FunctionalPanel p2;
  if (same_arch) {
    LmcPanel lmc{lmc_curve(a, b, eval_data, cfg.n_alphas), 0.0};
    lmc.barrier = barrier_height(lmc.curve);
    p2 = std::move(lmc);
  } else {
    p2 = JsdPanel{predictive_similarity(predict(a, eval_data.X, eval_data.id), predict(b, eval_data.X, eval_data.id),
                                        cfg.jsd_mode),
                  cfg.jsd_mode};
  }

  SparsitySweepResult p3 = sparsity_sweep(a, b, eval_data, probe, cfg.levels);
  return assemble_triangle_report(a.model_id, b.model_id, same_arch, std::move(p1), std::move(p2),
                                  std::move(p3), cfg.threshold);
}

// ---------------------------------------------------------------------------

CrossViewStats crossview_stats(const std::vector<TriangleReport>& reports, double threshold) {
  if (reports.size() < 3) {
    throw ValidationError("cross-view statistics need at least 3 pair reports, got " +
                          std::to_string(reports.size()));
  }
  CrossViewStats s;
  s.n_pairs = reports.size();
  s.threshold = threshold;
  for (const auto& r : reports) {
    if (r.robustness_score) {
      s.correlated_pairs.push_back(r.pair_id());
      s.static_scores.push_back(r.static_score);
      s.robustness_scores.push_back(*r.robustness_score);
    }
    s.pair_ids.push_back(r.pair_id());
    s.cka_scores.push_back(r.static_score);
    s.procrustes_scores.push_back(r.procrustes_score);
    if (std::abs(r.static_score - r.procrustes_score) > threshold) s.disagreements.push_back(r.pair_id());
  }
  if (s.static_scores.size() < 3) {
    throw ValidationError("only " + std::to_string(s.static_scores.size()) +
                          " reports have a defined robustness score; need 3");
  }
  s.pearson_r = pearson(s.static_scores, s.robustness_scores);
  s.disagreement_rate = static_cast<double>(s.disagreements.size()) / static_cast<double>(s.n_pairs);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

json to_json(const LmcCurve& c) {
  return json{{"alphas", c.alphas}, {"accuracies", c.accuracies}, {"acc_a", c.acc_a}, {"acc_b", c.acc_b}};
}

LmcCurve lmc_curve_from_json(const json& j) {
  LmcCurve c;
  c.alphas = j.at("alphas").get<std::vector<double>>();
  c.accuracies = j.at("accuracies").get<std::vector<double>>();
  c.acc_a = j.at("acc_a").get<double>();
  c.acc_b = j.at("acc_b").get<double>();
  if (c.alphas.size() != c.accuracies.size() || c.alphas.size() < 2) throw FormatError("malformed LMC curve");
  return c;
}

json to_json(const StaticPanel& p) {
  return json{{"cka", to_json(p.cka)},
              {"procrustes", to_json(p.procrustes)},
              {"cka_mean", p.cka_mean},
              {"procrustes_mean", p.procrustes_mean},
              {"cka_matched", optional_json(p.cka_matched)},
              {"procrustes_matched", optional_json(p.procrustes_matched)}};
}

StaticPanel static_panel_from_json(const json& j) {
  StaticPanel p;
  p.cka = similarity_matrix_from_json(j.at("cka"));
  p.procrustes = similarity_matrix_from_json(j.at("procrustes"));
  p.cka_mean = j.at("cka_mean").get<double>();
  p.procrustes_mean = j.at("procrustes_mean").get<double>();
  p.cka_matched = optional_from_json(j.value("cka_matched", json(nullptr)));
  p.procrustes_matched = optional_from_json(j.value("procrustes_matched", json(nullptr)));
  return p;
}

json to_json(const TriangleReport& r) {
  json p2;
  if (const auto* lmc = std::get_if<LmcPanel>(&r.panel2)) {
    p2 = json{{"kind", "lmc"}, {"curve", to_json(lmc->curve)}, {"barrier", lmc->barrier}};
  } else {
    const auto& js = std::get<JsdPanel>(r.panel2);
    p2 = json{{"kind", "jsd"}, {"score", js.score}, {"mode", jsd_mode_name(js.mode)}};
  }
  return json{{"model_a", r.model_a},
              {"model_b", r.model_b},
              {"same_architecture", r.same_architecture},
              {"panel1", to_json(r.panel1)},
              {"panel2", p2},
              {"panel3", to_json(r.panel3)},
              {"derived",
               {{"static_score", r.static_score},
                {"procrustes_score", r.procrustes_score},
                {"robustness_score", optional_json(r.robustness_score)},
                {"disagreement", r.disagreement},
                {"threshold", r.threshold}}}};
}

TriangleReport triangle_report_from_json(const json& j) {
  const json& p2j = j.at("panel2");
  FunctionalPanel p2;
  const std::string kind = p2j.at("kind").get<std::string>();
  if (kind == "lmc") {
    p2 = LmcPanel{lmc_curve_from_json(p2j.at("curve")), p2j.at("barrier").get<double>()};
  } else if (kind == "jsd") {
    p2 = JsdPanel{p2j.at("score").get<double>(), parse_jsd_mode(p2j.at("mode").get<std::string>())};
  } else {
    throw FormatError("unknown functional panel kind '" + kind + "'");
  }
  const json& d = j.at("derived");
  TriangleReport r = assemble_triangle_report(
      j.at("model_a").get<std::string>(), j.at("model_b").get<std::string>(),
      j.at("same_architecture").get<bool>(), static_panel_from_json(j.at("panel1")), std::move(p2),
      sweep_from_json(j.at("panel3")), d.at("threshold").get<double>());
  // Stored scalars are authoritative; they were computed from the same panels.
  r.static_score = d.at("static_score").get<double>();
  r.procrustes_score = d.at("procrustes_score").get<double>();
  r.robustness_score = optional_from_json(d.at("robustness_score"));
  r.disagreement = d.at("disagreement").get<bool>();
  return r;
}

json to_json(const CrossViewStats& s) {
  return json{{"n_pairs", s.n_pairs},
              {"threshold", s.threshold},
              {"pearson_r", s.pearson_r},
              {"pairs", s.correlated_pairs},
              {"static_scores", s.static_scores},
              {"robustness_scores", s.robustness_scores},
              {"pair_ids", s.pair_ids},
              {"cka_scores", s.cka_scores},
              {"procrustes_scores", s.procrustes_scores},
              {"disagreements", s.disagreements},
              {"disagreement_rate", s.disagreement_rate}};
}

}  // namespace trisim

// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "trisim/metrics.hpp"

#include <sstream>

#include "trisim/parallel.hpp"

using nlohmann::json;

namespace trisim {

std::string_view metric_name(Metric m) { return m == Metric::cka ? "cka" : "procrustes"; }

Metric parse_metric(std::string_view name) {
  if (name == "cka") return Metric::cka;
  if (name == "procrustes") return Metric::procrustes;
  throw ValidationError("unknown metric '" + std::string(name) + "'");
}

std::string_view jsd_mode_name(JsdMode mode) {
  return mode == JsdMode::mean_dist ? "mean_dist" : "per_sample";
}

JsdMode parse_jsd_mode(std::string_view name) {
  if (name == "mean_dist") return JsdMode::mean_dist;
  if (name == "per_sample") return JsdMode::per_sample;
  throw ValidationError("unknown JSD mode '" + std::string(name) + "'");
}

double predictive_similarity(const PredictionSet& a, const PredictionSet& b, JsdMode mode) {
  if (a.dataset_id != b.dataset_id) {
    throw ValidationError("prediction sets come from different datasets: '" + a.dataset_id + "' vs '" +
                          b.dataset_id + "'");
  }
  if (a.probs.rows() != b.probs.rows() || a.probs.cols() != b.probs.cols()) {
    throw ValidationError("prediction sets differ in shape: " + std::to_string(a.probs.rows()) + "x" +
                          std::to_string(a.probs.cols()) + " vs " + std::to_string(b.probs.rows()) +
                          "x" + std::to_string(b.probs.cols()));
  }
  if (a.probs.rows() == 0) throw ValidationError("empty prediction sets");
  if (mode == JsdMode::mean_dist) {
    return jsd(a.probs.colwise().mean(), b.probs.colwise().mean());
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.probs.rows(); ++i) total += jsd(a.probs.row(i), b.probs.row(i));
  return total / static_cast<double>(a.probs.rows());
}

bool layers_match(const ActivationSet& a, const ActivationSet& b) {
  return a.layer_names() == b.layer_names();
}

namespace {

void require_comparable(const ActivationSet& a, const ActivationSet& b) {
  if (a.dataset_id != b.dataset_id) {
    throw ValidationError("activation sets were recorded on different inputs ('" + a.dataset_id +
                          "' vs '" + b.dataset_id + "')");
  }
  if (a.n_samples() != b.n_samples()) {
    throw ValidationError("activation sets differ in sample count");
  }
}

}  // namespace

SimilarityMatrix layerwise_similarity_matrix(const ActivationSet& a, const ActivationSet& b, Metric metric) {
  require_comparable(a, b);
  SimilarityMatrix out;
  out.metric = metric;
  out.model_a = a.model_id;
  out.model_b = b.model_id;
  out.layers_a = a.layer_names();
  out.layers_b = b.layer_names();
  const auto rows = static_cast<Eigen::Index>(a.layers.size());
  const auto cols = static_cast<Eigen::Index>(b.layers.size());
  out.scores.resize(rows, cols);
  parallel_for(static_cast<std::size_t>(rows * cols), [&](std::size_t k) {
    const auto i = static_cast<Eigen::Index>(k) / cols;
    const auto j = static_cast<Eigen::Index>(k) % cols;
    out.scores(i, j) = similarity(metric, a.layers[i].values, b.layers[j].values).value;
  });
  return out;
}

double mean_matched_layer_similarity(const ActivationSet& a, const ActivationSet& b, Metric metric) {
  require_comparable(a, b);
  if (!layers_match(a, b)) {
    throw ValidationError("layer lists differ; use the full similarity matrix");
  }
  if (a.layers.empty()) throw ValidationError("no layers to compare");
  double total = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    total += similarity(metric, a.layers[i].values, b.layers[i].values).value;
  }
  return total / static_cast<double>(a.layers.size());
}

json to_json(const SimilarityMatrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.scores.size()));
  for (Eigen::Index i = 0; i < m.scores.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.scores.cols(); ++j) flat.push_back(m.scores(i, j));
  }
  return json{{"metric", metric_name(m.metric)}, {"model_a", m.model_a},   {"model_b", m.model_b},
              {"layers_a", m.layers_a},          {"layers_b", m.layers_b}, {"scores", flat}};
}

SimilarityMatrix similarity_matrix_from_json(const json& j) {
  SimilarityMatrix m;
  m.metric = parse_metric(j.at("metric").get<std::string>());
  m.model_a = j.at("model_a").get<std::string>();
  m.model_b = j.at("model_b").get<std::string>();
  m.layers_a = j.at("layers_a").get<std::vector<std::string>>();
  m.layers_b = j.at("layers_b").get<std::vector<std::string>>();
  const auto flat = j.at("scores").get<std::vector<double>>();
  const auto rows = static_cast<Eigen::Index>(m.layers_a.size());
  const auto cols = static_cast<Eigen::Index>(m.layers_b.size());
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw FormatError("similarity matrix: score count does not match layer lists");
  }
  m.scores.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m.scores(i, j2) = flat[static_cast<std::size_t>(i * cols + j2)];
  }
  return m;
}

std::string to_csv(const SimilarityMatrix& m) {
  std::ostringstream out;
  out.precision(17);
  out << "layer";
  for (const auto& name : m.layers_b) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < m.scores.rows(); ++i) {
    out << m.layers_a[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.scores.cols(); ++j) out << ',' << m.scores(i, j);
    out << '\n';
  }
  return out.str();
}

}  // namespace trisim

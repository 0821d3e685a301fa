// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Static-view similarity measures over activation matrices (samples x
// features): linear CKA and orthogonal-Procrustes similarity, plus the
// Jensen-Shannon divergence and Pearson correlation used by the functional
// and cross-view analyses.
//
// All functions accept any dense Eigen expression and accumulate in double
// regardless of the input scalar type.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>
#include <json.hpp>

#include "trisim/errors.hpp"
#include "trisim/tensorio.hpp"

namespace trisim {

enum class Metric { cka, procrustes };

std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);

struct MetricScore {
  double value = 0.0;
  Metric metric = Metric::cka;
  Eigen::Index n_samples = 0;
};

namespace detail {

inline void require_pair(Eigen::Index n_x, Eigen::Index n_y) {
  if (n_x != n_y) {
    throw ValidationError("sample counts differ: " + std::to_string(n_x) + " vs " + std::to_string(n_y));
  }
  if (n_x < 2) throw ValidationError("need at least 2 samples, got " + std::to_string(n_x));
}

// Centered data whose Frobenius norm is negligible next to the raw data is
// treated as constant: subtracting a rounded column mean leaves ~1e-17 noise.
inline void require_variance(const Eigen::MatrixXd& centered, const Eigen::MatrixXd& raw,
                             std::string_view which) {
  const double c = centered.norm();
  if (c == 0.0 || c <= 1e-12 * raw.norm()) {
    throw DegenerateInputError(std::string(which) + " has zero variance after centering");
  }
}

// Replaces an N x D matrix with D > N by an N x N matrix with the same Gram
// matrix (U * S from its SVD). Both similarity measures depend on the data
// only through inner products between samples, so they are unchanged.
inline Eigen::MatrixXd reduce_features(const Eigen::MatrixXd& centered) {
  if (centered.cols() <= centered.rows()) return centered;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  return svd.matrixU() * svd.singularValues().asDiagonal();
}

// ||B^T A||_F^2. Self terms go through the same call so that identical
// inputs produce bit-identical numerator and denominator.
inline double cross_hsic(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (b.transpose() * a).squaredNorm();
}

}  // namespace detail

/// Subtracts each column's mean. Requires at least two rows.
template <typename Derived>
Eigen::MatrixXd center_columns(const Eigen::MatrixBase<Derived>& x) {
  if (x.rows() < 2) throw ValidationError("centering needs at least 2 samples");
  Eigen::MatrixXd out = x.template cast<double>();
  const Eigen::RowVectorXd mean = out.colwise().sum() / static_cast<double>(out.rows());
  out.rowwise() -= mean;
  return out;
}

/// Linear CKA, ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F), with the
/// biased HSIC estimator over column-centered inputs. Exactly 1 for X == Y.
template <typename DX, typename DY>
MetricScore linear_cka(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
  detail::require_pair(x.rows(), y.rows());
  const Eigen::MatrixXd xr = x.template cast<double>();
  const Eigen::MatrixXd yr = y.template cast<double>();
  Eigen::MatrixXd xc = center_columns(xr);
  Eigen::MatrixXd yc = center_columns(yr);
  detail::require_variance(xc, xr, "first input");
  detail::require_variance(yc, yr, "second input");

  // Work in sample space when features outnumber samples.
  if (std::max(xc.cols(), yc.cols()) > xc.rows()) {
    const Eigen::MatrixXd kx = xc * xc.transpose();
    const Eigen::MatrixXd ky = yc * yc.transpose();
    const double hxy = kx.cwiseProduct(ky).sum();
    const double hxx = kx.cwiseProduct(kx).sum();
    const double hyy = ky.cwiseProduct(ky).sum();
    const double v = hxy / std::sqrt(hxx * hyy);
    return {std::clamp(v, 0.0, 1.0), Metric::cka, xc.rows()};
  }
  const double hxy = detail::cross_hsic(xc, yc);
  const double hxx = detail::cross_hsic(xc, xc);
  const double hyy = detail::cross_hsic(yc, yc);
  const double v = hxy / std::sqrt(hxx * hyy);
  return {std::clamp(v, 0.0, 1.0), Metric::cka, xc.rows()};
}

/// Orthogonal-Procrustes similarity ||Xc^T Yc||_* / (||Xc||_F ||Yc||_F).
/// The nuclear norm is the optimum of max_Q tr(Q^T Xc^T Yc) over orthogonal
/// Q; zero-padding the narrower input to equal width leaves the singular
/// values of the cross-covariance unchanged, so the rectangular product is
/// used directly.
template <typename DX, typename DY>
MetricScore procrustes_similarity(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
  detail::require_pair(x.rows(), y.rows());
  const Eigen::MatrixXd xr = x.template cast<double>();
  const Eigen::MatrixXd yr = y.template cast<double>();
  const Eigen::MatrixXd xc = center_columns(xr);
  const Eigen::MatrixXd yc = center_columns(yr);
  detail::require_variance(xc, xr, "first input");
  detail::require_variance(yc, yr, "second input");

  const Eigen::MatrixXd xs = detail::reduce_features(xc);
  const Eigen::MatrixXd ys = detail::reduce_features(yc);
  const Eigen::MatrixXd cross = xs.transpose() * ys;
  const double nuclear = Eigen::BDCSVD<Eigen::MatrixXd>(cross).singularValues().sum();
  const double v = nuclear / (xc.norm() * yc.norm());
  return {std::clamp(v, 0.0, 1.0), Metric::procrustes, xc.rows()};
}

template <typename DX, typename DY>
MetricScore similarity(Metric metric, const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
  return metric == Metric::cka ? linear_cka(x, y) : procrustes_similarity(x, y);
}

/// Like similarity() but maps degenerate (zero-variance) inputs to nullopt.
template <typename DX, typename DY>
std::optional<double> try_similarity(Metric metric, const Eigen::MatrixBase<DX>& x,
                                     const Eigen::MatrixBase<DY>& y) {
  try {
    return similarity(metric, x, y).value;
  } catch (const DegenerateInputError&) {
    return std::nullopt;
  }
}

/// Jensen-Shannon divergence in bits, so the result lies in [0, 1].
/// Inputs are renormalized; entries down to -1e-9 are clipped to zero.
template <typename DP, typename DQ>
double jsd(const Eigen::MatrixBase<DP>& p_in, const Eigen::MatrixBase<DQ>& q_in) {
  if (p_in.size() != q_in.size()) {
    throw ValidationError("distribution lengths differ: " + std::to_string(p_in.size()) + " vs " +
                          std::to_string(q_in.size()));
  }
  if (p_in.size() == 0) throw ValidationError("empty distribution");
  Eigen::ArrayXd p = p_in.template cast<double>().reshaped().array();
  Eigen::ArrayXd q = q_in.template cast<double>().reshaped().array();
  if (!p.allFinite() || !q.allFinite()) throw ValidationError("distribution has non-finite entries");
  if (p.minCoeff() < -1e-9 || q.minCoeff() < -1e-9) {
    throw ValidationError("distribution has negative entries");
  }
  p = p.max(0.0);
  q = q.max(0.0);
  if (p.sum() <= 0.0 || q.sum() <= 0.0) throw ValidationError("distribution sums to zero");
  p /= p.sum();
  q /= q.sum();

  const Eigen::ArrayXd m = 0.5 * (p + q);
  double kl_p = 0.0, kl_q = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (p[i] > 0.0) kl_p += p[i] * std::log2(p[i] / m[i]);
    if (q[i] > 0.0) kl_q += q[i] * std::log2(q[i] / m[i]);
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, 1.0);
}

/// Pearson correlation via the two-pass formula.
template <typename DX, typename DY>
double pearson(const Eigen::MatrixBase<DX>& x_in, const Eigen::MatrixBase<DY>& y_in) {
  if (x_in.size() != y_in.size()) throw ValidationError("pearson: length mismatch");
  if (x_in.size() < 3) throw ValidationError("pearson: need at least 3 points");
  const Eigen::ArrayXd x = x_in.template cast<double>().reshaped().array();
  const Eigen::ArrayXd y = y_in.template cast<double>().reshaped().array();
  const Eigen::ArrayXd dx = x - x.mean();
  const Eigen::ArrayXd dy = y - y.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("pearson: constant input");
  return std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  using Vec = Eigen::Map<const Eigen::VectorXd>;
  if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
  return pearson(Vec(x.data(), static_cast<Eigen::Index>(x.size())),
                 Vec(y.data(), static_cast<Eigen::Index>(y.size())));
}

enum class JsdMode { mean_dist, per_sample };

std::string_view jsd_mode_name(JsdMode mode);
JsdMode parse_jsd_mode(std::string_view name);

/// mean_dist: JSD between the row-averaged distributions.
/// per_sample: average of row-wise JSDs (never smaller than mean_dist).
double predictive_similarity(const PredictionSet& a, const PredictionSet& b,
                             JsdMode mode = JsdMode::mean_dist);

// ---------------------------------------------------------------------------

struct SimilarityMatrix {
  Metric metric = Metric::cka;
  std::string model_a, model_b;
  std::vector<std::string> layers_a, layers_b;
  Eigen::MatrixXd scores;  // layers_a.size() x layers_b.size()

  double mean() const { return scores.mean(); }
};

/// scores(i, j) = metric(layer i of a, layer j of b). Refuses activation sets
/// recorded on different datasets. Cells are evaluated in parallel.
SimilarityMatrix layerwise_similarity_matrix(const ActivationSet& a, const ActivationSet& b, Metric metric);

/// Mean of metric(layer i of a, layer i of b); the layer name lists must be
/// identical.
double mean_matched_layer_similarity(const ActivationSet& a, const ActivationSet& b, Metric metric);

bool layers_match(const ActivationSet& a, const ActivationSet& b);

nlohmann::json to_json(const SimilarityMatrix& m);
SimilarityMatrix similarity_matrix_from_json(const nlohmann::json& j);
std::string to_csv(const SimilarityMatrix& m);

}  // namespace trisim

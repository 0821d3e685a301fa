// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "trisim/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "trisim/errors.hpp"
#include "trisim/metrics.hpp"
#include "trisim/parallel.hpp"

using nlohmann::json;

namespace trisim {

Eigen::Index pruned_count(double sparsity, Eigen::Index prunable) {
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
    throw ValidationError("sparsity must be in [0, 1], got " + json(sparsity).dump());
  }
  return static_cast<Eigen::Index>(std::llround(sparsity * static_cast<double>(prunable)));
}

PruneMask global_magnitude_mask(const Checkpoint& ckpt, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
    throw ValidationError("sparsity must be in [0, 1], got " + json(sparsity).dump());
  }
  struct Slot {
    double magnitude;
    std::size_t layer;
    Eigen::Index row, col;
  };
  std::vector<Slot> slots;
  PruneMask mask;
  mask.sparsity = sparsity;
  for (std::size_t l = 0; l < ckpt.layers.size(); ++l) {
    const auto& w = ckpt.layers[l].weight;
    mask.keep.push_back(KeepMatrix::Constant(w.rows(), w.cols(), true));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) slots.push_back({std::abs(w(r, c)), l, r, c});
    }
  }
  mask.prunable_count = static_cast<Eigen::Index>(slots.size());
  mask.zeroed_count = pruned_count(sparsity, mask.prunable_count);

  // Slots are generated in (layer, row-major) order, so a stable sort on
  // magnitude realizes the tie-break.
  std::stable_sort(slots.begin(), slots.end(),
                   [](const Slot& a, const Slot& b) { return a.magnitude < b.magnitude; });
  const auto cut = slots.begin() + mask.zeroed_count;
  for (auto it = slots.begin(); it != cut; ++it) mask.keep[it->layer](it->row, it->col) = false;
  return mask;
}

Checkpoint apply_mask(const Checkpoint& ckpt, const PruneMask& mask) {
  if (mask.keep.size() != ckpt.layers.size()) {
    throw ValidationError("mask has " + std::to_string(mask.keep.size()) + " layers, checkpoint has " +
                          std::to_string(ckpt.layers.size()));
  }
  Checkpoint out = ckpt;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto& w = out.layers[l].weight;
    const auto& keep = mask.keep[l];
    if (keep.rows() != w.rows() || keep.cols() != w.cols()) {
      throw ValidationError("mask shape does not match layer '" + out.layers[l].name + "'");
    }
    w = keep.select(w, 0.0);
  }
  return out;
}

std::optional<double> mean_present(const OptionalSeries& values) {
  double total = 0.0;
  int count = 0;
  for (const auto& v : values) {
    if (v) {
      total += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return total / count;
}

void validate_levels(const std::vector<double>& levels) {
  if (levels.empty()) throw ValidationError("sparsity grid is empty");
  if (levels.front() != 0.0) throw ValidationError("sparsity grid must start at 0");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] >= 0.0 && levels[i] <= 1.0)) throw ValidationError("sparsity levels must lie in [0, 1]");
    if (i > 0 && !(levels[i] > levels[i - 1])) throw ValidationError("sparsity grid must be ascending");
  }
}

namespace {

OptionalSeries matched_cells(const ActivationSet& a, const ActivationSet& b) {
  OptionalSeries cells;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    cells.push_back(try_similarity(Metric::cka, a.layers[i].values, b.layers[i].values));
  }
  return cells;
}

std::optional<double> full_matrix_mean(const ActivationSet& a, const ActivationSet& b) {
  OptionalSeries cells;
  for (const auto& la : a.layers) {
    for (const auto& lb : b.layers) cells.push_back(try_similarity(Metric::cka, la.values, lb.values));
  }
  return mean_present(cells);
}

}  // namespace

SparsitySweepResult sparsity_sweep(const Checkpoint& ckpt_a, const Checkpoint& ckpt_b,
                                   const Dataset& eval_data, const Eigen::MatrixXd& probe,
                                   const std::vector<double>& levels) {
  validate_levels(levels);
  validate(ckpt_a);
  validate(ckpt_b);
  validate(eval_data);

  const ActivationSet base_a = forward(ckpt_a, probe, "probe").activations;
  const ActivationSet base_b = forward(ckpt_b, probe, "probe").activations;
  const bool aligned = ckpt_a.arch == ckpt_b.arch;

  SparsitySweepResult r;
  r.levels = levels;
  r.layers_a = base_a.layer_names();
  r.layers_b = base_b.layer_names();
  r.cross_sim_full_matrix_fallback = !aligned;
  const std::size_t n = levels.size();
  r.acc_a.resize(n);
  r.acc_b.resize(n);
  r.self_sim_a.resize(n);
  r.self_sim_b.resize(n);
  r.cross_sim.resize(n);
  r.self_layers_a.resize(n);
  r.self_layers_b.resize(n);
  if (aligned) r.cross_layers.resize(n);

  parallel_for(n, [&](std::size_t i) {
    const Checkpoint pa = prune(ckpt_a, levels[i]);
    const Checkpoint pb = prune(ckpt_b, levels[i]);
    r.acc_a[i] = accuracy(pa, eval_data);
    r.acc_b[i] = accuracy(pb, eval_data);
    const ActivationSet acts_a = forward(pa, probe, "probe").activations;
    const ActivationSet acts_b = forward(pb, probe, "probe").activations;
    r.self_layers_a[i] = matched_cells(base_a, acts_a);
    r.self_layers_b[i] = matched_cells(base_b, acts_b);
    r.self_sim_a[i] = mean_present(r.self_layers_a[i]);
    r.self_sim_b[i] = mean_present(r.self_layers_b[i]);
    if (aligned) {
      r.cross_layers[i] = matched_cells(acts_a, acts_b);
      r.cross_sim[i] = mean_present(r.cross_layers[i]);
    } else {
      r.cross_sim[i] = full_matrix_mean(acts_a, acts_b);
    }
  });
  return r;
}

namespace {

json series_json(const OptionalSeries& s) {
  json out = json::array();
  for (const auto& v : s) out.push_back(v ? json(*v) : json(nullptr));
  return out;
}

OptionalSeries series_from_json(const json& j) {
  OptionalSeries out;
  for (const auto& v : j) out.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  return out;
}

json grid_json(const std::vector<OptionalSeries>& grid) {
  json out = json::array();
  for (const auto& row : grid) out.push_back(series_json(row));
  return out;
}

std::vector<OptionalSeries> grid_from_json(const json& j) {
  std::vector<OptionalSeries> out;
  for (const auto& row : j) out.push_back(series_from_json(row));
  return out;
}

}  // namespace

json to_json(const SparsitySweepResult& r) {
  return json{{"levels", r.levels},
              {"acc_a", r.acc_a},
              {"acc_b", r.acc_b},
              {"self_sim_a", series_json(r.self_sim_a)},
              {"self_sim_b", series_json(r.self_sim_b)},
              {"cross_sim", series_json(r.cross_sim)},
              {"per_layer",
               {{"layers_a", r.layers_a},
                {"layers_b", r.layers_b},
                {"self_sim_a", grid_json(r.self_layers_a)},
                {"self_sim_b", grid_json(r.self_layers_b)},
                {"cross_sim", grid_json(r.cross_layers)}}},
              {"flags", {{"cross_sim_full_matrix_fallback", r.cross_sim_full_matrix_fallback}}}};
}

SparsitySweepResult sweep_from_json(const json& j) {
  SparsitySweepResult r;
  r.levels = j.at("levels").get<std::vector<double>>();
  r.acc_a = j.at("acc_a").get<std::vector<double>>();
  r.acc_b = j.at("acc_b").get<std::vector<double>>();
  r.self_sim_a = series_from_json(j.at("self_sim_a"));
  r.self_sim_b = series_from_json(j.at("self_sim_b"));
  r.cross_sim = series_from_json(j.at("cross_sim"));
  if (j.contains("per_layer")) {
    const auto& p = j["per_layer"];
    r.layers_a = p.value("layers_a", std::vector<std::string>{});
    r.layers_b = p.value("layers_b", std::vector<std::string>{});
    r.self_layers_a = grid_from_json(p.value("self_sim_a", json::array()));
    r.self_layers_b = grid_from_json(p.value("self_sim_b", json::array()));
    r.cross_layers = grid_from_json(p.value("cross_sim", json::array()));
  }
  if (j.contains("flags")) {
    r.cross_sim_full_matrix_fallback = j["flags"].value("cross_sim_full_matrix_fallback", false);
  }
  const std::size_t n = r.levels.size();
  for (std::size_t len : {r.acc_a.size(), r.acc_b.size(), r.self_sim_a.size(), r.self_sim_b.size(),
                          r.cross_sim.size()}) {
    if (len != n) throw FormatError("sweep result: series lengths differ from levels");
  }
  return r;
}

std::string to_csv(const SparsitySweepResult& r) {
  std::ostringstream out;
  out.precision(17);
  auto cell = [&](const std::optional<double>& v) {
    if (v) out << *v;
  };
  out << "sparsity,acc_a,acc_b,self_sim_a,self_sim_b,cross_sim\n";
  for (std::size_t i = 0; i < r.levels.size(); ++i) {
    out << r.levels[i] << ',' << r.acc_a[i] << ',' << r.acc_b[i] << ',';
    cell(r.self_sim_a[i]);
    out << ',';
    cell(r.self_sim_b[i]);
    out << ',';
    cell(r.cross_sim[i]);
    out << '\n';
  }
  return out.str();
}

}  // namespace trisim

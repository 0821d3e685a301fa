// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0
//
// SVG figures rendered from report documents: similarity heatmaps, LMC and
// sparsity curves, the three-panel pair figure and the cross-view scatter.
// Output depends only on the document, so figures are reproducible.

#pragma once

#include <string>

#include <json.hpp>

namespace trisim::svg {

/// Renders any report document produced by the CLI, dispatching on "kind".
/// Throws FormatError for unknown kinds.
std::string render_report(const nlohmann::json& doc);

std::string heatmap_figure(const nlohmann::json& similarity_matrix);
std::string lmc_figure(const nlohmann::json& curve);
std::string sweep_figure(const nlohmann::json& sweep);
std::string triangle_figure(const nlohmann::json& triangle_report);
std::string crossview_figure(const nlohmann::json& crossview_stats);

/// Maps [0,1] onto an approximation of the viridis colormap, as "#rrggbb".
std::string colormap(double value);

}  // namespace trisim::svg

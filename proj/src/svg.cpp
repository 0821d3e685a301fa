// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "trisim/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <vector>

#include "trisim/errors.hpp"

using nlohmann::json;

namespace trisim::svg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Rect {
  double x, y, w, h;
};

class Canvas {
 public:
  Canvas(double width, double height) : width_(width), height_(height) {}

  void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "middle",
            double rotate = 0.0) {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
          << "\" text-anchor=\"" << anchor << "\"";
    if (rotate != 0.0) body_ << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y) << ")\"";
    body_ << ">" << escape(s) << "</text>\n";
  }

  void rect(const Rect& r, const std::string& fill, const std::string& extra = "") {
    body_ << "<rect x=\"" << num(r.x) << "\" y=\"" << num(r.y) << "\" width=\"" << num(r.w) << "\" height=\""
          << num(r.h) << "\" fill=\"" << fill << "\"" << (extra.empty() ? "" : " " + extra) << "/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0,
            bool dashed = false) {
    body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\""
          << (dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, bool dashed) {
    if (pts.empty()) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\""
          << (dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
    }
    body_ << "\"/>\n";
  }

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill, double opacity) {
    body_ << "<polygon fill=\"" << fill << "\" fill-opacity=\"" << num(opacity) << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
    }
    body_ << "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& fill, const std::string& title = "") {
    body_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << fill
          << "\">";
    if (!title.empty()) body_ << "<title>" << escape(title) << "</title>";
    body_ << "</circle>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_) << "\" height=\"" << num(height_)
        << "\" viewBox=\"0 0 " << num(width_) << ' ' << num(height_) << "\" font-family=\"sans-serif\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double width_, height_;
  std::ostringstream body_;
};

const std::array<const char*, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<std::optional<double>> y;
  std::string color;
  bool dashed = false;
};

std::vector<std::optional<double>> optional_values(const json& j) {
  std::vector<std::optional<double>> out;
  for (const auto& v : j) out.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  return out;
}

struct Axes {
  Rect area;
  double x0, x1, y0, y1;

  double px(double x) const { return area.x + (x - x0) / (x1 - x0) * area.w; }
  double py(double y) const { return area.y + area.h - (y - y0) / (y1 - y0) * area.h; }
};

Axes draw_axes(Canvas& c, const Rect& area, double x0, double x1, double y0, double y1, const std::string& title,
               const std::string& xlabel, const std::string& ylabel) {
  Axes ax{area, x0, x1, y0, y1};
  c.rect(area, "none", "stroke=\"#444\"");
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 + (y1 - y0) * i / 4.0;
    c.line(ax.px(fx), area.y + area.h, ax.px(fx), area.y + area.h + 4, "#444");
    c.text(ax.px(fx), area.y + area.h + 16, label(fx), 10);
    c.line(area.x - 4, ax.py(fy), area.x, ax.py(fy), "#444");
    c.line(area.x, ax.py(fy), area.x + area.w, ax.py(fy), "#eee");
    c.text(area.x - 6, ax.py(fy) + 3, label(fy), 10, "end");
  }
  c.text(area.x + area.w / 2, area.y - 10, title, 13);
  c.text(area.x + area.w / 2, area.y + area.h + 32, xlabel, 11);
  c.text(area.x - 38, area.y + area.h / 2, ylabel, 11, "middle", -90);
  return ax;
}

// Missing values break the line into segments.
void draw_series(Canvas& c, const Axes& ax, const Series& s) {
  std::vector<std::pair<double, double>> run;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    if (s.y[i]) {
      run.emplace_back(ax.px(s.x[i]), ax.py(*s.y[i]));
      c.circle(run.back().first, run.back().second, 2.5, s.color);
    } else {
      c.polyline(run, s.color, s.dashed);
      run.clear();
    }
  }
  c.polyline(run, s.color, s.dashed);
}

void draw_legend(Canvas& c, const Axes& ax, const std::vector<Series>& series) {
  double y = ax.area.y + 14;
  for (const auto& s : series) {
    c.line(ax.area.x + 8, y - 4, ax.area.x + 28, y - 4, s.color, 2, s.dashed);
    c.text(ax.area.x + 32, y, s.name, 10, "start");
    y += 14;
  }
}

void line_panel(Canvas& c, const Rect& area, const std::vector<Series>& series, const std::string& title,
                const std::string& xlabel, const std::string& ylabel) {
  double x0 = 0.0, x1 = 1.0;
  for (const auto& s : series) {
    for (double x : s.x) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  }
  const Axes ax = draw_axes(c, area, x0, x1, 0.0, 1.0, title, xlabel, ylabel);
  for (const auto& s : series) draw_series(c, ax, s);
  draw_legend(c, ax, series);
}

void heatmap_panel(Canvas& c, const Rect& area, const json& m) {
  const auto layers_a = m.at("layers_a").get<std::vector<std::string>>();
  const auto layers_b = m.at("layers_b").get<std::vector<std::string>>();
  const auto scores = m.at("scores").get<std::vector<double>>();
  const std::size_t rows = layers_a.size(), cols = layers_b.size();
  const double cw = area.w / static_cast<double>(std::max<std::size_t>(cols, 1));
  const double ch = area.h / static_cast<double>(std::max<std::size_t>(rows, 1));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = scores[i * cols + j];
      const Rect cell{area.x + j * cw, area.y + i * ch, cw, ch};
      c.rect(cell, colormap(v), "stroke=\"white\" stroke-width=\"0.5\"");
      if (rows * cols <= 100) c.text(cell.x + cw / 2, cell.y + ch / 2 + 4, label(v), 10);
    }
    c.text(area.x - 6, area.y + i * ch + ch / 2 + 4, layers_a[i], 10, "end");
  }
  for (std::size_t j = 0; j < cols; ++j) c.text(area.x + j * cw + cw / 2, area.y + area.h + 14, layers_b[j], 10);
  c.text(area.x + area.w / 2, area.y - 10,
         m.at("metric").get<std::string>() + ": " + m.at("model_a").get<std::string>() + " vs " +
             m.at("model_b").get<std::string>(),
         12);
  // Colorbar on [0, 1].
  const double bx = area.x + area.w + 12;
  for (int k = 0; k < 50; ++k) {
    const double v = 1.0 - k / 50.0;
    c.rect({bx, area.y + k * area.h / 50.0, 10, area.h / 50.0 + 0.5}, colormap(v));
  }
  c.text(bx + 14, area.y + 8, "1", 10, "start");
  c.text(bx + 14, area.y + area.h, "0", 10, "start");
}

std::vector<Series> sweep_series(const json& sweep) {
  const auto levels = sweep.at("levels").get<std::vector<double>>();
  auto as_optional = [](const json& j) {
    std::vector<std::optional<double>> out;
    for (const auto& v : j) out.emplace_back(v.get<double>());
    return out;
  };
  return {
      {"acc A", levels, as_optional(sweep.at("acc_a")), kPalette[0], true},
      {"acc B", levels, as_optional(sweep.at("acc_b")), kPalette[1], true},
      {"self CKA A", levels, optional_values(sweep.at("self_sim_a")), kPalette[0], false},
      {"self CKA B", levels, optional_values(sweep.at("self_sim_b")), kPalette[1], false},
      {"cross CKA", levels, optional_values(sweep.at("cross_sim")), kPalette[2], false},
  };
}

std::vector<Series> lmc_series(const json& curve) {
  const auto alphas = curve.at("alphas").get<std::vector<double>>();
  std::vector<std::optional<double>> acc, baseline;
  const double a = curve.at("acc_a").get<double>(), b = curve.at("acc_b").get<double>();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    acc.emplace_back(curve.at("accuracies")[i].get<double>());
    baseline.emplace_back(a + alphas[i] * (b - a));
  }
  return {{"accuracy", alphas, acc, kPalette[0], false}, {"linear baseline", alphas, baseline, "#888", true}};
}

const json& report_body(const json& doc) { return doc.contains("report") ? doc["report"] : doc; }

}  // namespace

std::string colormap(double value) {
  static constexpr std::array<std::array<double, 3>, 9> kStops = {{{68, 1, 84},
                                                                   {71, 44, 122},
                                                                   {59, 81, 139},
                                                                   {44, 113, 142},
                                                                   {33, 144, 141},
                                                                   {39, 173, 129},
                                                                   {92, 200, 99},
                                                                   {170, 220, 50},
                                                                   {253, 231, 37}}};
  const double v = std::clamp(std::isfinite(value) ? value : 0.0, 0.0, 1.0) * (kStops.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(v), kStops.size() - 2);
  const double t = v - static_cast<double>(i);
  char buf[8];
  int rgb[3];
  for (int k = 0; k < 3; ++k) rgb[k] = static_cast<int>(std::lround(kStops[i][k] + t * (kStops[i + 1][k] - kStops[i][k])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string heatmap_figure(const json& m) {
  Canvas c(520, 460);
  heatmap_panel(c, {90, 40, 360, 360}, m);
  return c.str();
}

std::string lmc_figure(const json& curve) {
  Canvas c(480, 360);
  line_panel(c, {60, 40, 390, 260}, lmc_series(curve), "Linear interpolation path", "alpha", "accuracy");
  return c.str();
}

std::string sweep_figure(const json& sweep) {
  Canvas c(480, 360);
  line_panel(c, {60, 40, 390, 260}, sweep_series(sweep), "Sparsity sweep", "sparsity", "accuracy / CKA");
  return c.str();
}

std::string triangle_figure(const json& r) {
  Canvas c(1380, 420);
  heatmap_panel(c, {90, 50, 300, 300}, r.at("panel1").at("cka"));

  const json& p2 = r.at("panel2");
  const Rect mid{520, 50, 360, 300};
  if (p2.at("kind") == "lmc") {
    char title[64];
    std::snprintf(title, sizeof title, "LMC (barrier %.3f)", p2.at("barrier").get<double>());
    line_panel(c, mid, lmc_series(p2.at("curve")), title, "alpha", "accuracy");
  } else {
    c.rect(mid, "none", "stroke=\"#444\"");
    c.text(mid.x + mid.w / 2, mid.y - 10, "Predictive similarity (LMC not applicable)", 13);
    c.text(mid.x + mid.w / 2, mid.y + mid.h / 2, "JSD = " + label(p2.at("score").get<double>()), 22);
    c.text(mid.x + mid.w / 2, mid.y + mid.h / 2 + 24, "mode: " + p2.at("mode").get<std::string>(), 12);
  }
  line_panel(c, {960, 50, 360, 300}, sweep_series(r.at("panel3")), "Sparsity view", "sparsity", "accuracy / CKA");

  const json& d = r.at("derived");
  std::ostringstream footer;
  footer << "static " << label(d.at("static_score").get<double>()) << "   procrustes "
         << label(d.at("procrustes_score").get<double>()) << "   robustness "
         << (d.at("robustness_score").is_null() ? std::string("n/a") : label(d.at("robustness_score").get<double>()))
         << (d.at("disagreement").get<bool>() ? "   [metric disagreement]" : "");
  c.text(690, 405, footer.str(), 12);
  return c.str();
}

std::string crossview_figure(const json& s) {
  Canvas c(520, 820);
  const auto xs = s.at("static_scores").get<std::vector<double>>();
  const auto ys = s.at("robustness_scores").get<std::vector<double>>();
  const auto pairs = s.at("pairs").get<std::vector<std::string>>();
  const Axes top = draw_axes(c, {70, 50, 400, 300}, 0, 1, 0, 1,
                             "Static vs sparsity robustness (r = " + label(s.at("pearson_r").get<double>()) + ")",
                             "static similarity (CKA)", "robustness under sparsity");
  // Least-squares line through the points.
  if (xs.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx > 0) {
      const double slope = sxy / sxx;
      c.line(top.px(0), top.py(std::clamp(my - slope * mx, 0.0, 1.0)), top.px(1),
             top.py(std::clamp(my + slope * (1 - mx), 0.0, 1.0)), "#888", 1.5, true);
    }
  }
  for (std::size_t i = 0; i < xs.size(); ++i) c.circle(top.px(xs[i]), top.py(ys[i]), 4, kPalette[0], pairs[i]);

  const auto cka = s.at("cka_scores").get<std::vector<double>>();
  const auto proc = s.at("procrustes_scores").get<std::vector<double>>();
  const auto ids = s.at("pair_ids").get<std::vector<std::string>>();
  const double thr = s.at("threshold").get<double>();
  const auto flagged = s.at("disagreements").get<std::vector<std::string>>();
  const Axes bottom = draw_axes(c, {70, 460, 400, 300}, 0, 1, 0, 1,
                                "CKA vs Procrustes (disagreement > " + label(thr) + ")", "CKA", "Procrustes");
  // Shade the region |cka - procrustes| > threshold.
  c.polygon({{bottom.px(0), bottom.py(thr)}, {bottom.px(1 - thr), bottom.py(1)}, {bottom.px(0), bottom.py(1)}},
            "#d62728", 0.12);
  c.polygon({{bottom.px(thr), bottom.py(0)}, {bottom.px(1), bottom.py(1 - thr)}, {bottom.px(1), bottom.py(0)}},
            "#d62728", 0.12);
  c.line(bottom.px(0), bottom.py(0), bottom.px(1), bottom.py(1), "#888", 1, true);
  for (std::size_t i = 0; i < cka.size(); ++i) {
    const bool bad = std::find(flagged.begin(), flagged.end(), ids[i]) != flagged.end();
    c.circle(bottom.px(cka[i]), bottom.py(proc[i]), 4, bad ? kPalette[1] : kPalette[0], ids[i]);
  }
  return c.str();
}

std::string render_report(const json& doc) {
  const std::string kind = doc.value("kind", std::string{});
  const json& body = report_body(doc);
  std::string out;
  if (kind == "similarity_report") {
    // Both metrics side by side.
    Canvas c(1040, 460);
    heatmap_panel(c, {90, 40, 360, 360}, body.at("cka"));
    heatmap_panel(c, {610, 40, 360, 360}, body.at("procrustes"));
    out = c.str();
  } else if (kind == "lmc_report") {
    out = lmc_figure(body.at("curve"));
  } else if (kind == "sweep_report") {
    out = sweep_figure(body);
  } else if (kind == "triangle_report") {
    out = triangle_figure(body);
  } else if (kind == "crossview_report") {
    out = crossview_figure(body);
  } else {
    throw FormatError("no figure for report kind '" + kind + "'");
  }
  if (doc.contains("generated_at")) {
    out.insert(out.find('\n') + 1, "<!-- generated " + escape(doc["generated_at"].get<std::string>()) + " -->\n");
  }
  return out;
}

}  // namespace trisim::svg

#pragma once

#include <string>
#include <vector>

namespace bmk::harness {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::vector<double> band;  // optional half-width around y
};

struct FigureStyle {
  std::string title;
  std::string x_label, y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 720;
  int height = 440;
};

/// Deterministic SVG line chart; bands render as filled polygons between
/// y - band and y + band. Non-positive values are dropped on log axes.
std::string render_svg(const std::vector<Series>& series, const FigureStyle& style);

/// Writes the figure; returns false and writes nothing when no series has a
/// drawable point.
bool emit_svg(const std::string& path, const std::vector<Series>& series, const FigureStyle& style);

}  // namespace bmk::harness

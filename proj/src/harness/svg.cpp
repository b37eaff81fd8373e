#include "bmk/harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bmk::harness {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
constexpr double kLeft = 72, kRight = 150, kTop = 40, kBottom = 56;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  bool log = false;
  double lo = 0.0, hi = 1.0;
  double pixel_lo = 0.0, pixel_hi = 1.0;

  bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
  double t(double v) const { return log ? std::log10(v) : v; }
  double map(double v) const { return pixel_lo + (t(v) - lo) / (hi - lo) * (pixel_hi - pixel_lo); }

  void fit(double a, double b) {
    lo = t(a);
    hi = t(b);
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.05, 0.5);
      lo -= pad;
      hi += pad;
    }
    if (log) {
      lo = std::floor(lo);
      hi = std::ceil(hi);
    } else {
      const double pad = 0.04 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      const int step = std::max(1, static_cast<int>(std::ceil((hi - lo) / 6.0)));
      for (double e = lo; e <= hi + 1e-9; e += step) out.push_back(std::pow(10.0, e));
      return out;
    }
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double f : {1.0, 2.0, 5.0, 10.0}) {
      if (f * mag >= raw) {
        step = f * mag;
        break;
      }
    }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) out.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    return out;
  }
};

}  // namespace

std::string render_svg(const std::vector<Series>& series, const FigureStyle& style) {
  Axis ax{style.log_x}, ay{style.log_y};
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || (!s.band.empty() && s.band.size() != s.y.size())) {
      throw std::invalid_argument("svg: series '" + s.label + "' has mismatched lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double b = s.band.empty() ? 0.0 : s.band[i];
      for (double y : {s.y[i] - b, s.y[i] + b}) {
        if (!ax.usable(s.x[i]) || !ay.usable(y)) continue;
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  }
  if (!std::isfinite(xmin)) return {};
  const double w = style.width, h = style.height;
  ax.fit(xmin, xmax);
  ay.fit(ymin, ymax);
  ax.pixel_lo = kLeft;
  ax.pixel_hi = w - kRight;
  ay.pixel_lo = h - kBottom;
  ay.pixel_hi = kTop;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width << "\" height=\"" << style.height
     << "\" viewBox=\"0 0 " << style.width << ' ' << style.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!style.title.empty()) {
    os << "<text x=\"" << num(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(style.title)
       << "</text>\n";
  }
  os << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(w - kLeft - kRight)
     << "\" height=\"" << num(h - kTop - kBottom) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double v : ax.ticks()) {
    const double px = ax.map(v);
    os << "<line class=\"grid\" x1=\"" << num(px) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(px) << "\" y2=\""
       << num(h - kBottom) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << num(px) << "\" y=\"" << num(h - kBottom + 16) << "\" text-anchor=\"middle\">"
       << tick_label(v) << "</text>\n";
  }
  for (double v : ay.ticks()) {
    const double py = ay.map(v);
    os << "<line class=\"grid\" x1=\"" << num(kLeft) << "\" y1=\"" << num(py) << "\" x2=\"" << num(w - kRight)
       << "\" y2=\"" << num(py) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">" << tick_label(v)
       << "</text>\n";
  }
  os << "<text x=\"" << num((kLeft + w - kRight) / 2) << "\" y=\"" << num(h - 14) << "\" text-anchor=\"middle\">"
     << escape(style.x_label) << (style.log_x ? " (log)" : "") << "</text>\n";
  os << "<text transform=\"translate(18," << num((kTop + h - kBottom) / 2)
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(style.y_label) << (style.log_y ? " (log)" : "")
     << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof kPalette / sizeof kPalette[0])];
    if (!s.band.empty()) {
      std::string upper, lower;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double hi = s.y[i] + s.band[i], lo = s.y[i] - s.band[i];
        if (!ax.usable(s.x[i]) || !ay.usable(hi) || !ay.usable(lo)) continue;
        upper += num(ax.map(s.x[i])) + "," + num(ay.map(hi)) + " ";
        lower = num(ax.map(s.x[i])) + "," + num(ay.map(lo)) + " " + lower;
      }
      if (!upper.empty()) {
        os << "<polygon class=\"band\" points=\"" << upper << lower << "\" fill=\"" << color
           << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
      }
    }
    std::string d;
    bool pen_down = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) {
        pen_down = false;
        continue;
      }
      d += (pen_down ? "L" : "M") + num(ax.map(s.x[i])) + "," + num(ay.map(s.y[i])) + " ";
      pen_down = true;
    }
    if (!d.empty()) {
      d.pop_back();
      os << "<path class=\"series\" d=\"" << d << "\" fill=\"none\" stroke=\"" << color
         << "\" stroke-width=\"1.6\"/>\n";
      if (s.x.size() <= 12) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
          os << "<circle cx=\"" << num(ax.map(s.x[i])) << "\" cy=\"" << num(ay.map(s.y[i])) << "\" r=\"3\" fill=\""
             << color << "\"/>\n";
        }
      }
    }
    const double ly = kTop + 14 + 18.0 * static_cast<double>(si);
    os << "<line x1=\"" << num(w - kRight + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(w - kRight + 32)
       << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(w - kRight + 36) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

bool emit_svg(const std::string& path, const std::vector<Series>& series, const FigureStyle& style) {
  const std::string svg = render_svg(series, style);
  if (svg.empty()) return false;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << svg;
  return static_cast<bool>(out);
}

}  // namespace bmk::harness

#include "cli/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "disentangle/panel.hpp"

namespace disentangle::cli::svg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v, double step) {
  char buf[32];
  const int digits = step >= 1.0 ? 0 : std::min(6, static_cast<int>(std::ceil(-std::log10(step))));
  std::snprintf(buf, sizeof buf, "%.*f", digits, std::abs(v) < 1e-12 * step ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

double nice_step(double span, int target) {
  const double raw = span / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

struct Range {
  double lo = INFINITY;
  double hi = -INFINITY;

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.1, 0.5);
      lo -= pad;
      hi += pad;
    }
  }
};

std::string header(int width, int height) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height
      << "\" font-family=\"Helvetica, Arial, sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out.str();
}

void polyline(std::ostringstream& out, const std::vector<double>& x, const std::vector<double>& y,
              const std::function<double(double)>& px, const std::function<double(double)>& py,
              const std::string& style) {
  out << "<polyline fill=\"none\" " << style << " points=\"";
  bool first = true;
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
    if (!std::isfinite(y[i])) continue;
    out << (first ? "" : " ") << num(px(x[i])) << "," << num(py(y[i]));
    first = false;
  }
  out << "\"/>\n";
}

void draw_chart(std::ostringstream& out, const LineChart& chart, double width, double height) {
  const double left = 62, right = 16, top = 30, bottom = 46;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  Range xr;
  Range yr;
  for (const auto& s : chart.series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  for (const auto& b : chart.bands) {
    for (double v : b.x) xr.add(v);
    for (double v : b.lower) yr.add(v);
    for (double v : b.upper) yr.add(v);
  }
  for (double v : chart.reference) yr.add(v);
  xr.finish();
  yr.finish();
  const double ypad = 0.04 * (yr.hi - yr.lo);
  yr.lo -= ypad;
  yr.hi += ypad;
  const auto px = [&](double v) { return left + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  const auto py = [&](double v) { return top + (yr.hi - v) / (yr.hi - yr.lo) * ph; };

  out << "<text x=\"" << num(width / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
      << escape(chart.title) << "</text>\n";
  out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\""
      << num(ph) << "\" fill=\"none\" stroke=\"#888\"/>\n";

  const double ystep = nice_step(yr.hi - yr.lo, 5);
  for (double v = std::ceil(yr.lo / ystep) * ystep; v <= yr.hi + 1e-9 * ystep; v += ystep) {
    out << "<line x1=\"" << num(left) << "\" x2=\"" << num(left + pw) << "\" y1=\"" << num(py(v)) << "\" y2=\""
        << num(py(v)) << "\" stroke=\"#eee\"/>\n";
    out << "<text x=\"" << num(left - 5) << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">"
        << tick_label(v, ystep) << "</text>\n";
  }
  const double xstep = chart.date_axis ? std::max(1.0, nice_step(xr.hi - xr.lo, 6)) : nice_step(xr.hi - xr.lo, 6);
  for (double v = std::ceil(xr.lo / xstep) * xstep; v <= xr.hi + 1e-9 * xstep; v += xstep) {
    const std::string label =
        chart.date_axis ? format_iso_date(static_cast<DayIndex>(std::lround(v))) : tick_label(v, xstep);
    out << "<line x1=\"" << num(px(v)) << "\" x2=\"" << num(px(v)) << "\" y1=\"" << num(top + ph) << "\" y2=\""
        << num(top + ph + 4) << "\" stroke=\"#888\"/>\n";
    out << "<text x=\"" << num(px(v)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">"
        << label << "</text>\n";
  }
  out << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 8) << "\" text-anchor=\"middle\">"
      << escape(chart.x_label) << "</text>\n";
  out << "<text transform=\"translate(14," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(chart.y_label) << "</text>\n";

  for (const auto& b : chart.bands) {
    out << "<polygon fill=\"" << b.color << "\" fill-opacity=\"" << num(b.opacity) << "\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < b.x.size(); ++i) out << num(px(b.x[i])) << "," << num(py(b.upper[i])) << " ";
    for (std::size_t i = b.x.size(); i-- > 0;) {
      out << num(px(b.x[i])) << "," << num(py(b.lower[i])) << (i ? " " : "");
    }
    out << "\"/>\n";
  }
  for (double v : chart.reference) {
    out << "<line x1=\"" << num(left) << "\" x2=\"" << num(left + pw) << "\" y1=\"" << num(py(v)) << "\" y2=\""
        << num(py(v)) << "\" stroke=\"#444\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (const auto& s : chart.series) {
    polyline(out, s.x, s.y, px, py,
             "stroke=\"" + s.color + "\" stroke-width=\"" + num(s.width) + "\" stroke-opacity=\"" +
                 num(s.opacity) + "\"");
  }
  if (chart.legend) {
    double ly = top + 12;
    for (const auto& s : chart.series) {
      if (s.label.empty()) continue;
      out << "<line x1=\"" << num(left + 10) << "\" x2=\"" << num(left + 30) << "\" y1=\"" << num(ly) << "\" y2=\""
          << num(ly) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
      out << "<text x=\"" << num(left + 35) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.label) << "</text>\n";
      ly += 15;
    }
  }
}

std::string diverging(double t) {
  // t in [-1, 1]; -1 blue, 0 white, 1 red.
  t = std::clamp(t, -1.0, 1.0);
  int r = 255, g = 255, b = 255;
  if (t < 0) {
    r = static_cast<int>(std::lround(255 + t * (255 - 33)));
    g = static_cast<int>(std::lround(255 + t * (255 - 102)));
    b = static_cast<int>(std::lround(255 + t * (255 - 172)));
  } else {
    r = static_cast<int>(std::lround(255 - t * (255 - 178)));
    g = static_cast<int>(std::lround(255 - t * (255 - 24)));
    b = static_cast<int>(std::lround(255 - t * (255 - 43)));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string line_chart(const LineChart& chart, int width, int height) {
  std::ostringstream out;
  out << header(width, height);
  draw_chart(out, chart, width, height);
  out << "</svg>\n";
  return out.str();
}

std::string small_multiples(const std::vector<LineChart>& charts, int columns, int cell_width, int cell_height) {
  const int rows = (static_cast<int>(charts.size()) + columns - 1) / columns;
  std::ostringstream out;
  out << header(columns * cell_width, std::max(rows, 1) * cell_height);
  for (std::size_t i = 0; i < charts.size(); ++i) {
    const int c = static_cast<int>(i) % columns;
    const int r = static_cast<int>(i) / columns;
    out << "<g transform=\"translate(" << c * cell_width << "," << r * cell_height << ")\">\n";
    draw_chart(out, charts[i], cell_width, cell_height);
    out << "</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string heatmap(const Heatmap& map, int width, int height) {
  const double left = 62, right = 90, top = 30, bottom = 46;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  std::ostringstream out;
  out << header(width, height);
  out << "<text x=\"" << num(width / 2.0) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
      << escape(map.title) << "</text>\n";
  const auto nx = static_cast<Eigen::Index>(map.x.size());
  const auto ny = static_cast<Eigen::Index>(map.y.size());
  const double scale = std::max(map.z.cwiseAbs().maxCoeff(), 1e-12);
  const double cw = pw / static_cast<double>(std::max<Eigen::Index>(nx, 1));
  const double ch = ph / static_cast<double>(std::max<Eigen::Index>(ny, 1));
  for (Eigen::Index j = 0; j < ny; ++j) {
    for (Eigen::Index i = 0; i < nx; ++i) {
      out << "<rect x=\"" << num(left + i * cw) << "\" y=\"" << num(top + (ny - 1 - j) * ch) << "\" width=\""
          << num(cw + 0.3) << "\" height=\"" << num(ch + 0.3) << "\" fill=\"" << diverging(map.z(j, i) / scale)
          << "\"/>\n";
    }
  }
  out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  if (nx > 1 && ny > 1) {
    for (int k = 0; k < 5; ++k) {
      const double fx = k / 4.0;
      const double vx = map.x.front() + fx * (map.x.back() - map.x.front());
      const double vy = map.y.front() + fx * (map.y.back() - map.y.front());
      out << "<text x=\"" << num(left + cw / 2 + fx * (pw - cw)) << "\" y=\"" << num(top + ph + 16)
          << "\" text-anchor=\"middle\">" << num(vx) << "</text>\n";
      out << "<text x=\"" << num(left - 5) << "\" y=\"" << num(top + ph - ch / 2 - fx * (ph - ch) + 4)
          << "\" text-anchor=\"end\">" << num(vy) << "</text>\n";
    }
  }
  out << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 8.0)
      << "\" text-anchor=\"middle\">longitude</text>\n";
  out << "<text transform=\"translate(14," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">latitude</text>\n";
  const double bx = left + pw + 24;
  for (int k = 0; k < 40; ++k) {
    const double t = 1.0 - 2.0 * k / 39.0;
    out << "<rect x=\"" << num(bx) << "\" y=\"" << num(top + k * ph / 40) << "\" width=\"16\" height=\""
        << num(ph / 40 + 0.3) << "\" fill=\"" << diverging(t) << "\"/>\n";
  }
  out << "<text x=\"" << num(bx + 20) << "\" y=\"" << num(top + 8) << "\">" << num(scale) << "</text>\n";
  out << "<text x=\"" << num(bx + 20) << "\" y=\"" << num(top + ph / 2 + 4) << "\">0</text>\n";
  out << "<text x=\"" << num(bx + 20) << "\" y=\"" << num(top + ph) << "\">" << num(-scale) << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::string interval_panels(const std::vector<IntervalPanel>& panels, int columns) {
  const int cell_w = 380, cell_h = 260;
  const int rows = (static_cast<int>(panels.size()) + columns - 1) / columns;
  std::ostringstream out;
  out << header(columns * cell_w, std::max(rows, 1) * cell_h);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double ox = (static_cast<int>(p) % columns) * cell_w;
    const double oy = (static_cast<int>(p) / columns) * cell_h;
    const double left = ox + 62, top = oy + 30, pw = cell_w - 78.0, ph = cell_h - 76.0;
    Range yr;
    yr.add(panel.truth);
    for (const auto& iv : panel.intervals) {
      yr.add(iv.lower);
      yr.add(iv.upper);
    }
    yr.finish();
    const auto n = std::max<std::size_t>(panel.intervals.size(), 1);
    const auto px = [&](std::size_t i) { return left + (static_cast<double>(i) + 0.5) / n * pw; };
    const auto py = [&](double v) { return top + (yr.hi - v) / (yr.hi - yr.lo) * ph; };
    out << "<text x=\"" << num(ox + cell_w / 2.0) << "\" y=\"" << num(oy + 18) << "\" text-anchor=\"middle\" "
        << "font-size=\"13\">" << escape(panel.title) << "</text>\n";
    out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\""
        << num(ph) << "\" fill=\"none\" stroke=\"#888\"/>\n";
    const double ystep = nice_step(yr.hi - yr.lo, 4);
    for (double v = std::ceil(yr.lo / ystep) * ystep; v <= yr.hi + 1e-9 * ystep; v += ystep) {
      out << "<text x=\"" << num(left - 5) << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">"
          << tick_label(v, ystep) << "</text>\n";
    }
    out << "<line x1=\"" << num(left) << "\" x2=\"" << num(left + pw) << "\" y1=\"" << num(py(panel.truth))
        << "\" y2=\"" << num(py(panel.truth)) << "\" stroke=\"#444\" stroke-dasharray=\"4 3\"/>\n";
    for (std::size_t i = 0; i < panel.intervals.size(); ++i) {
      const auto& iv = panel.intervals[i];
      const std::string color = iv.covered ? "#1f77b4" : "#d62728";
      out << "<line x1=\"" << num(px(i)) << "\" x2=\"" << num(px(i)) << "\" y1=\"" << num(py(iv.lower))
          << "\" y2=\"" << num(py(iv.upper)) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      out << "<circle cx=\"" << num(px(i)) << "\" cy=\"" << num(py(iv.estimate)) << "\" r=\"2.5\" fill=\"" << color
          << "\"/>\n";
      if (n <= 30 || (i + 1) % 5 == 0) {
        out << "<text x=\"" << num(px(i)) << "\" y=\"" << num(top + ph + 14) << "\" text-anchor=\"middle\" "
            << "font-size=\"9\">" << i + 1 << "</text>\n";
      }
    }
    out << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(top + ph + 32)
        << "\" text-anchor=\"middle\">replication</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace disentangle::cli::svg

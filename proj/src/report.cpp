#include "hrac/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace hrac::report {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

// Fixed two-decimal coordinates keep the output byte-stable.
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
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

std::string tick_label(double v) {
  char buf[32];
  if (std::abs(v) >= 1000.0) std::snprintf(buf, sizeof(buf), "%gk", v / 1000.0);
  else std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Round step for about `target` ticks across span.
double nice_step(double span, int target) {
  if (span <= 0.0) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

std::string plot_svg(const std::vector<harness::Curve>& curves, const PlotOptions& opts) {
  if (curves.empty()) throw std::invalid_argument("plot needs at least one curve");
  const double left = 70, right = 20, top = opts.title.empty() ? 20 : 40, bottom = 50;
  const double pw = opts.width - left - right, ph = opts.height - top - bottom;

  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
  bool any = false;
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      const double lo = c.mean[i] - c.sem[i], hi = c.mean[i] + c.sem[i];
      if (!any) {
        x0 = x1 = c.x[i];
        y0 = lo;
        y1 = hi;
        any = true;
      }
      x0 = std::min(x0, c.x[i]);
      x1 = std::max(x1, c.x[i]);
      y0 = std::min(y0, lo);
      y1 = std::max(y1, hi);
    }
  }
  x0 = std::min(x0, 0.0);
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double ystep = nice_step(y1 - y0, 6), xstep = nice_step(x1 - x0, 6);
  y0 = std::floor(y0 / ystep) * ystep;
  y1 = std::ceil(y1 / ystep) * ystep;
  x1 = std::ceil(x1 / xstep) * xstep;

  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\"" << opts.height
    << "\" viewBox=\"0 0 " << opts.width << ' ' << opts.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opts.title.empty()) {
    o << "<text x=\"" << num(opts.width / 2.0) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(opts.title) << "</text>\n";
  }
  o << "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  for (double y = y0; y <= y1 + 1e-9 * ystep; y += ystep) {
    o << "<line x1=\"" << num(left) << "\" y1=\"" << num(sy(y)) << "\" x2=\"" << num(left + pw) << "\" y2=\""
      << num(sy(y)) << "\"/>\n";
  }
  o << "</g>\n<g>\n";
  for (double y = y0; y <= y1 + 1e-9 * ystep; y += ystep) {
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(y) + 4) << "\" text-anchor=\"end\">"
      << tick_label(std::abs(y) < 1e-12 ? 0.0 : y) << "</text>\n";
  }
  for (double x = x0; x <= x1 + 1e-9 * xstep; x += xstep) {
    o << "<text x=\"" << num(sx(x)) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">"
      << tick_label(x) << "</text>\n";
  }
  o << "</g>\n";
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(opts.height - 10.0)
    << "\" text-anchor=\"middle\">" << escape(opts.x_label) << "</text>\n";
  o << "<text transform=\"translate(16," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(opts.y_label) << "</text>\n";

  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const char* color = kPalette[ci % std::size(kPalette)];
    const bool band = std::any_of(c.sem.begin(), c.sem.end(), [](double s) { return s > 0.0; });
    if (band && !c.x.empty()) {
      o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < c.x.size(); ++i) o << num(sx(c.x[i])) << ',' << num(sy(c.mean[i] + c.sem[i])) << ' ';
      for (std::size_t i = c.x.size(); i-- > 0;) {
        o << num(sx(c.x[i])) << ',' << num(sy(c.mean[i] - c.sem[i])) << (i ? " " : "");
      }
      o << "\"/>\n";
    }
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < c.x.size(); ++i) {
      o << num(sx(c.x[i])) << ',' << num(sy(c.mean[i])) << (i + 1 < c.x.size() ? " " : "");
    }
    o << "\"/>\n";
  }

  // Legend, top-left inside the frame.
  o << "<g class=\"legend\">\n";
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const double ly = top + 16 + 18.0 * double(ci);
    const std::string label = curves[ci].label.empty() ? "curve " + std::to_string(ci + 1) : curves[ci].label;
    o << "<line x1=\"" << num(left + 10) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(left + 30) << "\" y2=\""
      << num(ly - 4) << "\" stroke=\"" << kPalette[ci % std::size(kPalette)] << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(left + 36) << "\" y=\"" << num(ly) << "\">" << escape(label) << "</text>\n";
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

std::string heatmap_svg(const std::vector<std::uint8_t>& dense, int n, const std::string& title) {
  if (n < 0 || dense.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n)) {
    throw std::invalid_argument("heatmap: matrix is not n x n");
  }
  const int cell = n > 200 ? 2 : n > 80 ? 4 : 8;
  const int margin = 30;
  const int side = n * cell;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side + 2 * margin << "\" height=\"" << side + 2 * margin
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << margin << "\" y=\"20\">" << escape(title) << "</text>\n";
  o << "<g fill=\"#222222\" shape-rendering=\"crispEdges\">\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!dense[static_cast<std::size_t>(i) * n + j]) continue;
      o << "<rect x=\"" << margin + j * cell << "\" y=\"" << margin + i * cell << "\" width=\"" << cell
        << "\" height=\"" << cell << "\"/>\n";
    }
  }
  o << "</g>\n<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << side << "\" height=\"" << side
    << "\" fill=\"none\" stroke=\"black\"/>\n</svg>\n";
  return o.str();
}

std::string heatmap_svg(const adjacency::AdjacencyMatrix& m, const std::string& title) {
  const int n = m.size();
  std::vector<std::uint8_t> dense(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) dense[static_cast<std::size_t>(i) * n + j] = m.get(i, j);
  }
  return heatmap_svg(dense, n, title);
}

}  // namespace hrac::report

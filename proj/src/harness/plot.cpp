#include "ftm/harness/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ftm/core/error.hpp"

namespace ftm::harness {

namespace {

constexpr int kW = 640, kH = 440;
constexpr int kL = 70, kR = 160, kT = 50, kB = 60;  // margins (right holds the legend)

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

struct Range {
  double lo = 0, hi = 1;
  double map(double v, double a, double b) const {
    double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    return a + t * (b - a);
  }
};

Range nice_range(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void svg_header(std::ostream& os, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "' viewBox='0 0 " << kW << " "
     << kH << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='16' font-family='sans-serif'>" << title
     << "</text>\n";
  os << "<text x='" << (kL + (kW - kR - kL) / 2) << "' y='" << kH - 16
     << "' text-anchor='middle' font-size='12' font-family='sans-serif'>" << xlabel << "</text>\n";
  os << "<text x='18' y='" << (kT + (kH - kT - kB) / 2)
     << "' text-anchor='middle' font-size='12' font-family='sans-serif' transform='rotate(-90 18 "
     << (kT + (kH - kT - kB) / 2) << ")'>" << ylabel << "</text>\n";
  os << "<rect x='" << kL << "' y='" << kT << "' width='" << kW - kL - kR << "' height='" << kH - kT - kB
     << "' fill='none' stroke='#333'/>\n";
}

void svg_axes(std::ostream& os, const Range& rx, const Range& ry) {
  for (int i = 0; i <= 4; ++i) {
    double fx = rx.lo + (rx.hi - rx.lo) * i / 4.0;
    double px = rx.map(fx, kL, kW - kR);
    os << "<line x1='" << px << "' y1='" << kH - kB << "' x2='" << px << "' y2='" << kH - kB + 5 << "' stroke='#333'/>";
    std::ostringstream v;
    v.precision(4);
    v << fx;
    os << "<text x='" << px << "' y='" << kH - kB + 18 << "' text-anchor='middle' font-size='10' font-family='sans-serif'>"
       << v.str() << "</text>\n";
    double fy = ry.lo + (ry.hi - ry.lo) * i / 4.0;
    double py = ry.map(fy, kH - kB, kT);
    os << "<line x1='" << kL - 5 << "' y1='" << py << "' x2='" << kL << "' y2='" << py << "' stroke='#333'/>";
    std::ostringstream w;
    w.precision(4);
    w << fy;
    os << "<text x='" << kL - 8 << "' y='" << py + 3 << "' text-anchor='end' font-size='10' font-family='sans-serif'>"
       << w.str() << "</text>\n";
  }
}

}  // namespace

void write_svg_lines(const std::string& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<Series>& series) {
  std::ofstream f(path);
  if (!f) throw EvalError("cannot write plot: " + path);
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  if (series.empty() || xlo > xhi) {
    xlo = 0;
    xhi = 1;
    ylo = 0;
    yhi = 1;
  }
  Range rx = nice_range(xlo, xhi), ry = nice_range(ylo, yhi);
  svg_header(f, title, xlabel, ylabel);
  svg_axes(f, rx, ry);
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < s.x.size(); ++i)
      f << rx.map(s.x[i], kL, kW - kR) << "," << ry.map(s.y[i], kH - kB, kT) << " ";
    f << "'/>\n";
    for (size_t i = 0; i < s.x.size(); ++i)
      f << "<circle cx='" << rx.map(s.x[i], kL, kW - kR) << "' cy='" << ry.map(s.y[i], kH - kB, kT)
        << "' r='2.5' fill='" << color << "'/>\n";
    double ly = kT + 16.0 * (static_cast<double>(si) + 1);
    f << "<line x1='" << kW - kR + 10 << "' y1='" << ly << "' x2='" << kW - kR + 30 << "' y2='" << ly << "' stroke='"
      << color << "' stroke-width='2'/>";
    f << "<text x='" << kW - kR + 35 << "' y='" << ly + 4 << "' font-size='11' font-family='sans-serif'>" << s.label
      << "</text>\n";
  }
  f << "</svg>\n";
}

void write_svg_scatter(const std::string& path, const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, const std::vector<LabeledPoint>& points) {
  std::ofstream f(path);
  if (!f) throw EvalError("cannot write plot: " + path);
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& p : points) {
    xlo = std::min(xlo, p.x);
    xhi = std::max(xhi, p.x);
    ylo = std::min(ylo, p.y);
    yhi = std::max(yhi, p.y);
  }
  if (points.empty() || xlo > xhi) {
    xlo = 0;
    xhi = 1;
    ylo = 0;
    yhi = 1;
  }
  Range rx = nice_range(xlo, xhi), ry = nice_range(ylo, yhi);
  svg_header(f, title, xlabel, ylabel);
  svg_axes(f, rx, ry);
  for (size_t i = 0; i < points.size(); ++i) {
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    double px = rx.map(points[i].x, kL, kW - kR), py = ry.map(points[i].y, kH - kB, kT);
    f << "<circle cx='" << px << "' cy='" << py << "' r='4' fill='" << color << "'/>\n";
    f << "<text x='" << px + 6 << "' y='" << py - 6 << "' font-size='10' font-family='sans-serif'>" << points[i].label
      << "</text>\n";
  }
  f << "</svg>\n";
}

}  // namespace ftm::harness

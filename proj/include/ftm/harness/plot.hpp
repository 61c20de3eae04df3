#pragma once

#include <string>
#include <vector>

namespace ftm::harness {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Small standalone SVG writers (no drawing dependencies).
void write_svg_lines(const std::string& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<Series>& series);

struct LabeledPoint {
  std::string label;
  double x = 0, y = 0;
};

void write_svg_scatter(const std::string& path, const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, const std::vector<LabeledPoint>& points);

}  // namespace ftm::harness

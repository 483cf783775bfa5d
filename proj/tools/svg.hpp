#pragma once

#include <string>
#include <vector>

namespace hmmt::cli {

struct Series
{
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false; // dots instead of a polyline
};

struct PlotSpec
{
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::vector<double> vertical_marks; // e.g. the chosen bandwidth
};

/// Static line chart with axes, ticks and a legend.
std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series);

void write_svg(const std::string& path, const PlotSpec& spec, const std::vector<Series>& series);

} // namespace hmmt::cli

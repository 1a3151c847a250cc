#pragma once

#include <string>
#include <vector>

#include "ibnn/numerics.hpp"

namespace ibnn::svg {

/// Predictive mean with a ±2σ band over a 1D probe grid.
struct Band {
  std::string label;
  Vector x;
  Vector mean;
  Vector std;
};

/// One panel per band, training points overlaid. Coordinates are printed
/// with fixed precision so output bytes depend only on the inputs.
std::string band_plot(const std::vector<Band>& bands, const Vector& train_x,
                      const Vector& train_y);

/// Scatter of paired per-split values with a y = x reference line, next to
/// a histogram of the differences b − a.
std::string pair_plot(const std::string& label_a, const std::string& label_b,
                      const std::vector<double>& a, const std::vector<double>& b);

struct BarGroup {
  std::string label;
  std::vector<double> mean;
  std::vector<double> stderr_;
};

/// Grouped bars with ±1 SE whiskers; one bar per category within a group.
std::string bar_plot(const std::string& title, const std::vector<std::string>& categories,
                     const std::vector<BarGroup>& groups);

}  // namespace ibnn::svg

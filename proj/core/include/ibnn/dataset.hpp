#pragma once

#include <string>
#include <vector>

#include "ibnn/numerics.hpp"

namespace ibnn {

/// Regression data: N rows of D inputs and K targets.
struct Dataset {
  std::string name;
  Matrix x;  // N x D
  Matrix y;  // N x K
  std::string path;
  std::string content_hash;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index input_dim() const { return x.cols(); }
  Eigen::Index output_dim() const { return y.cols(); }

  /// Rows `indices` in the given order; provenance is carried over.
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

}  // namespace ibnn

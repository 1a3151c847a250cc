#include "ibnn/dataset.hpp"

namespace ibnn {

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.name = name;
  out.path = path;
  out.content_hash = content_hash;
  out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(indices.size()), y.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(indices[r]);
    if (src >= x.rows()) throw DimensionMismatch("subset: index out of range");
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(src);
    out.y.row(static_cast<Eigen::Index>(r)) = y.row(src);
  }
  return out;
}

}  // namespace ibnn

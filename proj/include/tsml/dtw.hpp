#pragma once

#include "tsml/series.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <limits>

namespace tsml {

struct DtwOptions {
  /// Sakoe-Chiba radius: cells with |i - j| > band are excluded.
  std::size_t band = std::numeric_limits<std::size_t>::max();
  /// Divide the path cost by (len_a + len_b).
  bool normalize = false;
};

/// Dependent multivariate DTW: one warping path shared by all features,
/// local cost ||a_i - b_j||^2, steps (1,0), (0,1), (1,1), unnormalized sum.
/// Inputs are d x len matrices, one column per time step.
double mdtw(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b,
            const DtwOptions& opts = {});

inline double mdtw(const Sample& a, const Sample& b, const DtwOptions& opts = {}) {
  return mdtw(a.window, b.window, opts);
}

}  // namespace tsml

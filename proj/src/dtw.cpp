#include "tsml/dtw.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsml {

double mdtw(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b,
            const DtwOptions& opts) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("mdtw feature dimension mismatch: " + std::to_string(a.rows()) + " vs " +
                                std::to_string(b.rows()));
  }
  const auto na = static_cast<std::size_t>(a.cols());
  const auto nb = static_cast<std::size_t>(b.cols());
  if (na == 0 || nb == 0) throw std::invalid_argument("mdtw needs non-empty sequences");

  constexpr double inf = std::numeric_limits<double>::infinity();
  // Two rolling rows of the (na+1) x (nb+1) accumulated-cost table.
  std::vector<double> prev(nb + 1, inf);
  std::vector<double> curr(nb + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= na; ++i) {
    std::fill(curr.begin(), curr.end(), inf);
    const std::size_t lo = (opts.band < i) ? i - opts.band : 1;
    const std::size_t hi = (opts.band >= nb) ? nb : std::min(nb, i + opts.band);
    for (std::size_t j = lo; j <= hi; ++j) {
      const double best = std::min({prev[j - 1], prev[j], curr[j - 1]});
      if (best == inf) continue;
      const double cost = (a.col(static_cast<Eigen::Index>(i - 1)) - b.col(static_cast<Eigen::Index>(j - 1))).squaredNorm();
      curr[j] = best + cost;
    }
    std::swap(prev, curr);
  }
  const double total = prev[nb];
  if (total == inf) {
    throw std::invalid_argument("mdtw band " + std::to_string(opts.band) + " admits no warping path for lengths " +
                                std::to_string(na) + " and " + std::to_string(nb));
  }
  return opts.normalize ? total / static_cast<double>(na + nb) : total;
}

}  // namespace tsml

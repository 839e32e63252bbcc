#pragma once

#include "tsml/series.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace tsml {

/// Mahalanobis matrix M = F^T F over flattened d x w windows.
///
/// Held together with its factor so M is positive semidefinite by
/// construction.
class MetricMatrix {
 public:
  static MetricMatrix identity(std::size_t d, std::size_t w);
  static MetricMatrix from_factor(Eigen::MatrixXd factor, std::size_t d, std::size_t w);

  /// Accepts a stored (M, F) pair; throws if M differs from F^T F beyond
  /// 1e-9 relative to the largest entry.
  static MetricMatrix from_parts(Eigen::MatrixXd m, Eigen::MatrixXd factor, std::size_t d,
                                 std::size_t w);

  const Eigen::MatrixXd& m() const { return m_; }
  const Eigen::MatrixXd& factor() const { return factor_; }
  std::size_t dims() const { return d_; }
  std::size_t width() const { return w_; }
  std::size_t size() const { return d_ * w_; }

 private:
  MetricMatrix(Eigen::MatrixXd m, Eigen::MatrixXd factor, std::size_t d, std::size_t w);

  Eigen::MatrixXd m_;
  Eigen::MatrixXd factor_;
  std::size_t d_ = 0;
  std::size_t w_ = 0;
};

/// Positions of each sub-block A^(m) of a symmetric block Toeplitz matrix.
///
/// Offset m covers the lower-triangular block pairs (p, q) with p - q = m;
/// there are R(m) = w - m of them. The upper triangle holds the transposes.
struct BlockToeplitzIndex {
  struct BlockPos {
    std::size_t row = 0;  // block row p
    std::size_t col = 0;  // block col q
  };

  std::size_t d = 0;
  std::size_t w = 0;
  std::vector<std::vector<BlockPos>> occurrences;

  std::size_t repeats(std::size_t m) const { return w - m; }
  std::size_t size() const { return d * w; }
};

BlockToeplitzIndex bt_index(std::size_t d, std::size_t w);

/// Orthogonal (Frobenius) projection onto symmetric block Toeplitz matrices:
/// each sub-block entry becomes the mean of its R(m) lower occurrences and
/// their R(m) transposed mirrors.
Eigen::MatrixXd bt_project(const Eigen::Ref<const Eigen::MatrixXd>& a, const BlockToeplitzIndex& idx);

/// ||a - bt_project(a)||_F / ||a||_F, with 0 for a zero matrix.
double bt_deviation(const Eigen::Ref<const Eigen::MatrixXd>& a, const BlockToeplitzIndex& idx);

/// True when every occurrence of every sub-block (and every mirror) agrees
/// to within `tol`.
bool is_block_toeplitz(const Eigen::Ref<const Eigen::MatrixXd>& a, const BlockToeplitzIndex& idx,
                       double tol = 0.0);

/// Squared Mahalanobis distance, evaluated as ||F (a - b)||^2.
double mahalanobis(const Sample& a, const Sample& b, const MetricMatrix& metric);

/// Squared Euclidean distance of the flattened windows.
double euclidean(const Sample& a, const Sample& b);

struct CovarianceDiagnostic {
  Eigen::MatrixXd covariance;
  double deviation = 0.0;
};

/// Population covariance (1/N) of the flattened samples and its relative
/// distance from the block Toeplitz set.
CovarianceDiagnostic covariance_bt_deviation(std::span<const Sample> samples);

// Text format: "d w", then dw rows of M, then dw rows of F, 17 significant digits.
void write_metric(std::ostream& out, const MetricMatrix& metric);
MetricMatrix read_metric(std::istream& in);
void save_metric(const MetricMatrix& metric, const std::filesystem::path& path);
MetricMatrix load_metric(const std::filesystem::path& path);

}  // namespace tsml

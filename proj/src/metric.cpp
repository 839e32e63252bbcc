#include "tsml/metric.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tsml {

namespace {

using Eigen::Index;

void check_same_shape(const Sample& a, const Sample& b) {
  if (a.dims() != b.dims() || a.width() != b.width()) {
    throw std::invalid_argument("sample dimension mismatch: " + std::to_string(a.dims()) + "x" +
                                std::to_string(a.width()) + " vs " + std::to_string(b.dims()) + "x" +
                                std::to_string(b.width()));
  }
}

void check_square(const Eigen::Ref<const Eigen::MatrixXd>& a, const BlockToeplitzIndex& idx) {
  const auto n = static_cast<Index>(idx.size());
  if (a.rows() != n || a.cols() != n) {
    throw std::invalid_argument("matrix is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                ", block Toeplitz index expects " + std::to_string(n) + "x" +
                                std::to_string(n));
  }
}

}  // namespace

MetricMatrix::MetricMatrix(Eigen::MatrixXd m, Eigen::MatrixXd factor, std::size_t d, std::size_t w)
    : m_(std::move(m)), factor_(std::move(factor)), d_(d), w_(w) {}

MetricMatrix MetricMatrix::identity(std::size_t d, std::size_t w) {
  const auto n = static_cast<Index>(d * w);
  if (n == 0) throw std::invalid_argument("metric needs d >= 1 and w >= 1");
  return {Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Identity(n, n), d, w};
}

MetricMatrix MetricMatrix::from_factor(Eigen::MatrixXd factor, std::size_t d, std::size_t w) {
  const auto n = static_cast<Index>(d * w);
  if (n == 0 || factor.cols() != n || factor.rows() < 1) {
    throw std::invalid_argument("factor must have d*w columns");
  }
  Eigen::MatrixXd m = factor.transpose() * factor;
  m = 0.5 * (m + m.transpose()).eval();
  return {std::move(m), std::move(factor), d, w};
}

MetricMatrix MetricMatrix::from_parts(Eigen::MatrixXd m, Eigen::MatrixXd factor, std::size_t d,
                                      std::size_t w) {
  const auto n = static_cast<Index>(d * w);
  if (n == 0 || m.rows() != n || m.cols() != n || factor.cols() != n) {
    throw std::invalid_argument("metric parts do not match d*w");
  }
  const Eigen::MatrixXd ftf = factor.transpose() * factor;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - ftf).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw std::invalid_argument("stored M differs from F^T F");
  }
  return {std::move(m), std::move(factor), d, w};
}

BlockToeplitzIndex bt_index(std::size_t d, std::size_t w) {
  if (d == 0 || w == 0) throw std::invalid_argument("block Toeplitz index needs d >= 1 and w >= 1");
  BlockToeplitzIndex idx;
  idx.d = d;
  idx.w = w;
  idx.occurrences.resize(w);
  for (std::size_t m = 0; m < w; ++m) {
    for (std::size_t l = 0; l + m < w; ++l) idx.occurrences[m].push_back({l + m, l});
  }
  return idx;
}

Eigen::MatrixXd bt_project(const Eigen::Ref<const Eigen::MatrixXd>& a, const BlockToeplitzIndex& idx) {
  check_square(a, idx);
  const auto d = static_cast<Index>(idx.d);
  Eigen::MatrixXd out(a.rows(), a.cols());
  for (std::size_t m = 0; m < idx.w; ++m) {
    const auto& occ = idx.occurrences[m];
    // Lower occurrences contribute A^(m); upper mirrors contribute (A^(m))^T.
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(d, d);
    for (const auto& p : occ) {
      const auto r = static_cast<Index>(p.row) * d;
      const auto c = static_cast<Index>(p.col) * d;
      block += a.block(r, c, d, d);
      block += a.block(c, r, d, d).transpose();
    }
    block /= static_cast<double>(2 * occ.size());
    // the two halves of a diagonal block were summed in different orders
    if (m == 0) block = (0.5 * (block + block.transpose())).eval();
    for (const auto& p : occ) {
      const auto r = static_cast<Index>(p.row) * d;
      const auto c = static_cast<Index>(p.col) * d;
      out.block(r, c, d, d) = block;
      out.block(c, r, d, d) = block.transpose();
    }
  }
  return out;
}

double bt_deviation(const Eigen::Ref<const Eigen::MatrixXd>& a, const BlockToeplitzIndex& idx) {
  const double norm = a.norm();
  if (norm == 0.0) return 0.0;
  return (a - bt_project(a, idx)).norm() / norm;
}

bool is_block_toeplitz(const Eigen::Ref<const Eigen::MatrixXd>& a, const BlockToeplitzIndex& idx,
                       double tol) {
  check_square(a, idx);
  const auto d = static_cast<Index>(idx.d);
  for (std::size_t m = 0; m < idx.w; ++m) {
    const auto& occ = idx.occurrences[m];
    const auto r0 = static_cast<Index>(occ.front().row) * d;
    const auto c0 = static_cast<Index>(occ.front().col) * d;
    const Eigen::MatrixXd ref = a.block(r0, c0, d, d);
    for (const auto& p : occ) {
      const auto r = static_cast<Index>(p.row) * d;
      const auto c = static_cast<Index>(p.col) * d;
      if ((a.block(r, c, d, d) - ref).cwiseAbs().maxCoeff() > tol) return false;
      if ((a.block(c, r, d, d).transpose() - ref).cwiseAbs().maxCoeff() > tol) return false;
    }
  }
  return true;
}

double mahalanobis(const Sample& a, const Sample& b, const MetricMatrix& metric) {
  check_same_shape(a, b);
  if (a.dims() != metric.dims() || a.width() != metric.width()) {
    throw std::invalid_argument("sample and metric dimensions differ");
  }
  const Eigen::VectorXd diff = a.flat() - b.flat();
  return (metric.factor() * diff).squaredNorm();
}

double euclidean(const Sample& a, const Sample& b) {
  check_same_shape(a, b);
  return (a.flat() - b.flat()).squaredNorm();
}

CovarianceDiagnostic covariance_bt_deviation(std::span<const Sample> samples) {
  if (samples.size() < 2) throw std::invalid_argument("covariance needs at least 2 samples");
  const std::size_t d = samples.front().dims();
  const std::size_t w = samples.front().width();
  const auto n = static_cast<Index>(d * w);
  Eigen::MatrixXd x(n, static_cast<Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    check_same_shape(samples.front(), samples[i]);
    x.col(static_cast<Index>(i)) = samples[i].flat();
  }
  const Eigen::VectorXd mean = x.rowwise().mean();
  x.colwise() -= mean;
  CovarianceDiagnostic out;
  out.covariance = (x * x.transpose()) / static_cast<double>(samples.size());
  out.deviation = bt_deviation(out.covariance, bt_index(d, w));
  return out;
}

void write_metric(std::ostream& out, const MetricMatrix& metric) {
  const auto old_precision = out.precision(17);
  out << metric.dims() << ' ' << metric.width() << '\n';
  auto rows = [&out](const Eigen::MatrixXd& a) {
    for (Index r = 0; r < a.rows(); ++r) {
      for (Index c = 0; c < a.cols(); ++c) {
        if (c) out << ' ';
        out << a(r, c);
      }
      out << '\n';
    }
  };
  rows(metric.m());
  rows(metric.factor());
  out.precision(old_precision);
}

MetricMatrix read_metric(std::istream& in) {
  std::size_t d = 0;
  std::size_t w = 0;
  if (!(in >> d >> w) || d == 0 || w == 0) throw std::runtime_error("metric file: bad 'd w' header");
  const auto n = static_cast<Index>(d * w);
  auto read_block = [&in, n](const char* what) {
    Eigen::MatrixXd a(n, n);
    for (Index r = 0; r < n; ++r) {
      for (Index c = 0; c < n; ++c) {
        if (!(in >> a(r, c))) {
          throw std::runtime_error(std::string("metric file: truncated ") + what + " at row " +
                                   std::to_string(r + 1));
        }
      }
    }
    return a;
  };
  Eigen::MatrixXd m = read_block("M");
  Eigen::MatrixXd f = read_block("F");
  return MetricMatrix::from_parts(std::move(m), std::move(f), d, w);
}

void save_metric(const MetricMatrix& metric, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_metric(out, metric);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

MetricMatrix load_metric(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_metric(in);
}

}  // namespace tsml

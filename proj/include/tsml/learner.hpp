#pragma once

#include "tsml/metric.hpp"
#include "tsml/series.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace tsml {

/// Target neighbors (same label, Euclidean nearest, fixed before learning)
/// and per-sample labels for impostor tests.
struct NeighborGraph {
  std::vector<std::vector<std::size_t>> targets;
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
  /// Indices l with a label different from sample i.
  std::vector<std::size_t> impostor_candidates(std::size_t i) const;
  std::size_t target_pairs() const;
};

/// k_t Euclidean nearest same-label neighbors per sample; ties go to the
/// lower index. A label with a single sample gets an empty target list.
NeighborGraph build_neighbor_graph(std::span<const Sample> train, std::size_t k_targets);

enum class LearnMode {
  kTimeInvariant,  // ADMM with the block Toeplitz split
  kUnconstrained,  // plain LMNN: rho = 0, no Z/U steps
};

struct LearnConfig {
  LearnMode mode = LearnMode::kTimeInvariant;
  double c = 0.5;              // weight of the impostor hinge term
  std::size_t k_targets = 3;
  double rho = 3000.0;         // ADMM penalty
  double alpha = 1e-4;         // gradient step on the factor
  std::size_t max_outer = 50;  // K
  std::size_t inner_max = 200;
  double inner_tol = 1e-6;     // relative objective decrease that ends an M-update
  double eps_primal = 1e-3;
  double eps_dual = 1e-3;
  std::size_t max_halvings = 20;
  /// Above this many training samples, impostor pairs are screened once per
  /// M-update and only the survivors are evaluated by the inner steps.
  std::size_t active_set_threshold = 2000;
  /// Project M^K onto the block Toeplitz set and clip negative eigenvalues.
  bool finalize = false;
  /// Carried for provenance; the solver itself is deterministic.
  std::uint64_t seed = 0;

  void validate() const;
};

/// The large-margin loss over a fixed training set and neighbor graph:
///   (1-c) sum_{i, j in T(i)} D(i,j)
///     + c sum_{i, j in T(i), l: y_l != y_i} [1 + D(i,j) - D(i,l)]_+
class LmnnObjective {
 public:
  LmnnObjective(std::span<const Sample> train, const NeighborGraph& graph, double c);

  /// Loss under M = F^T F.
  double loss_factor(const Eigen::Ref<const Eigen::MatrixXd>& factor) const;
  /// Loss under an arbitrary square matrix (used for finite differences).
  double loss_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) const;
  /// Loss and its (sub)gradient with respect to M, evaluated through F.
  double loss_and_gradient(const Eigen::Ref<const Eigen::MatrixXd>& factor, Eigen::MatrixXd& grad) const;

  /// Restrict impostor evaluation to pairs (i, l) with D(i,l) below
  /// 2 (1 + max_j D(i,j)) under the given factor.
  void screen_impostors(const Eigen::Ref<const Eigen::MatrixXd>& factor);
  void clear_screen() { screened_.clear(); }
  bool screened() const { return !screened_.empty(); }

  const Eigen::MatrixXd& data() const { return x_; }
  std::size_t dims() const { return d_; }
  std::size_t width() const { return w_; }
  std::size_t size() const { return static_cast<std::size_t>(x_.cols()); }

 private:
  template <class RowFn>
  double evaluate(RowFn&& row_distances, Eigen::MatrixXd* grad) const;

  Eigen::MatrixXd x_;  // dw x n, one flattened sample per column
  NeighborGraph graph_;
  double c_;
  std::size_t d_ = 0;
  std::size_t w_ = 0;
  std::vector<std::vector<std::size_t>> screened_;
};

double lmnn_loss(const MetricMatrix& metric, const NeighborGraph& graph, std::span<const Sample> train,
                 double c);
double lmnn_loss(const Eigen::Ref<const Eigen::MatrixXd>& m, const NeighborGraph& graph,
                 std::span<const Sample> train, double c);
Eigen::MatrixXd loss_gradient_m(const MetricMatrix& metric, const NeighborGraph& graph,
                                std::span<const Sample> train, double c);

struct IterationRecord {
  std::size_t k = 0;
  double loss = 0.0;       // LMNN loss after the M-update
  double objective = 0.0;  // M-update objective at exit
  double primal = 0.0;     // ||M - Z||_F
  double dual = 0.0;       // rho ||Z_k - Z_{k-1}||_F
  std::size_t inner_steps = 0;
  std::vector<double> inner_objective;  // accepted-step trajectory, starting point first
};

struct AdmmState {
  MetricMatrix metric;
  Eigen::MatrixXd z;
  Eigen::MatrixXd u;
  std::size_t k = 0;
  std::vector<IterationRecord> history;
  bool converged = false;

  /// M = I, Z = 0, U = 0.
  static AdmmState initial(std::size_t d, std::size_t w);
};

struct MUpdateResult {
  MetricMatrix metric;
  std::size_t steps = 0;
  std::vector<double> objective;
  double loss = 0.0;
};

/// Approximately minimizes loss(M) + rho/2 ||M - Z + U||_F^2 by gradient
/// steps on the factor, halving the step whenever the objective would rise.
MUpdateResult m_update(const AdmmState& state, const LmnnObjective& objective, const LearnConfig& cfg);
MUpdateResult m_update(const AdmmState& state, const NeighborGraph& graph, std::span<const Sample> train,
                       const LearnConfig& cfg);

/// bt_project(M + U).
Eigen::MatrixXd z_update(const MetricMatrix& metric, const Eigen::Ref<const Eigen::MatrixXd>& u,
                         const BlockToeplitzIndex& idx);

/// U + (M - Z).
Eigen::MatrixXd u_update(const Eigen::Ref<const Eigen::MatrixXd>& u, const Eigen::Ref<const Eigen::MatrixXd>& m,
                         const Eigen::Ref<const Eigen::MatrixXd>& z);

/// Projects onto block Toeplitz and clips negative eigenvalues at 0.
MetricMatrix finalize_metric(const MetricMatrix& metric);

struct FitResult {
  MetricMatrix metric;
  AdmmState state;
};

FitResult fit(std::span<const Sample> train, const LearnConfig& cfg);

/// CSV `k,loss,primal_residual,dual_residual,inner_steps`, one row per outer iteration.
void write_training_log(std::ostream& out, const AdmmState& state);

}  // namespace tsml

#include "tsml/learner.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace tsml {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t i) { return static_cast<Index>(i); }

MatrixXd symmetrized(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

void check_train(std::span<const Sample> train) {
  if (train.empty()) throw std::invalid_argument("empty training set");
  for (const auto& s : train) {
    if (s.dims() != train.front().dims() || s.width() != train.front().width()) {
      throw std::invalid_argument("training samples have inconsistent (d, w)");
    }
  }
}

}  // namespace

std::vector<std::size_t> NeighborGraph::impostor_candidates(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    if (labels[l] != labels[i]) out.push_back(l);
  }
  return out;
}

std::size_t NeighborGraph::target_pairs() const {
  std::size_t n = 0;
  for (const auto& t : targets) n += t.size();
  return n;
}

NeighborGraph build_neighbor_graph(std::span<const Sample> train, std::size_t k_targets) {
  check_train(train);
  NeighborGraph g;
  g.labels.reserve(train.size());
  for (const auto& s : train) g.labels.push_back(s.label);
  g.targets.resize(train.size());

  std::map<Label, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < train.size(); ++i) members[train[i].label].push_back(i);
  for (const auto& [label, group] : members) {
    if (group.size() == 1) {
      std::cerr << "warning: label " << label << " has a single training sample; it gets no target neighbors\n";
    }
  }

  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& group = members[train[i].label];
    cand.clear();
    for (std::size_t j : group) {
      if (j != i) cand.emplace_back(euclidean(train[i], train[j]), j);
    }
    const std::size_t k = std::min(k_targets, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) g.targets[i].push_back(cand[r].second);
  }
  return g;
}

void LearnConfig::validate() const {
  if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("c must lie in [0, 1]");
  if (k_targets == 0) throw std::invalid_argument("k_targets must be positive");
  if (mode == LearnMode::kTimeInvariant && !(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (inner_max == 0) throw std::invalid_argument("inner_max must be positive");
  if (!(inner_tol >= 0.0) || !(eps_primal > 0.0) || !(eps_dual > 0.0)) {
    throw std::invalid_argument("tolerances must be positive");
  }
}

LmnnObjective::LmnnObjective(std::span<const Sample> train, const NeighborGraph& graph, double c)
    : graph_(graph), c_(c) {
  check_train(train);
  if (graph.size() != train.size()) throw std::invalid_argument("neighbor graph and training set differ in size");
  d_ = train.front().dims();
  w_ = train.front().width();
  x_.resize(idx(d_ * w_), idx(train.size()));
  for (std::size_t i = 0; i < train.size(); ++i) x_.col(idx(i)) = train[i].flat();
}

template <class RowFn>
double LmnnObjective::evaluate(RowFn&& row_distances, MatrixXd* grad) const {
  const std::size_t n = size();
  const auto& labels = graph_.labels;
  VectorXd row(idx(n));
  std::vector<Eigen::Triplet<double>> lap;
  std::vector<double> impostor_hits;
  std::vector<std::size_t> touched;
  if (grad) impostor_hits.assign(n, 0.0);

  auto add_pair = [&lap](std::size_t a, std::size_t b, double weight) {
    lap.emplace_back(idx(a), idx(a), weight);
    lap.emplace_back(idx(b), idx(b), weight);
    lap.emplace_back(idx(a), idx(b), -weight);
    lap.emplace_back(idx(b), idx(a), -weight);
  };

  double pull = 0.0;
  double push = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& targets = graph_.targets[i];
    if (targets.empty()) continue;
    row_distances(i, row);
    for (std::size_t j : targets) {
      const double dij = row(idx(j));
      pull += dij;
      std::size_t active = 0;
      auto visit = [&](std::size_t l) {
        const double h = 1.0 + dij - row(idx(l));
        if (h > 0.0) {
          push += h;
          ++active;
          if (grad) {
            if (impostor_hits[l] == 0.0) touched.push_back(l);
            impostor_hits[l] += 1.0;
          }
        }
      };
      if (screened()) {
        for (std::size_t l : screened_[i]) visit(l);
      } else {
        for (std::size_t l = 0; l < n; ++l) {
          if (labels[l] != labels[i]) visit(l);
        }
      }
      if (grad) add_pair(i, j, (1.0 - c_) + c_ * static_cast<double>(active));
    }
    if (grad) {
      std::sort(touched.begin(), touched.end());
      for (std::size_t l : touched) {
        add_pair(i, l, -c_ * impostor_hits[l]);
        impostor_hits[l] = 0.0;
      }
      touched.clear();
    }
  }

  if (grad) {
    Eigen::SparseMatrix<double> laplacian(idx(n), idx(n));
    laplacian.setFromTriplets(lap.begin(), lap.end());
    const MatrixXd xl = x_ * laplacian;
    *grad = symmetrized(xl * x_.transpose());
  }
  return (1.0 - c_) * pull + c_ * push;
}

double LmnnObjective::loss_factor(const Eigen::Ref<const MatrixXd>& factor) const {
  const MatrixXd y = factor * x_;
  return evaluate([&y](std::size_t i, VectorXd& row) {
    row = (y.colwise() - y.col(idx(i))).colwise().squaredNorm().transpose();
  }, nullptr);
}

double LmnnObjective::loss_matrix(const Eigen::Ref<const MatrixXd>& m) const {
  if (m.rows() != x_.rows() || m.cols() != x_.rows()) throw std::invalid_argument("metric size differs from d*w");
  return evaluate([this, &m](std::size_t i, VectorXd& row) {
    const MatrixXd diff = x_.colwise() - x_.col(idx(i));
    row = (diff.array() * (m * diff).array()).colwise().sum().transpose();
  }, nullptr);
}

double LmnnObjective::loss_and_gradient(const Eigen::Ref<const MatrixXd>& factor, MatrixXd& grad) const {
  const MatrixXd y = factor * x_;
  return evaluate([&y](std::size_t i, VectorXd& row) {
    row = (y.colwise() - y.col(idx(i))).colwise().squaredNorm().transpose();
  }, &grad);
}

void LmnnObjective::screen_impostors(const Eigen::Ref<const MatrixXd>& factor) {
  const std::size_t n = size();
  const MatrixXd y = factor * x_;
  std::vector<std::vector<std::size_t>> kept(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& targets = graph_.targets[i];
    if (targets.empty()) continue;
    const VectorXd row = (y.colwise() - y.col(idx(i))).colwise().squaredNorm().transpose();
    double reach = 0.0;
    for (std::size_t j : targets) reach = std::max(reach, row(idx(j)));
    const double limit = 2.0 * (1.0 + reach);
    for (std::size_t l = 0; l < n; ++l) {
      if (graph_.labels[l] != graph_.labels[i] && row(idx(l)) < limit) kept[i].push_back(l);
    }
  }
  screened_ = std::move(kept);
}

double lmnn_loss(const MetricMatrix& metric, const NeighborGraph& graph, std::span<const Sample> train, double c) {
  return LmnnObjective(train, graph, c).loss_factor(metric.factor());
}

double lmnn_loss(const Eigen::Ref<const MatrixXd>& m, const NeighborGraph& graph, std::span<const Sample> train,
                 double c) {
  return LmnnObjective(train, graph, c).loss_matrix(m);
}

MatrixXd loss_gradient_m(const MetricMatrix& metric, const NeighborGraph& graph, std::span<const Sample> train,
                         double c) {
  MatrixXd grad;
  LmnnObjective(train, graph, c).loss_and_gradient(metric.factor(), grad);
  return grad;
}

AdmmState AdmmState::initial(std::size_t d, std::size_t w) {
  const auto n = idx(d * w);
  return {MetricMatrix::identity(d, w), MatrixXd::Zero(n, n), MatrixXd::Zero(n, n), 0, {}, false};
}

MUpdateResult m_update(const AdmmState& state, const LmnnObjective& objective, const LearnConfig& cfg) {
  const bool constrained = cfg.mode == LearnMode::kTimeInvariant;
  const double rho = constrained ? cfg.rho : 0.0;
  const std::size_t d = state.metric.dims();
  const std::size_t w = state.metric.width();
  const MatrixXd anchor = state.z - state.u;

  struct Point {
    MatrixXd factor;
    double loss = 0.0;
    double value = 0.0;
    MatrixXd grad_factor;
  };
  auto evaluate = [&](MatrixXd factor) {
    Point p;
    MatrixXd grad_m;
    p.loss = objective.loss_and_gradient(factor, grad_m);
    p.value = p.loss;
    if (rho > 0.0) {
      const MatrixXd residual = symmetrized(factor.transpose() * factor) - anchor;
      p.value += 0.5 * rho * residual.squaredNorm();
      grad_m += rho * residual;
    }
    p.grad_factor = 2.0 * factor * grad_m;
    p.factor = std::move(factor);
    return p;
  };

  Point current = evaluate(state.metric.factor());
  if (!std::isfinite(current.value)) {
    throw std::runtime_error("non-finite loss at outer iteration " + std::to_string(state.k + 1) +
                             " before any inner step; try a smaller alpha");
  }

  MUpdateResult out{state.metric, 0, {current.value}, current.loss};
  double step = cfg.alpha;
  std::size_t halvings = 0;
  for (std::size_t attempt = 0; out.steps < cfg.inner_max;) {
    ++attempt;
    Point trial = evaluate(current.factor - step * current.grad_factor);
    if (!std::isfinite(trial.value) || trial.value > current.value) {
      if (++halvings > cfg.max_halvings) {
        if (!std::isfinite(trial.value)) {
          throw std::runtime_error("loss diverged at outer iteration " + std::to_string(state.k + 1) +
                                   ", inner attempt " + std::to_string(attempt) + "; try a smaller alpha");
        }
        break;
      }
      step *= 0.5;
      continue;
    }
    halvings = 0;
    const double decrease = current.value - trial.value;
    const double scale = std::max(std::abs(current.value), std::numeric_limits<double>::min());
    current = std::move(trial);
    ++out.steps;
    out.objective.push_back(current.value);
    if (decrease / scale < cfg.inner_tol) break;
  }
  out.metric = MetricMatrix::from_factor(current.factor, d, w);
  out.loss = current.loss;
  return out;
}

MUpdateResult m_update(const AdmmState& state, const NeighborGraph& graph, std::span<const Sample> train,
                       const LearnConfig& cfg) {
  const LmnnObjective objective(train, graph, cfg.c);
  return m_update(state, objective, cfg);
}

MatrixXd z_update(const MetricMatrix& metric, const Eigen::Ref<const MatrixXd>& u, const BlockToeplitzIndex& idx) {
  if (u.rows() != metric.m().rows() || u.cols() != metric.m().cols()) {
    throw std::invalid_argument("z_update: U and M differ in size");
  }
  return bt_project(metric.m() + u, idx);
}

MatrixXd u_update(const Eigen::Ref<const MatrixXd>& u, const Eigen::Ref<const MatrixXd>& m,
                  const Eigen::Ref<const MatrixXd>& z) {
  if (u.rows() != m.rows() || u.cols() != m.cols() || z.rows() != m.rows() || z.cols() != m.cols()) {
    throw std::invalid_argument("u_update: size mismatch");
  }
  return u + (m - z);
}

MetricMatrix finalize_metric(const MetricMatrix& metric) {
  const auto index = bt_index(metric.dims(), metric.width());
  const MatrixXd projected = bt_project(metric.m(), index);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(projected);
  const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  MatrixXd factor = root.asDiagonal() * eig.eigenvectors().transpose();
  return MetricMatrix::from_factor(std::move(factor), metric.dims(), metric.width());
}

FitResult fit(std::span<const Sample> train, const LearnConfig& cfg) {
  cfg.validate();
  check_train(train);
  {
    const Label first = train.front().label;
    if (std::all_of(train.begin(), train.end(), [first](const Sample& s) { return s.label == first; })) {
      throw std::invalid_argument("fit needs at least two labels");
    }
  }
  const std::size_t d = train.front().dims();
  const std::size_t w = train.front().width();
  const bool constrained = cfg.mode == LearnMode::kTimeInvariant;

  const NeighborGraph graph = build_neighbor_graph(train, cfg.k_targets);
  LmnnObjective objective(train, graph, cfg.c);
  const BlockToeplitzIndex index = bt_index(d, w);
  AdmmState state = AdmmState::initial(d, w);

  for (std::size_t k = 1; k <= cfg.max_outer; ++k) {
    if (train.size() > cfg.active_set_threshold) objective.screen_impostors(state.metric.factor());
    MUpdateResult upd = m_update(state, objective, cfg);

    IterationRecord rec;
    rec.k = k;
    rec.loss = upd.loss;
    rec.objective = upd.objective.back();
    rec.inner_steps = upd.steps;
    rec.inner_objective = std::move(upd.objective);
    state.metric = std::move(upd.metric);
    state.k = k;

    if (constrained) {
      MatrixXd z = z_update(state.metric, state.u, index);
      state.u = u_update(state.u, state.metric.m(), z);
      rec.primal = (state.metric.m() - z).norm();
      rec.dual = cfg.rho * (z - state.z).norm();
      state.z = std::move(z);
      state.history.push_back(std::move(rec));
      const auto& last = state.history.back();
      if (last.primal < cfg.eps_primal && last.dual < cfg.eps_dual) {
        state.converged = true;
        break;
      }
    } else {
      const double start = rec.inner_objective.front();
      const double gain = (start - rec.objective) / std::max(std::abs(start), std::numeric_limits<double>::min());
      state.history.push_back(std::move(rec));
      if (state.history.back().inner_steps == 0 || gain < cfg.inner_tol) {
        state.converged = true;
        break;
      }
    }
  }

  MetricMatrix result = cfg.finalize ? finalize_metric(state.metric) : state.metric;
  return {std::move(result), std::move(state)};
}

void write_training_log(std::ostream& out, const AdmmState& state) {
  const auto old_precision = out.precision(17);
  out << "k,loss,primal_residual,dual_residual,inner_steps\n";
  for (const auto& r : state.history) {
    out << r.k << ',' << r.loss << ',' << r.primal << ',' << r.dual << ',' << r.inner_steps << '\n';
  }
  out.precision(old_precision);
}

}  // namespace tsml

#include "oracles.hpp"

#include "tsml/augmentation.hpp"
#include "tsml/knn.hpp"
#include "tsml/learner.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace tsml;
using Eigen::MatrixXd;

namespace {

std::vector<Sample> separable_toy(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::vector<Sample> out;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    Sample s;
    s.label = i % 2;
    s.window = oracle::random_matrix(1, 3, rng);
    // the class signal lives in the first step only, buried under noisy steps
    s.window(0, 0) = (s.label == 0 ? -1.0 : 1.0) + 0.1 * n01(rng);
    s.window.rightCols(2) *= 3.0;
    s.origin = {0, i};
    out.push_back(std::move(s));
  }
  return out;
}

double min_quadratic_form(const MatrixXd& m, std::mt19937_64& rng) {
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd v = oracle::random_matrix(m.rows(), 1, rng);
    v.normalize();
    lo = std::min(lo, v.dot(m * v));
  }
  return lo;
}

}  // namespace

TEST_CASE("neighbor graph", "[learner][graph]") {
  std::vector<Sample> same(3);
  for (auto& s : same) s.window = MatrixXd::Ones(1, 2);
  same.push_back(same.front());
  same.back().label = 1;
  same.push_back(same.back());
  auto g = build_neighbor_graph(same, 2);
  REQUIRE(g.targets[0] == std::vector<std::size_t>{1, 2});
  REQUIRE(g.targets[1] == std::vector<std::size_t>{0, 2});
  REQUIRE(g.targets[2] == std::vector<std::size_t>{0, 1});
  g = build_neighbor_graph(same, 10);
  REQUIRE(g.targets[3] == std::vector<std::size_t>{4});
  REQUIRE(g.impostor_candidates(0) == std::vector<std::size_t>{3, 4});
  REQUIRE(g.target_pairs() == 3 * 2 + 2 * 1);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto train = oracle::random_samples(20, 2, 3, 3, rng);
    const auto graph = build_neighbor_graph(train, 3);
    REQUIRE(graph.targets == oracle::brute_targets(train, 3));
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (std::size_t j : graph.targets[i]) {
        REQUIRE(j != i);
        REQUIRE(train[j].label == train[i].label);
      }
    }
  }

  std::vector<Sample> lonely(3);
  for (std::size_t i = 0; i < 3; ++i) {
    lonely[i].window = MatrixXd::Constant(1, 1, double(i));
    lonely[i].label = i == 2 ? 1 : 0;
  }
  REQUIRE(build_neighbor_graph(lonely, 3).targets[2].empty());
}

TEST_CASE("lmnn_loss matches the triple sum", "[learner][loss]") {
  std::mt19937_64 rng(2);
  SECTION("tiny instance, identity metric") {
    const auto train = oracle::random_samples(6, 1, 2, 2, rng);
    const auto graph = build_neighbor_graph(train, 2);
    const double expected = oracle::triple_sum_loss(MatrixXd::Identity(2, 2), train, graph.targets, 0.5);
    REQUIRE(lmnn_loss(MetricMatrix::identity(1, 2), graph, train, 0.5) == Catch::Approx(expected).epsilon(1e-12));
  }
  SECTION("random metrics") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto train = oracle::random_samples(12, 2, 3, 3, rng);
      const auto graph = build_neighbor_graph(train, 3);
      const auto metric = MetricMatrix::from_factor(oracle::random_matrix(6, 6, rng), 2, 3);
      for (double c : {0.0, 0.3, 1.0}) {
        const double expected = oracle::triple_sum_loss(metric.m(), train, graph.targets, c);
        REQUIRE(lmnn_loss(metric, graph, train, c) == Catch::Approx(expected).epsilon(1e-10));
        REQUIRE(lmnn_loss(metric.m(), graph, train, c) == Catch::Approx(expected).epsilon(1e-10));
      }
    }
  }
  SECTION("c = 0 is the sum of target distances") {
    const auto train = oracle::random_samples(10, 1, 2, 2, rng);
    const auto graph = build_neighbor_graph(train, 2);
    double pull = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (std::size_t j : graph.targets[i]) pull += euclidean(train[i], train[j]);
    }
    REQUIRE(lmnn_loss(MetricMatrix::identity(1, 2), graph, train, 0.0) == Catch::Approx(pull).epsilon(1e-12));
  }
  SECTION("well separated classes have no hinge term") {
    auto train = oracle::random_samples(10, 1, 2, 2, rng);
    for (auto& s : train) s.window.array() += s.label == 0 ? 0.0 : 1e3;
    const auto graph = build_neighbor_graph(train, 2);
    const auto metric = MetricMatrix::identity(1, 2);
    REQUIRE(lmnn_loss(metric, graph, train, 0.5) ==
            Catch::Approx(0.5 * lmnn_loss(metric, graph, train, 0.0)).epsilon(1e-12));
  }
}

TEST_CASE("loss gradient", "[learner][gradient]") {
  std::mt19937_64 rng(3);
  SECTION("c = 0 is the sum of target outer products") {
    std::vector<Sample> train = oracle::random_samples(3, 1, 2, 1, rng);
    train.push_back(train.front());
    train.back().label = 1;
    const auto graph = build_neighbor_graph(train, 2);
    MatrixXd expected = MatrixXd::Zero(2, 2);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        if (i == j) continue;
        const Eigen::VectorXd e = oracle::flat(train[i]) - oracle::flat(train[j]);
        expected += e * e.transpose();
      }
    }
    const MatrixXd g = loss_gradient_m(MetricMatrix::identity(1, 2), graph, train, 0.0);
    REQUIRE((g - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("no active triplet leaves only the pull term") {
    auto train = oracle::random_samples(10, 1, 2, 2, rng);
    for (auto& s : train) s.window.array() += s.label == 0 ? 0.0 : 1e3;
    const auto graph = build_neighbor_graph(train, 2);
    const auto metric = MetricMatrix::identity(1, 2);
    const MatrixXd g = loss_gradient_m(metric, graph, train, 0.4);
    const MatrixXd pull = loss_gradient_m(metric, graph, train, 0.0);
    REQUIRE((g - 0.6 * pull).cwiseAbs().maxCoeff() < 1e-9 * pull.cwiseAbs().maxCoeff());
  }
  SECTION("matches the outer-product oracle and finite differences") {
    int checked = 0;
    for (int trial = 0; checked < 10 && trial < 100; ++trial) {
      const auto train = oracle::random_samples(12, 2, 3, 2, rng);
      const auto graph = build_neighbor_graph(train, 3);
      const auto metric = MetricMatrix::from_factor(0.5 * oracle::random_matrix(6, 6, rng), 2, 3);
      if (oracle::kink_margin(metric.m(), train, graph.targets) < 1e-3) continue;
      ++checked;
      const MatrixXd g = loss_gradient_m(metric, graph, train, 0.5);
      REQUIRE((g - g.transpose()).cwiseAbs().maxCoeff() < 1e-12 * g.cwiseAbs().maxCoeff());
      const MatrixXd ref = oracle::triple_sum_gradient(metric.m(), train, graph.targets, 0.5);
      REQUIRE((g - ref).norm() < 1e-10 * ref.norm());

      MatrixXd dir = oracle::random_matrix(6, 6, rng);
      dir = 0.5 * (dir + dir.transpose());
      const double h = 1e-6;
      const double fd = (lmnn_loss(MatrixXd(metric.m() + h * dir), graph, train, 0.5) -
                         lmnn_loss(MatrixXd(metric.m() - h * dir), graph, train, 0.5)) /
                        (2 * h);
      const double analytic = (g.array() * dir.array()).sum();
      REQUIRE(std::abs(fd - analytic) < 1e-5 * std::max(1.0, std::abs(analytic)));
    }
    REQUIRE(checked == 10);
  }
}

TEST_CASE("m_update", "[learner][admm]") {
  std::mt19937_64 rng(4);
  SECTION("a dominant penalty pulls M toward Z - U") {
    const auto train = oracle::random_samples(12, 1, 3, 2, rng);
    const auto graph = build_neighbor_graph(train, 2);
    auto state = AdmmState::initial(1, 3);
    state.metric = MetricMatrix::from_factor(MatrixXd::Identity(3, 3) * 1.2, 1, 3);
    state.z = MatrixXd::Identity(3, 3);
    LearnConfig cfg;
    cfg.rho = 1e6;
    cfg.alpha = 1e-8;
    cfg.inner_max = 500;
    cfg.inner_tol = 0.0;
    const auto out = m_update(state, graph, train, cfg);
    REQUIRE((out.metric.m() - MatrixXd::Identity(3, 3)).norm() < 1e-3);
  }
  SECTION("with no loss gradient, M converges to the PSD part of Z - U") {
    std::vector<Sample> train(4);
    for (auto& s : train) s.window = MatrixXd::Ones(1, 3);
    train[3].label = 1;
    const auto graph = build_neighbor_graph(train, 2);
    const Eigen::HouseholderQR<MatrixXd> qr(oracle::random_matrix(3, 3, rng));
    const MatrixXd v = qr.householderQ();
    const Eigen::Vector3d eig(2.0, 0.5, -1.0);
    auto state = AdmmState::initial(1, 3);
    state.z = v * eig.asDiagonal() * v.transpose();
    state.u = MatrixXd::Zero(3, 3);
    LearnConfig cfg;
    cfg.c = 0.0;
    cfg.rho = 1.0;
    cfg.alpha = 0.02;
    cfg.inner_max = 20000;
    cfg.inner_tol = 0.0;
    const auto out = m_update(state, graph, train, cfg);
    const MatrixXd expected = v * eig.cwiseMax(0.0).asDiagonal() * v.transpose();
    REQUIRE((out.metric.m() - expected).norm() < 1e-3);
  }
  SECTION("the objective never increases across accepted steps") {
    const auto train = oracle::random_samples(30, 2, 3, 2, rng);
    const auto graph = build_neighbor_graph(train, 3);
    auto state = AdmmState::initial(2, 3);
    state.z = oracle::random_block_toeplitz(2, 3, rng) * 0.1;
    LearnConfig cfg;
    cfg.rho = 10.0;
    cfg.alpha = 1e-3;
    const auto out = m_update(state, graph, train, cfg);
    REQUIRE(out.objective.size() == out.steps + 1);
    for (std::size_t i = 1; i < out.objective.size(); ++i) REQUIRE(out.objective[i] <= out.objective[i - 1]);
    REQUIRE(out.objective.back() <= out.objective.front());
    REQUIRE(min_quadratic_form(out.metric.m(), rng) >= -1e-9);
  }
  SECTION("a non-finite start is reported") {
    const auto train = oracle::random_samples(6, 1, 2, 2, rng);
    const auto graph = build_neighbor_graph(train, 2);
    auto state = AdmmState::initial(1, 2);
    state.metric = MetricMatrix::from_factor(MatrixXd::Constant(2, 2, 1e200), 1, 2);
    REQUIRE_THROWS_WITH(m_update(state, graph, train, LearnConfig{}),
                        Catch::Matchers::ContainsSubstring("smaller alpha"));
  }
}

TEST_CASE("z_update and u_update", "[learner][admm]") {
  std::mt19937_64 rng(5);
  const auto idx12 = bt_index(1, 2);
  const auto m12 = MetricMatrix::identity(1, 2);
  const MatrixXd u12 = (MatrixXd(2, 2) << 0, 2, 4, 8).finished();
  REQUIRE((z_update(m12, u12, idx12) - (MatrixXd(2, 2) << 5, 3, 3, 5).finished()).cwiseAbs().maxCoeff() < 1e-15);

  const auto idx = bt_index(2, 3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto metric = MetricMatrix::from_factor(oracle::random_matrix(6, 6, rng), 2, 3);
    const MatrixXd u = oracle::random_matrix(6, 6, rng);
    const MatrixXd z = z_update(metric, u, idx);
    REQUIRE(oracle::occurrence_equal(z, 2, 3, 1e-12));
    const double best = (z - (metric.m() + u)).norm();
    for (int probe = 0; probe < 500; ++probe) {
      const MatrixXd other = z + 0.1 * oracle::random_block_toeplitz(2, 3, rng);
      REQUIRE((other - (metric.m() + u)).norm() >= best);
    }
    // already block Toeplitz input is unchanged
    const MatrixXd t = oracle::random_block_toeplitz(2, 3, rng);
    REQUIRE((z_update(MetricMatrix::from_factor(MatrixXd::Zero(6, 6), 2, 3), t, idx) - t).cwiseAbs().maxCoeff() <
            1e-12);
  }
  REQUIRE_THROWS(z_update(MetricMatrix::identity(2, 3), MatrixXd::Zero(5, 5), idx));

  const MatrixXd e = oracle::random_matrix(4, 4, rng);
  REQUIRE(u_update(MatrixXd::Zero(4, 4), e, MatrixXd::Zero(4, 4)) == e);
  REQUIRE(u_update(e, e, e) == e);
  MatrixXd u = MatrixXd::Zero(4, 4);
  MatrixXd total = MatrixXd::Zero(4, 4);
  for (int k = 0; k < 3; ++k) {
    const MatrixXd mk = oracle::random_matrix(4, 4, rng);
    const MatrixXd zk = oracle::random_matrix(4, 4, rng);
    u = u_update(u, mk, zk);
    total += mk - zk;
  }
  REQUIRE((u - total).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit", "[learner][fit]") {
  SECTION("K = 0 returns the identity") {
    std::mt19937_64 rng(6);
    const auto train = oracle::random_samples(10, 2, 2, 2, rng);
    LearnConfig cfg;
    cfg.max_outer = 0;
    const auto r = fit(train, cfg);
    REQUIRE(r.metric.m() == MatrixXd::Identity(4, 4));
    REQUIRE(r.state.history.empty());
  }
  SECTION("single label and bad config are rejected") {
    std::mt19937_64 rng(6);
    const auto train = oracle::random_samples(10, 2, 2, 1, rng);
    REQUIRE_THROWS(fit(train, LearnConfig{}));
    const auto two = oracle::random_samples(10, 2, 2, 2, rng);
    LearnConfig bad;
    bad.c = 1.5;
    REQUIRE_THROWS(fit(two, bad));
    bad = {};
    bad.rho = 0.0;
    REQUIRE_THROWS(fit(two, bad));
  }
  SECTION("time-invariant mode on the lag problem") {
    const auto stream = oracle::lag_stream(200, 4, 11);
    const auto train = draw_per_label(slide(stream, segments(stream), 5), 60, 3);
    const auto r = fit(train, LearnConfig{});
    const auto& h = r.state.history;
    REQUIRE(!h.empty());
    REQUIRE(h.back().primal < 1e-3);
    REQUIRE(oracle::occurrence_equal(r.state.z, 2, 5, 1e-12));
    std::mt19937_64 rng(1);
    REQUIRE(min_quadratic_form(r.metric.m(), rng) >= -1e-9);
    for (const auto& rec : h) {
      for (std::size_t i = 1; i < rec.inner_objective.size(); ++i) {
        REQUIRE(rec.inner_objective[i] <= rec.inner_objective[i - 1]);
      }
    }
    std::vector<double> primal;
    for (const auto& rec : h) primal.push_back(rec.primal);
    REQUIRE(primal.size() >= 10);
    auto median5 = [](std::vector<double> v) {
      std::nth_element(v.begin(), v.begin() + 2, v.end());
      return v[2];
    };
    REQUIRE(median5({primal.end() - 5, primal.end()}) < median5({primal.begin(), primal.begin() + 5}));

    std::ostringstream log;
    write_training_log(log, r.state);
    std::istringstream in(log.str());
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "k,loss,primal_residual,dual_residual,inner_steps");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    REQUIRE(rows == h.size());

    LearnConfig fin;
    fin.finalize = true;
    const auto f = fit(train, fin);
    REQUIRE(is_block_toeplitz(f.metric.m(), bt_index(2, 5), 1e-9));
  }
  SECTION("unconstrained mode separates a toy set") {
    const auto train = separable_toy(15, 7);
    std::size_t before = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      std::vector<Sample> rest = train;
      rest.erase(rest.begin() + static_cast<long>(i));
      before += knn_classify(train[i], rest, 1, euclidean) != train[i].label;
    }
    REQUIRE(before > 0);
    LearnConfig cfg;
    cfg.mode = LearnMode::kUnconstrained;
    cfg.alpha = 1e-3;
    cfg.max_outer = 200;
    const auto r = fit(train, cfg);
    const auto dist = [&](const Sample& a, const Sample& b) { return mahalanobis(a, b, r.metric); };
    for (std::size_t i = 0; i < train.size(); ++i) {
      std::vector<Sample> rest = train;
      rest.erase(rest.begin() + static_cast<long>(i));
      REQUIRE(knn_classify(train[i], rest, 1, dist) == train[i].label);
    }
  }
  SECTION("unconstrained mode follows plain LMNN step for step") {
    std::mt19937_64 rng(9);
    const auto train = oracle::random_samples(16, 1, 3, 2, rng);
    LearnConfig cfg;
    cfg.mode = LearnMode::kUnconstrained;
    cfg.alpha = 1e-3;
    cfg.max_outer = 1;
    cfg.inner_max = 40;
    const auto r = fit(train, cfg);
    const auto ref = oracle::plain_lmnn(train, cfg.k_targets, cfg.c, cfg.alpha, cfg.inner_max, cfg.inner_tol,
                                        cfg.max_halvings);
    const auto& got = r.state.history.front().inner_objective;
    REQUIRE(got.size() == ref.size());
    REQUIRE(got.size() > 5);
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == Catch::Approx(ref[i]).epsilon(1e-9));
  }
  SECTION("screened impostors give the same loss on a large set") {
    std::mt19937_64 rng(10);
    const auto train = oracle::random_samples(60, 1, 2, 3, rng);
    const auto graph = build_neighbor_graph(train, 3);
    LmnnObjective obj(train, graph, 0.5);
    const MatrixXd f = MatrixXd::Identity(2, 2);
    const double full = obj.loss_factor(f);
    obj.screen_impostors(f);
    REQUIRE(obj.screened());
    REQUIRE(obj.loss_factor(f) == Catch::Approx(full).epsilon(1e-12));
  }
}

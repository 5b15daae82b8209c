#include <doctest.h>

#include <span>

#include "klnmf/alternating_solver.hpp"
#include "test_support.hpp"

using namespace klnmf;

namespace {

// V = W^T F on every cell, so the KL optimum is exactly zero.
SparseMatrixd planted_dense(const DenseFactord& w, const DenseFactord& f) {
  const Eigen::MatrixXd prod = Eigen::MatrixXd(w).transpose() * Eigen::MatrixXd(f);
  std::vector<Triplet<double>> entries;
  for (Index j = 0; j < prod.cols(); ++j)
    for (Index i = 0; i < prod.rows(); ++i) entries.push_back({i, j, prod(i, j)});
  return SparseMatrixd::from_triplets(prod.rows(), prod.cols(), std::move(entries));
}

SparseMatrixd sparse_instance(std::uint64_t seed, Index n, Index m, double density) {
  Rng rng(seed);
  auto v = testing::random_sparse(n, m, density, rng);
  // Every row and column needs at least one entry for a well-posed problem.
  std::vector<Triplet<double>> entries;
  for (Index j = 0; j < m; ++j) {
    const auto col = v.column(j);
    for (std::size_t p = 0; p < col.nnz(); ++p) entries.push_back({col.indices[p], j, col.values[p]});
  }
  for (Index i = 0; i < std::max(n, m); ++i) {
    const Index row = i % n, col = i % m;
    bool present = false;
    for (const auto& t : entries) present = present || (t.row == row && t.col == col);
    if (!present) entries.push_back({row, col, 1.0 + rng.uniform01()});
  }
  return SparseMatrixd::from_triplets(n, m, std::move(entries));
}

}  // namespace

TEST_CASE("init_factors") {
  const auto a = init_factors<double>(20, 30, 5, 2.0, 9);
  const auto b = init_factors<double>(20, 30, 5, 2.0, 9);
  CHECK(a == b);
  CHECK_FALSE(a == init_factors<double>(20, 30, 5, 2.0, 10));

  const double scale = 2.0 * std::sqrt(2.0 / 5.0);
  for (const auto* f : {&a.W, &a.F}) {
    CHECK(f->minCoeff() > 0.0);
    CHECK(f->maxCoeff() <= scale);
  }
  CHECK_THROWS(init_factors<double>(0, 3, 1, 1.0, 1));
  CHECK_THROWS(init_factors<double>(3, 3, 1, 0.0, 1));
}

TEST_CASE("init_factors matches the data magnitude on a 20x30 instance") {
  const auto v = sparse_instance(4, 20, 30, 0.3);
  const double mean = mean_value(v);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto init = init_factors<double>(20, 30, 5, mean, seed);
    const double recon_mean = (Eigen::MatrixXd(init.W).transpose() * Eigen::MatrixXd(init.F)).mean();
    CHECK(recon_mean <= 3.0 * mean);
    CHECK(recon_mean >= mean / 3.0);
  }
}

TEST_CASE("sweep") {
  SUBCASE("scalar problem") {
    const auto v = SparseMatrixd::from_triplets(1, 1, {{0, 0, 2.0}});
    DenseFactord w = DenseFactord::Ones(1, 1);
    DenseFactord f = DenseFactord::Constant(1, 1, 0.5);
    std::vector<SubproblemWorkspace<double>> ws;
    const std::vector<int> ids{0};
    Tolerances<double> tol;
    tol.max_passes = 100;
    sweep(v, w, f, row_sums(w), std::span<const int>(ids), 0.0, 0.0, tol, 1, ws);
    CHECK(f(0, 0) == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("worker count does not change the result") {
    const auto v = sparse_instance(5, 40, 60, 0.2);
    const auto init = init_factors<double>(40, 60, 6, mean_value(v), 3);
    const std::vector<int> ids{3, 1, 0, 5, 2, 4};
    DenseFactord f1 = init.F, f4 = init.F;
    std::vector<SubproblemWorkspace<double>> ws;
    sweep(v, init.W, f1, row_sums(init.W), std::span<const int>(ids), 0.1, 0.1, Tolerances<double>{},
          1, ws);
    sweep(v, init.W, f4, row_sums(init.W), std::span<const int>(ids), 0.1, 0.1, Tolerances<double>{},
          4, ws);
    CHECK(f1 == f4);
  }
  SUBCASE("one sweep does not increase the objective") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto v = sparse_instance(seed, 6, 8, 0.5);
      const auto init = init_factors<double>(6, 8, 3, mean_value(v), seed);
      RegConfigd reg{0.1, 0.2, 0.05, 0.1};
      DenseFactord f = init.F;
      std::vector<SubproblemWorkspace<double>> ws;
      const std::vector<int> ids{2, 0, 1};
      const double before = full_objective(v, init.W, f, reg).total;
      sweep(v, init.W, f, row_sums(init.W), std::span<const int>(ids), reg.l2_f, reg.l1_f,
            Tolerances<double>{}, 1, ws);
      CHECK(full_objective(v, init.W, f, reg).total <= before + 1e-9);
      CHECK(is_nonnegative(f));
    }
  }
  SUBCASE("dimension checks") {
    const auto v = sparse_instance(1, 4, 5, 0.5);
    DenseFactord w = DenseFactord::Ones(2, 4), f = DenseFactord::Ones(2, 5);
    std::vector<SubproblemWorkspace<double>> ws;
    const std::vector<int> bad_ids{0};
    CHECK_THROWS_AS(sweep(v, w, f, row_sums(w), std::span<const int>(bad_ids), 0.0, 0.0,
                          Tolerances<double>{}, 1, ws),
                    std::invalid_argument);
  }
}

TEST_CASE("full_objective") {
  SUBCASE("exact reconstruction gives zero") {
    Rng rng(21);
    const auto w = testing::random_factor(3, 9, rng, 0.1, 1.0);
    const auto f = testing::random_factor(3, 11, rng, 0.1, 1.0);
    const auto v = planted_dense(w, f);
    CHECK(std::abs(full_objective(v, w, f, RegConfigd{}).kl) <= 1e-9 * v.nnz());
  }
  SUBCASE("brute-force double sum on 5x6 instances") {
    Rng rng(22);
    for (int trial = 0; trial < 20; ++trial) {
      const auto v = testing::random_sparse(5, 6, 1.0, rng);
      const auto w = testing::random_factor(3, 5, rng, 0.01, 1.0);
      const auto f = testing::random_factor(3, 6, rng, 0.01, 1.0);
      const Eigen::MatrixXd recon = Eigen::MatrixXd(w).transpose() * Eigen::MatrixXd(f);
      const double expected = testing::brute_force_kl(testing::to_dense(v), recon, 1e-16);
      CHECK(full_objective(v, w, f, RegConfigd{}).kl == doctest::Approx(expected).epsilon(1e-10));
    }
  }
  SUBCASE("sparse pattern against the brute-force sum") {
    Rng rng(23);
    const auto v = testing::random_sparse(12, 15, 0.2, rng);
    const auto w = testing::random_factor(4, 12, rng);
    const auto f = testing::random_factor(4, 15, rng);
    const Eigen::MatrixXd recon = Eigen::MatrixXd(w).transpose() * Eigen::MatrixXd(f);
    CHECK(full_objective(v, w, f, RegConfigd{}).kl ==
          doctest::Approx(testing::brute_force_kl(testing::to_dense(v), recon, 1e-16)).epsilon(1e-10));
  }
  SUBCASE("regularized total") {
    DenseFactord w(1, 2), f(1, 1);
    w << 1, 2;
    f << 3;
    const auto v = SparseMatrixd::from_triplets(2, 1, {{0, 0, 3.0}, {1, 0, 6.0}});
    const auto obj = full_objective(v, w, f, RegConfigd{2.0, 4.0, 1.0, 0.5});
    CHECK(std::abs(obj.kl) <= 1e-12);
    // 2/2*5 + 4/2*9 + 1*3 + 0.5*3
    CHECK(obj.total == doctest::Approx(5.0 + 18.0 + 3.0 + 1.5));
  }
  SUBCASE("row-sum identity on 7x4 factor pairs") {
    Rng rng(24);
    for (int trial = 0; trial < 20; ++trial) {
      const auto w = testing::random_factor(4, 7, rng);
      const auto f = testing::random_factor(4, 7, rng);
      double brute = 0;
      for (Index i = 0; i < 7; ++i)
        for (Index j = 0; j < 7; ++j)
          for (Index k = 0; k < 4; ++k) brute += w(k, i) * f(k, j);
      CHECK(std::abs(row_sums(w).dot(row_sums(f)) - brute) <= 1e-12 * brute);
    }
  }
  SUBCASE("dimension mismatch") {
    const auto v = SparseMatrixd::from_triplets(2, 2, {{0, 0, 1.0}});
    const DenseFactord w = DenseFactord::Ones(1, 3), f = DenseFactord::Ones(1, 2);
    CHECK_THROWS_AS(full_objective(v, w, f, RegConfigd{}), std::invalid_argument);
  }
}

TEST_CASE("factorize recovers a planted rank-1 matrix") {
  Rng rng(31);
  const auto w = testing::random_factor(1, 25, rng, 0.2, 2.0);
  const auto f = testing::random_factor(1, 35, rng, 0.2, 2.0);
  const auto v = planted_dense(w, f);
  NmfConfigd cfg;
  cfg.rank = 1;
  cfg.max_outer_iters = 30;
  cfg.rel_obj_tol = 0;
  const auto result = factorize(v, cfg);
  CHECK(result.log.back().kl_objective <= 1e-6 * v.nnz());
}

TEST_CASE("factorize with zero iterations returns the initial factors") {
  const auto v = sparse_instance(2, 10, 12, 0.3);
  NmfConfigd cfg;
  cfg.rank = 3;
  cfg.max_outer_iters = 0;
  const auto result = factorize(v, cfg);
  CHECK(result.log.empty());
  CHECK_FALSE(result.converged);
  CHECK(result.iterations_run == 0);
  CHECK(result.factors == init_factors<double>(10, 12, 3, mean_value(v), cfg.seed));
}

TEST_CASE("factorize logs a nonincreasing objective") {
  const auto v = sparse_instance(6, 20, 30, 0.25);
  for (const RegConfigd reg : {RegConfigd{}, RegConfigd{0.1, 0.1, 0.05, 0.05}}) {
    NmfConfigd cfg;
    cfg.rank = 5;
    cfg.max_outer_iters = 50;
    cfg.check_convergence = false;
    cfg.reg = reg;
    const auto result = factorize(v, cfg);
    REQUIRE(result.log.size() == 50);
    double previous = result.initial.total;
    for (const auto& rec : result.log) {
      CHECK(rec.total_objective <= previous + 1e-8);
      previous = rec.total_objective;
    }
    for (std::size_t i = 0; i < result.log.size(); ++i) {
      CHECK(result.log[i].iteration == static_cast<int>(i) + 1);
      if (i > 0) CHECK(result.log[i].elapsed_seconds > result.log[i - 1].elapsed_seconds);
    }
    CHECK(is_nonnegative(result.factors.W));
    CHECK(is_nonnegative(result.factors.F));
  }
}

TEST_CASE("factorize stops on the relative decrease rule") {
  const auto v = sparse_instance(7, 15, 20, 0.3);
  NmfConfigd cfg;
  cfg.rank = 3;
  cfg.max_outer_iters = 1000;
  cfg.rel_obj_tol = 1e-4;
  const auto result = factorize(v, cfg);
  CHECK(result.converged);
  CHECK(result.iterations_run < 1000);
  const auto n = result.log.size();
  REQUIRE(n >= 2);
  const double prev = result.log[n - 2].total_objective;
  CHECK((prev - result.log[n - 1].total_objective) / std::max(1.0, prev) < 1e-4);
}

TEST_CASE("factorize is independent of the worker count") {
  const auto v = sparse_instance(8, 50, 70, 0.1);
  NmfConfigd cfg;
  cfg.rank = 4;
  cfg.max_outer_iters = 10;
  cfg.reg = {0.01, 0.01, 0.1, 0.1};
  cfg.n_workers = 1;
  const auto base = factorize(v, cfg);
  for (const int workers : {2, 4}) {
    cfg.n_workers = workers;
    const auto other = factorize(v, cfg);
    CHECK(other.factors == base.factors);
    REQUIRE(other.log.size() == base.log.size());
    for (std::size_t i = 0; i < base.log.size(); ++i) {
      CHECK(other.log[i].kl_objective == base.log[i].kl_objective);
      CHECK(other.log[i].total_objective == base.log[i].total_objective);
    }
  }
}

TEST_CASE("factorize rejects bad input") {
  const SparseMatrixd empty(3, 4, {0, 0, 0, 0, 0}, {}, {});
  CHECK_THROWS_AS(factorize(empty, NmfConfigd{}), std::invalid_argument);
  const auto v = sparse_instance(9, 5, 5, 0.5);
  NmfConfigd cfg;
  cfg.rank = 0;
  CHECK_THROWS_AS(factorize(v, cfg), std::invalid_argument);
  cfg.rank = 2;
  cfg.reg.l1_w = -1;
  CHECK_THROWS_AS(factorize(v, cfg), std::invalid_argument);
  cfg.reg.l1_w = 0;
  CHECK_THROWS_AS(factorize(v, cfg, FactorPaird{DenseFactord::Ones(3, 5), DenseFactord::Ones(3, 5)}),
                  std::invalid_argument);
}

TEST_CASE("KKT residual trends down late in the run") {
  for (std::uint64_t seed : {11, 12, 13}) {
    const auto v = sparse_instance(seed, 30, 40, 0.2);
    const auto vt = transpose(v);
    NmfConfigd cfg;
    cfg.rank = 4;
    cfg.check_convergence = false;
    cfg.reg = {0.01, 0.01, 0.0, 0.0};
    auto state = init_factors<double>(30, 40, 4, mean_value(v), seed);
    std::vector<double> residuals;
    cfg.max_outer_iters = 1;
    for (int it = 0; it < 50; ++it) {
      cfg.seed = seed + static_cast<std::uint64_t>(it);
      state = factorize(v, cfg, state).factors;
      residuals.push_back(kkt_residual(v, vt, state.W, state.F, cfg.reg));
    }
    // Least-squares slope over the last 10 iterations.
    const int k = 10;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < k; ++i) {
      const double y = residuals[residuals.size() - k + i];
      sx += i, sy += y, sxx += i * i, sxy += i * y;
    }
    const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    CHECK(slope <= 0.0);
    CHECK(residuals.back() <= residuals.front());
  }
}

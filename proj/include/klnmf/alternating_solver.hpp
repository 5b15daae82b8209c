#ifndef KLNMF_ALTERNATING_SOLVER_HPP
#define KLNMF_ALTERNATING_SOLVER_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "klnmf/dense_factor.hpp"
#include "klnmf/kl_subproblem.hpp"
#include "klnmf/parallel.hpp"
#include "klnmf/random.hpp"
#include "klnmf/sparse_matrix.hpp"

namespace klnmf {

/// L2 (alpha) and L1 (beta) weights for each factor:
///   D(V || W^T F) + l2_w/2 |W|^2 + l2_f/2 |F|^2 + l1_w |W|_1 + l1_f |F|_1
template <typename Scalar>
struct RegConfig {
  Scalar l2_w = 0;
  Scalar l2_f = 0;
  Scalar l1_w = 0;
  Scalar l1_f = 0;

  void validate() const {
    if (!(l2_w >= 0 && l2_f >= 0 && l1_w >= 0 && l1_f >= 0))
      throw std::invalid_argument("regularization weights must be >= 0");
  }
};

template <typename Scalar>
struct NmfConfig {
  int rank = 10;
  RegConfig<Scalar> reg;
  int max_outer_iters = 100;
  /// Stop once (prev - obj) / max(1, prev) < rel_obj_tol.
  double rel_obj_tol = 1e-6;
  /// When false every run does exactly max_outer_iters iterations.
  bool check_convergence = true;
  /// Solve-time budget; no new outer iteration starts once it is spent.
  double time_budget_seconds = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 42;
  int n_workers = 1;
  Tolerances<Scalar> tolerances;

  void validate() const {
    if (rank < 1) throw std::invalid_argument("rank must be >= 1");
    if (max_outer_iters < 0) throw std::invalid_argument("max_outer_iters must be >= 0");
    if (!(rel_obj_tol >= 0)) throw std::invalid_argument("rel_obj_tol must be >= 0");
    if (!(time_budget_seconds >= 0)) throw std::invalid_argument("time budget must be >= 0");
    if (n_workers < 1) throw std::invalid_argument("n_workers must be >= 1");
    reg.validate();
    tolerances.validate();
  }
};

struct ConvergenceRecord {
  int iteration = 0;
  double elapsed_seconds = 0;
  double kl_objective = 0;
  double total_objective = 0;
  double sparsity_w = 0;
  double sparsity_f = 0;

  friend bool operator==(const ConvergenceRecord&, const ConvergenceRecord&) = default;
};

using ConvergenceLog = std::vector<ConvergenceRecord>;

template <typename Scalar>
struct Objective {
  Scalar kl;
  Scalar total;
};

template <typename Scalar>
struct NmfResult {
  FactorPair<Scalar> factors;
  ConvergenceLog log;
  Objective<Scalar> initial{};
  int iterations_run = 0;
  bool converged = false;
  double solve_seconds = 0;
  /// Live bytes of V, V^T, both factors, row sums and worker buffers.
  std::size_t peak_accounted_bytes = 0;
  SolveReport inner{};
};

/// Entries i.i.d. uniform on (0, scale] with scale = 2 sqrt(mean_value / r),
/// so that E[(W^T F)_ij] = mean_value.
template <typename Scalar>
FactorPair<Scalar> init_factors(Eigen::Index n, Eigen::Index m, int r, Scalar mean_value,
                                std::uint64_t seed) {
  if (n < 1 || m < 1 || r < 1) throw std::invalid_argument("init_factors needs n, m, r >= 1");
  if (!(mean_value > 0) || !std::isfinite(mean_value))
    throw std::invalid_argument("init_factors needs a positive finite mean");
  const Scalar scale = 2 * std::sqrt(mean_value / static_cast<Scalar>(r));
  Rng rng(seed);
  FactorPair<Scalar> out{DenseFactor<Scalar>(r, n), DenseFactor<Scalar>(r, m)};
  for (auto* factor : {&out.W, &out.F}) {
    Scalar* data = factor->data();
    for (Eigen::Index p = 0; p < factor->size(); ++p)
      data[p] = scale * static_cast<Scalar>(rng.uniform_open_closed());
  }
  return out;
}

template <typename Scalar, typename StorageIndex>
Scalar mean_value(const SparseMatrix<Scalar, StorageIndex>& v) {
  return v.sum() / (static_cast<Scalar>(v.rows()) * static_cast<Scalar>(v.cols()));
}

/// KL divergence D(V || W^T F) and the regularized total. The reconstruction is
/// only evaluated on nnz(V); sum_ij (W^T F)_ij comes from <W 1, F 1>.
template <typename Scalar, typename StorageIndex>
Objective<Scalar> full_objective(const SparseMatrix<Scalar, StorageIndex>& v,
                                 const DenseFactor<Scalar>& w, const DenseFactor<Scalar>& f,
                                 const RegConfig<Scalar>& reg, Scalar eps_div = Scalar(1e-16)) {
  if (w.rows() != f.rows() || w.cols() != v.rows() || f.cols() != v.cols())
    throw std::invalid_argument("full_objective: dimensions of V, W, F disagree");
  Scalar kl = 0;
  for (Index j = 0; j < v.cols(); ++j) {
    const auto col = v.column(j);
    for (std::size_t p = 0; p < col.nnz(); ++p) {
      const Scalar x = w.col(col.indices[p]).dot(f.col(j));
      const Scalar vij = col.values[p];
      kl += vij * std::log(vij / (x + eps_div)) - vij;
    }
  }
  kl += row_sums(w).dot(row_sums(f));
  const Scalar total = kl + reg.l2_w / 2 * w.squaredNorm() + reg.l2_f / 2 * f.squaredNorm() +
                       reg.l1_w * w.template lpNorm<1>() + reg.l1_f * f.template lpNorm<1>();
  return {kl, total};
}

/// Sum over all factor entries of the projected-gradient magnitude of the
/// regularized objective: |g| for positive entries, max(0, -g) at zero.
template <typename Scalar, typename StorageIndex>
Scalar kkt_residual(const SparseMatrix<Scalar, StorageIndex>& v,
                    const SparseMatrix<Scalar, StorageIndex>& vt, const DenseFactor<Scalar>& w,
                    const DenseFactor<Scalar>& f, const RegConfig<Scalar>& reg,
                    Scalar eps_div = Scalar(1e-16)) {
  auto side = [&](const SparseMatrix<Scalar, StorageIndex>& data, const DenseFactor<Scalar>& fixed,
                  const DenseFactor<Scalar>& moving, Scalar l2, Scalar l1) {
    const RowSumVector<Scalar> sums = row_sums(fixed);
    Vector<Scalar> g(moving.rows());
    Scalar residual = 0;
    for (Index j = 0; j < data.cols(); ++j) {
      const auto col = data.column(j);
      g = sums + l2 * moving.col(j) + Vector<Scalar>::Constant(moving.rows(), l1);
      for (std::size_t p = 0; p < col.nnz(); ++p) {
        const auto a = fixed.col(col.indices[p]);
        g.noalias() -= (col.values[p] / (a.dot(moving.col(j)) + eps_div)) * a;
      }
      for (Eigen::Index k = 0; k < g.size(); ++k)
        residual += moving(k, j) > 0 ? std::abs(g(k)) : std::max(Scalar(0), -g(k));
    }
    return residual;
  };
  return side(v, w, f, reg.l2_f, reg.l1_f) + side(vt, f, w, reg.l2_w, reg.l1_w);
}

namespace detail {

inline void accumulate(SolveReport& into, const SolveReport& from) {
  into.passes = std::max(into.passes, from.passes);
  into.inner_cap_hit = into.inner_cap_hit || from.inner_cap_hit;
  into.newton_steps += from.newton_steps;
  into.damped_steps += from.damped_steps;
  into.degenerate += from.degenerate;
}

// Stream for the per-iteration coordinate orders, distinct from the one
// init_factors draws from.
inline constexpr std::uint64_t kOrderStream = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

/// One half of an outer iteration: every column of `moving` is re-solved
/// against the fixed factor. `data` is V for the F-side and V^T for the
/// W-side; `workspaces` holds one slot per worker.
template <typename Scalar, typename StorageIndex, typename IdT>
SolveReport sweep(const SparseMatrix<Scalar, StorageIndex>& data, const DenseFactor<Scalar>& fixed,
                  DenseFactor<Scalar>& moving, const RowSumVector<Scalar>& sums_fixed,
                  std::span<const IdT> ids, Scalar alpha, Scalar beta,
                  const Tolerances<Scalar>& tol, int n_workers,
                  std::vector<SubproblemWorkspace<Scalar>>& workspaces) {
  const auto r = fixed.rows();
  if (moving.rows() != r || data.rows() != fixed.cols() || data.cols() != moving.cols() ||
      sums_fixed.size() != r || static_cast<Eigen::Index>(ids.size()) != r)
    throw std::invalid_argument("sweep: dimension mismatch");
  if (n_workers < 1) throw std::invalid_argument("sweep: n_workers must be >= 1");
  if (static_cast<int>(workspaces.size()) < n_workers) workspaces.resize(n_workers);
  for (auto& ws : workspaces) ws.resize(fixed.cols(), r);

  std::vector<SolveReport> per_worker(static_cast<std::size_t>(n_workers));
  parallel_for_columns(moving.cols(), n_workers, [&](int worker, Eigen::Index j) {
    auto& ws = workspaces[static_cast<std::size_t>(worker)];
    ws.x = moving.col(j);
    const auto rep =
        solve_column_inplace(data.column(j), fixed, sums_fixed, ws.x, alpha, beta, ids, tol, ws.ax);
    moving.col(j) = ws.x;
    detail::accumulate(per_worker[static_cast<std::size_t>(worker)], rep);
  });
  SolveReport total;
  for (const auto& acc : per_worker) detail::accumulate(total, acc);
  return total;
}


/// Alternating minimization of the regularized KL objective. Each outer
/// iteration draws one coordinate order, re-solves every column of F against
/// W, then every column of W against F. Starts from `initial` when given,
/// else from init_factors(cfg.seed).
template <typename Scalar, typename StorageIndex>
NmfResult<Scalar> factorize(const SparseMatrix<Scalar, StorageIndex>& v,
                            const NmfConfig<Scalar>& cfg,
                            std::optional<std::type_identity_t<FactorPair<Scalar>>> initial = std::nullopt) {
  cfg.validate();
  if (v.nnz() == 0)
    throw std::invalid_argument("factorize: data matrix has no nonzero entries");
  using Clock = std::chrono::steady_clock;

  NmfResult<Scalar> result;
  if (initial) {
    if (initial->W.rows() != cfg.rank || initial->F.rows() != cfg.rank ||
        initial->W.cols() != v.rows() || initial->F.cols() != v.cols())
      throw std::invalid_argument("factorize: initial factors do not match V and rank");
    if (!is_nonnegative(initial->W) || !is_nonnegative(initial->F))
      throw std::invalid_argument("factorize: initial factors must be nonnegative");
    result.factors = std::move(*initial);
  } else {
    result.factors = init_factors<Scalar>(v.rows(), v.cols(), cfg.rank, mean_value(v), cfg.seed);
  }
  auto& w = result.factors.W;
  auto& f = result.factors.F;

  const auto vt = transpose(v);
  std::vector<SubproblemWorkspace<Scalar>> workspaces(static_cast<std::size_t>(cfg.n_workers));
  for (auto& ws : workspaces) ws.resize(std::max(v.rows(), v.cols()), cfg.rank);
  RowSumVector<Scalar> sums(cfg.rank);
  Rng order_rng(cfg.seed ^ detail::kOrderStream);

  std::size_t worker_bytes = 0;
  for (const auto& ws : workspaces) worker_bytes += ws.storage_bytes();
  result.peak_accounted_bytes = v.storage_bytes() + vt.storage_bytes() +
                                result.factors.storage_bytes() + worker_bytes +
                                static_cast<std::size_t>(cfg.rank) * (sizeof(Scalar) + sizeof(int));

  const Scalar eps_div = cfg.tolerances.eps_div;
  result.initial = full_objective(v, w, f, cfg.reg, eps_div);
  Scalar previous = result.initial.total;

  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    if (result.solve_seconds >= cfg.time_budget_seconds) break;
    const auto start = Clock::now();

    const std::vector<int> ids = order_rng.permutation<int>(static_cast<std::size_t>(cfg.rank));
    const std::span<const int> order(ids);
    sums = row_sums(w);
    detail::accumulate(result.inner, sweep(v, w, f, sums, order, cfg.reg.l2_f, cfg.reg.l1_f,
                                           cfg.tolerances, cfg.n_workers, workspaces));
    sums = row_sums(f);
    detail::accumulate(result.inner, sweep(vt, f, w, sums, order, cfg.reg.l2_w, cfg.reg.l1_w,
                                           cfg.tolerances, cfg.n_workers, workspaces));

    result.solve_seconds += std::chrono::duration<double>(Clock::now() - start).count();
    result.iterations_run = it;

    const auto obj = full_objective(v, w, f, cfg.reg, eps_div);
    result.log.push_back({it, result.solve_seconds, static_cast<double>(obj.kl),
                          static_cast<double>(obj.total), sparsity(w), sparsity(f)});
    const Scalar decrease = (previous - obj.total) / std::max(Scalar(1), previous);
    previous = obj.total;
    if (cfg.check_convergence && decrease < cfg.rel_obj_tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

using RegConfigd = RegConfig<double>;
using NmfConfigd = NmfConfig<double>;
using NmfResultd = NmfResult<double>;

}  // namespace klnmf

#endif  // KLNMF_ALTERNATING_SOLVER_HPP

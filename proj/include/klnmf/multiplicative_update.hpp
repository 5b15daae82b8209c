#ifndef KLNMF_MULTIPLICATIVE_UPDATE_HPP
#define KLNMF_MULTIPLICATIVE_UPDATE_HPP

#include <algorithm>
#include <chrono>
#include <optional>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "klnmf/alternating_solver.hpp"
#include "klnmf/dense_factor.hpp"
#include "klnmf/parallel.hpp"
#include "klnmf/sparse_matrix.hpp"

// Classical multiplicative updates for KL-NMF (unregularized),
//
//   F <- F .* (W (V ./ W^T F)) ./ (W 1 1^T)      then the same for W with V^T,
//
// with the ratio V ./ (W^T F) evaluated only on nnz(V).

namespace klnmf {

template <typename Scalar>
struct MuState {
  FactorPair<Scalar> factors;
  /// Guard in denominators, and floor that keeps every entry strictly positive.
  Scalar eps_mu = Scalar(1e-16);
};

namespace detail {

template <typename Scalar, typename StorageIndex>
void mu_half_step(const SparseMatrix<Scalar, StorageIndex>& data, const DenseFactor<Scalar>& fixed,
                  DenseFactor<Scalar>& moving, Scalar eps_mu, int n_workers,
                  std::vector<Vector<Scalar>>& scratch) {
  const auto r = fixed.rows();
  const Vector<Scalar> denom = (row_sums(fixed).array() + eps_mu).matrix();
  scratch.resize(static_cast<std::size_t>(std::max(1, n_workers)));
  for (auto& s : scratch) s.resize(r);
  parallel_for_columns(moving.cols(), n_workers, [&](int worker, Eigen::Index j) {
    auto& numer = scratch[static_cast<std::size_t>(worker)];
    numer.setZero();
    const auto col = data.column(j);
    for (std::size_t p = 0; p < col.nnz(); ++p) {
      const auto a = fixed.col(col.indices[p]);
      numer.noalias() += (col.values[p] / (a.dot(moving.col(j)) + eps_mu)) * a;
    }
    for (Eigen::Index k = 0; k < r; ++k)
      moving(k, j) = std::max(eps_mu, moving(k, j) * numer(k) / denom(k));
  });
}

}  // namespace detail

/// One F update followed by one W update. `vt` must be transpose(v).
template <typename Scalar, typename StorageIndex>
void mu_iterate(const SparseMatrix<Scalar, StorageIndex>& v,
                const SparseMatrix<Scalar, StorageIndex>& vt, MuState<Scalar>& state,
                int n_workers = 1) {
  auto& w = state.factors.W;
  auto& f = state.factors.F;
  if (w.rows() != f.rows() || w.cols() != v.rows() || f.cols() != v.cols() ||
      vt.rows() != v.cols() || vt.cols() != v.rows())
    throw std::invalid_argument("mu_iterate: dimension mismatch");
  std::vector<Vector<Scalar>> scratch;
  detail::mu_half_step(v, w, f, state.eps_mu, n_workers, scratch);
  detail::mu_half_step(vt, f, w, state.eps_mu, n_workers, scratch);
}

template <typename Scalar, typename StorageIndex>
void mu_iterate(const SparseMatrix<Scalar, StorageIndex>& v, MuState<Scalar>& state,
                int n_workers = 1) {
  mu_iterate(v, transpose(v), state, n_workers);
}

/// Runs multiplicative updates under the same stopping rules, logging and
/// initialization as factorize(). Regularization weights in cfg only enter
/// the logged total objective.
template <typename Scalar, typename StorageIndex>
NmfResult<Scalar> mu_factorize(const SparseMatrix<Scalar, StorageIndex>& v,
                               const NmfConfig<Scalar>& cfg,
                               std::optional<std::type_identity_t<FactorPair<Scalar>>> initial = std::nullopt,
                               Scalar eps_mu = Scalar(1e-16)) {
  cfg.validate();
  if (v.nnz() == 0)
    throw std::invalid_argument("mu_factorize: data matrix has no nonzero entries");
  using Clock = std::chrono::steady_clock;

  MuState<Scalar> state;
  state.eps_mu = eps_mu;
  state.factors = initial ? std::move(*initial)
                          : init_factors<Scalar>(v.rows(), v.cols(), cfg.rank, mean_value(v),
                                                 cfg.seed);
  if (state.factors.W.cols() != v.rows() || state.factors.F.cols() != v.cols() ||
      state.factors.W.rows() != cfg.rank || state.factors.F.rows() != cfg.rank)
    throw std::invalid_argument("mu_factorize: initial factors do not match V and rank");
  if (!(state.factors.W.array() > 0).all() || !(state.factors.F.array() > 0).all())
    throw std::invalid_argument("mu_factorize: initial factors must be strictly positive");

  const auto vt = transpose(v);
  std::vector<Vector<Scalar>> scratch;
  NmfResult<Scalar> result;
  result.peak_accounted_bytes = v.storage_bytes() + vt.storage_bytes() +
                                state.factors.storage_bytes() +
                                static_cast<std::size_t>(cfg.n_workers + 1) * cfg.rank * sizeof(Scalar);
  const Scalar eps_div = cfg.tolerances.eps_div;
  result.initial = full_objective(v, state.factors.W, state.factors.F, cfg.reg, eps_div);
  Scalar previous = result.initial.total;

  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    if (result.solve_seconds >= cfg.time_budget_seconds) break;
    const auto start = Clock::now();
    detail::mu_half_step(v, state.factors.W, state.factors.F, state.eps_mu, cfg.n_workers, scratch);
    detail::mu_half_step(vt, state.factors.F, state.factors.W, state.eps_mu, cfg.n_workers, scratch);
    result.solve_seconds += std::chrono::duration<double>(Clock::now() - start).count();
    result.iterations_run = it;

    const auto obj = full_objective(v, state.factors.W, state.factors.F, cfg.reg, eps_div);
    result.log.push_back({it, result.solve_seconds, static_cast<double>(obj.kl),
                          static_cast<double>(obj.total), sparsity(state.factors.W),
                          sparsity(state.factors.F)});
    const Scalar decrease = (previous - obj.total) / std::max(Scalar(1), previous);
    previous = obj.total;
    if (cfg.check_convergence && decrease < cfg.rel_obj_tol) {
      result.converged = true;
      break;
    }
  }
  result.factors = std::move(state.factors);
  return result;
}

}  // namespace klnmf

#endif  // KLNMF_MULTIPLICATIVE_UPDATE_HPP

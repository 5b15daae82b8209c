#ifndef KLNMF_KL_SUBPROBLEM_HPP
#define KLNMF_KL_SUBPROBLEM_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "klnmf/dense_factor.hpp"
#include "klnmf/sparse_matrix.hpp"

// Single-column KL subproblem
//
//   min_{x >= 0}  sum_i ( v_i log(v_i / [Ax]_i) - v_i + [Ax]_i ) + alpha/2 |x|_2^2 + beta |x|_1
//
// solved by randomized projected-Newton coordinate descent. The matrix A is
// passed as its transpose `basis` (an r x n DenseFactor): A_k is latent row k of
// the basis, stored contiguously. Only the nonzeros of v enter the log terms;
// the sum_i [Ax]_i term is handled through the precomputed row sums sumA.

namespace klnmf {

template <typename Scalar>
struct Tolerances {
  /// Gradient threshold of the inner-loop test (also the "x_k is at the bound" test).
  Scalar eps_grad = Scalar(1e-10);
  /// Relative step cutoff: stop refining x_k once |dx| < eps_x * x_k(before).
  Scalar eps_x = Scalar(0.1);
  /// Added to every [Ax]_i in denominators and inside the log.
  Scalar eps_div = Scalar(1e-16);
  /// Newton steps allowed per coordinate visit.
  int inner_iter_cap = 32;
  /// Passes over the coordinate order. One pass is one call of the
  /// per-column routine inside the alternating solver; more passes iterate it
  /// to a KKT point (stopping early once no coordinate needs an update).
  int max_passes = 1;
  /// Damp decreasing Newton steps that would raise the coordinate objective.
  bool monotone_guard = true;

  void validate() const {
    if (!(eps_grad > 0) || !(eps_x > 0) || !(eps_div >= 0))
      throw std::invalid_argument("tolerances must be positive");
    if (!(eps_x < 1)) throw std::invalid_argument("eps_x must be < 1");
    if (inner_iter_cap < 1 || max_passes < 1)
      throw std::invalid_argument("inner_iter_cap and max_passes must be >= 1");
  }
};

/// Per-worker scratch: the maintained product Ax and a copy of the iterate.
template <typename Scalar>
struct SubproblemWorkspace {
  Vector<Scalar> ax;
  Vector<Scalar> x;

  void resize(Eigen::Index n, Eigen::Index r) {
    if (ax.size() != n) ax.resize(n);
    if (x.size() != r) x.resize(r);
  }
  std::size_t storage_bytes() const {
    return static_cast<std::size_t>(ax.size() + x.size()) * sizeof(Scalar);
  }
};

template <typename Scalar>
struct GradHess {
  Scalar gradient;
  Scalar hessian;
};

/// First and second partial derivative of the subproblem objective in x_k.
/// Cost is O(nnz(v)) given `ax` and `sum_a`.
template <typename Scalar, typename StorageIndex>
GradHess<Scalar> grad_and_hess(Eigen::Index k, const ColumnView<Scalar, StorageIndex>& v,
                               const DenseFactor<Scalar>& basis, const Vector<Scalar>& ax,
                               const RowSumVector<Scalar>& sum_a, Scalar x_k, Scalar alpha,
                               Scalar beta, Scalar eps_div) {
  const Scalar* a_k = basis.row(k).data();
  const Scalar* axp = ax.data();
  Scalar g = 0;
  Scalar h = 0;
  for (std::size_t p = 0; p < v.nnz(); ++p) {
    const auto i = static_cast<Eigen::Index>(v.indices[p]);
    const Scalar t = a_k[i] / (axp[i] + eps_div);
    const Scalar vt = v.values[p] * t;
    g -= vt;
    h += vt * t;
  }
  return {g + sum_a(k) + alpha * x_k + beta, h + alpha};
}

enum class StepStatus : std::uint8_t {
  kNewton,      // ordinary projected Newton step
  kLinear,      // hessian_diag <= 0 with gradient > 0: objective is linear in x_k, go to 0
  kStationary,  // hessian_diag <= 0 with gradient == 0
  kDegenerate,  // hessian_diag <= 0 with gradient < 0 (or non-finite inputs); x_k kept
};

template <typename Scalar>
struct NewtonStep {
  Scalar new_x;
  Scalar delta;
  StepStatus status;
};

/// x_k <- max(0, x_k - gradient / hessian_diag).
template <typename Scalar>
NewtonStep<Scalar> newton_step(Scalar x_k, Scalar gradient, Scalar hessian_diag) {
  if (!std::isfinite(gradient) || !std::isfinite(hessian_diag))
    return {x_k, Scalar(0), StepStatus::kDegenerate};
  if (hessian_diag <= 0) {
    if (gradient > 0) return {Scalar(0), -x_k, StepStatus::kLinear};
    if (gradient == 0) return {x_k, Scalar(0), StepStatus::kStationary};
    return {x_k, Scalar(0), StepStatus::kDegenerate};
  }
  const Scalar new_x = std::max(Scalar(0), x_k - gradient / hessian_diag);
  return {new_x, new_x - x_k, StepStatus::kNewton};
}

/// Exact change of the subproblem objective when x_k moves by `delta`.
/// Cost is O(nnz(v)).
template <typename Scalar, typename StorageIndex>
Scalar coordinate_objective_change(Eigen::Index k, const ColumnView<Scalar, StorageIndex>& v,
                                   const DenseFactor<Scalar>& basis, const Vector<Scalar>& ax,
                                   const RowSumVector<Scalar>& sum_a, Scalar x_k, Scalar delta,
                                   Scalar alpha, Scalar beta, Scalar eps_div) {
  const Scalar* a_k = basis.row(k).data();
  Scalar change = 0;
  for (std::size_t p = 0; p < v.nnz(); ++p) {
    const auto i = static_cast<Eigen::Index>(v.indices[p]);
    change -= v.values[p] * std::log1p(delta * a_k[i] / (ax[i] + eps_div));
  }
  return change + delta * (sum_a(k) + beta + alpha * (x_k + delta / 2));
}

struct SolveReport {
  int passes = 0;
  /// Last pass found every coordinate already inside the stopping region.
  bool converged = false;
  bool inner_cap_hit = false;
  long newton_steps = 0;
  long damped_steps = 0;
  long degenerate = 0;
};

namespace detail {

template <typename Scalar, typename StorageIndex>
void check_column_dims(const ColumnView<Scalar, StorageIndex>& v, const DenseFactor<Scalar>& basis,
                       Eigen::Index x_size, Eigen::Index sum_size, std::size_t ids_size) {
  const auto r = basis.rows();
  if (x_size != r || sum_size != r || static_cast<Eigen::Index>(ids_size) != r)
    throw std::invalid_argument("subproblem dimension mismatch: r=" + std::to_string(r) +
                                ", x=" + std::to_string(x_size) + ", sumA=" +
                                std::to_string(sum_size) + ", ids=" + std::to_string(ids_size));
  if (v.nnz() > 0 && static_cast<Eigen::Index>(v.indices.back()) >= basis.cols())
    throw std::invalid_argument("data column longer than basis (n=" + std::to_string(basis.cols()) +
                                ")");
}

}  // namespace detail

/// Coordinate descent on x in place, using `ws.ax` as the maintained product.
/// `x` must already be nonnegative; `ids` must be a permutation of 0..r-1.
template <typename Scalar, typename StorageIndex, typename IdT>
SolveReport solve_column_inplace(const ColumnView<Scalar, StorageIndex>& v,
                                 const DenseFactor<Scalar>& basis,
                                 const RowSumVector<Scalar>& sum_a, Vector<Scalar>& x,
                                 Scalar alpha, Scalar beta, std::span<const IdT> ids,
                                 const Tolerances<Scalar>& tol, Vector<Scalar>& ax) {
  detail::check_column_dims(v, basis, x.size(), sum_a.size(), ids.size());
  const auto n = basis.cols();
  const auto r = basis.rows();
  const Scalar eps = tol.eps_grad;

  ax.setZero(n);
  for (Eigen::Index k = 0; k < r; ++k) {
    if (x(k) != Scalar(0)) ax.noalias() += x(k) * basis.row(k).transpose();
  }

  SolveReport report;
  for (int pass = 0; pass < tol.max_passes; ++pass) {
    ++report.passes;
    bool any_active = false;
    for (const IdT id : ids) {
      const auto k = static_cast<Eigen::Index>(id);
      Scalar& xk = x(k);
      auto gh = grad_and_hess(k, v, basis, ax, sum_a, xk, alpha, beta, tol.eps_div);
      int inner = 0;
      while (gh.gradient < -eps || (std::abs(gh.gradient) > eps && xk > eps)) {
        any_active = true;
        if (inner == tol.inner_iter_cap) {
          report.inner_cap_hit = true;
          break;
        }
        ++inner;
        const auto step = newton_step(xk, gh.gradient, gh.hessian);
        if (step.status == StepStatus::kDegenerate || step.status == StepStatus::kStationary) {
          report.degenerate += step.status == StepStatus::kDegenerate;
          break;
        }
        ++report.newton_steps;
        Scalar delta = step.delta;
        Scalar new_x = step.new_x;
        // A decreasing step starts right of the coordinate minimizer and can
        // overshoot past it; halve until the objective does not go up.
        if (tol.monotone_guard && delta < 0 && step.status == StepStatus::kNewton) {
          int halvings = 0;
          // NaN (log1p below -1 from rounding) counts as an increase.
          while (delta != Scalar(0) &&
                 !(coordinate_objective_change(k, v, basis, ax, sum_a, xk, delta, alpha, beta,
                                               tol.eps_div) <= Scalar(0))) {
            delta = ++halvings < 60 ? delta / 2 : Scalar(0);
          }
          if (halvings > 0) {
            ++report.damped_steps;
            new_x = xk + delta;
          }
        }
        if (delta == Scalar(0)) break;
        ax.noalias() += delta * basis.row(k).transpose();
        const Scalar xs = xk;
        xk = new_x;
        if (std::abs(delta) < tol.eps_x * xs) break;
        gh = grad_and_hess(k, v, basis, ax, sum_a, xk, alpha, beta, tol.eps_div);
      }
    }
    if (!any_active) {
      report.converged = true;
      break;
    }
  }
  return report;
}

/// Convenience wrapper returning the updated iterate.
template <typename Scalar, typename StorageIndex, typename IdT>
Vector<Scalar> solve_column(const ColumnView<Scalar, StorageIndex>& v,
                            const DenseFactor<Scalar>& basis, const RowSumVector<Scalar>& sum_a,
                            const Vector<Scalar>& x0, Scalar alpha, Scalar beta,
                            std::span<const IdT> ids, const Tolerances<Scalar>& tol,
                            SolveReport* report = nullptr) {
  SubproblemWorkspace<Scalar> ws;
  ws.x = x0;
  const auto rep = solve_column_inplace(v, basis, sum_a, ws.x, alpha, beta, ids, tol, ws.ax);
  if (report) *report = rep;
  return ws.x;
}

/// basis^T x, computed fresh (skipping zero coordinates).
template <typename Scalar>
Vector<Scalar> product(const DenseFactor<Scalar>& basis, const Vector<Scalar>& x) {
  Vector<Scalar> ax = Vector<Scalar>::Zero(basis.cols());
  for (Eigen::Index k = 0; k < basis.rows(); ++k) {
    if (x(k) != Scalar(0)) ax.noalias() += x(k) * basis.row(k).transpose();
  }
  return ax;
}

/// Full subproblem objective (KL part plus regularizers), 0 log 0 = 0.
template <typename Scalar, typename StorageIndex>
Scalar subproblem_objective(const ColumnView<Scalar, StorageIndex>& v,
                            const DenseFactor<Scalar>& basis, const Vector<Scalar>& x,
                            Scalar alpha, Scalar beta, Scalar eps_div = Scalar(1e-16)) {
  if (x.size() != basis.rows()) throw std::invalid_argument("subproblem dimension mismatch");
  const Vector<Scalar> ax = product(basis, x);
  Scalar value = ax.sum();
  for (std::size_t p = 0; p < v.nnz(); ++p) {
    const Scalar vi = v.values[p];
    value += vi * std::log(vi / (ax(static_cast<Eigen::Index>(v.indices[p])) + eps_div)) - vi;
  }
  return value + alpha / 2 * x.squaredNorm() + beta * x.template lpNorm<1>();
}

}  // namespace klnmf

#endif  // KLNMF_KL_SUBPROBLEM_HPP

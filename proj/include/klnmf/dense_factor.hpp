#ifndef KLNMF_DENSE_FACTOR_HPP
#define KLNMF_DENSE_FACTOR_HPP

#include <Eigen/Core>

#include <cstddef>

namespace klnmf {

/// Factor matrix of logical shape r x n_items (the W or F of V ~ W^T F).
///
/// Storage is row-major: latent row k is one contiguous buffer, which is the
/// column A_k the coordinate solver streams through in its Ax update. Item
/// columns (the subproblem unknowns) are strided by n_items. Exact zeros are
/// kept as zeros so factor sparsity can be read off directly.
template <typename Scalar>
using DenseFactor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Length-r vector of factor row sums (sumW, sumF, sumA).
template <typename Scalar>
using RowSumVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Derived>
RowSumVector<typename Derived::Scalar> row_sums(const Eigen::MatrixBase<Derived>& m) {
  return m.rowwise().sum();
}

/// Fraction of exact-zero entries.
template <typename Derived>
double sparsity(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  const auto zeros = (m.array() == typename Derived::Scalar(0)).count();
  return static_cast<double>(zeros) / static_cast<double>(m.size());
}

template <typename Derived>
bool is_nonnegative(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite() && (m.array() >= typename Derived::Scalar(0)).all();
}

template <typename Derived>
std::size_t storage_bytes(const Eigen::MatrixBase<Derived>& m) {
  return static_cast<std::size_t>(m.size()) * sizeof(typename Derived::Scalar);
}

/// W (r x n) and F (r x m) with V ~ W^T F.
template <typename Scalar>
struct FactorPair {
  DenseFactor<Scalar> W;
  DenseFactor<Scalar> F;

  Eigen::Index rank() const { return W.rows(); }
  std::size_t storage_bytes() const { return klnmf::storage_bytes(W) + klnmf::storage_bytes(F); }

  friend bool operator==(const FactorPair& a, const FactorPair& b) {
    return a.W.rows() == b.W.rows() && a.W.cols() == b.W.cols() && a.F.rows() == b.F.rows() &&
           a.F.cols() == b.F.cols() && a.W == b.W && a.F == b.F;
  }
};

using DenseFactord = DenseFactor<double>;
using FactorPaird = FactorPair<double>;

}  // namespace klnmf

#endif  // KLNMF_DENSE_FACTOR_HPP

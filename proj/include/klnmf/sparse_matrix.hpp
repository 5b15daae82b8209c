#ifndef KLNMF_SPARSE_MATRIX_HPP
#define KLNMF_SPARSE_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace klnmf {

using Index = std::int64_t;

/// One stored entry, used when assembling a matrix from coordinates.
template <typename Scalar>
struct Triplet {
  Index row;
  Index col;
  Scalar value;
};

/// Read-only view of one column: parallel spans of row indices and values.
template <typename Scalar, typename StorageIndex = std::int32_t>
struct ColumnView {
  std::span<const StorageIndex> indices;
  std::span<const Scalar> values;

  std::size_t nnz() const { return values.size(); }
};

/// Compressed sparse column matrix holding strictly positive finite values.
///
/// Row indices inside a column are strictly increasing and explicit zeros
/// are never stored. The arrays are immutable once built, so one instance can
/// be read by any number of workers at the same time.
template <typename Scalar, typename StorageIndex = std::int32_t>
class SparseMatrix {
 public:
  using scalar_type = Scalar;
  using index_type = StorageIndex;
  using column_type = ColumnView<Scalar, StorageIndex>;

  SparseMatrix() : col_ptr_(1, 0) {}

  /// Adopts raw CSC arrays after checking every structural invariant.
  SparseMatrix(Index n_rows, Index n_cols, std::vector<StorageIndex> col_ptr,
               std::vector<StorageIndex> row_idx, std::vector<Scalar> values)
      : n_rows_(n_rows),
        n_cols_(n_cols),
        col_ptr_(std::move(col_ptr)),
        row_idx_(std::move(row_idx)),
        values_(std::move(values)) {
    validate();
  }

  /// Builds from coordinates. Zero values are dropped; duplicate coordinates,
  /// negative or non-finite values and out-of-range indices throw.
  static SparseMatrix from_triplets(Index n_rows, Index n_cols,
                                    std::vector<Triplet<Scalar>> entries) {
    if (n_rows < 0 || n_cols < 0) throw std::invalid_argument("negative matrix dimension");
    std::erase_if(entries, [](const Triplet<Scalar>& t) { return t.value == Scalar(0); });
    for (const auto& t : entries) {
      if (t.row < 0 || t.row >= n_rows || t.col < 0 || t.col >= n_cols)
        throw std::out_of_range("entry (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                                ") outside " + std::to_string(n_rows) + "x" +
                                std::to_string(n_cols));
      if (!std::isfinite(t.value) || t.value < Scalar(0))
        throw std::domain_error("matrix entries must be nonnegative and finite");
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::tie(a.col, a.row) < std::tie(b.col, b.row);
    });
    for (std::size_t p = 1; p < entries.size(); ++p) {
      if (entries[p].col == entries[p - 1].col && entries[p].row == entries[p - 1].row)
        throw std::invalid_argument("duplicate coordinate (" + std::to_string(entries[p].row + 1) +
                                    "," + std::to_string(entries[p].col + 1) + ")");
    }
    std::vector<StorageIndex> col_ptr(static_cast<std::size_t>(n_cols) + 1, 0);
    std::vector<StorageIndex> row_idx;
    std::vector<Scalar> values;
    row_idx.reserve(entries.size());
    values.reserve(entries.size());
    for (const auto& t : entries) {
      ++col_ptr[static_cast<std::size_t>(t.col) + 1];
      row_idx.push_back(static_cast<StorageIndex>(t.row));
      values.push_back(t.value);
    }
    std::partial_sum(col_ptr.begin(), col_ptr.end(), col_ptr.begin());
    return SparseMatrix(n_rows, n_cols, std::move(col_ptr), std::move(row_idx), std::move(values));
  }

  Index rows() const { return n_rows_; }
  Index cols() const { return n_cols_; }
  Index nnz() const { return static_cast<Index>(values_.size()); }
  bool empty() const { return values_.empty(); }

  /// Fraction of the n_rows * n_cols cells that are not stored.
  double sparsity() const {
    const double cells = static_cast<double>(n_rows_) * static_cast<double>(n_cols_);
    return cells == 0.0 ? 0.0 : 1.0 - static_cast<double>(nnz()) / cells;
  }

  column_type column(Index j) const {
    if (j < 0 || j >= n_cols_)
      throw std::out_of_range("column " + std::to_string(j) + " outside [0," +
                              std::to_string(n_cols_) + ")");
    const auto begin = static_cast<std::size_t>(col_ptr_[static_cast<std::size_t>(j)]);
    const auto end = static_cast<std::size_t>(col_ptr_[static_cast<std::size_t>(j) + 1]);
    return {std::span<const StorageIndex>(row_idx_).subspan(begin, end - begin),
            std::span<const Scalar>(values_).subspan(begin, end - begin)};
  }

  const std::vector<StorageIndex>& col_ptr() const { return col_ptr_; }
  const std::vector<StorageIndex>& row_idx() const { return row_idx_; }
  const std::vector<Scalar>& values() const { return values_; }

  /// Bytes held by the three CSC arrays.
  std::size_t storage_bytes() const {
    return (col_ptr_.size() + row_idx_.size()) * sizeof(StorageIndex) +
           values_.size() * sizeof(Scalar);
  }

  Scalar sum() const { return std::accumulate(values_.begin(), values_.end(), Scalar(0)); }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  void validate() const {
    if (n_rows_ < 0 || n_cols_ < 0) throw std::invalid_argument("negative matrix dimension");
    if (col_ptr_.size() != static_cast<std::size_t>(n_cols_) + 1)
      throw std::invalid_argument("col_ptr must have n_cols + 1 entries");
    if (col_ptr_.front() != 0) throw std::invalid_argument("col_ptr[0] must be 0");
    if (static_cast<std::size_t>(col_ptr_.back()) != values_.size() ||
        row_idx_.size() != values_.size())
      throw std::invalid_argument("col_ptr[n_cols], row_idx and values disagree on nnz");
    for (std::size_t j = 0; j + 1 < col_ptr_.size(); ++j) {
      if (col_ptr_[j + 1] < col_ptr_[j]) throw std::invalid_argument("col_ptr must be nondecreasing");
      for (auto p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) {
        const auto q = static_cast<std::size_t>(p);
        if (row_idx_[q] < 0 || row_idx_[q] >= n_rows_)
          throw std::out_of_range("row index outside matrix");
        if (p > col_ptr_[j] && row_idx_[q] <= row_idx_[q - 1])
          throw std::invalid_argument("row indices must be strictly increasing within a column");
        if (!(values_[q] > Scalar(0)) || !std::isfinite(values_[q]))
          throw std::domain_error("stored values must be strictly positive and finite");
      }
    }
  }

  Index n_rows_ = 0;
  Index n_cols_ = 0;
  std::vector<StorageIndex> col_ptr_;
  std::vector<StorageIndex> row_idx_;
  std::vector<Scalar> values_;
};

/// Counting-sort transpose. Output columns come out with sorted row indices
/// because input columns are scanned in order.
template <typename Scalar, typename StorageIndex>
SparseMatrix<Scalar, StorageIndex> transpose(const SparseMatrix<Scalar, StorageIndex>& m) {
  const auto& cp = m.col_ptr();
  const auto& ri = m.row_idx();
  const auto& vals = m.values();
  std::vector<StorageIndex> col_ptr(static_cast<std::size_t>(m.rows()) + 1, 0);
  for (auto r : ri) ++col_ptr[static_cast<std::size_t>(r) + 1];
  std::partial_sum(col_ptr.begin(), col_ptr.end(), col_ptr.begin());

  std::vector<StorageIndex> next(col_ptr.begin(), col_ptr.end() - 1);
  std::vector<StorageIndex> row_idx(ri.size());
  std::vector<Scalar> values(vals.size());
  for (Index j = 0; j < m.cols(); ++j) {
    for (auto p = cp[static_cast<std::size_t>(j)]; p < cp[static_cast<std::size_t>(j) + 1]; ++p) {
      const auto dst = static_cast<std::size_t>(next[static_cast<std::size_t>(ri[static_cast<std::size_t>(p)])]++);
      row_idx[dst] = static_cast<StorageIndex>(j);
      values[dst] = vals[static_cast<std::size_t>(p)];
    }
  }
  return SparseMatrix<Scalar, StorageIndex>(m.cols(), m.rows(), std::move(col_ptr),
                                            std::move(row_idx), std::move(values));
}

using SparseMatrixd = SparseMatrix<double>;

}  // namespace klnmf

#endif  // KLNMF_SPARSE_MATRIX_HPP

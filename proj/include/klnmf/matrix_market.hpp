#ifndef KLNMF_MATRIX_MARKET_HPP
#define KLNMF_MATRIX_MARKET_HPP

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "klnmf/dense_factor.hpp"
#include "klnmf/sparse_matrix.hpp"

namespace klnmf {

/// Malformed MatrixMarket header, size line or entry.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Only `coordinate` + `real`/`integer` + `general` is accepted. Indices are
// 1-based on disk. Explicit zeros are dropped; duplicates and negative values
// throw (std::invalid_argument / std::domain_error).
SparseMatrixd read_matrix_market(std::istream& in);
SparseMatrixd load_matrix_market(const std::filesystem::path& path);

void write_matrix_market(std::ostream& out, const SparseMatrixd& m);
void save_matrix_market(const std::filesystem::path& path, const SparseMatrixd& m);

/// Sparse interpretation of a factor: only its nonzero entries are written.
/// The header comment records the r x n_items orientation.
void write_matrix_market(std::ostream& out, const DenseFactord& factor, const std::string& name);
void save_matrix_market(const std::filesystem::path& path, const DenseFactord& factor,
                        const std::string& name);

/// r lines of n_items tab-separated values.
void write_tsv(std::ostream& out, const DenseFactord& factor);
void save_tsv(const std::filesystem::path& path, const DenseFactord& factor);

}  // namespace klnmf

#endif  // KLNMF_MATRIX_MARKET_HPP

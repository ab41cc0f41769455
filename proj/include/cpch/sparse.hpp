#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace cpch {

/// Row-compressed sparse matrix. Column indices are strictly increasing
/// within each row. Entries are structural: a stored value may be exactly
/// zero (e.g. a Lagrange weight at a tie) and is still kept.
class SparseOperator {
 public:
  struct Triplet {
    int row;
    int col;
    double value;
  };

  SparseOperator() = default;
  SparseOperator(std::size_t rows, std::size_t cols);

  /// Duplicate (row, col) entries are summed.
  static SparseOperator from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);
  static SparseOperator identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const int> row_offsets() const { return row_ptr_; }
  std::span<const int> col_indices() const { return col_idx_; }
  std::span<const double> values() const { return values_; }
  std::span<const int> row_cols(std::size_t r) const {
    return std::span<const int>(col_idx_).subspan(row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]);
  }
  std::span<const double> row_values(std::size_t r) const {
    return std::span<const double>(values_).subspan(row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]);
  }
  std::size_t row_nnz(std::size_t r) const { return static_cast<std::size_t>(row_ptr_[r + 1] - row_ptr_[r]); }

  /// y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> operator*(std::span<const double> x) const;

  /// Value at (r, c), zero when not stored.
  double coeff(std::size_t r, std::size_t c) const;

  /// Writes `row col value` lines (0-based) after a `rows cols nnz` header.
  void write_coordinate(std::ostream& os) const;

  // Raw builders for assembly code that produces sorted rows directly.
  void start_row_storage(std::size_t nnz_hint);
  void push_entry(int col, double value) {
    col_idx_.push_back(col);
    values_.push_back(value);
  }
  void end_row() { row_ptr_.push_back(static_cast<int>(col_idx_.size())); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> values_;
};

/// C = A * B (structural product: every reachable (i, k) is stored).
SparseOperator multiply(const SparseOperator& a, const SparseOperator& b);

/// C = alpha * A + beta * B with the union sparsity pattern.
SparseOperator add(double alpha, const SparseOperator& a, double beta, const SparseOperator& b);

}  // namespace cpch

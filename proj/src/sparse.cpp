#include "cpch/sparse.hpp"

#include <algorithm>
#include <ostream>

#include "cpch/error.hpp"

namespace cpch {

SparseOperator::SparseOperator(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  row_ptr_.assign(rows + 1, 0);
}

void SparseOperator::start_row_storage(std::size_t nnz_hint) {
  row_ptr_.clear();
  row_ptr_.reserve(rows_ + 1);
  row_ptr_.push_back(0);
  col_idx_.clear();
  values_.clear();
  col_idx_.reserve(nnz_hint);
  values_.reserve(nnz_hint);
}

SparseOperator SparseOperator::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row < 0 || t.col < 0 || static_cast<std::size_t>(t.row) >= rows || static_cast<std::size_t>(t.col) >= cols)
      throw Error(ErrorCode::kDimensionMismatch, "triplet index outside matrix bounds");
  }
  std::sort(triplets.begin(), triplets.end(),
            [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  SparseOperator m(rows, cols);
  m.start_row_storage(triplets.size());
  std::size_t t = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    while (t < triplets.size() && static_cast<std::size_t>(triplets[t].row) == r) {
      const int c = triplets[t].col;
      double v = 0.0;
      while (t < triplets.size() && static_cast<std::size_t>(triplets[t].row) == r && triplets[t].col == c)
        v += triplets[t++].value;
      m.push_entry(c, v);
    }
    m.end_row();
  }
  return m;
}

SparseOperator SparseOperator::identity(std::size_t n) {
  SparseOperator m(n, n);
  m.start_row_storage(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.push_entry(static_cast<int>(i), 1.0);
    m.end_row();
  }
  return m;
}

void SparseOperator::multiply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != cols_ || y.size() != rows_)
    throw Error(ErrorCode::kDimensionMismatch, "matrix-vector product with non-conforming vectors");
  const int* rp = row_ptr_.data();
  const int* ci = col_idx_.data();
  const double* v = values_.data();
  for (std::size_t r = 0; r < rows_; ++r) {
    double sum = 0.0;
    for (int p = rp[r]; p < rp[r + 1]; ++p) sum += v[p] * x[ci[p]];
    y[r] = sum;
  }
}

std::vector<double> SparseOperator::operator*(std::span<const double> x) const {
  std::vector<double> y(rows_);
  multiply(x, y);
  return y;
}

double SparseOperator::coeff(std::size_t r, std::size_t c) const {
  const auto cols = row_cols(r);
  const auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<int>(c));
  if (it == cols.end() || *it != static_cast<int>(c)) return 0.0;
  return row_values(r)[static_cast<std::size_t>(it - cols.begin())];
}

void SparseOperator::write_coordinate(std::ostream& os) const {
  os.precision(17);
  os << rows_ << ' ' << cols_ << ' ' << nnz() << '\n';
  for (std::size_t r = 0; r < rows_; ++r) {
    for (int p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) os << r << ' ' << col_idx_[p] << ' ' << values_[p] << '\n';
  }
}

SparseOperator multiply(const SparseOperator& a, const SparseOperator& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::kDimensionMismatch, "sparse product with non-conforming operands");
  SparseOperator c(a.rows(), b.cols());
  c.start_row_storage(a.nnz() * 4);
  // Gustavson row-by-row accumulation with a dense marker.
  std::vector<int> marker(b.cols(), -1);
  std::vector<double> accum(b.cols(), 0.0);
  std::vector<int> pattern;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    pattern.clear();
    const auto acols = a.row_cols(r);
    const auto avals = a.row_values(r);
    for (std::size_t p = 0; p < acols.size(); ++p) {
      const auto bcols = b.row_cols(static_cast<std::size_t>(acols[p]));
      const auto bvals = b.row_values(static_cast<std::size_t>(acols[p]));
      for (std::size_t q = 0; q < bcols.size(); ++q) {
        const int col = bcols[q];
        if (marker[col] != static_cast<int>(r)) {
          marker[col] = static_cast<int>(r);
          accum[col] = 0.0;
          pattern.push_back(col);
        }
        accum[col] += avals[p] * bvals[q];
      }
    }
    std::sort(pattern.begin(), pattern.end());
    for (int col : pattern) c.push_entry(col, accum[col]);
    c.end_row();
  }
  return c;
}

SparseOperator add(double alpha, const SparseOperator& a, double beta, const SparseOperator& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::kDimensionMismatch, "sparse sum with non-conforming operands");
  SparseOperator c(a.rows(), a.cols());
  c.start_row_storage(a.nnz() + b.nnz());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ac = a.row_cols(r);
    const auto av = a.row_values(r);
    const auto bc = b.row_cols(r);
    const auto bv = b.row_values(r);
    std::size_t p = 0, q = 0;
    while (p < ac.size() || q < bc.size()) {
      if (q == bc.size() || (p < ac.size() && ac[p] < bc[q])) {
        c.push_entry(ac[p], alpha * av[p]);
        ++p;
      } else if (p == ac.size() || bc[q] < ac[p]) {
        c.push_entry(bc[q], beta * bv[q]);
        ++q;
      } else {
        c.push_entry(ac[p], alpha * av[p] + beta * bv[q]);
        ++p;
        ++q;
      }
    }
    c.end_row();
  }
  return c;
}

}  // namespace cpch

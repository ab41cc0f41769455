#include "cpch/operators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "cpch/error.hpp"

namespace cpch {

SparseOperator assemble_laplacian(const Band& band) {
  const std::size_t n = band.size();
  const double inv_h2 = 1.0 / (band.grid().h() * band.grid().h());
  static constexpr NodeIndex kOffsets[7] = {{-1, 0, 0}, {0, -1, 0}, {0, 0, -1}, {0, 0, 0},
                                            {0, 0, 1},  {0, 1, 0},  {1, 0, 0}};
  SparseOperator lap(n, n);
  lap.start_row_storage(7 * n);
  std::array<int, 7> cols{};
  for (std::size_t i = 0; i < n; ++i) {
    const NodeIndex& node = band.nodes()[i];
    bool complete = true;
    for (int s = 0; s < 7; ++s) {
      cols[s] = band.index_of({node[0] + kOffsets[s][0], node[1] + kOffsets[s][1], node[2] + kOffsets[s][2]});
      if (cols[s] < 0) complete = false;
    }
    if (complete) {
      // lexicographic node order makes the offset order above column-sorted
      for (int s = 0; s < 7; ++s) lap.push_entry(cols[s], s == 3 ? -6.0 * inv_h2 : inv_h2);
    } else if (band.is_core(i)) {
      std::ostringstream os;
      os << "core node (" << node[0] << ", " << node[1] << ", " << node[2] << ") is missing a Laplacian neighbor";
      throw Error(ErrorCode::kMissingNeighbor, os.str());
    }
    lap.end_row();
  }
  return lap;
}

void lagrange_weights_1d(int degree, double t, std::span<double> weights) {
  for (int j = 0; j <= degree; ++j) {
    double w = 1.0;
    for (int m = 0; m <= degree; ++m) {
      if (m != j) w *= (t - m) / static_cast<double>(j - m);
    }
    weights[j] = w;
  }
}

SparseOperator interpolation_matrix(const Band& band, std::span<const Vec3> points, int degree) {
  const GridSpec& grid = band.grid();
  const int width = degree + 1;
  const int per_row = width * width * width;
  SparseOperator interp(points.size(), band.size());
  interp.start_row_storage(points.size() * static_cast<std::size_t>(per_row));
  std::array<std::array<double, 4>, 3> w{};
  std::vector<std::pair<int, double>> row(static_cast<std::size_t>(per_row));
  for (const Vec3& p : points) {
    const NodeIndex base = interp_stencil_base(p, grid, degree);
    for (int a = 0; a < 3; ++a) {
      const double t = (p[a] - grid.lower()[a]) / grid.h() - base[a];
      lagrange_weights_1d(degree, t, w[a]);
    }
    int s = 0;
    for (int a = 0; a < width; ++a) {
      for (int b = 0; b < width; ++b) {
        for (int c = 0; c < width; ++c) {
          const int col = band.index_of({base[0] + a, base[1] + b, base[2] + c});
          if (col < 0) {
            std::ostringstream os;
            os << "degree-" << degree << " stencil at (" << p[0] << ", " << p[1] << ", " << p[2]
               << ") leaves the band";
            throw Error(ErrorCode::kStencilOutOfBand, os.str());
          }
          row[s++] = {col, w[0][a] * w[1][b] * w[2][c]};
        }
      }
    }
    std::sort(row.begin(), row.end());
    for (const auto& [col, value] : row) interp.push_entry(col, value);
    interp.end_row();
  }
  return interp;
}

SparseOperator assemble_interp(const Band& band, int degree) {
  if (degree != 1 && degree != 3) throw Error(ErrorCode::kInvalidArgument, "interpolation degree must be 1 or 3");
  return interpolation_matrix(band, band.closest_points(), degree);
}

SparseOperator compose_extended_laplacian(const SparseOperator& e1, const SparseOperator& laplacian,
                                          const SparseOperator& e3, double alpha) {
  const std::size_t n = e1.rows();
  if (e1.cols() != laplacian.rows() || laplacian.rows() != laplacian.cols() || e3.rows() != n ||
      e3.cols() != laplacian.cols() || e1.rows() != laplacian.rows())
    throw Error(ErrorCode::kDimensionMismatch, "extended Laplacian operands do not conform");
  for (int col : e1.col_indices()) {
    if (laplacian.row_nnz(static_cast<std::size_t>(col)) == 0)
      throw Error(ErrorCode::kMissingNeighbor, "linear interpolation stencil uses a node without a Laplacian row");
  }
  const SparseOperator e1l = multiply(e1, laplacian);
  const SparseOperator shifted = add(1.0, e3, -1.0, SparseOperator::identity(n));
  return add(1.0, e1l, alpha, shifted);
}

SurfaceOperators SurfaceOperators::build(const Band& band) {
  SurfaceOperators ops;
  ops.laplacian = assemble_laplacian(band);
  ops.e1 = assemble_interp(band, 1);
  ops.e3 = assemble_interp(band, 3);
  ops.alpha = extension_penalty(band.grid().h());
  ops.extended = compose_extended_laplacian(ops.e1, ops.laplacian, ops.e3, ops.alpha);
  return ops;
}

}  // namespace cpch

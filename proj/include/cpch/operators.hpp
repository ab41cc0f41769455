#pragma once

#include <span>

#include "cpch/band.hpp"
#include "cpch/sparse.hpp"

namespace cpch {

/// 7-point Cartesian Laplacian over the band. Rows of nodes whose six
/// neighbors are all in the band hold (sum of neighbors - 6 center) / h^2;
/// remaining outer-layer rows are empty. Throws kMissingNeighbor if a core
/// node lacks a neighbor.
SparseOperator assemble_laplacian(const Band& band);

/// Tensor-product Lagrange interpolation (degree 1 or 3) from band values to
/// the closest point of every band node.
SparseOperator assemble_interp(const Band& band, int degree);

/// Interpolation from band values to arbitrary points (one row per point).
/// Throws kStencilOutOfBand if a stencil node is missing from the band.
SparseOperator interpolation_matrix(const Band& band, std::span<const Vec3> points, int degree);

/// 1D Lagrange weights on nodes 0..degree evaluated at local coordinate t.
void lagrange_weights_1d(int degree, double t, std::span<double> weights);

/// L_E = E1 * L + alpha * (E3 - I). Throws kMissingNeighbor if E1 references
/// a node whose Laplacian row is empty.
SparseOperator compose_extended_laplacian(const SparseOperator& e1, const SparseOperator& laplacian,
                                          const SparseOperator& e3, double alpha);

/// Penalty weight of the extended Laplacian for grid spacing h: 6 / h^2.
inline double extension_penalty(double h) { return 6.0 / (h * h); }

/// All closest-point operators of one band.
struct SurfaceOperators {
  SparseOperator laplacian;
  SparseOperator e1;
  SparseOperator e3;
  SparseOperator extended;
  double alpha = 0.0;

  static SurfaceOperators build(const Band& band);
};

}  // namespace cpch

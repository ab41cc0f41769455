#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "cpch/sparse.hpp"

namespace cpch {

/// Largest time step the Schur approximation is built for by default.
inline constexpr double kDefaultDtMax = 1e-2;

/// Sparse LU with partial pivoting and a nested-dissection fill-reducing
/// ordering. Throws kFactorizationFailed on a zero pivot.
class SparseLU {
 public:
  explicit SparseLU(const SparseOperator& a);
  ~SparseLU();
  SparseLU(SparseLU&&) noexcept;
  SparseLU& operator=(SparseLU&&) noexcept;

  std::size_t size() const;
  /// Stored entries in L and U.
  std::size_t fill() const;
  void solve(std::span<const double> b, std::span<double> x) const;
  std::vector<double> solve(std::span<const double> b) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

inline SparseLU sparse_lu_factor(const SparseOperator& a) { return SparseLU(a); }
inline std::vector<double> sparse_lu_solve(const SparseLU& lu, std::span<const double> b) { return lu.solve(b); }

/// Complex sparse LU of I + i * shift * A for a real square A.
class ShiftedComplexLU {
 public:
  ShiftedComplexLU(const SparseOperator& a, double shift);
  ~ShiftedComplexLU();
  ShiftedComplexLU(ShiftedComplexLU&&) noexcept;
  ShiftedComplexLU& operator=(ShiftedComplexLU&&) noexcept;

  std::size_t fill() const;
  /// x = Re[(I + i shift A)^{-1} b] for real b.
  void solve_real_part(std::span<const double> b, std::span<double> x) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// The 2n x 2n closest-point Cahn-Hilliard block system
///   [ I              Cn^2 L_E ] [mu]
///   [ -dt/(Pe b0) L_E   I     ] [f ]
/// Block vectors are stored as [mu; f].
struct BlockSystem {
  const SparseOperator* extended = nullptr;
  double cn2 = 0.0;    // Cn^2
  double pe = 1.0;
  double dt = 0.0;
  double beta0 = 1.0;

  std::size_t n() const { return extended->rows(); }
  double c_top() const { return cn2; }
  double c_bot() const { return dt / (pe * beta0); }

  /// out = A x, with x and out of length 2n.
  void apply(std::span<const double> x, std::span<double> out) const;
};

BlockSystem make_block_system(const SparseOperator& extended, double cn, double pe, double dt, double beta0);

/// (mu + Cn^2 L_E f, -(dt/(Pe b0)) L_E mu + f)
std::pair<std::vector<double>, std::vector<double>> apply_block(const BlockSystem& sys, std::span<const double> mu,
                                                               std::span<const double> f);

/// How the approximate Schur complement S = I + c L_E^2 is inverted.
/// kComplexSplit factors I + i sqrt(c) L_E and uses
/// S^{-1} = Re[(I + i sqrt(c) L_E)^{-1}], which is exact for real L_E and
/// keeps the sparsity of L_E. kDirect assembles S and factors it.
enum class SchurMethod { kComplexSplit, kDirect };

/// Block-triangular preconditioner built on the exact block factorization
/// with the Schur complement frozen at dt_max:
///   P = [I, -Cn^2 L_E; 0, I] diag(I, S^{-1}) [I, 0; dt/(Pe b0) L_E, I],
///   S = I + Cn^2 dt_max / (Pe b0) L_E L_E.
/// The outer factors use the system's own dt, so P = A^{-1} when dt = dt_max.
class SchurPreconditioner {
 public:
  SchurPreconditioner(const BlockSystem& sys, double dt_max, SchurMethod method = SchurMethod::kComplexSplit);
  ~SchurPreconditioner();
  SchurPreconditioner(SchurPreconditioner&&) noexcept;
  SchurPreconditioner& operator=(SchurPreconditioner&&) noexcept;

  double dt_max() const { return dt_max_; }
  double beta0() const { return beta0_; }
  double schur_coefficient() const { return schur_coeff_; }
  SchurMethod method() const { return method_; }
  std::size_t fill() const;

  /// y = S^{-1} x
  void apply_schur_inverse(std::span<const double> x, std::span<double> y) const;
  /// out = P r for a block residual r = [r_mu; r_f]; `sys` supplies dt.
  void apply(const BlockSystem& sys, std::span<const double> r, std::span<double> out) const;

 private:
  const SparseOperator* extended_;
  double cn2_;
  double pe_;
  double beta0_;
  double dt_max_;
  double schur_coeff_;
  SchurMethod method_;
  std::unique_ptr<SparseLU> direct_;
  std::unique_ptr<ShiftedComplexLU> split_;
};

inline SchurPreconditioner build_preconditioner(const BlockSystem& sys, double dt_max,
                                                SchurMethod method = SchurMethod::kComplexSplit) {
  return SchurPreconditioner(sys, dt_max, method);
}

struct SolveOptions {
  double rtol = 1e-8;
  int max_iter = 50;
};

struct SolveResult {
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> residual_history;  // relative, one entry per iteration plus the initial one
};

/// Right-preconditioned flexible GMRES on the block system. `x` holds the
/// initial guess on entry and the solution on exit. Convergence means
/// ||b - A x||_2 <= rtol ||b||_2. Throws kNotConverged after max_iter.
SolveResult fgmres_solve(const BlockSystem& sys, const SchurPreconditioner& precond, std::span<const double> rhs,
                         std::span<double> x, const SolveOptions& options = {});

}  // namespace cpch

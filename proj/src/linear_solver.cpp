#include "cpch/linear_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cholmod.h>

#include "cpch/error.hpp"

namespace cpch {

namespace {

// Nested-dissection ordering of the symmetrized pattern A + A^T (METIS via
// CHOLMOD, falling back to AMD). perm[k] is the original index placed k-th.
std::vector<int> fill_reducing_order(const SparseOperator& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<std::vector<int>> upper(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    for (int c : a.row_cols(static_cast<std::size_t>(r))) {
      upper[static_cast<std::size_t>(std::max(r, c))].push_back(std::min(r, c));
    }
  }
  std::size_t nnz = 0;
  for (int j = 0; j < n; ++j) {
    auto& col = upper[static_cast<std::size_t>(j)];
    col.push_back(j);
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
    nnz += col.size();
  }

  cholmod_common common;
  cholmod_start(&common);
  common.print = 0;
  cholmod_sparse* pattern =
      cholmod_allocate_sparse(static_cast<size_t>(n), static_cast<size_t>(n), nnz, 1, 1, 1, CHOLMOD_PATTERN, &common);
  std::vector<int> perm(static_cast<std::size_t>(n));
  bool ok = pattern != nullptr;
  if (ok) {
    auto* colptr = static_cast<int*>(pattern->p);
    auto* rowidx = static_cast<int*>(pattern->i);
    std::size_t pos = 0;
    for (int j = 0; j < n; ++j) {
      colptr[j] = static_cast<int>(pos);
      for (int r : upper[static_cast<std::size_t>(j)]) rowidx[pos++] = r;
    }
    colptr[n] = static_cast<int>(pos);
    upper.clear();
    ok = cholmod_metis(pattern, nullptr, 0, 1, perm.data(), &common) != 0;
    if (!ok) ok = cholmod_amd(pattern, nullptr, 0, perm.data(), &common) != 0;
    cholmod_free_sparse(&pattern, &common);
  }
  cholmod_finish(&common);
  if (!ok) std::iota(perm.begin(), perm.end(), 0);
  return perm;
}

template <class Scalar>
struct PermutedLU {
  using Matrix = Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<int> perm;
  Eigen::SparseLU<Matrix, Eigen::NaturalOrdering<int>> lu;

  template <class ValueFn>
  void factor(const SparseOperator& pattern, ValueFn value_of) {
    const int n = static_cast<int>(pattern.rows());
    perm = fill_reducing_order(pattern);
    std::vector<int> inverse(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = k;
    std::vector<Eigen::Triplet<Scalar, int>> triplets;
    triplets.reserve(pattern.nnz());
    for (int r = 0; r < n; ++r) {
      const auto cols = pattern.row_cols(static_cast<std::size_t>(r));
      const auto vals = pattern.row_values(static_cast<std::size_t>(r));
      for (std::size_t p = 0; p < cols.size(); ++p) {
        triplets.emplace_back(inverse[static_cast<std::size_t>(r)], inverse[static_cast<std::size_t>(cols[p])],
                              value_of(r, cols[p], vals[p]));
      }
    }
    Matrix m(n, n);
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    lu.analyzePattern(m);
    lu.factorize(m);
    if (lu.info() != Eigen::Success) {
      throw Error(ErrorCode::kFactorizationFailed, "sparse LU failed (zero pivot): " + lu.lastErrorMessage());
    }
  }

  std::size_t fill() {
    return static_cast<std::size_t>(lu.nnzL()) + static_cast<std::size_t>(lu.nnzU());
  }

  Vector solve(std::span<const double> b) {
    const std::size_t n = perm.size();
    Vector rhs(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) rhs[static_cast<Eigen::Index>(k)] = b[static_cast<std::size_t>(perm[k])];
    return lu.solve(rhs);
  }
};

}  // namespace

struct SparseLU::Impl {
  PermutedLU<double> lu;
};

SparseLU::SparseLU(const SparseOperator& a) : impl_(std::make_unique<Impl>()) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::kDimensionMismatch, "LU factorization needs a square matrix");
  impl_->lu.factor(a, [](int, int, double v) { return v; });
}

SparseLU::~SparseLU() = default;
SparseLU::SparseLU(SparseLU&&) noexcept = default;
SparseLU& SparseLU::operator=(SparseLU&&) noexcept = default;

std::size_t SparseLU::size() const { return impl_->lu.perm.size(); }
std::size_t SparseLU::fill() const { return impl_->lu.fill(); }

void SparseLU::solve(std::span<const double> b, std::span<double> x) const {
  if (b.size() != size() || x.size() != size())
    throw Error(ErrorCode::kDimensionMismatch, "LU solve with non-conforming vectors");
  const auto y = impl_->lu.solve(b);
  const auto& perm = impl_->lu.perm;
  for (std::size_t k = 0; k < perm.size(); ++k) x[static_cast<std::size_t>(perm[k])] = y[static_cast<Eigen::Index>(k)];
}

std::vector<double> SparseLU::solve(std::span<const double> b) const {
  std::vector<double> x(size());
  solve(b, x);
  return x;
}

struct ShiftedComplexLU::Impl {
  PermutedLU<std::complex<double>> lu;
};

ShiftedComplexLU::ShiftedComplexLU(const SparseOperator& a, double shift) : impl_(std::make_unique<Impl>()) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::kDimensionMismatch, "LU factorization needs a square matrix");
  // pattern must contain the diagonal for the identity term
  const SparseOperator pattern = add(1.0, a, 0.0, SparseOperator::identity(a.rows()));
  impl_->lu.factor(pattern, [shift](int r, int c, double v) {
    return std::complex<double>(r == c ? 1.0 : 0.0, shift * v);
  });
}

ShiftedComplexLU::~ShiftedComplexLU() = default;
ShiftedComplexLU::ShiftedComplexLU(ShiftedComplexLU&&) noexcept = default;
ShiftedComplexLU& ShiftedComplexLU::operator=(ShiftedComplexLU&&) noexcept = default;

std::size_t ShiftedComplexLU::fill() const { return impl_->lu.fill(); }

void ShiftedComplexLU::solve_real_part(std::span<const double> b, std::span<double> x) const {
  const auto y = impl_->lu.solve(b);
  const auto& perm = impl_->lu.perm;
  for (std::size_t k = 0; k < perm.size(); ++k)
    x[static_cast<std::size_t>(perm[k])] = y[static_cast<Eigen::Index>(k)].real();
}

void BlockSystem::apply(std::span<const double> x, std::span<double> out) const {
  const std::size_t m = n();
  if (x.size() != 2 * m || out.size() != 2 * m)
    throw Error(ErrorCode::kDimensionMismatch, "block operator applied to a vector of the wrong length");
  const auto mu = x.first(m);
  const auto f = x.subspan(m);
  auto top = out.first(m);
  auto bottom = out.subspan(m);
  extended->multiply(f, top);
  extended->multiply(mu, bottom);
  const double ct = c_top();
  const double cb = c_bot();
  for (std::size_t i = 0; i < m; ++i) {
    top[i] = mu[i] + ct * top[i];
    bottom[i] = f[i] - cb * bottom[i];
  }
}

BlockSystem make_block_system(const SparseOperator& extended, double cn, double pe, double dt, double beta0) {
  if (extended.rows() != extended.cols())
    throw Error(ErrorCode::kDimensionMismatch, "extended Laplacian must be square");
  if (!(pe > 0.0) || !(dt > 0.0) || !(beta0 > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "block system needs Pe, dt and beta0 positive");
  return BlockSystem{&extended, cn * cn, pe, dt, beta0};
}

std::pair<std::vector<double>, std::vector<double>> apply_block(const BlockSystem& sys, std::span<const double> mu,
                                                               std::span<const double> f) {
  const std::size_t m = sys.n();
  if (mu.size() != m || f.size() != m)
    throw Error(ErrorCode::kDimensionMismatch, "block operator applied to vectors of the wrong length");
  std::vector<double> x(2 * m), y(2 * m);
  std::copy(mu.begin(), mu.end(), x.begin());
  std::copy(f.begin(), f.end(), x.begin() + static_cast<std::ptrdiff_t>(m));
  sys.apply(x, y);
  return {std::vector<double>(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(m)),
          std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(m), y.end())};
}

SchurPreconditioner::SchurPreconditioner(const BlockSystem& sys, double dt_max, SchurMethod method)
    : extended_(sys.extended),
      cn2_(sys.cn2),
      pe_(sys.pe),
      beta0_(sys.beta0),
      dt_max_(dt_max),
      schur_coeff_(sys.cn2 * dt_max / (sys.pe * sys.beta0)),
      method_(method) {
  if (!(dt_max > 0.0)) throw Error(ErrorCode::kInvalidArgument, "dt_max must be positive");
  if (schur_coeff_ == 0.0) return;  // S = I
  if (method_ == SchurMethod::kDirect) {
    const SparseOperator le2 = multiply(*extended_, *extended_);
    const SparseOperator schur = add(1.0, SparseOperator::identity(extended_->rows()), schur_coeff_, le2);
    direct_ = std::make_unique<SparseLU>(schur);
  } else {
    split_ = std::make_unique<ShiftedComplexLU>(*extended_, std::sqrt(schur_coeff_));
  }
}

SchurPreconditioner::~SchurPreconditioner() = default;
SchurPreconditioner::SchurPreconditioner(SchurPreconditioner&&) noexcept = default;
SchurPreconditioner& SchurPreconditioner::operator=(SchurPreconditioner&&) noexcept = default;

std::size_t SchurPreconditioner::fill() const {
  if (direct_) return direct_->fill();
  if (split_) return split_->fill();
  return 0;
}

void SchurPreconditioner::apply_schur_inverse(std::span<const double> x, std::span<double> y) const {
  if (direct_) {
    direct_->solve(x, y);
  } else if (split_) {
    split_->solve_real_part(x, y);
  } else {
    std::copy(x.begin(), x.end(), y.begin());
  }
}

void SchurPreconditioner::apply(const BlockSystem& sys, std::span<const double> r, std::span<double> out) const {
  if (sys.extended != extended_ || sys.beta0 != beta0_ || sys.cn2 != cn2_ || sys.pe != pe_)
    throw Error(ErrorCode::kInvalidArgument, "preconditioner was built for a different block system");
  const std::size_t m = sys.n();
  const auto r_mu = r.first(m);
  const auto r_f = r.subspan(m);
  auto out_mu = out.first(m);
  auto out_f = out.subspan(m);
  // lower factor: y_f = r_f + dt/(Pe b0) L_E r_mu (out_mu as scratch)
  std::vector<double> y_f(m);
  extended_->multiply(r_mu, y_f);
  const double cb = sys.c_bot();
  for (std::size_t i = 0; i < m; ++i) y_f[i] = r_f[i] + cb * y_f[i];
  apply_schur_inverse(y_f, out_f);
  // upper factor: out_mu = r_mu - Cn^2 L_E z_f
  extended_->multiply(out_f, out_mu);
  for (std::size_t i = 0; i < m; ++i) out_mu[i] = r_mu[i] - cn2_ * out_mu[i];
}

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

SolveResult fgmres_solve(const BlockSystem& sys, const SchurPreconditioner& precond, std::span<const double> rhs,
                         std::span<double> x, const SolveOptions& options) {
  const std::size_t dim = 2 * sys.n();
  if (rhs.size() != dim || x.size() != dim)
    throw Error(ErrorCode::kDimensionMismatch, "FGMRES vectors do not match the block system");
  if (!(options.rtol > 0.0) || options.max_iter < 1)
    throw Error(ErrorCode::kInvalidArgument, "FGMRES needs rtol > 0 and max_iter >= 1");

  SolveResult result;
  const double bnorm = norm2(rhs);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    result.residual_history.push_back(0.0);
    return result;
  }

  std::vector<double> r(dim);
  auto true_residual = [&]() {
    sys.apply(x, r);
    for (std::size_t i = 0; i < dim; ++i) r[i] = rhs[i] - r[i];
    return norm2(r);
  };

  double rnorm = true_residual();
  result.residual_history.push_back(rnorm / bnorm);
  const auto m = static_cast<std::size_t>(options.max_iter);
  std::vector<std::vector<double>> v;  // Krylov basis
  std::vector<std::vector<double>> z;  // preconditioned directions
  std::vector<double> h((m + 1) * m, 0.0);
  auto H = [&](std::size_t i, std::size_t j) -> double& { return h[j * (m + 1) + i]; };
  std::vector<double> cs(m), sn(m), g(m + 1);

  while (rnorm > options.rtol * bnorm) {
    if (result.iterations >= options.max_iter) {
      std::ostringstream os;
      os << "FGMRES did not converge in " << options.max_iter << " iterations; residual history:";
      for (double rh : result.residual_history) os << ' ' << rh;
      throw Error(ErrorCode::kNotConverged, os.str());
    }
    v.assign(1, std::vector<double>(dim));
    z.clear();
    for (std::size_t i = 0; i < dim; ++i) v[0][i] = r[i] / rnorm;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = rnorm;
    std::size_t k = 0;
    const std::size_t budget = m - static_cast<std::size_t>(result.iterations);
    bool converged = false;
    for (; k < budget; ++k) {
      z.emplace_back(dim);
      precond.apply(sys, v[k], z[k]);
      std::vector<double> w(dim);
      sys.apply(z[k], w);
      for (std::size_t j = 0; j <= k; ++j) {  // modified Gram-Schmidt
        double dotp = 0.0;
        for (std::size_t i = 0; i < dim; ++i) dotp += w[i] * v[j][i];
        H(j, k) = dotp;
        for (std::size_t i = 0; i < dim; ++i) w[i] -= dotp * v[j][i];
      }
      const double wnorm = norm2(w);
      H(k + 1, k) = wnorm;
      for (std::size_t j = 0; j < k; ++j) {
        const double t = cs[j] * H(j, k) + sn[j] * H(j + 1, k);
        H(j + 1, k) = -sn[j] * H(j, k) + cs[j] * H(j + 1, k);
        H(j, k) = t;
      }
      const double denom = std::hypot(H(k, k), H(k + 1, k));
      cs[k] = H(k, k) / denom;
      sn[k] = H(k + 1, k) / denom;
      H(k, k) = denom;
      H(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      ++result.iterations;
      result.residual_history.push_back(std::abs(g[k + 1]) / bnorm);
      if (std::abs(g[k + 1]) <= options.rtol * bnorm || wnorm == 0.0) {
        converged = true;
        ++k;
        break;
      }
      v.emplace_back(dim);
      for (std::size_t i = 0; i < dim; ++i) v[k + 1][i] = w[i] / wnorm;
    }
    if (!converged) k = z.size();
    // back substitution for the least-squares coefficients
    std::vector<double> y(k);
    for (std::size_t ii = k; ii-- > 0;) {
      double s = g[ii];
      for (std::size_t j = ii + 1; j < k; ++j) s -= H(ii, j) * y[j];
      y[ii] = s / H(ii, ii);
    }
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < dim; ++i) x[i] += y[j] * z[j][i];
    }
    rnorm = true_residual();
    result.residual_history.back() = rnorm / bnorm;
  }
  result.relative_residual = rnorm / bnorm;
  return result;
}

}  // namespace cpch

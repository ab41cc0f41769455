#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cpch/error.hpp"
#include "cpch/linear_solver.hpp"
#include "cpch/operators.hpp"

using namespace cpch;

namespace {

using Dense = std::vector<std::vector<double>>;

Dense to_dense(const SparseOperator& a) {
  Dense d(a.rows(), std::vector<double>(a.cols(), 0.0));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto cols = a.row_cols(r);
    const auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) d[r][cols[k]] += vals[k];
  }
  return d;
}

Dense dense_mul(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), m = b[0].size(), p = b.size();
  Dense c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k) {
      if (a[i][k] == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) c[i][j] += a[i][k] * b[k][j];
    }
  return c;
}

// Gaussian elimination with partial pivoting.
std::vector<double> dense_solve(Dense a, std::vector<double> b) {
  const std::size_t n = a.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
    std::swap(a[k], a[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double m = a[i][k] / a[k][k];
      if (m == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a[i][j] -= m * a[k][j];
      b[i] -= m * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
    x[i] = s / a[i][i];
  }
  return x;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// n = 184 band; small enough for dense oracles.
struct Tiny {
  Band band{SurfaceMap::sphere(0.25), GridSpec::cube(-1.25, 1.25, 8)};
  SurfaceOperators ops = SurfaceOperators::build(band);
};

const Tiny& tiny() {
  static const Tiny t;
  return t;
}

Dense block_dense(const SparseOperator& le, double ctop, double cbot) {
  const std::size_t n = le.rows();
  const Dense d = to_dense(le);
  Dense a(2 * n, std::vector<double>(2 * n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    a[i][i] = 1.0;
    a[n + i][n + i] = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      a[i][n + j] = ctop * d[i][j];
      a[n + i][j] = -cbot * d[i][j];
    }
  }
  return a;
}

}  // namespace

TEST_CASE("sparse LU on small matrices") {
  const SparseOperator id = SparseOperator::identity(5);
  const std::vector<double> b{1, 2, 3, 4, 5};
  const SparseLU lu(id);
  CHECK(lu.size() == 5);
  CHECK(max_abs_diff(lu.solve(b), b) == 0.0);

  std::vector<SparseOperator::Triplet> t;
  for (int i = 0; i < 5; ++i) t.push_back({i, i, 2.0});
  const auto x = sparse_lu_solve(sparse_lu_factor(SparseOperator::from_triplets(5, 5, t)), b);
  for (int i = 0; i < 5; ++i) CHECK(x[i] == doctest::Approx(0.5 * b[i]).epsilon(1e-15));
}

TEST_CASE("sparse LU matches dense elimination on random diagonally dominant systems") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> col(0, 99);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<SparseOperator::Triplet> t;
    for (int i = 0; i < 100; ++i) {
      double off = 0.0;
      for (int k = 0; k < 6; ++k) {
        const int j = col(rng);
        if (j == i) continue;
        const double v = u(rng);
        off += std::abs(v);
        t.push_back({i, j, v});
      }
      t.push_back({i, i, off + 1.0 + std::abs(u(rng))});
    }
    const SparseOperator a = SparseOperator::from_triplets(100, 100, t);
    const auto b = random_vector(100, rng);
    const auto x = SparseLU(a).solve(b);
    const auto oracle = dense_solve(to_dense(a), b);
    CHECK(max_abs_diff(x, oracle) < 1e-10);
  }
}

TEST_CASE("singular matrices are reported") {
  std::vector<SparseOperator::Triplet> t{{0, 0, 1.0}, {0, 1, 2.0}, {1, 0, 2.0}, {1, 1, 4.0}, {2, 2, 1.0}};
  try {
    SparseLU lu(SparseOperator::from_triplets(3, 3, t));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFactorizationFailed);
  }
  CHECK_THROWS_AS(SparseLU(SparseOperator(3, 4)), Error);
}

TEST_CASE("Schur complement solves reach a small residual") {
  const SparseOperator& le = tiny().ops.extended;
  const std::size_t n = le.rows();
  REQUIRE(n == 184);
  const SparseOperator le2 = multiply(le, le);
  std::mt19937_64 rng(3);
  for (double c : {1e-6, 1e-4, 1e-2}) {
    const SparseOperator s = add(1.0, SparseOperator::identity(n), c, le2);
    const auto b = random_vector(n, rng);
    const auto x = SparseLU(s).solve(b);
    const auto r = s * x;
    CHECK(max_abs_diff(r, b) <= 1e-10 * max_abs(b));
  }
}

TEST_CASE("complex shifted LU returns the real part of the shifted inverse") {
  const SparseOperator& le = tiny().ops.extended;
  const std::size_t n = le.rows();
  const Dense d = to_dense(le);
  const Dense d2 = dense_mul(d, d);
  std::mt19937_64 rng(4);
  for (double shift : {1e-3, 1e-2, 0.3}) {
    // Re[(I + i s A)^{-1}] = (I + s^2 A^2)^{-1}
    Dense s = d2;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) s[i][j] *= shift * shift;
      s[i][i] += 1.0;
    }
    const auto b = random_vector(n, rng);
    const auto oracle = dense_solve(s, b);
    std::vector<double> x(n);
    ShiftedComplexLU(le, shift).solve_real_part(b, x);
    CHECK(max_abs_diff(x, oracle) <= 1e-10 * std::max(1.0, max_abs(oracle)));
  }
}

TEST_CASE("block operator matches the dense block matrix") {
  const SparseOperator& le = tiny().ops.extended;
  const std::size_t n = le.rows();
  const BlockSystem sys = make_block_system(le, 0.1, 2.0, 1e-3, 1.5);
  CHECK(sys.c_top() == doctest::Approx(0.01));
  CHECK(sys.c_bot() == doctest::Approx(1e-3 / 3.0));
  const Dense a = block_dense(le, sys.c_top(), sys.c_bot());
  std::mt19937_64 rng(5);
  const auto x = random_vector(2 * n, rng);
  std::vector<double> y(2 * n), oracle(2 * n, 0.0);
  sys.apply(x, y);
  for (std::size_t i = 0; i < 2 * n; ++i)
    for (std::size_t j = 0; j < 2 * n; ++j) oracle[i] += a[i][j] * x[j];
  CHECK(max_abs_diff(y, oracle) <= 1e-12 * max_abs(oracle));

  const std::vector<double> zero(n, 0.0), one(n, 1.0);
  auto [zm, zf] = apply_block(sys, zero, zero);
  CHECK(max_abs(zm) == 0.0);
  CHECK(max_abs(zf) == 0.0);
  // constants are in the kernel of L_E up to rounding
  auto [om, of] = apply_block(sys, zero, one);
  CHECK(max_abs(om) < 1e-8);
  for (double v : of) REQUIRE(v == 1.0);
  CHECK_THROWS_AS(apply_block(sys, std::vector<double>(n - 1), one), Error);
}

TEST_CASE("FGMRES recovers the solution of the block system") {
  const SparseOperator& le = tiny().ops.extended;
  const std::size_t n = le.rows();
  std::mt19937_64 rng(6);
  const double cn = 0.1, pe = 1.0, dt = 1e-3;
  const BlockSystem sys = make_block_system(le, cn, pe, dt, 1.0);
  const Dense a = block_dense(le, sys.c_top(), sys.c_bot());

  SUBCASE("known solution") {
    const auto x_true = random_vector(2 * n, rng);
    std::vector<double> b(2 * n);
    sys.apply(x_true, b);
    const SchurPreconditioner p(sys, 1e-2);
    std::vector<double> x(2 * n, 0.0);
    const SolveResult res = fgmres_solve(sys, p, b, x);
    CHECK(res.relative_residual <= 1e-8);
    CHECK(res.iterations >= 1);
    CHECK(res.residual_history.size() == static_cast<std::size_t>(res.iterations) + 1);
    const auto oracle = dense_solve(a, b);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 2 * n; ++i) {
      num += (x[i] - oracle[i]) * (x[i] - oracle[i]);
      den += oracle[i] * oracle[i];
    }
    CHECK(std::sqrt(num / den) < 1e-6);
  }

  SUBCASE("zero right-hand side") {
    const SchurPreconditioner p(sys, 1e-2);
    std::vector<double> b(2 * n, 0.0), x = random_vector(2 * n, rng);
    const SolveResult res = fgmres_solve(sys, p, b, x);
    CHECK(res.iterations == 0);
    CHECK(max_abs(x) == 0.0);
  }

  SUBCASE("exact preconditioner converges in one iteration") {
    const auto b = random_vector(2 * n, rng);
    for (SchurMethod m : {SchurMethod::kComplexSplit, SchurMethod::kDirect}) {
      const SchurPreconditioner p(sys, dt, m);
      std::vector<double> x(2 * n, 0.0);
      CHECK(fgmres_solve(sys, p, b, x).iterations == 1);
    }
    // Cn = 0 decouples the blocks
    const BlockSystem flat = make_block_system(le, 0.0, pe, dt, 1.0);
    const SchurPreconditioner p0(flat, 1e-2);
    std::vector<double> x(2 * n, 0.0);
    CHECK(fgmres_solve(flat, p0, b, x).iterations == 1);
  }

  SUBCASE("Schur inversion methods agree") {
    const SchurPreconditioner split(sys, 1e-2, SchurMethod::kComplexSplit);
    const SchurPreconditioner direct(sys, 1e-2, SchurMethod::kDirect);
    CHECK(split.schur_coefficient() == doctest::Approx(cn * cn * 1e-2 / pe));
    const auto r = random_vector(2 * n, rng);
    std::vector<double> y1(2 * n), y2(2 * n);
    split.apply(sys, r, y1);
    direct.apply(sys, r, y2);
    CHECK(max_abs_diff(y1, y2) <= 1e-9 * max_abs(y2));
  }

  SUBCASE("non-convergence carries the residual history") {
    const SchurPreconditioner p(sys, 1e-2);
    const auto b = random_vector(2 * n, rng);
    std::vector<double> x(2 * n, 0.0);
    try {
      fgmres_solve(sys, p, b, x, {1e-14, 1});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kNotConverged);
      CHECK(std::string(e.what()).find("residual history") != std::string::npos);
    }
    CHECK_THROWS_AS(fgmres_solve(sys, p, b, x, {0.0, 10}), Error);
    CHECK_THROWS_AS(fgmres_solve(sys, p, b, x, {1e-8, 0}), Error);
  }

  SUBCASE("preconditioner and system must match") {
    const SchurPreconditioner p(sys, 1e-2);
    const BlockSystem other = make_block_system(le, 0.2, pe, dt, 1.0);
    const auto b = random_vector(2 * n, rng);
    std::vector<double> x(2 * n, 0.0);
    CHECK_THROWS_AS(fgmres_solve(other, p, b, x), Error);
    std::vector<double> short_x(n);
    CHECK_THROWS_AS(fgmres_solve(sys, p, b, short_x), Error);
  }
}

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cpch/error.hpp"
#include "cpch/geometry.hpp"

using namespace cpch;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 torus_point(double R, double r, double theta, double phi) {
  // theta: around the z axis, phi: around the tube
  const double rho = R + r * std::cos(phi);
  return {rho * std::cos(theta), rho * std::sin(theta), r * std::sin(phi)};
}

// Nearest sample of a fine parametric grid, refined once around the winner.
Vec3 brute_force_torus_cp(double R, double r, const Vec3& x) {
  double best = 1e300, bt = 0.0, bp = 0.0;
  auto scan = [&](double t0, double t1, double p0, double p1, int n) {
    double ct = bt, cp = bp;
    for (int i = 0; i <= n; ++i) {
      const double t = t0 + (t1 - t0) * i / n;
      for (int j = 0; j <= n; ++j) {
        const double p = p0 + (p1 - p0) * j / n;
        const double d = norm(torus_point(R, r, t, p) - x);
        if (d < best) {
          best = d;
          ct = t;
          cp = p;
        }
      }
    }
    bt = ct;
    bp = cp;
  };
  scan(-kPi, kPi, -kPi, kPi, 720);
  const double w = 2.0 * kPi / 720;
  scan(bt - w, bt + w, bp - w, bp + w, 400);
  scan(bt - w / 100, bt + w / 100, bp - w / 100, bp + w / 100, 400);
  return torus_point(R, r, bt, bp);
}

Vec3 random_point(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

Vec3 unit_from_angles(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

// Laplace-Beltrami of Y_l^m at (theta, phi) by centred differences in
// spherical coordinates.
double fd_laplace_beltrami(int l, int m, double theta, double phi, double d) {
  auto y = [&](double t, double p) { return real_spherical_harmonic(l, m, unit_from_angles(t, p)); };
  const double s = std::sin(theta);
  const double sp = std::sin(theta + 0.5 * d), sm = std::sin(theta - 0.5 * d);
  const double dtheta = (sp * (y(theta + d, phi) - y(theta, phi)) - sm * (y(theta, phi) - y(theta - d, phi))) /
                        (d * d * s);
  const double dphi = (y(theta, phi + d) - 2.0 * y(theta, phi) + y(theta, phi - d)) / (d * d * s * s);
  return dtheta + dphi;
}

}  // namespace

TEST_CASE("sphere closest point and signed distance") {
  const SurfaceMap s = SurfaceMap::sphere();
  const Vec3 cp = s.closest_point({2, 0, 0});
  CHECK(cp[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cp[1] == 0.0);
  CHECK(cp[2] == 0.0);
  CHECK(s.signed_distance({0.5, 0, 0}) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(s.signed_distance({0, 2, 0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.area() == doctest::Approx(4.0 * kPi));
}

TEST_CASE("torus closest point matches the parametric sampling oracle") {
  const SurfaceMap t = SurfaceMap::torus(1.0, 0.5);
  const Vec3 a = t.closest_point({2, 0, 0});
  CHECK(norm(a - Vec3{1.5, 0, 0}) < 1e-14);

  const Vec3 b = t.closest_point({1, 0, 1});
  CHECK(norm(b - Vec3{1, 0, 0.5}) < 1e-14);
  CHECK(norm(b - brute_force_torus_cp(1.0, 0.5, {1, 0, 1})) < 1e-4);

  CHECK(t.signed_distance({1, 0, 0.25}) == doctest::Approx(-0.25));
  // (1, 0, 0) is on the centre circle where every tube point is nearest
  CHECK_THROWS_AS(t.signed_distance({1, 0, 0}), Error);
  // just off the centre circle: distance r to the tube surface
  const Vec3 near_centre{1.0, 0.0, 1e-9};
  CHECK(t.signed_distance(near_centre) == doctest::Approx(-0.5).epsilon(1e-8));
  CHECK(std::abs(norm(brute_force_torus_cp(1.0, 0.5, near_centre) - near_centre) - 0.5) < 1e-6);

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 x = random_point(rng, -1.75, 1.75);
    if (std::hypot(x[0], x[1]) < 0.05 || std::hypot(std::hypot(x[0], x[1]) - 1.0, x[2]) < 0.05) continue;
    const Vec3 oracle = brute_force_torus_cp(1.0, 0.5, x);
    CHECK(norm(t.closest_point(x) - oracle) < 1e-4);
    CHECK(std::abs(std::abs(t.signed_distance(x)) - norm(x - oracle)) < 1e-8);
  }
  CHECK(t.area() == doctest::Approx(4.0 * kPi * kPi * 0.5));
}

TEST_CASE("singular inputs are rejected") {
  const SurfaceMap s = SurfaceMap::sphere();
  CHECK(s.is_singular({0, 0, 0}));
  try {
    s.closest_point({0, 0, 1e-13});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingularInput);
  }
  const SurfaceMap t = SurfaceMap::torus(1.0, 0.5);
  CHECK(t.is_singular({0, 0, 0.7}));
  CHECK(t.is_singular({0, 1, 0}));
  CHECK_FALSE(t.is_singular({0, 1, 0.1}));
  CHECK_THROWS_AS(SurfaceMap::torus(0.5, 0.5), Error);
}

TEST_CASE("projection is idempotent and consistent with the distance") {
  std::mt19937_64 rng(2024);
  const SurfaceMap surfaces[] = {SurfaceMap::sphere(), SurfaceMap::torus(1.0, 0.5)};
  for (const auto& s : surfaces) {
    int checked = 0;
    while (checked < 10000) {
      const Vec3 x = random_point(rng, -1.75, 1.75);
      if (s.is_singular(x)) continue;
      const Vec3 cp = s.closest_point(x);
      REQUIRE(norm(s.closest_point(cp) - cp) < 1e-12);
      REQUIRE(std::abs(norm(x - cp) - std::abs(s.signed_distance(x))) < 1e-12);
      // lies on the implicit surface
      if (s.kind() == SurfaceKind::kSphere) REQUIRE(std::abs(norm(cp) - 1.0) < 1e-14);
      else REQUIRE(std::abs(std::hypot(std::hypot(cp[0], cp[1]) - 1.0, cp[2]) - 0.5) < 1e-14);
      ++checked;
    }
  }
}

TEST_CASE("closest point minimises distance over surface samples") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec3> sphere_samples, torus_samples;
  for (int i = 0; i < 10000; ++i) {
    Vec3 g{gauss(rng), gauss(rng), gauss(rng)};
    sphere_samples.push_back((1.0 / norm(g)) * g);
    torus_samples.push_back(torus_point(1.0, 0.5, angle(rng), angle(rng)));
  }
  const SurfaceMap sphere = SurfaceMap::sphere();
  const SurfaceMap torus = SurfaceMap::torus(1.0, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x = random_point(rng, -1.75, 1.75);
    const double ds = norm(x - sphere.closest_point(x));
    const double dt = norm(x - torus.closest_point(x));
    for (int j = 0; j < 10000; ++j) {
      REQUIRE(ds <= norm(x - sphere_samples[j]) + 1e-8);
      REQUIRE(dt <= norm(x - torus_samples[j]) + 1e-8);
    }
  }
}

TEST_CASE("custom surfaces use the supplied map and an unsigned distance") {
  const SurfaceMap c = SurfaceMap::custom([](const Vec3& x) { return Vec3{x[0], x[1], 0.0}; }, 1.0, "plane");
  CHECK(c.kind() == SurfaceKind::kCustom);
  CHECK(c.signed_distance({0.2, 0.3, -0.4}) == doctest::Approx(0.4));
  CHECK_THROWS_AS(SurfaceMap::custom(nullptr, 1.0), Error);
}

TEST_CASE("spherical harmonics: values and normalisation") {
  const SurfaceMap s = SurfaceMap::sphere();
  const double y00 = sphere_eigenfunction(s, 0, 0, {0, 0, 1});
  CHECK(y00 == doctest::Approx(0.5 / std::sqrt(kPi)));
  CHECK(sphere_eigenfunction(s, 0, 0, {0.6, 0.8, 0}) == doctest::Approx(y00));
  CHECK(sphere_eigenfunction(s, 1, 0, {0, 0, 1}) == doctest::Approx(std::sqrt(3.0 / (4.0 * kPi))));
  // Y_1^1 is proportional to x, Y_1^-1 to y
  CHECK(sphere_eigenfunction(s, 1, 1, {1, 0, 0}) == doctest::Approx(std::sqrt(3.0 / (4.0 * kPi))));
  CHECK(sphere_eigenfunction(s, 1, -1, {0, 1, 0}) == doctest::Approx(std::sqrt(3.0 / (4.0 * kPi))));

  // midpoint quadrature of Y^2 over the sphere
  const int nt = 400, np = 800;
  for (auto [l, m] : {std::pair{1, 0}, {2, 1}, {3, -2}, {2, 0}}) {
    double sum = 0.0;
    for (int i = 0; i < nt; ++i) {
      const double th = (i + 0.5) * kPi / nt;
      for (int j = 0; j < np; ++j) {
        const double ph = (j + 0.5) * 2.0 * kPi / np;
        const double v = real_spherical_harmonic(l, m, unit_from_angles(th, ph));
        sum += v * v * std::sin(th);
      }
    }
    CHECK(sum * (kPi / nt) * (2.0 * kPi / np) == doctest::Approx(1.0).epsilon(1e-4));
  }

  CHECK_THROWS_AS(sphere_eigenfunction(SurfaceMap::torus(1.0, 0.5), 1, 0, {1, 0, 0}), Error);
  CHECK_THROWS_AS(sphere_eigenfunction(SurfaceMap::sphere(2.0), 1, 0, {0, 0, 2}), Error);
  CHECK_THROWS_AS(sphere_eigenfunction(s, 1, 0, {0, 0, 1.1}), Error);
}

TEST_CASE("spherical harmonics satisfy the finite-difference Laplace-Beltrami equation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(0.3, kPi - 0.3), ph(-kPi, kPi);
  for (auto [l, m] : {std::pair{2, 1}, {1, 0}, {2, 0}, {3, 2}, {3, -1}}) {
    for (int k = 0; k < 10; ++k) {
      const double t = th(rng), p = ph(rng);
      const double y = real_spherical_harmonic(l, m, unit_from_angles(t, p));
      const double e1 = std::abs(fd_laplace_beltrami(l, m, t, p, 1e-2) + l * (l + 1) * y);
      const double e2 = std::abs(fd_laplace_beltrami(l, m, t, p, 5e-3) + l * (l + 1) * y);
      CHECK(e1 < 1e-3);
      // second-order truncation: halving the step quarters the residual
      if (e1 > 1e-8) CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
    }
  }
}

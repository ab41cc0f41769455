#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>

namespace cpch {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

enum class SurfaceKind { kSphere, kTorus, kCustom };

/// Distance below which a point is treated as lying on the singular set of
/// the closest-point map (sphere center, torus axis / center circle).
inline constexpr double kSingularTolerance = 1e-12;

/// Analytic surface with a closest-point projection.
///
/// Sphere: centered at the origin with the given radius.
/// Torus: symmetric about the z axis, centerline radius R in the z = 0 plane
/// and tube radius r (r < R).
/// Custom: user-supplied closest-point map and area. Custom surfaces have no
/// inside/outside, so signed_distance() returns the unsigned distance.
class SurfaceMap {
 public:
  using ClosestPointFn = std::function<Vec3(const Vec3&)>;

  static SurfaceMap sphere(double radius = 1.0);
  static SurfaceMap torus(double centerline_radius, double tube_radius);
  static SurfaceMap custom(ClosestPointFn cp, double area, std::string name = "custom");

  SurfaceKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  double area() const { return area_; }
  double radius() const { return radius_; }
  double centerline_radius() const { return radius_; }
  double tube_radius() const { return tube_; }

  bool is_singular(const Vec3& x) const;
  Vec3 closest_point(const Vec3& x) const;
  double signed_distance(const Vec3& x) const;

 private:
  SurfaceMap() = default;
  void require_regular(const Vec3& x) const;

  SurfaceKind kind_ = SurfaceKind::kSphere;
  std::string name_;
  double radius_ = 1.0;  // sphere radius or torus centerline radius
  double tube_ = 0.0;
  double area_ = 0.0;
  ClosestPointFn custom_cp_;
};

/// Real, fully normalized spherical harmonic on the unit sphere (no
/// Condon-Shortley phase):
///   m > 0: sqrt(2) N_lm P_l^m(cos th) cos(m ph)
///   m = 0: N_l0 P_l(cos th)
///   m < 0: sqrt(2) N_l|m| P_l^|m|(cos th) sin(|m| ph)
/// with N_lm = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!), so that the integral of
/// Y^2 over the sphere is 1. Satisfies lap_s Y = -l(l+1) Y.
double real_spherical_harmonic(int l, int m, const Vec3& x);

/// Checked variant: requires a unit-sphere surface and |x| = 1.
double sphere_eigenfunction(const SurfaceMap& surface, int l, int m, const Vec3& x);

}  // namespace cpch

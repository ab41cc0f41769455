#include "cpch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cpch/error.hpp"

namespace cpch {

SurfaceMap SurfaceMap::sphere(double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sphere radius must be positive");
  SurfaceMap s;
  s.kind_ = SurfaceKind::kSphere;
  s.name_ = "sphere";
  s.radius_ = radius;
  s.area_ = 4.0 * std::numbers::pi * radius * radius;
  return s;
}

SurfaceMap SurfaceMap::torus(double centerline_radius, double tube_radius) {
  if (!(tube_radius > 0.0) || !(centerline_radius > tube_radius))
    throw Error(ErrorCode::kInvalidArgument, "torus requires 0 < r < R");
  SurfaceMap s;
  s.kind_ = SurfaceKind::kTorus;
  s.name_ = "torus";
  s.radius_ = centerline_radius;
  s.tube_ = tube_radius;
  s.area_ = 4.0 * std::numbers::pi * std::numbers::pi * centerline_radius * tube_radius;
  return s;
}

SurfaceMap SurfaceMap::custom(ClosestPointFn cp, double area, std::string name) {
  if (!cp) throw Error(ErrorCode::kInvalidArgument, "custom surface needs a closest-point map");
  if (!(area > 0.0)) throw Error(ErrorCode::kInvalidArgument, "custom surface area must be positive");
  SurfaceMap s;
  s.kind_ = SurfaceKind::kCustom;
  s.name_ = std::move(name);
  s.area_ = area;
  s.custom_cp_ = std::move(cp);
  return s;
}

bool SurfaceMap::is_singular(const Vec3& x) const {
  switch (kind_) {
    case SurfaceKind::kSphere:
      return norm(x) < kSingularTolerance;
    case SurfaceKind::kTorus: {
      const double rho = std::hypot(x[0], x[1]);
      if (rho < kSingularTolerance) return true;
      return std::hypot(rho - radius_, x[2]) < kSingularTolerance;
    }
    case SurfaceKind::kCustom:
      return false;
  }
  return false;
}

void SurfaceMap::require_regular(const Vec3& x) const {
  if (is_singular(x)) {
    std::ostringstream os;
    os << "point (" << x[0] << ", " << x[1] << ", " << x[2] << ") lies on the singular set of the "
       << name_ << " closest-point map";
    throw Error(ErrorCode::kSingularInput, os.str());
  }
}

Vec3 SurfaceMap::closest_point(const Vec3& x) const {
  require_regular(x);
  switch (kind_) {
    case SurfaceKind::kSphere:
      return (radius_ / norm(x)) * x;
    case SurfaceKind::kTorus: {
      const double rho = std::hypot(x[0], x[1]);
      const Vec3 center{radius_ * x[0] / rho, radius_ * x[1] / rho, 0.0};
      const Vec3 v = x - center;
      return center + (tube_ / norm(v)) * v;
    }
    case SurfaceKind::kCustom:
      return custom_cp_(x);
  }
  return x;
}

double SurfaceMap::signed_distance(const Vec3& x) const {
  require_regular(x);
  switch (kind_) {
    case SurfaceKind::kSphere:
      return norm(x) - radius_;
    case SurfaceKind::kTorus:
      return std::hypot(std::hypot(x[0], x[1]) - radius_, x[2]) - tube_;
    case SurfaceKind::kCustom:
      return norm(x - custom_cp_(x));
  }
  return 0.0;
}

double real_spherical_harmonic(int l, int m, const Vec3& x) {
  if (l < 0 || std::abs(m) > l) throw Error(ErrorCode::kInvalidArgument, "spherical harmonic needs |m| <= l");
  const int am = std::abs(m);
  const double r = norm(x);
  const double cos_theta = std::clamp(x[2] / r, -1.0, 1.0);
  const double phi = std::atan2(x[1], x[0]);
  // log-gamma keeps the factorial ratio finite for moderate l
  const double ratio = std::exp(std::lgamma(l - am + 1.0) - std::lgamma(l + am + 1.0));
  const double n_lm = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * ratio);
  const double p = std::assoc_legendre(static_cast<unsigned>(l), static_cast<unsigned>(am), cos_theta);
  if (m == 0) return n_lm * p;
  const double angular = m > 0 ? std::cos(am * phi) : std::sin(am * phi);
  return std::numbers::sqrt2 * n_lm * p * angular;
}

double sphere_eigenfunction(const SurfaceMap& surface, int l, int m, const Vec3& x) {
  if (surface.kind() != SurfaceKind::kSphere || std::abs(surface.radius() - 1.0) > 1e-15)
    throw Error(ErrorCode::kUnsupportedSurface, "spherical harmonics are only available on the unit sphere");
  if (std::abs(norm(x) - 1.0) > 1e-12)
    throw Error(ErrorCode::kInvalidArgument, "eigenfunction evaluation point must lie on the unit sphere");
  return real_spherical_harmonic(l, m, x);
}

}  // namespace cpch

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "cpch/geometry.hpp"

namespace cpch {

using NodeIndex = std::array<int, 3>;

/// Uniform cubic Cartesian grid with N nodes per axis spanning [lower, upper].
class GridSpec {
 public:
  GridSpec(const Vec3& lower, const Vec3& upper, int nodes_per_axis);
  /// Cube [lo, hi]^3.
  static GridSpec cube(double lo, double hi, int nodes_per_axis);

  const Vec3& lower() const { return lower_; }
  const Vec3& upper() const { return upper_; }
  int n() const { return n_; }
  double h() const { return h_; }

  Vec3 position(const NodeIndex& node) const {
    return {lower_[0] + node[0] * h_, lower_[1] + node[1] * h_, lower_[2] + node[2] * h_};
  }
  bool contains(const NodeIndex& node) const {
    return node[0] >= 0 && node[1] >= 0 && node[2] >= 0 && node[0] < n_ && node[1] < n_ && node[2] < n_;
  }
  std::int64_t linear(const NodeIndex& node) const {
    return (static_cast<std::int64_t>(node[0]) * n_ + node[1]) * n_ + node[2];
  }

 private:
  Vec3 lower_;
  Vec3 upper_;
  int n_;
  double h_;
};

/// Lowest-corner node of the 2^3 (degree 1) or 4^3 (degree 3) tensor stencil
/// used to interpolate at `point`. Degree 3 stencils put the point in their
/// central cell. A point lying on a grid plane (to 1e-10 cells) belongs to the
/// cell above it, i.e. ties go to the lower stencil index.
NodeIndex interp_stencil_base(const Vec3& point, const GridSpec& grid, int degree);

/// Seed distance, in units of h, for band construction.
inline constexpr double kBandSeedWidth = 2.0;

/// Narrow band of grid nodes around a surface.
///
/// Nodes are stored in lexicographic (i, j, k) order. A node is "core" when it
/// is a seed (|signed distance| <= 2h); core nodes have their full 7-point
/// Laplacian stencil in the band. Every band node has the degree-1 and degree-3
/// interpolation stencils of its closest point in the band, and all degree-1
/// stencil nodes are core.
class Band {
 public:
  Band(const SurfaceMap& surface, const GridSpec& grid);

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeIndex>& nodes() const { return nodes_; }
  const std::vector<Vec3>& closest_points() const { return cp_; }
  const std::vector<double>& distances() const { return dist_; }
  bool is_core(std::size_t i) const { return core_[i] != 0; }
  std::size_t core_count() const;

  /// Dense index of `node`, or -1 if not in the band.
  int index_of(const NodeIndex& node) const {
    if (!grid_.contains(node)) return -1;
    return lookup_[static_cast<std::size_t>(grid_.linear(node))];
  }
  bool contains(const NodeIndex& node) const { return index_of(node) >= 0; }
  Vec3 position(std::size_t i) const { return grid_.position(nodes_[i]); }

  /// Writes `i,j,k,x,y,z,cpx,cpy,cpz,dist` lines with a header.
  void write_csv(std::ostream& os) const;

 private:
  GridSpec grid_;
  std::vector<NodeIndex> nodes_;
  std::vector<Vec3> cp_;
  std::vector<double> dist_;
  std::vector<std::uint8_t> core_;
  std::vector<int> lookup_;
};

inline Band build_band(const SurfaceMap& surface, const GridSpec& grid) { return Band(surface, grid); }

}  // namespace cpch

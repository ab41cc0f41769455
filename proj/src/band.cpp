#include "cpch/band.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "cpch/error.hpp"

namespace cpch {

GridSpec::GridSpec(const Vec3& lower, const Vec3& upper, int nodes_per_axis)
    : lower_(lower), upper_(upper), n_(nodes_per_axis) {
  if (n_ < 8) throw Error(ErrorCode::kInvalidArgument, "grid needs at least 8 nodes per axis");
  const double extent = upper[0] - lower[0];
  if (!(extent > 0.0)) throw Error(ErrorCode::kInvalidArgument, "grid upper corner must exceed lower corner");
  for (int a = 1; a < 3; ++a) {
    if (std::abs((upper[a] - lower[a]) - extent) > 1e-12 * std::abs(extent))
      throw Error(ErrorCode::kInvalidArgument, "grid domain must be a cube");
  }
  h_ = extent / (n_ - 1);
}

GridSpec GridSpec::cube(double lo, double hi, int nodes_per_axis) {
  return GridSpec({lo, lo, lo}, {hi, hi, hi}, nodes_per_axis);
}

NodeIndex interp_stencil_base(const Vec3& point, const GridSpec& grid, int degree) {
  if (degree != 1 && degree != 3) throw Error(ErrorCode::kInvalidArgument, "interpolation degree must be 1 or 3");
  NodeIndex base{};
  for (int a = 0; a < 3; ++a) {
    double t = (point[a] - grid.lower()[a]) / grid.h();
    const double nearest = std::round(t);
    if (std::abs(t - nearest) < 1e-10) t = nearest;
    const int cell = static_cast<int>(std::floor(t));
    base[a] = degree == 1 ? cell : cell - 1;
    if (base[a] < 0 || base[a] + degree > grid.n() - 1) {
      std::ostringstream os;
      os << "interpolation stencil for point (" << point[0] << ", " << point[1] << ", " << point[2]
         << ") leaves the grid";
      throw Error(ErrorCode::kOutOfDomain, os.str());
    }
  }
  return base;
}

Band::Band(const SurfaceMap& surface, const GridSpec& grid) : grid_(grid) {
  const int n = grid.n();
  const double h = grid.h();
  const double seed_width = kBandSeedWidth * h;

  struct NodeData {
    Vec3 cp;
    double dist;
    bool core;
  };
  std::unordered_map<std::int64_t, NodeData> members;
  std::deque<NodeIndex> pending;

  auto add = [&](const NodeIndex& node, bool core) {
    if (!grid.contains(node))
      throw Error(ErrorCode::kDomainTooSmall, "band closure requires nodes outside the grid");
    const std::int64_t key = grid.linear(node);
    if (members.contains(key)) return;
    const Vec3 x = grid.position(node);
    if (surface.is_singular(x))
      throw Error(ErrorCode::kSingularInput, "band closure requires a node on the singular set of the surface");
    members.emplace(key, NodeData{surface.closest_point(x), surface.signed_distance(x), core});
    pending.push_back(node);
  };

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const NodeIndex node{i, j, k};
        const Vec3 x = grid.position(node);
        if (surface.is_singular(x)) continue;
        if (std::abs(surface.signed_distance(x)) <= seed_width) add(node, true);
      }
    }
  }

  static constexpr NodeIndex kNeighbors[6] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  while (!pending.empty()) {
    const NodeIndex node = pending.front();
    pending.pop_front();
    const NodeData& data = members.at(grid.linear(node));
    const bool core = data.core;
    NodeIndex base;
    try {
      base = interp_stencil_base(data.cp, grid, 3);
    } catch (const Error&) {
      throw Error(ErrorCode::kDomainTooSmall, "interpolation stencil of a band node leaves the grid");
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c) add({base[0] + a, base[1] + b, base[2] + c}, false);
    if (core) {
      for (const auto& d : kNeighbors) add({node[0] + d[0], node[1] + d[1], node[2] + d[2]}, false);
    }
  }

  std::vector<std::int64_t> keys;
  keys.reserve(members.size());
  for (const auto& [key, data] : members) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  const std::size_t total = static_cast<std::size_t>(n) * n * n;
  lookup_.assign(total, -1);
  nodes_.reserve(keys.size());
  cp_.reserve(keys.size());
  dist_.reserve(keys.size());
  core_.reserve(keys.size());
  for (std::int64_t key : keys) {
    const int i = static_cast<int>(key / (static_cast<std::int64_t>(n) * n));
    const int j = static_cast<int>((key / n) % n);
    const int k = static_cast<int>(key % n);
    const NodeData& data = members.at(key);
    lookup_[static_cast<std::size_t>(key)] = static_cast<int>(nodes_.size());
    nodes_.push_back({i, j, k});
    cp_.push_back(data.cp);
    dist_.push_back(data.dist);
    core_.push_back(data.core ? 1 : 0);
  }
}

std::size_t Band::core_count() const {
  return static_cast<std::size_t>(std::count(core_.begin(), core_.end(), std::uint8_t{1}));
}

void Band::write_csv(std::ostream& os) const {
  os << "i,j,k,x,y,z,cpx,cpy,cpz,dist\n";
  os.precision(17);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Vec3 x = position(i);
    os << nodes_[i][0] << ',' << nodes_[i][1] << ',' << nodes_[i][2] << ',' << x[0] << ',' << x[1] << ','
       << x[2] << ',' << cp_[i][0] << ',' << cp_[i][1] << ',' << cp_[i][2] << ',' << dist_[i] << '\n';
  }
}

}  // namespace cpch

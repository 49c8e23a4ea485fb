#include "flightfix/geometry.hpp"

#include <algorithm>

namespace flightfix {

double point_to_leg_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const double pa = distance(p, a);
  const double pb = distance(p, b);
  const double ab = distance(a, b);
  if (ab < 1e-9) return pa;

  // Heron's formula in Kahan's ordering (x >= y >= z); the bracketing keeps
  // near-collinear triangles accurate. 16 * area^2 = product below.
  std::array<double, 3> sides{pa, pb, ab};
  std::sort(sides.begin(), sides.end(), std::greater<>());
  const auto [x, y, z] = sides;
  const double product = (x + (y + z)) * (z - (x - y)) * (z + (x - y)) * (x + (y - z));
  // Floating-point noise can push the radicand slightly negative.
  const double area = 0.25 * std::sqrt(std::max(0.0, product));
  return 2.0 * area / ab;
}

}  // namespace flightfix

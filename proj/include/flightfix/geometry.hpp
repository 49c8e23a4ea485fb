#pragma once

#include <array>
#include <cmath>

namespace flightfix {

/// Plain 3-vector in the local east/north/up frame, meters.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Height of triangle (a, b, p) over the base ab, from the three side lengths
/// via Heron's formula. This is the distance from p to the infinite line
/// through a and b. Returns |pa| when the base is shorter than 1e-9 m.
double point_to_leg_distance(const Vec3& p, const Vec3& a, const Vec3& b);

}  // namespace flightfix

#pragma once

#include <cmath>

namespace nnem {

/// Plain 2D point / vector in domain coordinates.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2 operator-() const { return {-x, -y}; }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

/// z-component of the 3D cross product; twice the signed area of (0,a,b).
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Symmetric 2x2 matrix, used for the diffusion coefficient.
struct SymMat2 {
  double a11 = 1.0;
  double a12 = 0.0;
  double a22 = 1.0;

  constexpr Vec2 operator*(Vec2 v) const {
    return {a11 * v.x + a12 * v.y, a12 * v.x + a22 * v.y};
  }

  constexpr bool positive_definite() const {
    return a11 > 0.0 && a11 * a22 - a12 * a12 > 0.0;
  }
};

}  // namespace nnem

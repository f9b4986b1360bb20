#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnem/geometry.hpp"

namespace nnem {

/// Second order elliptic model problem
///   -div(A grad u) + b u = f  in Omega,   u = g (or 0) on the boundary,
/// with constant symmetric positive definite A and b >= 0.
struct EllipticProblem {
  std::string name;
  SymMat2 diffusion{};                      // identity by default
  std::function<double(Vec2)> reaction;     // b; empty means 0
  std::function<double(Vec2)> source;       // f
  std::function<double(Vec2)> dirichlet;    // g; empty means homogeneous
  std::function<double(Vec2)> exact;        // optional, error reporting
  std::function<Vec2(Vec2)> exact_grad;

  bool homogeneous() const { return !dirichlet; }
  bool has_exact() const { return static_cast<bool>(exact); }

  void validate() const {
    if (!diffusion.positive_definite())
      throw std::invalid_argument("problem: diffusion matrix must be symmetric positive definite");
    if (!source) throw std::invalid_argument("problem: source term is required");
  }
};

/// Built-in manufactured problems. Exact solutions keep exact gradients,
/// which is why these live in code rather than in parsed expressions.
inline EllipticProblem make_problem(const std::string& name) {
  const double pi = std::acos(-1.0);
  EllipticProblem p;
  p.name = name;
  if (name == "laplace_sine") {
    // -Laplace u = f on the unit square (also valid on the L-shape mesh,
    // where sin(pi x) sin(pi y) vanishes on the whole boundary).
    p.source = [pi](Vec2 x) {
      return 2.0 * pi * pi * std::sin(pi * x.x) * std::sin(pi * x.y);
    };
    p.exact = [pi](Vec2 x) { return std::sin(pi * x.x) * std::sin(pi * x.y); };
    p.exact_grad = [pi](Vec2 x) {
      return Vec2{pi * std::cos(pi * x.x) * std::sin(pi * x.y),
                  pi * std::sin(pi * x.x) * std::cos(pi * x.y)};
    };
    return p;
  }
  if (name == "linear_xy") {
    // u = x + y, harmonic, with its own trace as Dirichlet data.
    p.source = [](Vec2) { return 0.0; };
    p.dirichlet = [](Vec2 x) { return x.x + x.y; };
    p.exact = [](Vec2 x) { return x.x + x.y; };
    p.exact_grad = [](Vec2) { return Vec2{1.0, 1.0}; };
    return p;
  }
  if (name == "sine_plus_x") {
    // u = sin(pi x) sin(pi y) + x: the homogeneous benchmark plus a harmonic
    // lift, so f is unchanged but the boundary data is nonzero.
    p.source = [pi](Vec2 x) {
      return 2.0 * pi * pi * std::sin(pi * x.x) * std::sin(pi * x.y);
    };
    p.dirichlet = [pi](Vec2 x) { return std::sin(pi * x.x) * std::sin(pi * x.y) + x.x; };
    p.exact = [pi](Vec2 x) { return std::sin(pi * x.x) * std::sin(pi * x.y) + x.x; };
    p.exact_grad = [pi](Vec2 x) {
      return Vec2{pi * std::cos(pi * x.x) * std::sin(pi * x.y) + 1.0,
                  pi * std::sin(pi * x.x) * std::cos(pi * x.y)};
    };
    return p;
  }
  throw std::invalid_argument("unknown problem '" + name +
                              "' (available: laplace_sine, linear_xy, sine_plus_x)");
}

inline std::vector<std::string> builtin_problems() {
  return {"laplace_sine", "linear_xy", "sine_plus_x"};
}

}  // namespace nnem

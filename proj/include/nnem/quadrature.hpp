#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnem/mesh.hpp"

namespace nnem {

/// Gauss-Legendre rule on [0,1].
struct Quad1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [0,1], exact for polynomials of degree
/// <= 2n-1. Nodes ascend and are exactly symmetric about 1/2.
inline Quad1D gauss_legendre_1d(int n) {
  if (n < 1 || n > 64) throw std::invalid_argument("gauss_legendre_1d: n must be in [1,64]");
  Quad1D q;
  q.nodes.resize(n);
  q.weights.resize(n);
  const double pi = std::acos(-1.0);
  // Newton iteration on P_n over [-1,1]; compute the lower half and mirror.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = -std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) {
        // one clean-up step, then recompute dp at the converged node
        p0 = 1.0;
        p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        break;
      }
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes[i] = 0.5 * (1.0 + x);
    q.weights[i] = 0.5 * w;
    q.nodes[n - 1 - i] = 1.0 - q.nodes[i];
    q.weights[n - 1 - i] = q.weights[i];
  }
  if (n % 2 == 1) q.nodes[n / 2] = 0.5;
  return q;
}

/// Quadrature rule on the reference triangle {l1+l2+l3=1, l>=0}, stored in
/// barycentric coordinates with weights summing to the reference area 1/2.
struct TriangleRule {
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;
  int declared_exact_degree = 0;
  std::string construction;
};

/// Exact integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!.
inline double reference_monomial_integral(int a, int b) {
  double value = 1.0;
  // a!b!/(a+b)! = 1/binom(a+b,a), then divide by (a+b+1)(a+b+2)
  for (int k = 1; k <= b; ++k) value *= static_cast<double>(k) / (a + k);
  value /= (a + b + 1);
  value /= (a + b + 2);
  return value;
}

namespace detail {
inline void self_check_triangle_rule(const TriangleRule& rule) {
  double wsum = 0.0;
  for (double w : rule.weights) wsum += w;
  if (std::abs(wsum - 0.5) > 1e-14)
    throw std::logic_error("triangle rule: weights do not sum to 1/2");
  for (const auto& p : rule.points)
    if (p[0] < -1e-15 || p[1] < -1e-15 || p[2] < -1e-15 ||
        std::abs(p[0] + p[1] + p[2] - 1.0) > 1e-14)
      throw std::logic_error("triangle rule: point outside the reference triangle");
  for (int a = 0; a + 0 <= rule.declared_exact_degree; ++a) {
    for (int b = 0; a + b <= rule.declared_exact_degree; ++b) {
      double s = 0.0;
      for (size_t q = 0; q < rule.points.size(); ++q) {
        const double x = rule.points[q][1], y = rule.points[q][2];
        s += rule.weights[q] * std::pow(x, a) * std::pow(y, b);
      }
      const double exact = reference_monomial_integral(a, b);
      if (std::abs(s - exact) > 1e-13 * std::abs(exact))
        throw std::logic_error("triangle rule: monomial x^" + std::to_string(a) + " y^" +
                               std::to_string(b) + " not integrated exactly");
    }
  }
}
}  // namespace detail

/// k x k tensor-product Gauss rule mapped to the triangle by the collapsed
/// (Duffy) transform (x,y) = (s, t(1-s)) with Jacobian (1-s). Positive
/// weights; conservatively declared exact to degree min(2k-2, 5) and
/// self-checked at construction.
inline TriangleRule triangle_rule_duffy(int k) {
  const Quad1D g = gauss_legendre_1d(k);
  TriangleRule rule;
  rule.points.reserve(static_cast<size_t>(k) * k);
  rule.weights.reserve(static_cast<size_t>(k) * k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double s = g.nodes[i], t = g.nodes[j];
      const double x = s, y = t * (1.0 - s);
      rule.points.push_back({1.0 - x - y, x, y});
      rule.weights.push_back(g.weights[i] * g.weights[j] * (1.0 - s));
    }
  }
  rule.declared_exact_degree = std::min(2 * k - 2, 5);
  rule.construction = "duffy " + std::to_string(k) + "x" + std::to_string(k) +
                      " tensor gauss-legendre";
  detail::self_check_triangle_rule(rule);
  return rule;
}

/// The default 36-point rule: 6x6 Duffy tensor product.
inline TriangleRule triangle_rule_36() { return triangle_rule_duffy(6); }

/// Integral of f over physical triangle t: sum_q w_q * 2|K| * f(x_q).
template <typename F>
double integrate_on_element(F&& f, const Mesh& mesh, int t, const TriangleRule& rule) {
  const double two_area = 2.0 * mesh.signed_area(t);
  const Vec2 a = mesh.vertex_of(t, 0), b = mesh.vertex_of(t, 1), c = mesh.vertex_of(t, 2);
  double sum = 0.0;
  for (size_t q = 0; q < rule.points.size(); ++q) {
    const auto& l = rule.points[q];
    const Vec2 x = a * l[0] + b * l[1] + c * l[2];
    sum += rule.weights[q] * f(x);
  }
  return two_area * sum;
}

/// Mesh integral: element sums accumulated in ascending triangle index.
template <typename F>
double integrate_on_mesh(F&& f, const Mesh& mesh, const TriangleRule& rule) {
  double sum = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t)
    sum += integrate_on_element(f, mesh, t, rule);
  return sum;
}

}  // namespace nnem

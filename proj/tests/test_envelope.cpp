#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nnem/envelope.hpp"

using namespace nnem;
using Catch::Approx;

namespace {

// Test-only point evaluation of one envelope function at a physical point.
double envelope_at(const Mesh& mesh, const EnvelopeFamily& family, const DofDescriptor& dof,
                   Vec2 x) {
  std::array<double, 3> l;
  const int t = find_triangle(mesh, x, &l);
  if (t < 0) return 0.0;
  return envelope_eval(family, dof, t, l);
}

std::vector<Vec2> boundary_samples(const Mesh& mesh, int per_edge) {
  std::vector<Vec2> pts;
  for (const Edge& e : mesh.edges) {
    if (!e.boundary) continue;
    const Vec2 p = mesh.vertices[e.v[0]], q = mesh.vertices[e.v[1]];
    for (int i = 0; i < per_edge; ++i)
      pts.push_back(p + (q - p) * ((i + 0.5) / per_edge));
  }
  return pts;
}

}  // namespace

TEST_CASE("L-shape dof counts under the homogeneous condition", "[envelope]") {
  const Mesh m = generate_l_shape(1);
  const auto dofs = enumerate_dofs(m, hierarchical_family(), BoundaryCondition::homogeneous);
  int vertex = 0, edge = 0, bubble = 0;
  for (const DofDescriptor& d : dofs.active) {
    if (d.carrier == PatchKind::vertex) ++vertex;
    if (d.carrier == PatchKind::edge) ++edge;
    if (d.carrier == PatchKind::element) ++bubble;
  }
  CHECK(vertex == 0);
  CHECK(edge == 5);
  CHECK(bubble == 6);
  CHECK(dofs.active.size() == 11);
}

TEST_CASE("lagrange dof counts by direct enumeration", "[envelope]") {
  const Mesh m = generate_unit_square(2);
  // Oracle: count interior vertices and interior edges directly.
  const int iv = m.interior_vertex_count();
  const int ie = m.interior_edge_count();
  CHECK(iv == 1);
  CHECK(ie == 8);

  const auto p1 = enumerate_dofs(m, lagrange_family(1), BoundaryCondition::homogeneous);
  CHECK(p1.active.size() == static_cast<size_t>(iv));
  const auto p2 = enumerate_dofs(m, lagrange_family(2), BoundaryCondition::homogeneous);
  CHECK(p2.active.size() == static_cast<size_t>(iv + ie));
  CHECK(p2.active.size() == 9);
  const auto p3 = enumerate_dofs(m, lagrange_family(3), BoundaryCondition::homogeneous);
  CHECK(p3.active.size() == static_cast<size_t>(iv + 2 * ie + m.triangle_count()));
}

TEST_CASE("dof ordering is vertices, edges, elements, each ascending", "[envelope]") {
  const Mesh m = generate_unit_square(2);
  const auto dofs = enumerate_dofs(m, lagrange_family(3), BoundaryCondition::none);
  int stage = 0;
  int last_carrier = -1, last_node = -1;
  for (const DofDescriptor& d : dofs.active) {
    const int s = d.carrier == PatchKind::vertex ? 0 : d.carrier == PatchKind::edge ? 1 : 2;
    REQUIRE(s >= stage);
    if (s > stage) {
      stage = s;
      last_carrier = -1;
      last_node = -1;
    }
    REQUIRE(d.carrier_index >= last_carrier);
    if (d.carrier_index == last_carrier) REQUIRE(d.node > last_node);
    last_carrier = d.carrier_index;
    last_node = d.node;
  }
}

TEST_CASE("nonhomogeneous split partitions the dofs", "[envelope]") {
  const Mesh m = generate_unit_square(2);
  const auto all = enumerate_dofs(m, lagrange_family(2), BoundaryCondition::none);
  const auto split = enumerate_dofs(m, lagrange_family(2), BoundaryCondition::nonhomogeneous);
  CHECK(split.active.size() + split.boundary.size() == all.active.size());
  CHECK(split.active.size() == 9);
  for (const DofDescriptor& d : split.boundary) CHECK(d.on_dirichlet_boundary);
  for (const DofDescriptor& d : split.active) CHECK(!d.on_dirichlet_boundary);
}

TEST_CASE("hierarchical envelope values at named points", "[envelope]") {
  const Mesh m = generate_unit_square(1);
  const auto dofs = enumerate_dofs(m, hierarchical_family(), BoundaryCondition::none);
  for (const DofDescriptor& d : dofs.active) {
    if (d.carrier == PatchKind::edge) {
      const Vec2 mid = d.node_position;
      const int t = d.support.tris[0];
      const auto l = barycentric(m, t, mid);
      CHECK(envelope_eval(dofs.family, d, t, l) == Approx(0.25).epsilon(1e-14));
    }
    if (d.carrier == PatchKind::element) {
      const int t = d.support.tris[0];
      const auto l = barycentric(m, t, m.centroid(t));
      CHECK(envelope_eval(dofs.family, d, t, l) == Approx(1.0 / 27.0).epsilon(1e-13));
    }
  }
}

TEST_CASE("lagrange shape functions are nodal", "[envelope]") {
  const Mesh m = generate_unit_square(2);
  for (int order : {1, 2, 3}) {
    const auto dofs = enumerate_dofs(m, lagrange_family(order), BoundaryCondition::none);
    for (const DofDescriptor& d : dofs.active) {
      for (const DofDescriptor& other : dofs.active) {
        // Evaluate d's envelope at other's node through a shared triangle.
        for (size_t i = 0; i < other.support.tris.size(); ++i) {
          const int t = other.support.tris[i];
          if (d.support.position(t) < 0 && other.index != d.index) continue;
          const auto l = barycentric(m, t, other.node_position);
          const double v = envelope_eval(dofs.family, d, t, l);
          CHECK(v == Approx(other.index == d.index ? 1.0 : 0.0).margin(1e-12));
          break;
        }
      }
    }
  }
}

TEST_CASE("envelope vanishes outside its support", "[envelope]") {
  const Mesh m = generate_unit_square(3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const EnvelopeFamily family : {hierarchical_family(), lagrange_family(2)}) {
    const auto dofs = enumerate_dofs(m, family, BoundaryCondition::none);
    for (int trial = 0; trial < 200; ++trial) {
      const Vec2 x{u(rng), u(rng)};
      std::array<double, 3> l;
      const int t = find_triangle(m, x, &l);
      REQUIRE(t >= 0);
      for (const DofDescriptor& d : dofs.active) {
        if (d.support.contains(t)) continue;
        CHECK(envelope_eval(family, d, t, l) == 0.0);
        CHECK(envelope_at(m, family, d, x) == 0.0);
      }
    }
  }
}

TEST_CASE("active dofs vanish on the Dirichlet boundary", "[envelope]") {
  for (const EnvelopeFamily family :
       {hierarchical_family(), lagrange_family(1), lagrange_family(2), lagrange_family(3)}) {
    for (const Mesh& m : {generate_unit_square(2), generate_l_shape(1)}) {
      const auto dofs = enumerate_dofs(m, family, BoundaryCondition::homogeneous);
      const auto samples = boundary_samples(m, 13);  // ~100 points per mesh
      for (const DofDescriptor& d : dofs.active)
        for (const Vec2& x : samples)
          CHECK(std::abs(envelope_at(m, family, d, x)) < 1e-13);
    }
  }
}

TEST_CASE("envelope gradients match central finite differences", "[envelope]") {
  const Mesh m = generate_unit_square(2);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const double step = 1e-6;
  for (const EnvelopeFamily family :
       {hierarchical_family(), lagrange_family(2), lagrange_family(3)}) {
    const auto dofs = enumerate_dofs(m, family, BoundaryCondition::none);
    for (int trial = 0; trial < 40; ++trial) {
      const Vec2 x{u(rng), u(rng)};
      std::array<double, 3> l;
      const int t = find_triangle(m, x, &l);
      REQUIRE(t >= 0);
      // Skip points too close to element borders for one-sided FD safety.
      if (l[0] < 0.02 || l[1] < 0.02 || l[2] < 0.02) continue;
      for (const DofDescriptor& d : dofs.active) {
        if (!d.support.contains(t)) continue;
        const Vec2 g = envelope_grad(m, family, d, t, l);
        const double fx = (envelope_eval(family, d, t, barycentric(m, t, x + Vec2{step, 0})) -
                           envelope_eval(family, d, t, barycentric(m, t, x - Vec2{step, 0}))) /
                          (2 * step);
        const double fy = (envelope_eval(family, d, t, barycentric(m, t, x + Vec2{0, step})) -
                           envelope_eval(family, d, t, barycentric(m, t, x - Vec2{0, step}))) /
                          (2 * step);
        CHECK(g.x == Approx(fx).epsilon(1e-7).margin(1e-8));
        CHECK(g.y == Approx(fy).epsilon(1e-7).margin(1e-8));
      }
    }
  }
}

TEST_CASE("bubble gradient at the reference centroid against FD", "[envelope]") {
  Mesh m = make_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}});
  const auto dofs = enumerate_dofs(m, hierarchical_family(), BoundaryCondition::none);
  const DofDescriptor* bubble = nullptr;
  for (const DofDescriptor& d : dofs.active)
    if (d.carrier == PatchKind::element) bubble = &d;
  REQUIRE(bubble);
  const Vec2 c = m.centroid(0);
  const auto l = barycentric(m, 0, c);
  const Vec2 g = envelope_grad(m, dofs.family, *bubble, 0, l);
  const double step = 1e-6;
  auto val = [&](Vec2 x) { return envelope_eval(dofs.family, *bubble, 0, barycentric(m, 0, x)); };
  CHECK(g.x == Approx((val(c + Vec2{step, 0}) - val(c - Vec2{step, 0})) / (2 * step))
                   .epsilon(1e-8)
                   .margin(1e-9));
  CHECK(g.y == Approx((val(c + Vec2{0, step}) - val(c - Vec2{0, step})) / (2 * step))
                   .epsilon(1e-8)
                   .margin(1e-9));
  // Gradient of a dof evaluated outside its support is zero.
  Mesh two = generate_unit_square(1);
  const auto dofs2 = enumerate_dofs(two, hierarchical_family(), BoundaryCondition::none);
  for (const DofDescriptor& d : dofs2.active) {
    for (int t = 0; t < two.triangle_count(); ++t) {
      if (d.support.contains(t)) continue;
      const Vec2 gz = envelope_grad(two, dofs2.family, d, t, {0.3, 0.3, 0.4});
      CHECK(gz.x == 0.0);
      CHECK(gz.y == 0.0);
    }
  }
}

TEST_CASE("partition functions sum to one", "[envelope]") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const EnvelopeFamily family :
       {hierarchical_family(), hierarchical_family(false), lagrange_family(2)}) {
    for (const Mesh& m : {generate_unit_square(2), generate_l_shape(1)}) {
      const PartitionOfUnity pou(m, family);
      for (int trial = 0; trial < 1000; ++trial) {
        const Vec2 x{u(rng) * 2.0, u(rng) * 2.0};
        std::array<double, 3> l;
        const int t = find_triangle(m, x, &l);
        if (t < 0) continue;
        double sum = 0.0;
        for (int i : pou.covering(t)) {
          const auto psi = pou.psi(i, t, l);
          REQUIRE(psi.has_value());
          sum += *psi;
          if (family.kind == FamilyKind::hierarchical) {
            CHECK(*psi >= 0.0);
            CHECK(*psi <= 1.0);
          }
        }
        CHECK(sum == Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("bubble partition value at the centroid of a lone triangle", "[envelope]") {
  Mesh m = make_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}});
  const PartitionOfUnity pou(m, hierarchical_family());
  REQUIRE(pou.size() == 7);
  const auto l = barycentric(m, 0, m.centroid(0));
  // Denominator: 3*(1/3) + 3*(1/9) + 1/27.
  const double expected = (1.0 / 27.0) / (3.0 / 3.0 + 3.0 / 9.0 + 1.0 / 27.0);
  for (int i = 0; i < pou.size(); ++i) {
    if (pou.dofs().active[i].carrier != PatchKind::element) continue;
    CHECK(pou.psi(i, 0, l).value() == Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("overlap bounds", "[envelope]") {
  Mesh lone = make_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}});
  CHECK(overlap_bound(lone, hierarchical_family()) == 7);
  CHECK(overlap_bound(lone, lagrange_family(1)) == 3);
  for (int n : {1, 2, 4}) {
    CHECK(overlap_bound(generate_unit_square(n), lagrange_family(1)) == 3);
    CHECK(overlap_bound(generate_unit_square(n), hierarchical_family()) == 7);
  }
}

TEST_CASE("overlap bound equals the brute-force cover count at quadrature points", "[envelope]") {
  const Mesh m = generate_unit_square(2);
  const auto dofs = enumerate_dofs(m, hierarchical_family(), BoundaryCondition::homogeneous);
  const TriangleRule rule = triangle_rule_36();
  // Oracle: at every quadrature point, count supports whose patch contains
  // the point's triangle; take the max.
  int brute = 0;
  for (int t = 0; t < m.triangle_count(); ++t) {
    for (size_t q = 0; q < rule.points.size(); ++q) {
      int cover = 0;
      for (const DofDescriptor& d : dofs.active)
        if (d.support.contains(t)) ++cover;
      brute = std::max(brute, cover);
    }
  }
  CHECK(overlap_bound(m, dofs.active) == brute);
}

TEST_CASE("partition-of-unity constants", "[envelope]") {
  const TriangleRule rule = triangle_rule_36();
  const PouConstants a = pou_constants(generate_unit_square(2), hierarchical_family(), rule);
  CHECK(a.overlap == 7);
  CHECK(a.c_inf <= 1.0 + 1e-13);
  CHECK(a.c_grad > 0.0);
  // Mesh-independent bounds: C_G stays within a factor 2 across refinement.
  const PouConstants b = pou_constants(generate_unit_square(4), hierarchical_family(), rule);
  CHECK(b.overlap == a.overlap);
  CHECK(b.c_grad / a.c_grad < 2.0);
  CHECK(a.c_grad / b.c_grad < 2.0);
}

TEST_CASE("lagrange envelopes reproduce polynomials through nodal coefficients", "[envelope]") {
  const Mesh m = generate_unit_square(2);
  const TriangleRule rule = triangle_rule_36();
  for (int order : {1, 2, 3}) {
    const auto dofs = enumerate_dofs(m, lagrange_family(order), BoundaryCondition::none);
    auto poly = [order](Vec2 p) {
      double v = 1.0 + 2.0 * p.x - p.y;
      if (order >= 2) v += 0.5 * p.x * p.y - p.x * p.x;
      if (order >= 3) v += 0.25 * p.x * p.x * p.y;
      return v;
    };
    for (int t = 0; t < m.triangle_count(); ++t) {
      for (const auto& l : rule.points) {
        const Vec2 x = point_from_barycentric(m, t, l);
        double interp = 0.0;
        for (const DofDescriptor& d : dofs.active)
          interp += poly(d.node_position) * envelope_eval(dofs.family, d, t, l);
        CHECK(interp == Approx(poly(x)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("hierarchical family without bubbles drops element dofs", "[envelope]") {
  const Mesh m = generate_unit_square(2);
  const auto with = enumerate_dofs(m, hierarchical_family(true), BoundaryCondition::none);
  const auto without = enumerate_dofs(m, hierarchical_family(false), BoundaryCondition::none);
  CHECK(with.active.size() == without.active.size() + m.triangle_count());
}

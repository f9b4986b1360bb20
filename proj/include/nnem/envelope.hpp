#pragma once

#include <optional>
#include <vector>

#include "nnem/mesh.hpp"
#include "nnem/quadrature.hpp"

namespace nnem {

enum class FamilyKind { hierarchical, lagrange };
enum class BoundaryCondition { homogeneous, nonhomogeneous, none };

/// Piecewise-polynomial envelope family on a mesh.
///  - hierarchical: one function per vertex (the P1 hat), per edge (the
///    quadratic edge bubble l2*l3) and optionally per element (l1*l2*l3).
///  - lagrange: the standard nodal Pk basis, k in {1,2,3}.
struct EnvelopeFamily {
  FamilyKind kind = FamilyKind::hierarchical;
  int order = 1;                        // lagrange only
  bool include_element_bubbles = true;  // hierarchical only

  void validate() const {
    if (kind == FamilyKind::lagrange && (order < 1 || order > 3))
      throw std::invalid_argument("envelope family: lagrange order must be 1, 2 or 3");
  }
};

inline EnvelopeFamily hierarchical_family(bool bubbles = true) {
  return {FamilyKind::hierarchical, 1, bubbles};
}
inline EnvelopeFamily lagrange_family(int order) {
  EnvelopeFamily f{FamilyKind::lagrange, order, false};
  f.validate();
  return f;
}

/// One degree of freedom: an envelope function, its geometric carrier and
/// support patch. `node` distinguishes multiple lagrange nodes on one carrier.
struct DofDescriptor {
  int index = -1;
  PatchKind carrier = PatchKind::vertex;
  int carrier_index = -1;
  int node = 0;
  Vec2 node_position{};
  Patch support;
  bool on_dirichlet_boundary = false;
};

/// Deterministically ordered dofs: vertices, then edges, then elements, each
/// ascending (then ascending node). `active` holds the free dofs; `boundary`
/// is populated only for the nonhomogeneous split.
struct DofEnumeration {
  EnvelopeFamily family;
  BoundaryCondition bc = BoundaryCondition::none;
  std::vector<DofDescriptor> active;
  std::vector<DofDescriptor> boundary;
};

namespace detail {

inline int lagrange_nodes_per_edge(int k) { return k - 1; }
inline int lagrange_nodes_per_element(int k) { return (k - 1) * (k - 2) / 2; }

}  // namespace detail

inline DofEnumeration enumerate_dofs(const Mesh& mesh, EnvelopeFamily family,
                                     BoundaryCondition bc) {
  family.validate();
  const Patches patches = build_patches(mesh);
  DofEnumeration out;
  out.family = family;
  out.bc = bc;

  auto place = [&](DofDescriptor&& d) {
    const bool constrained = d.on_dirichlet_boundary;
    if (bc == BoundaryCondition::homogeneous && constrained) return;
    if (bc == BoundaryCondition::nonhomogeneous && constrained) {
      d.index = static_cast<int>(out.boundary.size());
      out.boundary.push_back(std::move(d));
    } else {
      d.index = static_cast<int>(out.active.size());
      out.active.push_back(std::move(d));
    }
  };

  const int k = (family.kind == FamilyKind::lagrange) ? family.order : 0;
  const bool vertex_dofs = true;
  const bool edge_dofs = (family.kind == FamilyKind::hierarchical) ||
                         detail::lagrange_nodes_per_edge(k) > 0;
  const bool element_dofs = (family.kind == FamilyKind::hierarchical)
                                ? family.include_element_bubbles
                                : detail::lagrange_nodes_per_element(k) > 0;

  if (vertex_dofs) {
    for (int v = 0; v < mesh.vertex_count(); ++v) {
      DofDescriptor d;
      d.carrier = PatchKind::vertex;
      d.carrier_index = v;
      d.node_position = mesh.vertices[v];
      d.support = patches.vertex[v];
      d.on_dirichlet_boundary = mesh.boundary_vertex[v];
      place(std::move(d));
    }
  }
  if (edge_dofs) {
    const int per_edge = (family.kind == FamilyKind::hierarchical)
                             ? 1
                             : detail::lagrange_nodes_per_edge(k);
    for (int e = 0; e < mesh.edge_count(); ++e) {
      const Vec2 p = mesh.vertices[mesh.edges[e].v[0]];
      const Vec2 q = mesh.vertices[mesh.edges[e].v[1]];
      for (int nd = 0; nd < per_edge; ++nd) {
        DofDescriptor d;
        d.carrier = PatchKind::edge;
        d.carrier_index = e;
        d.node = nd;
        d.node_position = (family.kind == FamilyKind::hierarchical)
                              ? (p + q) / 2.0
                              : p + (q - p) * (static_cast<double>(nd + 1) / k);
        d.support = patches.edge[e];
        d.on_dirichlet_boundary = mesh.edges[e].boundary;
        place(std::move(d));
      }
    }
  }
  if (element_dofs) {
    const int per_element = (family.kind == FamilyKind::hierarchical)
                                ? 1
                                : detail::lagrange_nodes_per_element(k);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      for (int nd = 0; nd < per_element; ++nd) {
        DofDescriptor d;
        d.carrier = PatchKind::element;
        d.carrier_index = t;
        d.node = nd;
        d.node_position = mesh.centroid(t);
        d.support = patches.element[t];
        d.on_dirichlet_boundary = false;
        place(std::move(d));
      }
    }
  }
  return out;
}

// --- envelope evaluation -----------------------------------------------------

namespace detail {

// Silvester polynomial P_m(x) = prod_{r<m} (x-r)/(m-r), with P_0 = 1.
inline double silvester(int m, double x) {
  double v = 1.0;
  for (int r = 0; r < m; ++r) v *= (x - r) / (m - r);
  return v;
}

inline double silvester_deriv(int m, double x) {
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    double p = 1.0 / (m - i);
    for (int r = 0; r < m; ++r)
      if (r != i) p *= (x - r) / (m - r);
    s += p;
  }
  return s;
}

/// Barycentric exponent triple of a lagrange dof as seen from member
/// triangle position m of its support patch.
inline std::array<int, 3> lagrange_multi_index(const DofDescriptor& dof, int k, int m) {
  std::array<int, 3> a{0, 0, 0};
  switch (dof.carrier) {
    case PatchKind::vertex:
      a[dof.support.local[m][0]] = k;
      break;
    case PatchKind::edge: {
      const int along = dof.node + 1;  // steps from the lower-id endpoint
      a[dof.support.local[m][0]] = k - along;
      a[dof.support.local[m][1]] = along;
      break;
    }
    case PatchKind::element:
      a = {1, 1, 1};  // only k=3 has an interior node
      break;
  }
  return a;
}

}  // namespace detail

/// Value of envelope dof at barycentric point `l` of triangle t;
/// 0 when t is outside the dof's support.
inline double envelope_eval(const EnvelopeFamily& family, const DofDescriptor& dof, int t,
                            const std::array<double, 3>& l) {
  const int m = dof.support.position(t);
  if (m < 0) return 0.0;
  if (family.kind == FamilyKind::hierarchical) {
    switch (dof.carrier) {
      case PatchKind::vertex:
        return l[dof.support.local[m][0]];
      case PatchKind::edge:
        return l[dof.support.local[m][0]] * l[dof.support.local[m][1]];
      case PatchKind::element:
        return l[0] * l[1] * l[2];
    }
  }
  const int k = family.order;
  const auto a = detail::lagrange_multi_index(dof, k, m);
  double v = 1.0;
  for (int i = 0; i < 3; ++i) v *= detail::silvester(a[i], k * l[i]);
  return v;
}

/// Gradient of envelope dof given the triangle's constant barycentric
/// gradients; (0,0) outside the support.
inline Vec2 envelope_grad(const EnvelopeFamily& family, const DofDescriptor& dof, int t,
                          const std::array<double, 3>& l, const std::array<Vec2, 3>& gl) {
  const int m = dof.support.position(t);
  if (m < 0) return {0.0, 0.0};
  if (family.kind == FamilyKind::hierarchical) {
    switch (dof.carrier) {
      case PatchKind::vertex:
        return gl[dof.support.local[m][0]];
      case PatchKind::edge: {
        const int p = dof.support.local[m][0], q = dof.support.local[m][1];
        return gl[p] * l[q] + gl[q] * l[p];
      }
      case PatchKind::element:
        return gl[0] * (l[1] * l[2]) + gl[1] * (l[0] * l[2]) + gl[2] * (l[0] * l[1]);
    }
  }
  const int k = family.order;
  const auto a = detail::lagrange_multi_index(dof, k, m);
  const std::array<double, 3> p = {detail::silvester(a[0], k * l[0]),
                                   detail::silvester(a[1], k * l[1]),
                                   detail::silvester(a[2], k * l[2])};
  Vec2 g{0.0, 0.0};
  for (int i = 0; i < 3; ++i) {
    const double dp = k * detail::silvester_deriv(a[i], k * l[i]);
    g += gl[i] * (dp * p[(i + 1) % 3] * p[(i + 2) % 3]);
  }
  return g;
}

inline Vec2 envelope_grad(const Mesh& mesh, const EnvelopeFamily& family,
                          const DofDescriptor& dof, int t, const std::array<double, 3>& l) {
  return envelope_grad(family, dof, t, l, barycentric_gradients(mesh, t));
}

// --- partition of unity --------------------------------------------------------

/// Evaluator for the normalized partition functions psi_i = phi_i / sum_j phi_j
/// built over the full dof set (no boundary reduction), so the denominator is
/// positive on the whole domain.
class PartitionOfUnity {
 public:
  PartitionOfUnity(const Mesh& mesh, EnvelopeFamily family)
      : mesh_(&mesh),
        family_(family),
        dofs_(enumerate_dofs(mesh, family, BoundaryCondition::none)),
        tri_to_dofs_(mesh.triangle_count()) {
    for (const DofDescriptor& d : dofs_.active)
      for (int t : d.support.tris) tri_to_dofs_[t].push_back(d.index);
  }

  int size() const { return static_cast<int>(dofs_.active.size()); }
  const DofEnumeration& dofs() const { return dofs_; }
  const std::vector<int>& covering(int t) const { return tri_to_dofs_[t]; }

  double denominator(int t, const std::array<double, 3>& l) const {
    double s = 0.0;
    for (int i : tri_to_dofs_[t]) s += envelope_eval(family_, dofs_.active[i], t, l);
    return s;
  }

  /// psi_i at barycentric point l of triangle t, or nullopt at a degenerate
  /// point (denominator below 1e-12).
  std::optional<double> psi(int i, int t, const std::array<double, 3>& l) const {
    const double den = denominator(t, l);
    if (den < 1e-12) return std::nullopt;
    return envelope_eval(family_, dofs_.active[i], t, l) / den;
  }

  std::optional<Vec2> psi_grad(int i, int t, const std::array<double, 3>& l) const {
    const double den = denominator(t, l);
    if (den < 1e-12) return std::nullopt;
    const auto gl = barycentric_gradients(*mesh_, t);
    Vec2 dden{0.0, 0.0};
    for (int j : tri_to_dofs_[t]) dden += envelope_grad(family_, dofs_.active[j], t, l, gl);
    const double v = envelope_eval(family_, dofs_.active[i], t, l);
    const Vec2 dv = envelope_grad(family_, dofs_.active[i], t, l, gl);
    return (dv * den - dden * v) / (den * den);
  }

 private:
  const Mesh* mesh_;
  EnvelopeFamily family_;
  DofEnumeration dofs_;
  std::vector<std::vector<int>> tri_to_dofs_;
};

/// Max number of dof supports containing any one triangle, over the given dofs.
inline int overlap_bound(const Mesh& mesh, const std::vector<DofDescriptor>& dofs) {
  std::vector<const Patch*> supports;
  supports.reserve(dofs.size());
  for (const DofDescriptor& d : dofs) supports.push_back(&d.support);
  return overlap_bound(mesh, supports);
}

/// Overlap bound of the full (unconstrained) dof set of a family.
inline int overlap_bound(const Mesh& mesh, EnvelopeFamily family) {
  return overlap_bound(mesh, enumerate_dofs(mesh, family, BoundaryCondition::none).active);
}

/// Sampled partition-of-unity constants of Lemma-style diagnostics:
/// the overlap bound M, the max of |psi_i| over quadrature points, and the
/// max over dofs of diam(support) * max |grad psi_i|.
struct PouConstants {
  int overlap = 0;
  double c_inf = 0.0;
  double c_grad = 0.0;
};

inline PouConstants pou_constants(const Mesh& mesh, EnvelopeFamily family,
                                  const TriangleRule& rule) {
  const PartitionOfUnity pou(mesh, family);
  PouConstants out;
  out.overlap = overlap_bound(mesh, pou.dofs().active);
  std::vector<double> grad_max(pou.size(), 0.0);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    for (const auto& l : rule.points) {
      for (int i : pou.covering(t)) {
        const auto v = pou.psi(i, t, l);
        const auto g = pou.psi_grad(i, t, l);
        if (v) out.c_inf = std::max(out.c_inf, std::abs(*v));
        if (g) grad_max[i] = std::max(grad_max[i], norm(*g));
      }
    }
  }
  for (int i = 0; i < pou.size(); ++i)
    out.c_grad = std::max(out.c_grad, pou.dofs().active[i].support.diameter * grad_max[i]);
  return out;
}

}  // namespace nnem

#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <ostream>

#include "nnem/nnspace.hpp"
#include "nnem/problem.hpp"
#include "nnem/quadrature.hpp"

namespace nnem {

/// Dense Galerkin system A c = B over the active basis.
struct SymmetricSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
};

namespace detail {

/// Values and gradients of all basis functions covering one element at one
/// quadrature point, with their global basis indices.
struct BasisBatch {
  std::vector<int> index;
  std::vector<double> value;
  std::vector<Vec2> grad;

  void clear() {
    index.clear();
    value.clear();
    grad.clear();
  }
};

inline void element_basis_batch(const NNElementSpace& space, bool boundary_block, int t,
                                const std::array<double, 3>& l, Vec2 x,
                                const std::array<Vec2, 3>& gl, NetTape& tape, BasisBatch& out) {
  out.clear();
  const auto& cover = boundary_block ? space.tri_to_boundary[t] : space.tri_to_active[t];
  const auto& dofs = boundary_block ? space.dofs.boundary : space.dofs.active;
  const auto& nets = boundary_block ? space.boundary_nets : space.nets;
  for (int d : cover) {
    const DofDescriptor& dof = dofs[d];
    const double phi = envelope_eval(space.family, dof, t, l);
    const Vec2 dphi = envelope_grad(space.family, dof, t, l, gl);
    if (space.mode == SpaceMode::fem_only) {
      out.index.push_back(d);
      out.value.push_back(phi);
      out.grad.push_back(dphi);
      continue;
    }
    const EvalResult nn = nets[d].forward_with_spatial_grad(x, tape);
    if (space.mode == SpaceMode::augmented) {
      out.index.push_back(2 * d);
      out.value.push_back(phi);
      out.grad.push_back(dphi);
    }
    out.index.push_back(space.mode == SpaceMode::augmented ? 2 * d + 1 : d);
    out.value.push_back(phi * nn.value);
    out.grad.push_back(dphi * nn.value + nn.grad * phi);
  }
}

}  // namespace detail

/// Element-wise assembly of A_mn = sum_K int_K (A grad phi_n . grad phi_m
/// + b phi_n phi_m) and B_m = sum_K int_K f phi_m. Only overlapping supports
/// produce entries; the upper triangle is computed and mirrored, so the
/// result is symmetric to the last bit.
inline SymmetricSystem assemble(const NNElementSpace& space, const EllipticProblem& problem,
                                const TriangleRule& rule) {
  problem.validate();
  const int n = space.dimension();
  SymmetricSystem sys;
  sys.A = Eigen::MatrixXd::Zero(n, n);
  sys.B = Eigen::VectorXd::Zero(n);
  detail::BasisBatch batch;
  NetTape tape;
  for (int t = 0; t < space.mesh.triangle_count(); ++t) {
    const double two_area = 2.0 * space.mesh.signed_area(t);
    const auto gl = barycentric_gradients(space.mesh, t);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const auto& l = rule.points[q];
      const Vec2 x = point_from_barycentric(space.mesh, t, l);
      detail::element_basis_batch(space, false, t, l, x, gl, tape, batch);
      const double w = rule.weights[q] * two_area;
      const double f = problem.source(x);
      const double b = problem.reaction ? problem.reaction(x) : 0.0;
      const size_t nb = batch.index.size();
      for (size_t j = 0; j < nb; ++j) {
        sys.B[batch.index[j]] += w * f * batch.value[j];
        const Vec2 flux = problem.diffusion * batch.grad[j];
        for (size_t m = j; m < nb; ++m) {
          sys.A(batch.index[j], batch.index[m]) +=
              w * (dot(flux, batch.grad[m]) + b * batch.value[j] * batch.value[m]);
        }
      }
    }
  }
  for (int r = 0; r < n; ++r)
    for (int cidx = r + 1; cidx < n; ++cidx) sys.A(cidx, r) = sys.A(r, cidx);
  return sys;
}

/// Constrains the given rows/columns: unit diagonal, zeros elsewhere, zero
/// right-hand side. Symmetry is preserved.
inline void apply_homogeneous_dirichlet(SymmetricSystem& sys, const std::vector<int>& indices) {
  const int n = static_cast<int>(sys.A.rows());
  for (int i : indices) {
    if (i < 0 || i >= n)
      throw std::out_of_range("apply_homogeneous_dirichlet: index " + std::to_string(i) +
                              " out of range");
    sys.A.row(i).setZero();
    sys.A.col(i).setZero();
    sys.A(i, i) = 1.0;
    sys.B[i] = 0.0;
  }
}

/// Two-stage boundary machinery for u = g: the boundary mass matrix
/// D_ij = (psi_j^bd, psi_i^bd) over the boundary edges, the moments
/// G_i = (g, psi_i^bd), and the volume coupling block
/// coupling(j,i) = a(psi_i^in, psi_j^bd).
struct BoundarySystem {
  Eigen::MatrixXd D;
  Eigen::VectorXd G;
  Eigen::MatrixXd coupling;  // boundary_dimension x dimension
};

inline BoundarySystem assemble_boundary_system(const NNElementSpace& space,
                                               const EllipticProblem& problem,
                                               const Quad1D& edge_rule,
                                               const TriangleRule& volume_rule) {
  if (!problem.dirichlet)
    throw std::invalid_argument("assemble_boundary_system: problem has no dirichlet data");
  if (space.bc != BoundaryCondition::nonhomogeneous)
    throw std::invalid_argument(
        "assemble_boundary_system: space must be built with the nonhomogeneous split");
  const int nin = space.dimension();
  const int nbd = space.boundary_dimension();
  BoundarySystem out;
  out.D = Eigen::MatrixXd::Zero(nbd, nbd);
  out.G = Eigen::VectorXd::Zero(nbd);
  out.coupling = Eigen::MatrixXd::Zero(nbd, nin);

  detail::BasisBatch bd_batch, in_batch;
  NetTape tape;
  // Boundary mass and moments over the boundary edges.
  for (const Edge& e : space.mesh.edges) {
    if (!e.boundary) continue;
    const Vec2 p = space.mesh.vertices[e.v[0]];
    const Vec2 q = space.mesh.vertices[e.v[1]];
    const double len = distance(p, q);
    const int t = e.tri[0];
    const auto gl = barycentric_gradients(space.mesh, t);
    for (size_t k = 0; k < edge_rule.nodes.size(); ++k) {
      const Vec2 x = p + (q - p) * edge_rule.nodes[k];
      const auto l = barycentric(space.mesh, t, x);
      detail::element_basis_batch(space, true, t, l, x, gl, tape, bd_batch);
      const double w = edge_rule.weights[k] * len;
      const double g = problem.dirichlet(x);
      for (size_t j = 0; j < bd_batch.index.size(); ++j) {
        out.G[bd_batch.index[j]] += w * g * bd_batch.value[j];
        for (size_t m = j; m < bd_batch.index.size(); ++m)
          out.D(bd_batch.index[j], bd_batch.index[m]) += w * bd_batch.value[j] * bd_batch.value[m];
      }
    }
  }
  for (int r = 0; r < nbd; ++r)
    for (int c = r + 1; c < nbd; ++c) out.D(c, r) = out.D(r, c);

  // Interior-boundary coupling through the bilinear form.
  for (int t = 0; t < space.mesh.triangle_count(); ++t) {
    if (space.tri_to_boundary[t].empty()) continue;
    const double two_area = 2.0 * space.mesh.signed_area(t);
    const auto gl = barycentric_gradients(space.mesh, t);
    for (size_t q = 0; q < volume_rule.points.size(); ++q) {
      const auto& l = volume_rule.points[q];
      const Vec2 x = point_from_barycentric(space.mesh, t, l);
      detail::element_basis_batch(space, true, t, l, x, gl, tape, bd_batch);
      detail::element_basis_batch(space, false, t, l, x, gl, tape, in_batch);
      const double w = volume_rule.weights[q] * two_area;
      const double b = problem.reaction ? problem.reaction(x) : 0.0;
      for (size_t j = 0; j < bd_batch.index.size(); ++j) {
        const Vec2 flux = problem.diffusion * bd_batch.grad[j];
        for (size_t m = 0; m < in_batch.index.size(); ++m) {
          out.coupling(bd_batch.index[j], in_batch.index[m]) +=
              w * (dot(flux, in_batch.grad[m]) + b * bd_batch.value[j] * in_batch.value[m]);
        }
      }
    }
  }
  return out;
}

/// Plain-text dump of a dense symmetric system for offline inspection.
inline void write_system_dump(std::ostream& os, const SymmetricSystem& sys) {
  const int n = static_cast<int>(sys.A.rows());
  os << "%%sym-dense v1\n" << n << "\n";
  char buf[32];
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", sys.A(r, c));
      os << buf << (c + 1 == n ? "\n" : " ");
    }
  }
  for (int r = 0; r < n; ++r) {
    std::snprintf(buf, sizeof buf, "%.17g", sys.B[r]);
    os << buf << "\n";
  }
}

}  // namespace nnem

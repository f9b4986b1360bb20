#pragma once

#include <span>
#include <vector>

#include "nnem/envelope.hpp"
#include "nnem/localnet.hpp"

namespace nnem {

/// Which basis functions each dof contributes.
///  - augmented:    the envelope times 1 and the envelope times its network
///                  (constant partner listed immediately before the network one)
///  - network_only: the envelope times its network
///  - fem_only:     the bare envelope (classical FEM in this family)
enum class SpaceMode { augmented, network_only, fem_only };

struct BasisRef {
  int dof = -1;
  bool network = false;
};

struct BasisEval {
  double value = 0.0;
  Vec2 grad{0.0, 0.0};
};

/// The NN element trial space over a mesh: envelope functions attached to one
/// independent local network per dof. Immutable during evaluation; training
/// swaps parameters wholesale through set_all_theta.
struct NNElementSpace {
  Mesh mesh;
  EnvelopeFamily family;
  BoundaryCondition bc = BoundaryCondition::homogeneous;
  SpaceMode mode = SpaceMode::augmented;
  NetConfig net_config;
  std::uint64_t seed = 0;
  DofEnumeration dofs;
  std::vector<LocalNet> nets;           // per active dof; empty in fem_only mode
  std::vector<LocalNet> boundary_nets;  // per boundary dof (nonhomogeneous split)
  std::vector<std::vector<int>> tri_to_active;
  std::vector<std::vector<int>> tri_to_boundary;

  int basis_per_dof() const { return mode == SpaceMode::augmented ? 2 : 1; }
  int active_dof_count() const { return static_cast<int>(dofs.active.size()); }
  int boundary_dof_count() const { return static_cast<int>(dofs.boundary.size()); }
  int dimension() const { return basis_per_dof() * active_dof_count(); }
  int boundary_dimension() const { return basis_per_dof() * boundary_dof_count(); }

  BasisRef basis_ref(int i) const {
    if (mode == SpaceMode::augmented) return {i / 2, i % 2 == 1};
    return {i, mode == SpaceMode::network_only};
  }
  int basis_index(int dof, bool network) const {
    if (mode == SpaceMode::augmented) return 2 * dof + (network ? 1 : 0);
    return dof;
  }

  int trainable_param_count() const {
    int n = 0;
    for (const LocalNet& net : nets) n += net.param_count();
    return n;
  }

  /// Concatenated parameters of the active-dof networks.
  std::vector<double> get_all_theta() const {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(trainable_param_count()));
    for (const LocalNet& net : nets)
      out.insert(out.end(), net.theta().begin(), net.theta().end());
    return out;
  }

  void set_all_theta(std::span<const double> theta) {
    size_t off = 0;
    for (LocalNet& net : nets) {
      const size_t n = net.theta().size();
      if (off + n > theta.size())
        throw std::invalid_argument("set_all_theta: parameter vector too short");
      net.set_theta(theta.subspan(off, n));
      off += n;
    }
    if (off != theta.size())
      throw std::invalid_argument("set_all_theta: parameter vector too long");
  }
};

/// Builds the space deterministically from the seed: per-net seeds are drawn
/// from one master stream in dof order (active dofs first, then boundary).
inline NNElementSpace build_space(const Mesh& mesh, EnvelopeFamily family,
                                  const NetConfig& net_config, BoundaryCondition bc,
                                  std::uint64_t seed, bool augment_constant = true) {
  net_config.validate();
  NNElementSpace space;
  space.mesh = mesh;
  space.family = family;
  space.bc = bc;
  space.mode = augment_constant ? SpaceMode::augmented : SpaceMode::network_only;
  space.net_config = net_config;
  space.seed = seed;
  space.dofs = enumerate_dofs(space.mesh, family, bc);
  std::mt19937_64 master(seed);
  for (size_t i = 0; i < space.dofs.active.size(); ++i)
    space.nets.push_back(LocalNet::initialized(net_config, master()));
  for (size_t i = 0; i < space.dofs.boundary.size(); ++i)
    space.boundary_nets.push_back(LocalNet::initialized(net_config, master()));
  space.tri_to_active.resize(space.mesh.triangle_count());
  for (const DofDescriptor& d : space.dofs.active)
    for (int t : d.support.tris) space.tri_to_active[t].push_back(d.index);
  space.tri_to_boundary.resize(space.mesh.triangle_count());
  for (const DofDescriptor& d : space.dofs.boundary)
    for (int t : d.support.tris) space.tri_to_boundary[t].push_back(d.index);
  return space;
}

/// Classical FEM space in the same envelope family: bare envelopes, no nets.
inline NNElementSpace fem_space(const Mesh& mesh, EnvelopeFamily family, BoundaryCondition bc) {
  NNElementSpace space;
  space.mesh = mesh;
  space.family = family;
  space.bc = bc;
  space.mode = SpaceMode::fem_only;
  space.dofs = enumerate_dofs(space.mesh, family, bc);
  space.tri_to_active.resize(space.mesh.triangle_count());
  for (const DofDescriptor& d : space.dofs.active)
    for (int t : d.support.tris) space.tri_to_active[t].push_back(d.index);
  space.tri_to_boundary.resize(space.mesh.triangle_count());
  for (const DofDescriptor& d : space.dofs.boundary)
    for (int t : d.support.tris) space.tri_to_boundary[t].push_back(d.index);
  return space;
}

namespace detail {

inline BasisEval basis_eval_impl(const NNElementSpace& space, const DofDescriptor& dof,
                                 const LocalNet* net, bool network, int t,
                                 const std::array<double, 3>& l, const std::array<Vec2, 3>& gl) {
  const double phi = envelope_eval(space.family, dof, t, l);
  if (dof.support.position(t) < 0) return {};
  const Vec2 dphi = envelope_grad(space.family, dof, t, l, gl);
  if (!network) return {phi, dphi};
  const Vec2 x = point_from_barycentric(space.mesh, t, l);
  const EvalResult nn = net->forward_with_spatial_grad(x);
  return {phi * nn.value, dphi * nn.value + nn.grad * phi};
}

}  // namespace detail

/// Value and gradient of active basis function i at barycentric point l of
/// triangle t. Zero outside the support; the network factor obeys the product
/// rule grad(phi*nn) = nn*grad(phi) + phi*grad(nn).
inline BasisEval basis_eval_grad(const NNElementSpace& space, int i, int t,
                                 const std::array<double, 3>& l) {
  if (i < 0 || i >= space.dimension())
    throw std::out_of_range("basis_eval_grad: basis index out of range");
  const BasisRef ref = space.basis_ref(i);
  const DofDescriptor& dof = space.dofs.active[ref.dof];
  if (dof.support.position(t) < 0) return {};
  const auto gl = barycentric_gradients(space.mesh, t);
  const LocalNet* net = ref.network ? &space.nets[ref.dof] : nullptr;
  return detail::basis_eval_impl(space, dof, net, ref.network, t, l, gl);
}

inline BasisEval boundary_basis_eval_grad(const NNElementSpace& space, int i, int t,
                                          const std::array<double, 3>& l) {
  if (i < 0 || i >= space.boundary_dimension())
    throw std::out_of_range("boundary_basis_eval_grad: basis index out of range");
  const BasisRef ref = space.basis_ref(i);
  const DofDescriptor& dof = space.dofs.boundary[ref.dof];
  if (dof.support.position(t) < 0) return {};
  const auto gl = barycentric_gradients(space.mesh, t);
  const LocalNet* net = ref.network ? &space.boundary_nets[ref.dof] : nullptr;
  return detail::basis_eval_impl(space, dof, net, ref.network, t, l, gl);
}

/// Linear combination sum_i c_i basis_i (plus the boundary block when given)
/// evaluated on one element. Only covering dofs contribute.
inline BasisEval combine_on_element(const NNElementSpace& space, std::span<const double> c,
                                    std::span<const double> c_bd, int t,
                                    const std::array<double, 3>& l) {
  if (c.size() != static_cast<size_t>(space.dimension()))
    throw std::invalid_argument("combine: coefficient vector has wrong length");
  if (!c_bd.empty() && c_bd.size() != static_cast<size_t>(space.boundary_dimension()))
    throw std::invalid_argument("combine: boundary coefficient vector has wrong length");
  const auto gl = barycentric_gradients(space.mesh, t);
  const Vec2 x = point_from_barycentric(space.mesh, t, l);
  BasisEval acc;
  auto add = [&](const DofDescriptor& dof, const LocalNet* net, std::span<const double> coeff) {
    const double phi = envelope_eval(space.family, dof, t, l);
    const Vec2 dphi = envelope_grad(space.family, dof, t, l, gl);
    if (space.mode == SpaceMode::fem_only) {
      const double ci = coeff[dof.index];
      acc.value += ci * phi;
      acc.grad += dphi * ci;
      return;
    }
    const EvalResult nn = net->forward_with_spatial_grad(x);
    if (space.mode == SpaceMode::augmented) {
      const double c0 = coeff[2 * dof.index];
      const double c1 = coeff[2 * dof.index + 1];
      acc.value += c0 * phi + c1 * phi * nn.value;
      acc.grad += dphi * c0 + (dphi * nn.value + nn.grad * phi) * c1;
    } else {
      const double c1 = coeff[dof.index];
      acc.value += c1 * phi * nn.value;
      acc.grad += (dphi * nn.value + nn.grad * phi) * c1;
    }
  };
  for (int d : space.tri_to_active[t])
    add(space.dofs.active[d], space.nets.empty() ? nullptr : &space.nets[d], c);
  if (!c_bd.empty())
    for (int d : space.tri_to_boundary[t])
      add(space.dofs.boundary[d], space.boundary_nets.empty() ? nullptr : &space.boundary_nets[d],
          c_bd);
  return acc;
}

inline BasisEval combine_on_element(const NNElementSpace& space, std::span<const double> c, int t,
                                    const std::array<double, 3>& l) {
  return combine_on_element(space, c, {}, t, l);
}

/// Point evaluation: locates the containing triangle first.
inline BasisEval combine(const NNElementSpace& space, std::span<const double> c,
                         std::span<const double> c_bd, Vec2 x) {
  std::array<double, 3> l;
  const int t = find_triangle(space.mesh, x, &l);
  if (t < 0) return {};
  return combine_on_element(space, c, c_bd, t, l);
}

inline BasisEval combine(const NNElementSpace& space, std::span<const double> c, Vec2 x) {
  return combine(space, c, {}, x);
}

/// A solved field: a space plus its coefficient vector(s). Non-owning view;
/// the space must outlive it.
struct Solution {
  const NNElementSpace* space = nullptr;
  std::vector<double> c;
  std::vector<double> c_bd;

  BasisEval eval_on_element(int t, const std::array<double, 3>& l) const {
    return combine_on_element(*space, c, c_bd, t, l);
  }
  BasisEval eval(Vec2 x) const { return combine(*space, c, c_bd, x); }
};

}  // namespace nnem

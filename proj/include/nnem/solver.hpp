#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <bit>
#include <istream>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "nnem/assembly.hpp"

namespace nnem {

struct TrainingDivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int max_steps = 0;           // 0 = pure Galerkin solve
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double solve_regularization = 1e-12;  // relative eigenvalue cutoff
  int log_every = 100;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (max_steps < 0) throw std::invalid_argument("train config: max_steps must be >= 0");
    if (log_every < 1) throw std::invalid_argument("train config: log_every must be >= 1");
  }
};

struct LossRecord {
  long step = 0;
  double loss = 0.0;
  double e_l2 = -1.0;  // negative when no exact solution was available
  double e_h1 = -1.0;
};

struct TrainState {
  Eigen::VectorXd c;
  std::vector<double> theta_all;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  long step = 0;
  std::uint64_t seed = 0;
  std::vector<LossRecord> history;
};

// --- linear solve -------------------------------------------------------------

struct SolveInfo {
  bool spd_path = false;
  int rank = 0;
};

/// Solves the symmetric system. Tries a Cholesky factorization first and
/// accepts it only if the residual is at most 1e-8*||B||; otherwise falls
/// back to a symmetric eigendecomposition with relative cutoff tau
/// (pseudo-inverse of the numerically nonsingular part).
inline Eigen::VectorXd solve_linear(const SymmetricSystem& sys, double tau = 1e-12,
                                    SolveInfo* info = nullptr) {
  const int n = static_cast<int>(sys.A.rows());
  if (sys.B.size() != n) throw std::invalid_argument("solve_linear: dimension mismatch");
  if (n == 0) return Eigen::VectorXd();
  const double anorm = sys.A.cwiseAbs().maxCoeff();
  if (anorm == 0.0) {
    if (sys.B.cwiseAbs().maxCoeff() > 0.0)
      throw std::runtime_error("solve_linear: zero matrix with nonzero right-hand side");
    if (info) *info = {false, 0};
    return Eigen::VectorXd::Zero(n);
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(sys.A);
  if (llt.info() == Eigen::Success) {
    Eigen::VectorXd c = llt.solve(sys.B);
    if ((sys.A * c - sys.B).norm() <= 1e-8 * sys.B.norm()) {
      if (info) *info = {true, n};
      return c;
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sys.A);
  const double cutoff = tau * es.eigenvalues().cwiseAbs().maxCoeff();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  int rank = 0;
  for (int i = 0; i < n; ++i) {
    const double lam = es.eigenvalues()[i];
    if (std::abs(lam) <= cutoff) continue;
    ++rank;
    c += es.eigenvectors().col(i) * (es.eigenvectors().col(i).dot(sys.B) / lam);
  }
  if (info) *info = {false, rank};
  return c;
}

/// Discrete Ritz energy 1/2 c'Ac - B'c; its minimizer over c is the Galerkin
/// solution of the assembled system.
inline double ritz_loss(const SymmetricSystem& sys, const Eigen::VectorXd& c) {
  if (c.size() != sys.A.rows()) throw std::invalid_argument("ritz_loss: dimension mismatch");
  return 0.5 * c.dot(sys.A * c) - sys.B.dot(c);
}

// --- parameter gradient --------------------------------------------------------

/// Exact gradient of the Ritz loss with respect to every network parameter,
/// taken at frozen coefficients c (and frozen boundary lift c_bd when given).
/// Accumulated per quadrature point through reverse mode over the spatial
/// forward pass; deterministic summation order.
inline std::vector<double> loss_parameter_gradient(const NNElementSpace& space,
                                                   const EllipticProblem& problem,
                                                   const TriangleRule& rule,
                                                   const Eigen::VectorXd& c,
                                                   const Eigen::VectorXd& c_bd =
                                                       Eigen::VectorXd()) {
  if (c.size() != space.dimension())
    throw std::invalid_argument("loss_parameter_gradient: coefficient vector has wrong length");
  std::vector<double> grad(static_cast<size_t>(space.trainable_param_count()), 0.0);
  if (space.mode == SpaceMode::fem_only || space.nets.empty()) return grad;

  std::vector<size_t> offset(space.nets.size() + 1, 0);
  for (size_t d = 0; d < space.nets.size(); ++d)
    offset[d + 1] = offset[d] + space.nets[d].theta().size();

  struct DofEval {
    int dof;
    double phi;
    Vec2 dphi;
    EvalResult nn;
  };
  std::vector<DofEval> evals;
  std::vector<NetTape> tapes;
  NetTape bd_tape;

  for (int t = 0; t < space.mesh.triangle_count(); ++t) {
    const auto& cover = space.tri_to_active[t];
    if (cover.empty()) continue;
    const double two_area = 2.0 * space.mesh.signed_area(t);
    const auto gl = barycentric_gradients(space.mesh, t);
    if (tapes.size() < cover.size()) tapes.resize(cover.size());
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const auto& l = rule.points[q];
      const Vec2 x = point_from_barycentric(space.mesh, t, l);
      const double w = rule.weights[q] * two_area;
      const double f = problem.source(x);
      const double b = problem.reaction ? problem.reaction(x) : 0.0;

      evals.clear();
      double psi = 0.0;
      Vec2 dpsi{0.0, 0.0};
      for (size_t k = 0; k < cover.size(); ++k) {
        const int d = cover[k];
        const DofDescriptor& dof = space.dofs.active[d];
        DofEval e;
        e.dof = d;
        e.phi = envelope_eval(space.family, dof, t, l);
        e.dphi = envelope_grad(space.family, dof, t, l, gl);
        e.nn = space.nets[d].forward_with_spatial_grad(x, tapes[k]);
        if (space.mode == SpaceMode::augmented) {
          const double c0 = c[2 * d];
          psi += c0 * e.phi;
          dpsi += e.dphi * c0;
        }
        const double cn = c[space.basis_index(d, true)];
        psi += cn * e.phi * e.nn.value;
        dpsi += (e.dphi * e.nn.value + e.nn.grad * e.phi) * cn;
        evals.push_back(e);
      }
      if (c_bd.size() > 0) {
        for (int d : space.tri_to_boundary[t]) {
          const DofDescriptor& dof = space.dofs.boundary[d];
          const double phi = envelope_eval(space.family, dof, t, l);
          const Vec2 dphi = envelope_grad(space.family, dof, t, l, gl);
          const EvalResult nn = space.boundary_nets[d].forward_with_spatial_grad(x, bd_tape);
          if (space.mode == SpaceMode::augmented) {
            const double c0 = c_bd[2 * d];
            psi += c0 * phi;
            dpsi += dphi * c0;
          }
          const double cn = c_bd[space.basis_index(d, true)];
          psi += cn * phi * nn.value;
          dpsi += (dphi * nn.value + nn.grad * phi) * cn;
        }
      }

      const Vec2 flux = problem.diffusion * dpsi;
      const double bulk = b * psi - f;
      for (size_t k = 0; k < evals.size(); ++k) {
        const DofEval& e = evals[k];
        const double cn = c[space.basis_index(e.dof, true)];
        if (cn == 0.0 && space.mode == SpaceMode::augmented) continue;
        const double seed_value = w * cn * (bulk * e.phi + dot(flux, e.dphi));
        const Vec2 seed_grad = flux * (w * cn * e.phi);
        space.nets[e.dof].backprop_theta(tapes[k], seed_value, seed_grad,
                                         std::span<double>(grad).subspan(
                                             offset[e.dof], space.nets[e.dof].theta().size()));
      }
    }
  }
  return grad;
}

// --- Adam ---------------------------------------------------------------------

/// One Adam update of state.theta_all from the given gradient. The whole
/// gradient is validated before any parameter moves.
inline void adam_step(TrainState& state, const std::vector<double>& grad,
                      const TrainConfig& cfg) {
  if (grad.size() != state.theta_all.size() || grad.size() != state.adam_m.size() ||
      grad.size() != state.adam_v.size())
    throw std::invalid_argument("adam_step: dimension mismatch");
  for (size_t p = 0; p < grad.size(); ++p)
    if (!std::isfinite(grad[p]))
      throw TrainingDivergedError("training diverged: non-finite gradient at parameter index " +
                                  std::to_string(p));
  const long t = state.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t p = 0; p < grad.size(); ++p) {
    const double g = grad[p];
    state.adam_m[p] = cfg.beta1 * state.adam_m[p] + (1.0 - cfg.beta1) * g;
    state.adam_v[p] = cfg.beta2 * state.adam_v[p] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.adam_m[p] / bc1;
    const double vhat = state.adam_v[p] / bc2;
    state.theta_all[p] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
  state.step = t;
}

// --- error norms (quadrature against the exact solution) -----------------------

struct Norms {
  double l2 = 0.0;
  double h1 = 0.0;
};

inline Norms error_norms(const NNElementSpace& space, std::span<const double> c,
                         std::span<const double> c_bd, const EllipticProblem& problem,
                         const TriangleRule& rule) {
  if (!problem.has_exact())
    throw std::invalid_argument("error_norms: problem has no exact solution");
  double l2 = 0.0, h1 = 0.0;
  for (int t = 0; t < space.mesh.triangle_count(); ++t) {
    const double two_area = 2.0 * space.mesh.signed_area(t);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const auto& l = rule.points[q];
      const Vec2 x = point_from_barycentric(space.mesh, t, l);
      const BasisEval v = combine_on_element(space, c, c_bd, t, l);
      const double dv = v.value - problem.exact(x);
      const Vec2 dg = v.grad - problem.exact_grad(x);
      l2 += rule.weights[q] * two_area * dv * dv;
      h1 += rule.weights[q] * two_area * dot(dg, dg);
    }
  }
  return {std::sqrt(l2), std::sqrt(h1)};
}

/// Galerkin residual re-evaluated by quadrature (independently of the
/// assembled matrix): r_i = a(Psi, phi_i) - (f, phi_i) over the active basis.
inline Eigen::VectorXd galerkin_residual(const NNElementSpace& space,
                                         const EllipticProblem& problem,
                                         const TriangleRule& rule, const Eigen::VectorXd& c,
                                         const Eigen::VectorXd& c_bd = Eigen::VectorXd()) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(space.dimension());
  detail::BasisBatch batch;
  NetTape tape;
  const std::span<const double> cs(c.data(), static_cast<size_t>(c.size()));
  const std::span<const double> cbs(c_bd.data(), static_cast<size_t>(c_bd.size()));
  for (int t = 0; t < space.mesh.triangle_count(); ++t) {
    const double two_area = 2.0 * space.mesh.signed_area(t);
    const auto gl = barycentric_gradients(space.mesh, t);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const auto& l = rule.points[q];
      const Vec2 x = point_from_barycentric(space.mesh, t, l);
      const BasisEval u = combine_on_element(space, cs, cbs, t, l);
      detail::element_basis_batch(space, false, t, l, x, gl, tape, batch);
      const double w = rule.weights[q] * two_area;
      const double f = problem.source(x);
      const double b = problem.reaction ? problem.reaction(x) : 0.0;
      const Vec2 flux = problem.diffusion * u.grad;
      for (size_t j = 0; j < batch.index.size(); ++j)
        r[batch.index[j]] +=
            w * (dot(flux, batch.grad[j]) + b * u.value * batch.value[j] - f * batch.value[j]);
    }
  }
  return r;
}

// --- training loop ---------------------------------------------------------------

struct TrainResult {
  Eigen::VectorXd c;
  double final_loss = 0.0;
};

namespace detail {

inline void record_loss(TrainState& state, const NNElementSpace& space,
                        const EllipticProblem& problem, const TriangleRule& rule, long step,
                        double loss, const Eigen::VectorXd& c, const Eigen::VectorXd& c_bd) {
  LossRecord rec;
  rec.step = step;
  rec.loss = loss;
  if (problem.has_exact()) {
    const Norms norms =
        error_norms(space, {c.data(), static_cast<size_t>(c.size())},
                    {c_bd.data(), static_cast<size_t>(c_bd.size())}, problem, rule);
    rec.e_l2 = norms.l2;
    rec.e_h1 = norms.h1;
  }
  state.history.push_back(rec);
}

/// Core of the training iteration: assemble, solve, log, update. The optional
/// boundary system (lift) is re-coupled against the evolving interior basis
/// every step; the boundary networks themselves stay frozen.
inline TrainResult train_loop(NNElementSpace& space, const EllipticProblem& problem,
                              const TriangleRule& rule, const TrainConfig& cfg,
                              TrainState& state, const Eigen::VectorXd& c_bd,
                              const Quad1D* edge_rule) {
  cfg.validate();
  if (state.theta_all.empty()) {
    state.theta_all = space.get_all_theta();
    state.adam_m.assign(state.theta_all.size(), 0.0);
    state.adam_v.assign(state.theta_all.size(), 0.0);
    state.step = 0;
    state.seed = cfg.seed;
  } else {
    if (state.theta_all.size() != static_cast<size_t>(space.trainable_param_count()))
      throw std::invalid_argument("train: state does not match the space parameter layout");
    space.set_all_theta(state.theta_all);
  }

  auto assemble_current = [&]() {
    SymmetricSystem sys = assemble(space, problem, rule);
    if (c_bd.size() > 0) {
      const BoundarySystem bsys = assemble_boundary_system(space, problem, *edge_rule, rule);
      sys.B -= bsys.coupling.transpose() * c_bd;
    }
    return sys;
  };

  TrainResult result;
  for (long step = state.step; step < cfg.max_steps; ++step) {
    const SymmetricSystem sys = assemble_current();
    const Eigen::VectorXd c = solve_linear(sys, cfg.solve_regularization);
    const double loss = ritz_loss(sys, c);
    if (!std::isfinite(loss))
      throw TrainingDivergedError("training diverged: non-finite loss at step " +
                                  std::to_string(step));
    state.c = c;
    if (step % cfg.log_every == 0)
      record_loss(state, space, problem, rule, step, loss, c, c_bd);
    const std::vector<double> grad = loss_parameter_gradient(space, problem, rule, c, c_bd);
    adam_step(state, grad, cfg);  // validates the gradient before moving
    space.set_all_theta(state.theta_all);
  }
  const SymmetricSystem sys = assemble_current();
  result.c = solve_linear(sys, cfg.solve_regularization);
  result.final_loss = ritz_loss(sys, result.c);
  if (!std::isfinite(result.final_loss))
    throw TrainingDivergedError("training diverged: non-finite final loss");
  state.c = result.c;
  record_loss(state, space, problem, rule, cfg.max_steps, result.final_loss, result.c, c_bd);
  return result;
}

}  // namespace detail

/// Homogeneous Dirichlet problem: alternates Galerkin solves for c with Adam
/// steps on the Ritz loss gradient in theta, then returns the Galerkin
/// solution in the final space.
inline TrainResult train(NNElementSpace& space, const EllipticProblem& problem,
                         const TriangleRule& rule, const TrainConfig& cfg, TrainState& state) {
  return detail::train_loop(space, problem, rule, cfg, state, Eigen::VectorXd(), nullptr);
}

inline TrainResult train(NNElementSpace& space, const EllipticProblem& problem,
                         const TriangleRule& rule, const TrainConfig& cfg) {
  TrainState state;
  return train(space, problem, rule, cfg, state);
}

struct NonhomogeneousResult {
  Eigen::VectorXd c;     // interior coefficients
  Eigen::VectorXd c_bd;  // boundary lift coefficients
  double final_loss = 0.0;
  bool boundary_rank_deficient = false;
  std::string boundary_note;
};

/// Two-stage solve for u = g on the boundary: first the boundary-mass
/// projection D c_bd = G on the trace space, then the interior problem with
/// right-hand side f - coupling' c_bd. Training, when requested, adapts only
/// the interior networks around the fixed lift.
inline NonhomogeneousResult solve_nonhomogeneous(NNElementSpace& space,
                                                 const EllipticProblem& problem,
                                                 const TriangleRule& rule,
                                                 const Quad1D& edge_rule, const TrainConfig& cfg,
                                                 TrainState& state) {
  if (!problem.dirichlet)
    throw std::invalid_argument("solve_nonhomogeneous: problem has no dirichlet data");
  const BoundarySystem bsys = assemble_boundary_system(space, problem, edge_rule, rule);
  SolveInfo bd_info;
  NonhomogeneousResult out;
  out.c_bd = solve_linear({bsys.D, bsys.G}, cfg.solve_regularization, &bd_info);
  if (bd_info.rank < space.boundary_dimension()) {
    out.boundary_rank_deficient = true;
    out.boundary_note = "boundary basis rank deficiency: rank " + std::to_string(bd_info.rank) +
                        " of " + std::to_string(space.boundary_dimension());
  }
  const TrainResult tr = detail::train_loop(space, problem, rule, cfg, state, out.c_bd, &edge_rule);
  out.c = tr.c;
  out.final_loss = tr.final_loss;
  return out;
}

inline NonhomogeneousResult solve_nonhomogeneous(NNElementSpace& space,
                                                 const EllipticProblem& problem,
                                                 const TriangleRule& rule,
                                                 const Quad1D& edge_rule,
                                                 const TrainConfig& cfg) {
  TrainState state;
  return solve_nonhomogeneous(space, problem, rule, edge_rule, cfg, state);
}

// --- checkpoints -----------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f64_vec(std::string& out, const double* v, size_t n) {
  put_u64(out, n);
  for (size_t i = 0; i < n; ++i) put_f64(out, v[i]);
}

inline std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> f64_vec() {
    const std::uint64_t n = u64();
    need(n * 8);
    std::vector<double> v(n);
    for (std::uint64_t i = 0; i < n; ++i) v[i] = f64();
    return v;
  }
  size_t pos() const { return pos_; }
  const std::string& data() const { return data_; }

 private:
  void need(size_t n) {
    if (pos_ + n > data_.size())
      throw std::runtime_error("checkpoint integrity error: truncated file");
  }
  std::uint64_t bytes(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += n;
    return v;
  }
  std::string data_;
  size_t pos_ = 0;
};

inline std::string diff_signature_keys(const std::string& stored, const std::string& current) {
  auto parse = [](const std::string& s) {
    std::map<std::string, std::string> kv;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
  };
  const auto a = parse(stored), b = parse(current);
  std::string keys;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || it->second != v) keys += (keys.empty() ? "" : ", ") + k;
  }
  for (const auto& [k, v] : b)
    if (!a.count(k)) keys += (keys.empty() ? "" : ", ") + k;
  return keys.empty() ? "(raw signature differs)" : keys;
}

}  // namespace detail

/// Little-endian binary checkpoint: magic, version, step, seed, the config
/// signature (key=value lines) and hash, then c, theta, Adam moments, ending
/// with an FNV-1a integrity hash of everything before it.
inline void checkpoint_save(std::ostream& os, const TrainState& state,
                            const std::string& config_signature) {
  std::string out = "NNEMCKP1";
  detail::put_u32(out, 1);
  detail::put_u64(out, static_cast<std::uint64_t>(state.step));
  detail::put_u64(out, state.seed);
  detail::put_u64(out, detail::fnv1a(config_signature));
  detail::put_u64(out, config_signature.size());
  out += config_signature;
  detail::put_f64_vec(out, state.c.data(), static_cast<size_t>(state.c.size()));
  detail::put_f64_vec(out, state.theta_all.data(), state.theta_all.size());
  detail::put_f64_vec(out, state.adam_m.data(), state.adam_m.size());
  detail::put_f64_vec(out, state.adam_v.data(), state.adam_v.size());
  detail::put_u64(out, detail::fnv1a(out));
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
}

inline TrainState checkpoint_load(std::istream& is, const std::string& expected_signature) {
  std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (data.size() < 8 + 4 + 8)
    throw std::runtime_error("checkpoint integrity error: truncated file");
  const std::string payload = data.substr(0, data.size() - 8);
  detail::ByteReader tail(data.substr(data.size() - 8));
  if (tail.u64() != detail::fnv1a(payload))
    throw std::runtime_error("checkpoint integrity error: hash mismatch");
  detail::ByteReader r(payload);
  if (r.str(8) != "NNEMCKP1")
    throw std::runtime_error("checkpoint error: bad magic");
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw std::runtime_error("checkpoint error: unsupported version " + std::to_string(version));
  TrainState state;
  state.step = static_cast<long>(r.u64());
  state.seed = r.u64();
  const std::uint64_t sig_hash = r.u64();
  const std::string signature = r.str(r.u64());
  if (detail::fnv1a(signature) != sig_hash)
    throw std::runtime_error("checkpoint integrity error: signature hash mismatch");
  if (signature != expected_signature)
    throw std::runtime_error("checkpoint refused: configuration differs in keys: " +
                             detail::diff_signature_keys(signature, expected_signature));
  const std::vector<double> c = r.f64_vec();
  state.c = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  state.theta_all = r.f64_vec();
  state.adam_m = r.f64_vec();
  state.adam_v = r.f64_vec();
  if (state.adam_m.size() != state.theta_all.size() ||
      state.adam_v.size() != state.theta_all.size())
    throw std::runtime_error("checkpoint integrity error: moment lengths disagree");
  return state;
}

}  // namespace nnem

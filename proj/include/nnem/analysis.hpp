#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "nnem/solver.hpp"

namespace nnem {

/// e_L2 = ||u - Psi||_L2 and e_H1 = |u - Psi|_H1 (gradient seminorm), both by
/// mesh quadrature against the problem's exact solution.
struct ErrorReport {
  double e_l2 = -1.0;
  double e_h1 = -1.0;
  double h = 0.0;
  int dimension = 0;
  long steps = 0;
  double seconds = 0.0;
};

inline ErrorReport compute_errors(const Solution& solution, const EllipticProblem& problem,
                                  const TriangleRule& rule) {
  const Norms norms = error_norms(*solution.space, solution.c, solution.c_bd, problem, rule);
  ErrorReport report;
  report.e_l2 = norms.l2;
  report.e_h1 = norms.h1;
  report.h = solution.space->mesh.h;
  report.dimension = solution.space->dimension() + solution.space->boundary_dimension();
  return report;
}

/// Classical FEM baseline: the bare-envelope space of the family, assembled
/// and solved through the same pipeline (no network machinery). Handles both
/// homogeneous and nonhomogeneous problems.
struct FemResult {
  NNElementSpace space;
  Eigen::VectorXd c;
  Eigen::VectorXd c_bd;
  double loss = 0.0;
  ErrorReport report;

  Solution solution() const {
    return {&space,
            {c.data(), c.data() + c.size()},
            {c_bd.data(), c_bd.data() + c_bd.size()}};
  }
};

inline FemResult fem_solve(const Mesh& mesh, EnvelopeFamily family,
                           const EllipticProblem& problem, const TriangleRule& rule,
                           const Quad1D& edge_rule = gauss_legendre_1d(6)) {
  const auto start = std::chrono::steady_clock::now();
  FemResult out;
  TrainConfig cfg;  // max_steps = 0: nothing to train in a net-free space
  if (problem.homogeneous()) {
    out.space = fem_space(mesh, family, BoundaryCondition::homogeneous);
    const SymmetricSystem sys = assemble(out.space, problem, rule);
    out.c = solve_linear(sys, cfg.solve_regularization);
    out.loss = ritz_loss(sys, out.c);
  } else {
    out.space = fem_space(mesh, family, BoundaryCondition::nonhomogeneous);
    TrainState state;
    const NonhomogeneousResult r =
        solve_nonhomogeneous(out.space, problem, rule, edge_rule, cfg, state);
    out.c = r.c;
    out.c_bd = r.c_bd;
    out.loss = r.final_loss;
  }
  if (problem.has_exact()) {
    const Solution sol = out.solution();
    out.report = compute_errors(sol, problem, rule);
  }
  out.report.h = mesh.h;
  out.report.dimension = out.space.dimension() + out.space.boundary_dimension();
  out.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// --- convergence studies ----------------------------------------------------------

struct ConvergenceRow {
  double h = 0.0;
  int dimension = 0;
  double e_h1 = -1.0;
  double e_l2 = -1.0;
  double order_h1 = std::numeric_limits<double>::quiet_NaN();
  double order_l2 = std::numeric_limits<double>::quiet_NaN();
  long steps = 0;
  double seconds = 0.0;
};

struct ConvergenceTable {
  std::string method;
  std::vector<ConvergenceRow> rows;  // sorted by decreasing h
};

inline std::string family_label(const EnvelopeFamily& family) {
  if (family.kind == FamilyKind::lagrange) return "P" + std::to_string(family.order);
  return family.include_element_bubbles ? "H" : "Hnb";
}

namespace detail {
inline void append_orders(ConvergenceTable& table) {
  for (size_t i = 1; i < table.rows.size(); ++i) {
    const ConvergenceRow& prev = table.rows[i - 1];
    ConvergenceRow& row = table.rows[i];
    const double ratio = std::log(prev.h / row.h);
    if (prev.e_h1 > 0.0 && row.e_h1 > 0.0) row.order_h1 = std::log(prev.e_h1 / row.e_h1) / ratio;
    if (prev.e_l2 > 0.0 && row.e_l2 > 0.0) row.order_l2 = std::log(prev.e_l2 / row.e_l2) / ratio;
  }
}
}  // namespace detail

/// Runs one method over a decreasing sequence of mesh sizes and tabulates
/// errors with observed orders from consecutive pairs.
inline ConvergenceTable convergence_study(
    bool use_nnem, const std::function<Mesh(int)>& mesh_factory, const std::vector<int>& ns,
    EnvelopeFamily family, const NetConfig& net_config, bool augment_constant,
    const EllipticProblem& problem, const TriangleRule& rule, const Quad1D& edge_rule,
    const TrainConfig& train_cfg) {
  if (ns.size() < 2)
    throw std::invalid_argument("convergence_study: need at least 2 mesh sizes");
  ConvergenceTable table;
  table.method = (use_nnem ? "NNEM" : "FEM") + family_label(family);
  for (int n : ns) {
    const Mesh mesh = mesh_factory(n);
    ConvergenceRow row;
    row.h = mesh.h;
    const auto start = std::chrono::steady_clock::now();
    if (!use_nnem) {
      const FemResult fem = fem_solve(mesh, family, problem, rule, edge_rule);
      row.dimension = fem.report.dimension;
      row.e_h1 = fem.report.e_h1;
      row.e_l2 = fem.report.e_l2;
    } else {
      const BoundaryCondition bc = problem.homogeneous() ? BoundaryCondition::homogeneous
                                                         : BoundaryCondition::nonhomogeneous;
      NNElementSpace space =
          build_space(mesh, family, net_config, bc, train_cfg.seed, augment_constant);
      TrainState state;
      Solution sol{&space, {}, {}};
      if (problem.homogeneous()) {
        const TrainResult r = train(space, problem, rule, train_cfg, state);
        sol.c.assign(r.c.data(), r.c.data() + r.c.size());
      } else {
        const NonhomogeneousResult r =
            solve_nonhomogeneous(space, problem, rule, edge_rule, train_cfg, state);
        sol.c.assign(r.c.data(), r.c.data() + r.c.size());
        sol.c_bd.assign(r.c_bd.data(), r.c_bd.data() + r.c_bd.size());
      }
      row.dimension = space.dimension() + space.boundary_dimension();
      row.steps = train_cfg.max_steps;
      if (problem.has_exact()) {
        const ErrorReport rep = compute_errors(sol, problem, rule);
        row.e_h1 = rep.e_h1;
        row.e_l2 = rep.e_l2;
      }
    }
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    table.rows.push_back(row);
  }
  detail::append_orders(table);
  return table;
}

// --- CSV emission -----------------------------------------------------------------

namespace detail {
inline std::string csv_number(double v) {
  if (std::isnan(v) || v < 0.0) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

inline constexpr const char* kTableCsvHeader = "method,h,N,e_H1,e_L2,order_H1,order_L2,steps,seconds";

inline std::string table_to_csv(const ConvergenceTable& table, bool with_seconds = true) {
  std::string out = std::string(kTableCsvHeader) + "\n";
  char buf[64];
  for (const ConvergenceRow& row : table.rows) {
    std::snprintf(buf, sizeof buf, "%.17g", row.h);
    out += table.method + "," + buf + "," + std::to_string(row.dimension);
    out += "," + detail::csv_number(row.e_h1) + "," + detail::csv_number(row.e_l2);
    out += "," + detail::csv_number(row.order_h1) + "," + detail::csv_number(row.order_l2);
    out += "," + std::to_string(row.steps);
    out += "," + (with_seconds ? detail::csv_number(row.seconds) : std::string());
    out += "\n";
  }
  return out;
}

/// Loss history CSV (no wall-time column, so identical runs are
/// byte-identical). Error columns are empty when no exact solution is known.
inline std::string history_to_csv(const std::vector<LossRecord>& history) {
  std::string out = "step,loss,e_L2,e_H1\n";
  char buf[32];
  for (const LossRecord& rec : history) {
    out += std::to_string(rec.step);
    std::snprintf(buf, sizeof buf, "%.17g", rec.loss);
    out += std::string(",") + buf;
    out += "," + detail::csv_number(rec.e_l2) + "," + detail::csv_number(rec.e_h1) + "\n";
  }
  return out;
}

// --- diagnostics ------------------------------------------------------------------

struct DiagnosticsReport {
  int overlap = 0;
  double c_inf = 0.0;
  double c_grad = 0.0;
  double min_angle_deg = 0.0;
  double shape_regularity = 0.0;
};

/// Partition-of-unity constants over the full dof set plus mesh quality.
inline DiagnosticsReport diagnostics(const Mesh& mesh, EnvelopeFamily family,
                                     const TriangleRule& rule) {
  const PouConstants pou = pou_constants(mesh, family, rule);
  DiagnosticsReport rep;
  rep.overlap = pou.overlap;
  rep.c_inf = pou.c_inf;
  rep.c_grad = pou.c_grad;
  rep.min_angle_deg = min_angle_deg(mesh);
  rep.shape_regularity = shape_regularity(mesh);
  return rep;
}

}  // namespace nnem

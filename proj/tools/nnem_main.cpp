// nnem: configuration-driven solver front end.
//   nnem solve --config run.cfg [--out dir] [--seed S] [--resume ckpt]
//   nnem study --config run.cfg [--out dir] [--seed S]
//   nnem check --config run.cfg
// Exit codes: 0 ok, 2 configuration error, 3 training divergence,
// 4 failed self-test.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "nnem/analysis.hpp"
#include "nnem/runconfig.hpp"

namespace fs = std::filesystem;
using namespace nnem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file '" + path.string() + "'");
  out << content;
}

Mesh build_mesh(const RunConfig& cfg) {
  if (cfg.mesh_kind == "unit_square") return generate_unit_square(cfg.mesh_n);
  if (cfg.mesh_kind == "l_shape") return generate_l_shape(cfg.mesh_n);
  try {
    return load_mesh(read_file(cfg.mesh_path));
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("mesh file: ") + e.what());
  }
}

TriangleRule configured_rule(const RunConfig& cfg) {
  return triangle_rule_duffy(static_cast<int>(std::lround(std::sqrt(double(cfg.quad_triangle_points)))));
}

std::string method_label(const RunConfig& cfg, bool nnem) {
  return (nnem ? "NNEM" : "FEM") + family_label(cfg.envelope_family());
}

std::string report_csv(const std::string& method, const ErrorReport& rep) {
  ConvergenceTable table;
  table.method = method;
  ConvergenceRow row;
  row.h = rep.h;
  row.dimension = rep.dimension;
  row.e_h1 = rep.e_h1;
  row.e_l2 = rep.e_l2;
  row.steps = rep.steps;
  row.seconds = rep.seconds;
  table.rows.push_back(row);
  return table_to_csv(table);
}

int run_solve(const RunConfig& cfg, const std::string& resume_path) {
  const auto start = std::chrono::steady_clock::now();
  const Mesh mesh = build_mesh(cfg);
  const TriangleRule rule = configured_rule(cfg);
  const Quad1D edge_rule = gauss_legendre_1d(cfg.quad_edge_points);
  const EllipticProblem problem = make_problem(cfg.problem_name);
  const BoundaryCondition bc =
      problem.homogeneous() ? BoundaryCondition::homogeneous : BoundaryCondition::nonhomogeneous;
  NNElementSpace space = build_space(mesh, cfg.envelope_family(), cfg.net_config(), bc,
                                     cfg.train_seed, cfg.augment_constant);
  TrainConfig tcfg = cfg.train_config();
  TrainState state;
  if (!resume_path.empty()) {
    std::ifstream in(resume_path, std::ios::binary);
    if (!in) throw ConfigError("cannot read checkpoint '" + resume_path + "'");
    try {
      state = checkpoint_load(in, cfg.canonical_signature());
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
    std::cout << "resumed from step " << state.step << "\n";
  }

  const fs::path out_dir = cfg.output_dir;
  Eigen::VectorXd c, c_bd;
  int exit_code = 0;
  std::string status = "ok";
  try {
    if (problem.homogeneous()) {
      const TrainResult r = train(space, problem, rule, tcfg, state);
      c = r.c;
      std::cout << "final loss " << r.final_loss << "\n";
    } else {
      const NonhomogeneousResult r =
          solve_nonhomogeneous(space, problem, rule, edge_rule, tcfg, state);
      c = r.c;
      c_bd = r.c_bd;
      if (r.boundary_rank_deficient) std::cout << "warning: " << r.boundary_note << "\n";
      std::cout << "final loss " << r.final_loss << "\n";
    }
  } catch (const TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    c = state.c;  // last good coefficients
    status = "diverged";
    exit_code = 3;
  }

  write_file(out_dir / "loss_history.csv", history_to_csv(state.history));
  {
    std::ostringstream ckpt;
    checkpoint_save(ckpt, state, cfg.canonical_signature());
    write_file(out_dir / "checkpoint.bin", ckpt.str());
  }
  if (problem.has_exact() && exit_code == 0) {
    const std::vector<double> cs(c.data(), c.data() + c.size());
    const std::vector<double> cbs(c_bd.data(), c_bd.data() + c_bd.size());
    const Solution sol{&space, cs, cbs};
    ErrorReport rep = compute_errors(sol, problem, rule);
    rep.steps = state.step;
    rep.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_file(out_dir / "report.csv", report_csv(method_label(cfg, true), rep));
    std::cout << "e_H1 " << rep.e_h1 << "  e_L2 " << rep.e_l2 << "\n";
  }
  std::cout << "artifacts written to " << out_dir.string() << " (" << status << ")\n";
  return exit_code;
}

int run_study(const RunConfig& cfg) {
  if (cfg.study_methods.empty())
    throw ConfigError("study requires study.methods (fem and/or nnem)");
  if (cfg.study_mesh_sizes.size() < 2)
    throw ConfigError("study requires study.mesh_sizes with at least 2 entries");
  if (cfg.mesh_kind == "file")
    throw ConfigError("study requires a generated mesh family (unit_square or l_shape)");
  const TriangleRule rule = configured_rule(cfg);
  const Quad1D edge_rule = gauss_legendre_1d(cfg.quad_edge_points);
  const EllipticProblem problem = make_problem(cfg.problem_name);
  auto factory = [&](int n) {
    return cfg.mesh_kind == "l_shape" ? generate_l_shape(n) : generate_unit_square(n);
  };

  const fs::path out_dir = cfg.output_dir;
  std::vector<ConvergenceTable> tables;
  for (const std::string& mth : cfg.study_methods) {
    const bool nnem = (mth == "nnem");
    const ConvergenceTable table =
        convergence_study(nnem, factory, cfg.study_mesh_sizes, cfg.envelope_family(),
                          cfg.net_config(), cfg.augment_constant, problem, rule, edge_rule,
                          cfg.train_config());
    write_file(out_dir / ("study_" + table.method + ".csv"), table_to_csv(table));
    std::cout << table_to_csv(table) << "\n";
    tables.push_back(table);
  }
  // Combined side-by-side table in the usual comparison layout.
  std::string combined = "h";
  for (const ConvergenceTable& t : tables)
    combined += "," + t.method + "_e_H1," + t.method + "_e_L2";
  combined += "\n";
  char buf[32];
  for (size_t r = 0; r < tables.front().rows.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%.17g", tables.front().rows[r].h);
    combined += buf;
    for (const ConvergenceTable& t : tables) {
      std::snprintf(buf, sizeof buf, "%.17g", t.rows[r].e_h1);
      combined += std::string(",") + buf;
      std::snprintf(buf, sizeof buf, "%.17g", t.rows[r].e_l2);
      combined += std::string(",") + buf;
    }
    combined += "\n";
  }
  write_file(out_dir / "study_combined.csv", combined);
  std::cout << "study artifacts written to " << out_dir.string() << "\n";
  return 0;
}

int run_check(const RunConfig& cfg) {
  bool all_ok = true;
  std::string first_failure;
  auto check = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << ": " << detail << "\n";
    if (!ok && first_failure.empty()) first_failure = name;
    all_ok = all_ok && ok;
  };

  // Mesh regularity (includes parsing/validation for file meshes).
  Mesh mesh;
  bool mesh_ok = true;
  try {
    mesh = build_mesh(cfg);
    validate_mesh(mesh);
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "%d vertices, %d triangles, h=%.6g, min angle %.2f deg, regularity %.3g",
                  mesh.vertex_count(), mesh.triangle_count(), mesh.h, min_angle_deg(mesh),
                  shape_regularity(mesh));
    check("mesh-regularity", min_angle_deg(mesh) > 1.0, detail);
  } catch (const std::exception& e) {
    check("mesh-regularity", false, e.what());
    mesh_ok = false;
  }

  const TriangleRule rule = configured_rule(cfg);

  if (mesh_ok) {
    const EnvelopeFamily family = cfg.envelope_family();
    const PouConstants pou = pou_constants(mesh, family, rule);
    char detail[160];
    std::snprintf(detail, sizeof detail, "M=%d, C_inf=%.6g, C_G estimate=%.6g", pou.overlap,
                  pou.c_inf, pou.c_grad);
    const bool cinf_ok =
        family.kind != FamilyKind::hierarchical || pou.c_inf <= 1.0 + 1e-12;
    check("pou-constants", pou.overlap > 0 && cinf_ok, detail);

    // Partition of unity at every quadrature point.
    const PartitionOfUnity punity(mesh, family);
    double worst = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      for (const auto& l : rule.points) {
        double sum = 0.0;
        for (int i : punity.covering(t)) sum += punity.psi(i, t, l).value_or(0.0);
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    }
    std::snprintf(detail, sizeof detail, "max |sum psi - 1| = %.3g", worst);
    check("partition-of-unity", worst <= 1e-12, detail);
  }

  // Quadrature exactness self-test: the configured rule must integrate all
  // monomials of total degree <= 5 against the closed form.
  {
    double worst = 0.0;
    for (int a = 0; a + 0 <= 5; ++a) {
      for (int b = 0; a + b <= 5; ++b) {
        double s = 0.0;
        for (size_t q = 0; q < rule.points.size(); ++q)
          s += rule.weights[q] * std::pow(rule.points[q][1], a) * std::pow(rule.points[q][2], b);
        const double exact = reference_monomial_integral(a, b);
        worst = std::max(worst, std::abs(s - exact) / exact);
      }
    }
    char detail[120];
    std::snprintf(detail, sizeof detail, "%zu points, worst relative error %.3g (degree <= 5)",
                  rule.points.size(), worst);
    check("quadrature-exactness", worst <= 1e-13, detail);

    const Quad1D edge = gauss_legendre_1d(cfg.quad_edge_points);
    const int n = cfg.quad_edge_points;
    double s = 0.0;
    for (size_t i = 0; i < edge.nodes.size(); ++i)
      s += edge.weights[i] * std::pow(edge.nodes[i], 2 * n - 1);
    const double exact = 1.0 / (2.0 * n);
    std::snprintf(detail, sizeof detail, "degree %d moment error %.3g", 2 * n - 1,
                  std::abs(s - exact) / exact);
    check("edge-quadrature-exactness", std::abs(s - exact) <= 1e-13 * exact, detail);
  }

  // Gradient self-test on a small trainable instance.
  {
    const Mesh small = generate_unit_square(1);
    NetConfig net = cfg.net_config();
    net.width = 3;
    NNElementSpace space = build_space(small, hierarchical_family(), net,
                                       BoundaryCondition::homogeneous, cfg.train_seed + 1, true);
    const EllipticProblem problem = make_problem("laplace_sine");
    const SymmetricSystem sys = assemble(space, problem, rule);
    const Eigen::VectorXd c = solve_linear(sys);
    const std::vector<double> grad = loss_parameter_gradient(space, problem, rule, c);
    const std::vector<double> theta = space.get_all_theta();
    const double step = 1e-5;
    const double noise = 100.0 * 1e-16 * std::abs(ritz_loss(sys, c)) / step;
    double worst = 0.0;
    for (size_t pidx = 0; pidx < theta.size(); pidx += 3) {
      auto loss_at = [&](double delta) {
        std::vector<double> th = theta;
        th[pidx] += delta;
        space.set_all_theta(th);
        return ritz_loss(assemble(space, problem, rule), c);
      };
      const double fd = (loss_at(step) - loss_at(-step)) / (2.0 * step);
      space.set_all_theta(theta);
      const double gap = std::abs(fd - grad[pidx]) /
                         std::max({std::abs(fd), std::abs(grad[pidx]), noise / 1e-5});
      worst = std::max(worst, gap);
    }
    char detail[120];
    std::snprintf(detail, sizeof detail, "worst sampled FD gap %.3g", worst);
    check("gradient-fd", worst <= 1e-5, detail);
  }

  if (!all_ok) {
    std::cerr << "self-test failed: " << first_failure << "\n";
    return 4;
  }
  std::cout << "all self-tests passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural network element method solver"};
  app.require_subcommand(1);

  std::string config_path, out_override, resume_path;
  std::uint64_t seed_override = 0;
  bool have_seed = false;

  auto add_common = [&](CLI::App* sub, bool with_resume) {
    sub->add_option("--config", config_path, "path to the run configuration")->required();
    sub->add_option("--out", out_override, "override output.dir");
    sub->add_option("--seed", seed_override, "override train.seed")
        ->each([&](const std::string&) { have_seed = true; });
    if (with_resume) sub->add_option("--resume", resume_path, "continue from a checkpoint");
  };
  CLI::App* solve = app.add_subcommand("solve", "run one Galerkin solve / training run");
  CLI::App* study = app.add_subcommand("study", "run a convergence study over mesh sizes");
  CLI::App* chek = app.add_subcommand("check", "run diagnostics and self-tests");
  add_common(solve, true);
  add_common(study, false);
  add_common(chek, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = parse_run_config(read_file(config_path));
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (have_seed) cfg.train_seed = seed_override;
    if (solve->parsed()) return run_solve(cfg, resume_path);
    if (study->parsed()) return run_study(cfg);
    return run_check(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

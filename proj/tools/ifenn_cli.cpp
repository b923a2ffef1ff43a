#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "ifenn/config.hpp"
#include "ifenn/mesh.hpp"
#include "ifenn/pipeline.hpp"
#include "ifenn/pinn.hpp"
#include "ifenn/solver.hpp"

namespace fs = std::filesystem;
using namespace ifenn;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::string lf_tag(double lf) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", lf);
  return buf;
}

std::string resolve_output_dir(const std::string& configured) {
  if (const char* env = std::getenv("IFENN_OUT"); env && *env) return env;
  return configured;
}

std::vector<int> layer_sizes(const RunConfig& cfg, int input_width) {
  std::vector<int> sizes;
  sizes.push_back(input_width);
  for (int h : cfg.hidden_layers) sizes.push_back(h);
  sizes.push_back(1);
  return sizes;
}

struct SolveFlags {
  std::string preset, config, mesh, method, weights, out, snapshots;
  std::optional<double> tol, l_c;
  std::optional<int> increments, max_iter;
  int threads = 1;
};

int run_solve(const SolveFlags& f) {
  RunConfig cfg = f.preset.empty() ? RunConfig{} : preset_config(f.preset);
  if (!f.config.empty()) load_config_file(cfg, f.config);
  if (!f.mesh.empty()) cfg.mesh_path = f.mesh;
  if (!f.method.empty()) cfg.solver.method = parse_method(f.method);
  if (!f.weights.empty()) cfg.weights_path = f.weights;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (f.tol) cfg.solver.tol = *f.tol;
  if (f.l_c) cfg.solver.l_c = *f.l_c;
  if (f.increments) cfg.solver.n_increments = *f.increments;
  if (f.max_iter) cfg.solver.max_iter = *f.max_iter;
  if (!f.snapshots.empty()) {
    cfg.solver.snapshot_lfs.clear();
    std::istringstream ss(f.snapshots);
    std::string tok;
    while (std::getline(ss, tok, ',')) cfg.solver.snapshot_lfs.push_back(std::stod(tok));
  }
  validate_config(cfg);
  set_kernel_threads(f.threads);

  if (cfg.mesh_path.empty()) throw ConfigError("solve needs a mesh (--mesh or [mesh] path)");
  if (cfg.solver.method == Method::Ifenn && cfg.weights_path.empty())
    throw ConfigError("ifenn method needs --weights");

  const Mesh mesh = read_mesh(cfg.mesh_path);
  std::optional<Mlp> net;
  if (cfg.solver.method == Method::Ifenn) net = load_weights(cfg.weights_path);

  const AnalysisResult result =
      run_analysis(cfg.solver, mesh, cfg.materials, net ? &*net : nullptr);

  const fs::path outdir = resolve_output_dir(cfg.output_dir);
  fs::create_directories(outdir);
  write_curve_csv(result.curve, (outdir / "curve.csv").string());
  for (const auto& [requested, state] : result.snapshots) {
    Snapshot snap = make_snapshot(mesh, state, cfg.materials, cfg.solver, net ? &*net : nullptr);
    if (!result.curve.empty()) {
      for (const CurveRow& row : result.curve)
        if (row.lf == state.loadfactor) snap.reaction = row.reaction;
    }
    const std::string tag = lf_tag(requested);
    write_snapshot_csv(snap, (outdir / ("snapshot_" + tag + ".csv")).string());
    write_nodal_csv(snap, (outdir / ("snapshot_" + tag + "_u.csv")).string());
  }

  const DofMap dofmap{cfg.solver.method, mesh.n_nodes()};
  std::cout << "method=" << method_name(cfg.solver.method) << " nodes=" << mesh.n_nodes()
            << " elements=" << mesh.n_elements() << " dofs=" << dofmap.total()
            << " increments=" << result.curve.size() << " seconds=" << result.total_seconds
            << "\n";
  std::cout << "outputs in " << outdir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-static continuum-damage FEM workbench (local, nonlocal-gradient, ifenn)"};
  app.require_subcommand(1);

  // mesh
  auto* cmd_mesh = app.add_subcommand("mesh", "Generate a mesh file");
  std::string m_preset, m_out = "mesh.txt";
  std::optional<double> m_width, m_height, m_notch, m_load;
  std::optional<int> m_nx, m_ny;
  cmd_mesh->add_option("--preset", m_preset, "single-notch|double-notch|l-shape");
  cmd_mesh->add_option("--width", m_width, "domain width (mm)");
  cmd_mesh->add_option("--height", m_height, "domain height (mm)");
  cmd_mesh->add_option("--nx", m_nx, "elements along x");
  cmd_mesh->add_option("--ny", m_ny, "elements along y");
  cmd_mesh->add_option("--notch", m_notch, "notch length (mm)");
  cmd_mesh->add_option("--load", m_load, "prescribed displacement per unit loadfactor (mm)");
  cmd_mesh->add_option("--out", m_out, "output mesh file");

  // solve
  auto* cmd_solve = app.add_subcommand("solve", "Run an incremental analysis");
  SolveFlags sf;
  cmd_solve->add_option("--preset", sf.preset, "parameter preset");
  cmd_solve->add_option("--config", sf.config, "config file");
  cmd_solve->add_option("--mesh", sf.mesh, "mesh file");
  cmd_solve->add_option("--method", sf.method, "local|nonlocal-gradient|ifenn");
  cmd_solve->add_option("--weights", sf.weights, "trained network (ifenn)");
  cmd_solve->add_option("--out", sf.out, "output directory");
  cmd_solve->add_option("--tol", sf.tol, "convergence tolerance");
  cmd_solve->add_option("--l-c", sf.l_c, "characteristic length (mm)");
  cmd_solve->add_option("--increments", sf.increments, "number of load increments");
  cmd_solve->add_option("--max-iter", sf.max_iter, "Newton iteration cap");
  cmd_solve->add_option("--snapshots", sf.snapshots, "comma-separated loadfactors");
  cmd_solve->add_option("--threads", sf.threads, "element-kernel worker count");

  // export-colloc
  auto* cmd_export = app.add_subcommand("export-colloc", "Export collocation data from a snapshot");
  std::string e_mesh, e_snapshot, e_out = "colloc.csv";
  std::optional<double> e_g, e_lc, e_lf;
  cmd_export->add_option("--mesh", e_mesh, "mesh file")->required();
  cmd_export->add_option("--snapshot", e_snapshot, "snapshot CSV")->required();
  cmd_export->add_option("--g", e_g, "length-scale parameter g (mm^2)");
  cmd_export->add_option("--l-c", e_lc, "characteristic length (mm), g = l_c^2/2");
  cmd_export->add_option("--lf", e_lf, "append a loadfactor column with this value");
  cmd_export->add_option("--out", e_out, "output CSV");

  // train
  auto* cmd_train = app.add_subcommand("train", "Train the network on collocation data");
  std::string t_preset, t_config, t_colloc, t_weights = "weights.txt", t_history;
  std::optional<int> t_epochs, t_seed, t_scale;
  std::optional<double> t_lr;
  std::string t_layers;
  bool t_lbfgs = false;
  cmd_train->add_option("--preset", t_preset, "parameter preset");
  cmd_train->add_option("--config", t_config, "config file");
  cmd_train->add_option("--colloc", t_colloc, "collocation CSV")->required();
  cmd_train->add_option("--epochs", t_epochs, "Adam epochs");
  cmd_train->add_option("--lr", t_lr, "learning rate");
  cmd_train->add_option("--seed", t_seed, "init seed");
  cmd_train->add_option("--layers", t_layers, "hidden widths, e.g. 30,30,30");
  cmd_train->add_option("--scale-exp", t_scale, "eps_eq scaling exponent c");
  cmd_train->add_flag("--lbfgs", t_lbfgs, "enable the L-BFGS polish phase");
  cmd_train->add_option("--out-weights", t_weights, "output weights file");
  cmd_train->add_option("--loss-history", t_history, "loss history CSV");

  // compare
  auto* cmd_compare = app.add_subcommand("compare", "Compare two field snapshots");
  std::string c_ref, c_pred, c_field = "eps_bar", c_out = "report.csv";
  cmd_compare->add_option("--ref", c_ref, "reference snapshot CSV")->required();
  cmd_compare->add_option("--pred", c_pred, "predicted snapshot CSV")->required();
  cmd_compare->add_option("--field", c_field, "eps_bar|d|eps_eq");
  cmd_compare->add_option("--out", c_out, "report CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (cmd_mesh->parsed()) {
      MeshPreset p = m_preset.empty() ? MeshPreset{} : mesh_preset(m_preset);
      if (m_width) p.width = *m_width;
      if (m_height) p.height = *m_height;
      if (m_nx) p.nx = *m_nx;
      if (m_ny) p.ny = *m_ny;
      if (m_notch) p.notch = *m_notch;
      if (m_load) p.load = *m_load;
      Mesh mesh;
      if (p.kind == "double-notch")
        mesh = generate_double_notch(p.width, p.height, p.nx, p.ny, p.notch, p.load);
      else if (p.kind == "l-shape")
        mesh = generate_l_shape(p.width, p.nx, p.load);
      else
        mesh = generate_structured(p.width, p.height, p.nx, p.ny, p.notch, p.load);
      write_mesh(mesh, m_out);
      std::cout << "wrote " << m_out << " (" << mesh.n_nodes() << " nodes, " << mesh.n_elements()
                << " elements)\n";
      return 0;
    }

    if (cmd_solve->parsed()) return run_solve(sf);

    if (cmd_export->parsed()) {
      double g = 0.0;
      if (e_g)
        g = *e_g;
      else if (e_lc)
        g = 0.5 * (*e_lc) * (*e_lc);
      else
        throw ConfigError("export-colloc needs --g or --l-c");
      const Mesh mesh = read_mesh(e_mesh);
      const Snapshot snap = read_snapshot_csv(e_snapshot);
      if (static_cast<int>(snap.rows.size()) != mesh.n_ips())
        throw LengthMismatch("snapshot IP count does not match mesh");
      const CollocationSet data =
          export_collocation(snap, mesh, g, e_lf ? std::optional<double>(*e_lf) : std::nullopt);
      write_collocation(data, e_out);
      std::cout << "wrote " << e_out << " (" << data.interior.size() << " interior, "
                << data.boundary.size() << " boundary rows)\n";
      return 0;
    }

    if (cmd_train->parsed()) {
      RunConfig cfg = t_preset.empty() ? RunConfig{} : preset_config(t_preset);
      if (!t_config.empty()) load_config_file(cfg, t_config);
      if (t_epochs) cfg.train.epochs = *t_epochs;
      if (t_lr) cfg.train.learning_rate = *t_lr;
      if (t_seed) cfg.train.seed = static_cast<std::uint64_t>(*t_seed);
      if (t_scale) cfg.scale_exp = *t_scale;
      if (t_lbfgs) cfg.train.lbfgs_enabled = true;
      if (!t_layers.empty()) {
        cfg.hidden_layers.clear();
        std::istringstream ss(t_layers);
        std::string tok;
        while (std::getline(ss, tok, ',')) cfg.hidden_layers.push_back(std::stoi(tok));
      }
      validate_config(cfg);

      const CollocationSet data = read_collocation(t_colloc);
      Mlp mlp = init_xavier(layer_sizes(cfg, data.input_width()), cfg.scale_exp, cfg.train.seed);
      TrainReport report;
      if (cfg.train.epochs > 0 || cfg.train.lbfgs_enabled) report = train(mlp, data, cfg.train);
      save_weights(mlp, t_weights);
      if (!t_history.empty()) write_loss_history_csv(report.loss_history, t_history);
      std::cout << "wrote " << t_weights << " (J " << report.initial_loss << " -> "
                << report.final_loss << ")\n";
      return 0;
    }

    if (cmd_compare->parsed()) {
      const Snapshot ref = read_snapshot_csv(c_ref);
      const Snapshot pred = read_snapshot_csv(c_pred);
      if (ref.rows.size() != pred.rows.size())
        throw LengthMismatch("snapshots have different IP counts");
      auto field = [&](const SnapshotRow& r) {
        if (c_field == "eps_bar") return r.eps_bar;
        if (c_field == "d") return r.d;
        if (c_field == "eps_eq") return r.eps_eq;
        throw ConfigError("field must be eps_bar|d|eps_eq");
      };
      std::vector<double> xs, ys, rv, pv;
      for (size_t i = 0; i < ref.rows.size(); ++i) {
        xs.push_back(ref.rows[i].x);
        ys.push_back(ref.rows[i].y);
        rv.push_back(field(ref.rows[i]));
        pv.push_back(field(pred.rows[i]));
      }
      const ComparisonReport report = make_report(xs, ys, rv, pv);
      write_report_csv(report, c_out);
      std::cout << "l2_mismatch=" << report.l2 << " max_rse=" << report.max_rse
                << " mean_rse=" << report.mean_rse << " n_undefined=" << report.n_undefined
                << "\n";
      return 0;
    }
  } catch (const AnalysisAborted& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const SingularMatrix& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DivergedLoss& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NonPositiveJacobian& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}

#include "ifenn/solver.hpp"

#include <Eigen/SparseLU>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace ifenn {

namespace {

int g_kernel_threads = 1;

}  // namespace

void set_kernel_threads(int n) { g_kernel_threads = n > 1 ? n : 1; }
int kernel_threads() { return g_kernel_threads; }

namespace {

Eigen::Matrix<double, 8, 1> gather_u(const Eigen::VectorXd& u, const Element& el) {
  Eigen::Matrix<double, 8, 1> ue;
  for (int a = 0; a < 4; ++a) {
    ue(2 * a) = u(2 * el.nodes[a]);
    ue(2 * a + 1) = u(2 * el.nodes[a] + 1);
  }
  return ue;
}

// Batch network query at all integration points for the current iterate.
IFennFeed query_network(const Mesh& mesh, const Eigen::VectorXd& u, const Materials& mat,
                        double g, double lf, const Mlp& mlp) {
  const int nips = mesh.n_ips();
  Eigen::MatrixXd X(mlp.input_width(), nips);
  const auto rule = gauss_2x2();
  for (const Element& el : mesh.elements) {
    const Eigen::Matrix<double, 8, 1> ue = gather_u(u, el);
    for (int q = 0; q < 4; ++q) {
      const IsoMap m = isoparametric_map(el, mesh, rule[q].xi, rule[q].eta);
      const Eigen::Vector3d eps = m.B * ue;
      const EqStrain eq = eq_strain(eps, mat.measure, mat.elastic.nu);
      const int ip = 4 * el.id + q;
      X(0, ip) = m.x;
      X(1, ip) = m.y;
      X(2, ip) = g;
      X(3, ip) = eq.value;
      if (mlp.input_width() == 5) X(4, ip) = lf;
    }
  }
  IFennFeed feed;
  Eigen::VectorXd ebar, deq;
  forward_feed(mlp, X, ebar, deq);
  feed.ebar.assign(ebar.data(), ebar.data() + ebar.size());
  feed.debar_deq.assign(deq.data(), deq.data() + deq.size());
  return feed;
}

struct Evaluation {
  GlobalSystem sys;
  std::vector<double> kappa_trial;
};

Evaluation evaluate(const Mesh& mesh, const DofMap& dofmap, const FieldState& state,
                    const Materials& mat, const SolverConfig& cfg, double lf, const Mlp* mlp) {
  std::vector<ElementKernel> kernels(mesh.n_elements());

  IFennFeed feed;
  if (cfg.method == Method::Ifenn) {
    if (!mlp) throw MissingFeed("ifenn method requires a trained network");
    feed = query_network(mesh, state.u, mat, cfg.g(), lf, *mlp);
  }

  auto eval_range = [&](int begin, int end) {
    for (int e = begin; e < end; ++e) {
      const Element& el = mesh.elements[e];
      const Eigen::Matrix<double, 8, 1> ue = gather_u(state.u, el);
      const std::span<const double, 4> kap(&state.history.kappa[4 * el.id], 4);
      switch (cfg.method) {
        case Method::Local:
          kernels[el.id] = element_local(el, mesh, ue, kap, mat);
          break;
        case Method::NonlocalGradient: {
          Eigen::Vector4d eb;
          for (int a = 0; a < 4; ++a) eb(a) = state.ebar(el.nodes[a]);
          kernels[el.id] = element_nonlocal(el, mesh, ue, eb, kap, mat, cfg.g());
          break;
        }
        case Method::Ifenn:
          kernels[el.id] = element_ifenn(el, mesh, ue, kap, mat, feed);
          break;
      }
    }
  };

  const int nthreads = std::min(kernel_threads(), mesh.n_elements());
  if (nthreads <= 1) {
    eval_range(0, mesh.n_elements());
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const int chunk = (mesh.n_elements() + nthreads - 1) / nthreads;
    for (int t = 0; t < nthreads; ++t) {
      const int begin = t * chunk;
      const int end = std::min(begin + chunk, mesh.n_elements());
      if (begin >= end) continue;
      pool.emplace_back([&, begin, end] {
        try {
          eval_range(begin, end);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  Evaluation ev{assemble(mesh, dofmap, kernels), std::vector<double>(mesh.n_ips())};
  for (const Element& el : mesh.elements)
    for (int q = 0; q < 4; ++q) ev.kappa_trial[4 * el.id + q] = kernels[el.id].kappa_trial[q];
  return ev;
}

double loaded_reaction(const GlobalSystem& sys, const Mesh& mesh) {
  double sum = 0.0;
  for (const DirichletBc& bc : mesh.dirichlet)
    if (bc.value != 0.0) sum += sys.R(sys.dofmap.u_dof(bc.node, static_cast<int>(bc.dof)));
  return sum;
}

}  // namespace

FieldState initial_state(const Mesh& mesh, Method method) {
  FieldState s;
  s.u = Eigen::VectorXd::Zero(2 * mesh.n_nodes());
  if (method == Method::NonlocalGradient) s.ebar = Eigen::VectorXd::Zero(mesh.n_nodes());
  s.history = HistoryField::zeros(mesh.n_ips());
  return s;
}

Eigen::VectorXd linear_solve(const Eigen::SparseMatrix<double>& J, const Eigen::VectorXd& rhs) {
  if (J.rows() != J.cols() || J.rows() != rhs.size())
    throw DimensionMismatch("linear system dimensions do not match");
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(J);
  lu.factorize(J);
  if (lu.info() != Eigen::Success) throw SingularMatrix("sparse LU factorization failed");
  Eigen::VectorXd x = lu.solve(rhs);
  if (!x.allFinite()) throw SingularMatrix("linear solve produced non-finite values");
  // Tiny pivots on a rank-deficient matrix can slip through the
  // factorization; the solve contract is a tight relative residual.
  const double rhs_norm = rhs.norm();
  if (rhs_norm > 0.0 && (J * x - rhs).norm() > 1e-8 * rhs_norm)
    throw SingularMatrix("linear solve residual exceeds the contract (singular system?)");
  return x;
}

std::pair<double, double> residual_norms(const GlobalSystem& sys, const Eigen::VectorXd& delta) {
  return {sys.reduced_residual().norm(), delta.norm()};
}

std::pair<FieldState, IncrementResult> newton_increment(const FieldState& state, double lf,
                                                        const SolverConfig& cfg, const Mesh& mesh,
                                                        const Materials& mat, const Mlp* mlp) {
  const auto t0 = std::chrono::steady_clock::now();
  const DofMap dofmap{cfg.method, mesh.n_nodes()};

  FieldState trial = state;
  trial.loadfactor = lf;
  for (const DirichletBc& bc : mesh.dirichlet)
    trial.u(dofmap.u_dof(bc.node, static_cast<int>(bc.dof))) = lf * bc.value;

  IncrementResult res;
  Evaluation ev = evaluate(mesh, dofmap, trial, mat, cfg, lf, mlp);
  const auto free = ev.sys.free_dofs();
  res.system_dim = static_cast<int>(free.size());

  const int n_u = 2 * mesh.n_nodes();
  auto free_u_norm = [&](const Eigen::VectorXd& delta_free) {
    double s = 0.0;
    for (size_t i = 0; i < free.size(); ++i)
      if (free[i] < n_u) s += delta_free(i) * delta_free(i);
    return std::sqrt(s);
  };

  double delta1 = -1.0;
  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    Eigen::VectorXd delta;
    try {
      delta = linear_solve(ev.sys.reduced_matrix(), -ev.sys.reduced_residual());
    } catch (const SingularMatrix&) {
      // A singular consistent tangent (e.g. local-damage localization) is a
      // failed increment; the driver reacts with step reduction.
      break;
    }
    for (size_t i = 0; i < free.size(); ++i) {
      const int dof = free[i];
      if (dof < n_u)
        trial.u(dof) += delta(i);
      else
        trial.ebar(dof - n_u) += delta(i);
    }

    ev = evaluate(mesh, dofmap, trial, mat, cfg, lf, mlp);
    const double du = free_u_norm(delta);
    res.residual_norms.push_back(ev.sys.reduced_residual().norm());
    res.delta_norms.push_back(du);
    res.iterations = iter;

    if (iter == 1) {
      delta1 = du;
      if (delta1 == 0.0) {  // nothing moved: already in equilibrium
        res.converged = true;
        break;
      }
      continue;
    }
    if (du / delta1 <= cfg.tol) {
      res.converged = true;
      break;
    }
  }

  const auto t1 = std::chrono::steady_clock::now();
  res.seconds = std::chrono::duration<double>(t1 - t0).count();

  if (!res.converged) return {state, res};

  trial.history.kappa = ev.kappa_trial;
  res.reaction = loaded_reaction(ev.sys, mesh);
  return {std::move(trial), res};
}

AnalysisResult run_analysis(const SolverConfig& cfg, const Mesh& mesh, const Materials& mat,
                            const Mlp* mlp) {
  AnalysisResult out;
  out.final_state = initial_state(mesh, cfg.method);

  std::vector<double> snap_dist(cfg.snapshot_lfs.size(), std::numeric_limits<double>::infinity());
  out.snapshots.resize(cfg.snapshot_lfs.size());
  for (size_t i = 0; i < cfg.snapshot_lfs.size(); ++i)
    out.snapshots[i].first = cfg.snapshot_lfs[i];

  const double nominal = 1.0 / cfg.n_increments;
  double step = nominal;
  int halvings = 0;
  double lf = 0.0;

  while (lf < 1.0 - 1e-12) {
    const double target = std::min(lf + step, 1.0);
    auto [next, res] = newton_increment(out.final_state, target, cfg, mesh, mat, mlp);
    out.total_seconds += res.seconds;
    if (!res.converged) {
      step *= cfg.step_reduction;
      ++halvings;
      if (halvings > cfg.max_halvings || step < 1e-6 * nominal)
        throw AnalysisAborted("load step shrank below the sanity floor at lf = " +
                              std::to_string(lf));
      continue;
    }
    lf = target;
    out.final_state = std::move(next);
    out.curve.push_back({lf, res.reaction, res.iterations, res.system_dim});
    for (size_t i = 0; i < cfg.snapshot_lfs.size(); ++i) {
      const double dist = std::abs(lf - cfg.snapshot_lfs[i]);
      if (dist < snap_dist[i]) {
        snap_dist[i] = dist;
        out.snapshots[i].second = out.final_state;
      }
    }
    out.increments.push_back(std::move(res));
  }
  return out;
}

}  // namespace ifenn

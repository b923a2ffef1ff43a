#include <doctest.h>

#include <cmath>
#include <random>

#include "ifenn/solver.hpp"

using namespace ifenn;

namespace {

Materials test_materials() {
  Materials mat;
  mat.elastic = {125000.0, 0.2};
  mat.measure = {StrainVariant::Lemaitre, 10.0};
  mat.damage = {DamageLaw::MazarsOriginal, 0.7, 1e4, 1e-4};
  return mat;
}

}  // namespace

TEST_CASE("linear solve hand cases") {
  SUBCASE("identity") {
    Eigen::SparseMatrix<double> I(3, 3);
    I.setIdentity();
    Eigen::Vector3d rhs(1.0, -2.0, 0.5);
    CHECK((linear_solve(I, rhs) - rhs).norm() == 0.0);
  }
  SUBCASE("2x2 system") {
    Eigen::SparseMatrix<double> A(2, 2);
    std::vector<Eigen::Triplet<double>> t{{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 3.0}};
    A.setFromTriplets(t.begin(), t.end());
    const Eigen::VectorXd x = linear_solve(A, (Eigen::VectorXd(2) << 3.0, 4.0).finished());
    CHECK(x(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x(1) == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("solution residual is tight on a nonsymmetric system") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    const int n = 40;
    Eigen::SparseMatrix<double> A(n, n);
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < n; ++i) {
      t.emplace_back(i, i, 4.0 + val(rng));
      if (i + 1 < n) {
        t.emplace_back(i, i + 1, val(rng));
        t.emplace_back(i + 1, i, val(rng));
      }
    }
    A.setFromTriplets(t.begin(), t.end());
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) rhs(i) = val(rng);
    const Eigen::VectorXd x = linear_solve(A, rhs);
    CHECK((A * x - rhs).norm() / rhs.norm() < 1e-10);
  }
  SUBCASE("free-floating mesh is singular") {
    // Elastic stiffness with no Dirichlet rows removed has rigid-body modes.
    const Mesh mesh = generate_structured(2.0, 2.0, 2, 2);
    const Materials mat = test_materials();
    const DofMap dofmap{Method::Local, mesh.n_nodes()};
    std::vector<ElementKernel> kernels;
    for (const Element& el : mesh.elements) {
      const std::array<double, 4> kappa{};
      kernels.push_back(
          element_local(el, mesh, Eigen::Matrix<double, 8, 1>::Zero(), kappa, mat));
    }
    const GlobalSystem sys = assemble(mesh, dofmap, kernels);
    CHECK_THROWS_AS(linear_solve(sys.J, Eigen::VectorXd::Ones(sys.R.size())),
                    SingularMatrix);
  }
}

TEST_CASE("residual norms") {
  GlobalSystem sys;
  sys.R = Eigen::VectorXd::Zero(4);
  sys.fixed.assign(4, 0);
  CHECK(residual_norms(sys, Eigen::VectorXd::Zero(4)).second == 0.0);
  Eigen::VectorXd d(2);
  d << 3.0, 4.0;
  CHECK(residual_norms(sys, d).second == doctest::Approx(5.0));

  std::mt19937 rng(9);
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  Eigen::VectorXd r(12);
  double acc = 0.0;
  for (int i = 0; i < 12; ++i) {
    r(i) = val(rng);
    acc += r(i) * r(i);
  }
  sys.R = r;
  sys.fixed.assign(12, 0);
  CHECK(residual_norms(sys, r).first == doctest::Approx(std::sqrt(acc)).epsilon(1e-14));
}

TEST_CASE("elastic increment converges in two iterations") {
  const Mesh mesh = generate_structured(10.0, 10.0, 4, 4, 0.0, 1e-4);
  const Materials mat = test_materials();
  for (Method method : {Method::Local, Method::NonlocalGradient}) {
    SolverConfig cfg;
    cfg.method = method;
    cfg.tol = 1e-6;
    cfg.l_c = 4.0;
    const FieldState s0 = initial_state(mesh, method);
    const auto [s1, res] = newton_increment(s0, 1.0, cfg, mesh, mat);
    CHECK(res.converged);
    CHECK(res.iterations <= 2);
    CHECK(static_cast<int>(res.residual_norms.size()) == res.iterations);
  }
}

TEST_CASE("zero load converges immediately with zero displacement") {
  Mesh mesh = generate_structured(4.0, 4.0, 2, 2, 0.0, 0.0);  // all values zero
  const Materials mat = test_materials();
  SolverConfig cfg;
  cfg.method = Method::Local;
  const FieldState s0 = initial_state(mesh, Method::Local);
  const auto [s1, res] = newton_increment(s0, 1.0, cfg, mesh, mat);
  CHECK(res.converged);
  CHECK(s1.u.norm() == 0.0);
}

TEST_CASE("max_iter = 1 cannot satisfy the ratio test; the driver halves and aborts") {
  const Mesh mesh = generate_structured(10.0, 10.0, 4, 4, 0.0, 1e-3);
  const Materials mat = test_materials();
  SolverConfig cfg;
  cfg.method = Method::Local;
  cfg.max_iter = 1;
  const FieldState s0 = initial_state(mesh, Method::Local);
  const auto [s1, res] = newton_increment(s0, 0.5, cfg, mesh, mat);
  CHECK_FALSE(res.converged);
  CHECK((s1.u - s0.u).norm() == 0.0);  // failed increments leave the state alone

  cfg.n_increments = 1;
  CHECK_THROWS_AS(run_analysis(cfg, mesh, mat), AnalysisAborted);
}

TEST_CASE("purely elastic run: reaction-loadfactor curve is linear through the origin") {
  const Mesh mesh = generate_structured(10.0, 10.0, 4, 4, 0.0, 1e-4);
  const Materials mat = test_materials();
  SolverConfig cfg;
  cfg.method = Method::Local;
  cfg.n_increments = 5;
  const AnalysisResult result = run_analysis(cfg, mesh, mat);
  REQUIRE(result.curve.size() == 5);

  // Least-squares slope through the origin, then the fit must be exact.
  double num = 0.0, den = 0.0;
  for (const CurveRow& r : result.curve) {
    num += r.lf * r.reaction;
    den += r.lf * r.lf;
  }
  const double slope = num / den;
  double ss_res = 0.0, ss_tot = 0.0, mean = 0.0;
  for (const CurveRow& r : result.curve) mean += r.reaction / result.curve.size();
  for (const CurveRow& r : result.curve) {
    ss_res += std::pow(r.reaction - slope * r.lf, 2);
    ss_tot += std::pow(r.reaction - mean, 2);
  }
  CHECK(ss_res / ss_tot < 1e-12);
}

TEST_CASE("global equilibrium: loaded reactions balance the roller reactions") {
  const Mesh mesh = generate_structured(10.0, 10.0, 5, 5, 4.0, 2e-3);
  const Materials mat = test_materials();
  SolverConfig cfg;
  cfg.method = Method::NonlocalGradient;
  cfg.l_c = 4.0;
  cfg.n_increments = 4;
  const AnalysisResult result = run_analysis(cfg, mesh, mat);

  // Re-assemble at the final state and sum the uy reactions per group.
  const DofMap dofmap{cfg.method, mesh.n_nodes()};
  std::vector<ElementKernel> kernels;
  for (const Element& el : mesh.elements) {
    Eigen::Matrix<double, 8, 1> ue;
    Eigen::Vector4d eb;
    for (int a = 0; a < 4; ++a) {
      ue(2 * a) = result.final_state.u(2 * el.nodes[a]);
      ue(2 * a + 1) = result.final_state.u(2 * el.nodes[a] + 1);
      eb(a) = result.final_state.ebar(el.nodes[a]);
    }
    const std::span<const double, 4> kap(&result.final_state.history.kappa[4 * el.id], 4);
    kernels.push_back(element_nonlocal(el, mesh, ue, eb, kap, mat, cfg.g()));
  }
  const GlobalSystem sys = assemble(mesh, dofmap, kernels);

  double loaded = 0.0, rollers = 0.0;
  for (const DirichletBc& bc : mesh.dirichlet) {
    if (bc.dof != Dof::Uy) continue;
    if (bc.value != 0.0)
      loaded += sys.reaction(bc.node, bc.dof);
    else
      rollers += sys.reaction(bc.node, bc.dof);
  }
  CHECK(std::abs(loaded + rollers) < 1e-10 * std::max(std::abs(loaded), std::abs(rollers)));
}

TEST_CASE("uniform-strain patch test reproduces the exact field at every IP") {
  Mesh mesh = generate_structured(3.0, 3.0, 3, 3);
  // Prescribe u = (a x + b y, c x + d y) on every boundary node.
  const double a = 2e-4, b = -1e-4, c = 5e-5, d = 3e-4;
  mesh.dirichlet.clear();
  for (const Node& n : mesh.nodes) {
    const bool on_boundary =
        n.x == 0.0 || n.y == 0.0 || std::abs(n.x - 3.0) < 1e-12 || std::abs(n.y - 3.0) < 1e-12;
    if (!on_boundary) continue;
    mesh.dirichlet.push_back({n.id, Dof::Ux, a * n.x + b * n.y});
    mesh.dirichlet.push_back({n.id, Dof::Uy, c * n.x + d * n.y});
  }

  Materials mat = test_materials();
  mat.damage.eps_d = 1.0;  // keep the run elastic
  SolverConfig cfg;
  cfg.method = Method::Local;
  const FieldState s0 = initial_state(mesh, Method::Local);
  const auto [s1, res] = newton_increment(s0, 1.0, cfg, mesh, mat);
  REQUIRE(res.converged);

  const Eigen::Vector3d expected(a, d, b + c);
  for (const Element& el : mesh.elements) {
    Eigen::Matrix<double, 8, 1> ue;
    for (int k = 0; k < 4; ++k) {
      ue(2 * k) = s1.u(2 * el.nodes[k]);
      ue(2 * k + 1) = s1.u(2 * el.nodes[k] + 1);
    }
    for (const QuadPoint& q : gauss_2x2()) {
      const IsoMap m = isoparametric_map(el, mesh, q.xi, q.eta);
      CHECK(((m.B * ue) - expected).norm() < 1e-15);
    }
  }
}

TEST_CASE("history stays nondecreasing across accepted increments") {
  const Mesh mesh = generate_structured(20.0, 20.0, 5, 5, 8.0, 4e-3);
  const Materials mat = test_materials();
  SolverConfig cfg;
  cfg.method = Method::NonlocalGradient;
  cfg.l_c = 8.0;
  cfg.max_iter = 30;
  cfg.tol = 1e-6;

  FieldState state = initial_state(mesh, cfg.method);
  double lf = 0.0;
  bool damaged = false;
  for (int inc = 1; inc <= 12; ++inc) {
    const double target = inc / 12.0;
    const auto [next, res] = newton_increment(state, target, cfg, mesh, mat);
    REQUIRE(res.converged);
    // Converged increments end below the tolerance criterion.
    if (res.delta_norms.front() > 0.0)
      CHECK(res.delta_norms.back() / res.delta_norms.front() <= cfg.tol);
    for (size_t ip = 0; ip < state.history.kappa.size(); ++ip) {
      CHECK(next.history.kappa[ip] >= state.history.kappa[ip]);
      if (next.history.kappa[ip] > mat.damage.eps_d) damaged = true;
    }
    state = next;
    lf = target;
  }
  CHECK(lf == 1.0);
  CHECK(damaged);  // the load level actually exercises the damage branch
}

TEST_CASE("field state dof layout per method") {
  const Mesh mesh = generate_structured(2.0, 2.0, 2, 2);
  CHECK(initial_state(mesh, Method::Local).ebar.size() == 0);
  CHECK(initial_state(mesh, Method::Ifenn).ebar.size() == 0);
  CHECK(initial_state(mesh, Method::NonlocalGradient).ebar.size() == mesh.n_nodes());
}

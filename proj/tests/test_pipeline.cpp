#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ifenn/pipeline.hpp"

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

TEST_CASE("collocation export counts and normals") {
  SUBCASE("one element: 4 interior rows, 4 boundary rows, unit corner normals") {
    const Mesh mesh = generate_structured(1.0, 1.0, 1, 1, 0.0, 1e-4);
    SolverConfig cfg;
    cfg.method = Method::Local;
    const Snapshot snap =
        make_snapshot(mesh, initial_state(mesh, Method::Local), test_materials(), cfg);
    const CollocationSet data = export_collocation(snap, mesh, 2.0);
    CHECK(data.interior.size() == 4);
    CHECK(data.boundary.size() == 4);
    for (const auto& b : data.boundary) {
      CHECK(std::hypot(b.nx, b.ny) == doctest::Approx(1.0).epsilon(1e-12));
      // Corner normals are averages of two axis normals: (+-1, +-1)/sqrt(2).
      CHECK(std::abs(b.nx) == doctest::Approx(std::sqrt(0.5)));
      CHECK(std::abs(b.ny) == doctest::Approx(std::sqrt(0.5)));
    }
  }
  SUBCASE("row counts scale with the mesh") {
    const Mesh mesh = generate_structured(10.0, 10.0, 6, 4, 0.0, 1e-4);
    SolverConfig cfg;
    cfg.method = Method::Local;
    const Snapshot snap =
        make_snapshot(mesh, initial_state(mesh, Method::Local), test_materials(), cfg);
    const CollocationSet data = export_collocation(snap, mesh, 2.0);
    CHECK(static_cast<int>(data.interior.size()) == 4 * mesh.n_elements());
    // Boundary nodes of a 6x4 grid: the outer ring.
    CHECK(static_cast<int>(data.boundary.size()) == 2 * 6 + 2 * 4);
    // The loadfactor column is opt-in.
    CHECK_FALSE(data.has_lf);
    const CollocationSet with_lf = export_collocation(snap, mesh, 2.0, 0.7);
    CHECK(with_lf.has_lf);
    CHECK(with_lf.interior.front().lf == 0.7);
  }
}

TEST_CASE("full-scale export: 50x50 mesh gives 10000 interior rows") {
  const Mesh mesh = generate_structured(100.0, 100.0, 50, 50, 40.0, 0.01);
  SolverConfig cfg;
  cfg.method = Method::Local;
  const Snapshot snap =
      make_snapshot(mesh, initial_state(mesh, Method::Local), test_materials(), cfg);
  const CollocationSet data = export_collocation(snap, mesh, 8.0);
  CHECK(data.interior.size() == 10000);
  CHECK(data.boundary.size() == 200);  // outer ring of a 51x51 grid
}

TEST_CASE("rse values and undefined flags") {
  const std::vector<double> ref{2.0, 5.0, 0.0, -4.0};
  const std::vector<double> pred{1.0, 5.0, 3.0, -5.0};
  const auto points = rse(ref, pred);
  CHECK(points[0].value == doctest::Approx(0.25));
  CHECK(points[0].defined);
  CHECK(points[1].value == 0.0);
  CHECK_FALSE(points[2].defined);  // reference is zero: flagged, not dropped
  CHECK(points[3].value == doctest::Approx(1.0 / 16.0));

  CHECK_THROWS_AS(rse(ref, std::vector<double>{1.0}), LengthMismatch);
}

TEST_CASE("l2 mismatch hand values") {
  const std::vector<double> a{1e-4, 2e-4};
  CHECK(l2_mismatch(a, a) == 0.0);
  const std::vector<double> b{1e-4 + 3e-5, 2e-4 + 4e-5};
  CHECK(l2_mismatch(a, b) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK_THROWS_AS(l2_mismatch(a, std::vector<double>{1.0}), LengthMismatch);
}

TEST_CASE("rse and l2 are permutation covariant") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> val(0.1, 2.0);
  const int n = 50;
  std::vector<double> ref(n), pred(n);
  for (int i = 0; i < n; ++i) {
    ref[i] = val(rng);
    pred[i] = val(rng);
  }
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<double> ref_p(n), pred_p(n);
  for (int i = 0; i < n; ++i) {
    ref_p[i] = ref[perm[i]];
    pred_p[i] = pred[perm[i]];
  }
  const auto r1 = rse(ref, pred);
  const auto r2 = rse(ref_p, pred_p);
  for (int i = 0; i < n; ++i) CHECK(r2[i].value == r1[perm[i]].value);
  CHECK(l2_mismatch(ref_p, pred_p) == doctest::Approx(l2_mismatch(ref, pred)).epsilon(1e-14));
}

TEST_CASE("comparison report summary statistics") {
  const std::vector<double> x{0, 1, 2}, y{0, 0, 0};
  const std::vector<double> ref{2.0, 0.0, 4.0}, pred{1.0, 1.0, 4.0};
  const ComparisonReport rep = make_report(x, y, ref, pred);
  CHECK(rep.n_undefined == 1);
  CHECK(rep.max_rse == doctest::Approx(0.25));
  CHECK(rep.mean_rse == doctest::Approx(0.125));
  CHECK(rep.l2 == doctest::Approx(std::sqrt(2.0)));
  REQUIRE(rep.rows.size() == 3);
  CHECK_FALSE(rep.rows[1].defined);
}

TEST_CASE("cross-mesh evaluation") {
  SUBCASE("width mismatch is rejected") {
    const Mlp mlp = init_xavier({5, 6, 1}, 0, 3);
    CollocationSet data;
    data.interior.push_back({0, 0, 1, 0.1, 0});
    CHECK_THROWS_AS(cross_mesh_eval(mlp, data), ShapeMismatch);
  }
  SUBCASE("in-sample evaluation equals a plain forward pass") {
    const Mlp mlp = init_xavier({4, 8, 1}, 1, 5);
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    CollocationSet data;
    for (int i = 0; i < 9; ++i) data.interior.push_back({val(rng), val(rng), 1.5, 1e-3 * val(rng), 0});
    const CrossMeshEval ev = cross_mesh_eval(mlp, data);
    const Eigen::VectorXd direct = forward(mlp, data.interior_inputs());
    for (int i = 0; i < 9; ++i) CHECK(ev.predicted[i] == direct(i));
  }
  SUBCASE("exact constant-field network shows zero mismatch at any density") {
    const double c = 3e-4;
    Mlp mlp = init_xavier({4, 6, 1}, 2, 9);
    mlp.W.back().setZero();
    mlp.b.back().setConstant(c * mlp.scale());
    for (int n : {3, 7}) {
      const Mesh mesh = generate_structured(2.0, 2.0, n, n, 0.0, 1e-4);
      SolverConfig cfg;
      cfg.method = Method::Local;
      Snapshot snap = make_snapshot(mesh, initial_state(mesh, Method::Local), test_materials(), cfg);
      for (auto& row : snap.rows) row.eps_eq = c;  // constant-field problem
      const CollocationSet data = export_collocation(snap, mesh, 2.0);
      std::vector<double> reference(data.interior.size(), c);
      const CrossMeshEval ev = cross_mesh_eval(mlp, data, reference);
      CHECK(ev.report.l2 == doctest::Approx(0.0).epsilon(1e-15));
      CHECK(static_cast<int>(ev.report.rows.size()) == 4 * mesh.n_elements());
    }
  }
}

TEST_CASE("snapshot of a solved nonlocal state is self-consistent") {
  const Mesh mesh = generate_structured(10.0, 10.0, 4, 4, 4.0, 2e-3);
  const Materials mat = test_materials();
  SolverConfig cfg;
  cfg.method = Method::NonlocalGradient;
  cfg.l_c = 5.0;
  cfg.n_increments = 4;
  const AnalysisResult result = run_analysis(cfg, mesh, mat);
  const Snapshot snap = make_snapshot(mesh, result.final_state, mat, cfg);

  // export then compare the field against itself: exact zero.
  std::vector<double> ebar;
  for (const auto& r : snap.rows) ebar.push_back(r.eps_bar);
  CHECK(l2_mismatch(ebar, ebar) == 0.0);

  // Damage values come from the committed history.
  for (const auto& r : snap.rows) {
    const double kappa = result.final_state.history.kappa[4 * r.elem + r.ip];
    CHECK(r.d == damage(kappa, mat.damage).d);
  }
}

TEST_CASE("snapshot CSV round trip") {
  const Mesh mesh = generate_structured(3.0, 2.0, 3, 2, 0.0, 1e-3);
  const Materials mat = test_materials();
  SolverConfig cfg;
  cfg.method = Method::Local;
  cfg.n_increments = 2;
  const AnalysisResult result = run_analysis(cfg, mesh, mat);
  Snapshot snap = make_snapshot(mesh, result.final_state, mat, cfg);
  snap.reaction = 1.25;

  write_snapshot_csv(snap, "snap_roundtrip.csv");
  const Snapshot back = read_snapshot_csv("snap_roundtrip.csv");
  REQUIRE(back.rows.size() == snap.rows.size());
  CHECK(back.lf == snap.lf);
  CHECK(back.reaction == snap.reaction);
  for (size_t i = 0; i < snap.rows.size(); ++i) {
    CHECK(back.rows[i].x == snap.rows[i].x);
    CHECK(back.rows[i].eps_eq == snap.rows[i].eps_eq);
    CHECK(back.rows[i].eps_bar == snap.rows[i].eps_bar);
    CHECK(back.rows[i].d == snap.rows[i].d);
  }
}

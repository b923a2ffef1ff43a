#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "ifenn/mesh.hpp"

using namespace ifenn;

TEST_CASE("shape functions at the element center and corners") {
  const ShapeEval c = shape_q4(0.0, 0.0);
  for (int i = 0; i < 4; ++i) CHECK(c.N(i) == doctest::Approx(0.25));

  const ShapeEval k = shape_q4(1.0, 1.0);
  CHECK(k.N(0) == doctest::Approx(0.0));
  CHECK(k.N(1) == doctest::Approx(0.0));
  CHECK(k.N(2) == doctest::Approx(1.0));  // the (+1,+1) corner
  CHECK(k.N(3) == doctest::Approx(0.0));
}

TEST_CASE("partition of unity and zero-sum derivatives on random parent points") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const ShapeEval s = shape_q4(unit(rng), unit(rng));
    CHECK(s.N.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.dN.col(0).sum() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(s.dN.col(1).sum() == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("2x2 Gauss rule integrates low-order monomials exactly") {
  const auto rule = gauss_2x2();
  double sum_w = 0.0, xi2eta2 = 0.0, xi = 0.0;
  for (const QuadPoint& q : rule) {
    sum_w += q.weight;
    xi2eta2 += q.weight * q.xi * q.xi * q.eta * q.eta;
    xi += q.weight * q.xi;
  }
  CHECK(sum_w == doctest::Approx(4.0));
  // Exact integral of xi^2 eta^2 over the parent square is (2/3)(2/3).
  CHECK(xi2eta2 == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
  CHECK(xi == doctest::Approx(0.0));
}

namespace {

Mesh unit_square_mesh() {
  Mesh mesh;
  mesh.nodes = {{0, 0, 0}, {1, 1, 0}, {2, 1, 1}, {3, 0, 1}};
  mesh.elements = {{0, {0, 1, 2, 3}}};
  mesh.dirichlet = {{0, Dof::Ux, 0.0}};
  return mesh;
}

}  // namespace

TEST_CASE("isoparametric map of the unit square") {
  const Mesh mesh = unit_square_mesh();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const IsoMap m = isoparametric_map(mesh.elements[0], mesh, unit(rng), unit(rng));
    CHECK(m.detJ == doctest::Approx(0.25).epsilon(1e-14));
  }

  const IsoMap m = isoparametric_map(mesh.elements[0], mesh, 0.3, -0.4);
  Eigen::Matrix<double, 8, 1> rigid;
  rigid << 2.0, -1.5, 2.0, -1.5, 2.0, -1.5, 2.0, -1.5;
  CHECK((m.B * rigid).norm() == doctest::Approx(0.0).epsilon(1e-14));

  // u_x = x: nodal values equal nodal x coordinates, strain is (1, 0, 0).
  Eigen::Matrix<double, 8, 1> stretch = Eigen::Matrix<double, 8, 1>::Zero();
  for (int a = 0; a < 4; ++a) stretch(2 * a) = mesh.nodes[a].x;
  const Eigen::Vector3d eps = m.B * stretch;
  CHECK(eps(0) == doctest::Approx(1.0));
  CHECK(eps(1) == doctest::Approx(0.0));
  CHECK(eps(2) == doctest::Approx(0.0));
}

TEST_CASE("inverted element raises NonPositiveJacobian") {
  Mesh mesh = unit_square_mesh();
  std::swap(mesh.elements[0].nodes[1], mesh.elements[0].nodes[3]);  // clockwise
  CHECK_THROWS_AS(isoparametric_map(mesh.elements[0], mesh, 0.0, 0.0), NonPositiveJacobian);
}

TEST_CASE("structured generator counts and element size") {
  const Mesh mesh = generate_structured(100.0, 100.0, 50, 50, 40.0, 0.01);
  CHECK(mesh.n_elements() == 2500);
  CHECK(mesh.n_nodes() == 51 * 51);
  CHECK(mesh.nodes[1].x - mesh.nodes[0].x == doctest::Approx(2.0));

  const Mesh one = generate_structured(1.0, 1.0, 1, 1);
  CHECK(one.n_elements() == 1);
  CHECK(one.n_nodes() == 4);

  const Mesh strip = generate_structured(2.0, 1.0, 2, 1);
  CHECK(strip.n_elements() == 2);
  CHECK(strip.n_nodes() == 6);
  // Shared nodes between the two elements.
  CHECK(strip.elements[0].nodes[1] == strip.elements[1].nodes[0]);
  CHECK(strip.elements[0].nodes[2] == strip.elements[1].nodes[3]);
}

TEST_CASE("notch exceeding the domain is rejected") {
  CHECK_THROWS_AS(generate_structured(10.0, 10.0, 5, 5, 11.0), InvalidGeometry);
}

TEST_CASE("notch omits rollers on the cracked segment") {
  const Mesh mesh = generate_structured(10.0, 10.0, 5, 5, 4.0, 0.5);
  int rollers = 0;
  for (const DirichletBc& bc : mesh.dirichlet)
    if (bc.dof == Dof::Uy && bc.value == 0.0 && mesh.nodes[bc.node].y == 0.0) ++rollers;
  // Bottom nodes sit at x = 0, 2, 4, 6, 8, 10; the notch [0, 4) frees two.
  CHECK(rollers == 4);
}

TEST_CASE("generated meshes satisfy geometric invariants") {
  for (const Mesh& mesh :
       {generate_structured(100.0, 50.0, 10, 7, 30.0, 1.0), generate_double_notch(60.0, 125.0, 12, 20, 10.0),
        generate_l_shape(100.0, 5)}) {
    CHECK_NOTHROW(mesh.validate());
    for (const Element& el : mesh.elements)
      for (const QuadPoint& q : gauss_2x2())
        CHECK(isoparametric_map(el, mesh, q.xi, q.eta).detJ > 0.0);

    for (const BoundaryEdge& be : mesh.boundary) {
      const Element& el = mesh.elements[be.elem];
      double cx = 0.0, cy = 0.0;
      for (int nid : el.nodes) {
        cx += 0.25 * mesh.nodes[nid].x;
        cy += 0.25 * mesh.nodes[nid].y;
      }
      const Node& a = mesh.nodes[el.nodes[be.edge]];
      const Node& b = mesh.nodes[el.nodes[(be.edge + 1) % 4]];
      const double mx = 0.5 * (a.x + b.x) - cx;
      const double my = 0.5 * (a.y + b.y) - cy;
      CHECK(be.nx * mx + be.ny * my > 0.0);
      CHECK(std::hypot(be.nx, be.ny) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("double-notch slits duplicate mid-line nodes") {
  const Mesh mesh = generate_double_notch(60.0, 125.0, 12, 20, 10.0);
  // 13x21 grid plus one duplicated node per slit (two interior slit nodes per
  // side at 5 mm spacing: x = 0, 5 on the left and x = 55, 60 on the right).
  CHECK(mesh.n_nodes() == 13 * 21 + 4);
}

TEST_CASE("mesh file round trip is structurally identical") {
  const Mesh mesh = generate_structured(7.5, 3.25, 6, 4, 2.5, 0.125);
  const std::string path = "roundtrip_mesh.txt";
  write_mesh(mesh, path);
  const Mesh back = read_mesh(path);

  REQUIRE(back.n_nodes() == mesh.n_nodes());
  REQUIRE(back.n_elements() == mesh.n_elements());
  REQUIRE(back.boundary.size() == mesh.boundary.size());
  REQUIRE(back.dirichlet.size() == mesh.dirichlet.size());
  for (int i = 0; i < mesh.n_nodes(); ++i) {
    CHECK(back.nodes[i].x == mesh.nodes[i].x);
    CHECK(back.nodes[i].y == mesh.nodes[i].y);
  }
  for (int i = 0; i < mesh.n_elements(); ++i) CHECK(back.elements[i].nodes == mesh.elements[i].nodes);
  for (size_t i = 0; i < mesh.boundary.size(); ++i) {
    CHECK(back.boundary[i].elem == mesh.boundary[i].elem);
    CHECK(back.boundary[i].edge == mesh.boundary[i].edge);
    CHECK(back.boundary[i].nx == mesh.boundary[i].nx);
    CHECK(back.boundary[i].ny == mesh.boundary[i].ny);
  }
  for (size_t i = 0; i < mesh.dirichlet.size(); ++i) {
    CHECK(back.dirichlet[i].node == mesh.dirichlet[i].node);
    CHECK(back.dirichlet[i].value == mesh.dirichlet[i].value);
  }
}

TEST_CASE("malformed mesh files are rejected") {
  SUBCASE("element references a missing node") {
    std::ofstream out("bad_mesh1.txt");
    out << "NODES 4\n0 0 0\n1 1 0\n2 1 1\n3 0 1\n"
        << "ELEMENTS 1\n0 0 1 2 9\n"
        << "BOUNDARY 0\nDIRICHLET 1\n0 ux 0\n";
    out.close();
    CHECK_THROWS_AS(read_mesh("bad_mesh1.txt"), ConsistencyError);
  }
  SUBCASE("empty element section") {
    std::ofstream out("bad_mesh2.txt");
    out << "NODES 1\n0 0 0\nELEMENTS 0\nBOUNDARY 0\nDIRICHLET 1\n0 ux 0\n";
    out.close();
    CHECK_THROWS_AS(read_mesh("bad_mesh2.txt"), ConsistencyError);
  }
  SUBCASE("truncated node section carries a line number") {
    std::ofstream out("bad_mesh3.txt");
    out << "NODES 4\n0 0 0\n1 1 0\n";
    out.close();
    try {
      read_mesh("bad_mesh3.txt");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() >= 0);
    }
  }
}

TEST_CASE("clockwise elements are canonicalized on read") {
  std::ofstream out("cw_mesh.txt");
  out << "NODES 4\n0 0 0\n1 1 0\n2 1 1\n3 0 1\n"
      << "ELEMENTS 1\n0 0 3 2 1\n"  // clockwise ordering
      << "BOUNDARY 1\n0 3 flux\n"   // edge between old locals 3 (node 1) and 0
      << "DIRICHLET 1\n0 ux 0\n";
  out.close();
  const Mesh mesh = read_mesh("cw_mesh.txt");
  CHECK(isoparametric_map(mesh.elements[0], mesh, 0.0, 0.0).detJ > 0.0);
  // The old edge (node 1 -> node 0) is the bottom edge; after reordering it
  // must still be the bottom edge with a downward outward normal.
  REQUIRE(mesh.boundary.size() == 1);
  CHECK(mesh.boundary[0].ny == doctest::Approx(-1.0));
}

TEST_CASE("integration points: four per element, weights sum to four") {
  const Mesh mesh = generate_structured(4.0, 2.0, 2, 2);
  const auto ips = mesh.integration_points();
  REQUIRE(static_cast<int>(ips.size()) == mesh.n_ips());
  for (int e = 0; e < mesh.n_elements(); ++e) {
    double w = 0.0;
    for (int k = 0; k < 4; ++k) {
      CHECK(ips[4 * e + k].elem == e);
      CHECK(ips[4 * e + k].index == 4 * e + k);
      w += ips[4 * e + k].weight;
    }
    CHECK(w == doctest::Approx(4.0));
  }
}

#include "ifenn/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace ifenn {

namespace {

constexpr double kCornerXi[4] = {-1.0, 1.0, 1.0, -1.0};
constexpr double kCornerEta[4] = {-1.0, -1.0, 1.0, 1.0};

double signed_area(const Mesh& mesh, const Element& e) {
  double a = 0.0;
  for (int k = 0; k < 4; ++k) {
    const Node& p = mesh.nodes[e.nodes[k]];
    const Node& q = mesh.nodes[e.nodes[(k + 1) % 4]];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

// Outward unit normal of local edge e (local nodes e -> e+1) for a CCW quad.
void edge_normal(const Mesh& mesh, const Element& el, int edge, double& nx, double& ny) {
  const Node& a = mesh.nodes[el.nodes[edge]];
  const Node& b = mesh.nodes[el.nodes[(edge + 1) % 4]];
  const double tx = b.x - a.x;
  const double ty = b.y - a.y;
  const double len = std::hypot(tx, ty);
  if (len <= 0.0) throw ConsistencyError("degenerate boundary edge");
  nx = ty / len;
  ny = -tx / len;
}

// Exterior edges found by connectivity: an edge owned by exactly one element.
std::vector<BoundaryEdge> detect_boundary(const Mesh& mesh) {
  std::map<std::pair<int, int>, std::pair<int, int>> owner;  // node pair -> (elem, edge)
  std::map<std::pair<int, int>, int> count;
  for (const Element& el : mesh.elements) {
    for (int e = 0; e < 4; ++e) {
      int a = el.nodes[e];
      int b = el.nodes[(e + 1) % 4];
      auto key = std::minmax(a, b);
      ++count[key];
      owner[key] = {el.id, e};
    }
  }
  std::vector<BoundaryEdge> edges;
  for (const auto& [key, c] : count) {
    if (c != 1) continue;
    auto [elem, edge] = owner[key];
    BoundaryEdge be;
    be.elem = elem;
    be.edge = edge;
    be.flag = EdgeFlag::Flux;
    edge_normal(mesh, mesh.elements[elem], edge, be.nx, be.ny);
    edges.push_back(be);
  }
  std::sort(edges.begin(), edges.end(), [](const BoundaryEdge& l, const BoundaryEdge& r) {
    return std::tie(l.elem, l.edge) < std::tie(r.elem, r.edge);
  });
  return edges;
}

const char* flag_name(EdgeFlag f) {
  switch (f) {
    case EdgeFlag::Traction: return "traction";
    case EdgeFlag::Free: return "free";
    case EdgeFlag::Flux: return "flux";
  }
  return "flux";
}

EdgeFlag parse_flag(const std::string& s, long line) {
  if (s == "traction") return EdgeFlag::Traction;
  if (s == "free") return EdgeFlag::Free;
  if (s == "flux") return EdgeFlag::Flux;
  throw ParseError("unknown boundary flag '" + s + "'", line);
}

std::string fmt_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ShapeEval shape_q4(double xi, double eta) {
  ShapeEval s;
  for (int i = 0; i < 4; ++i) {
    const double xs = kCornerXi[i];
    const double es = kCornerEta[i];
    s.N(i) = 0.25 * (1.0 + xs * xi) * (1.0 + es * eta);
    s.dN(i, 0) = 0.25 * xs * (1.0 + es * eta);
    s.dN(i, 1) = 0.25 * es * (1.0 + xs * xi);
  }
  return s;
}

std::array<QuadPoint, 4> gauss_2x2() {
  const double a = 1.0 / std::sqrt(3.0);
  return {QuadPoint{-a, -a, 1.0}, QuadPoint{a, -a, 1.0}, QuadPoint{a, a, 1.0},
          QuadPoint{-a, a, 1.0}};
}

IsoMap isoparametric_map(const Element& elem, const Mesh& mesh, double xi, double eta) {
  const ShapeEval s = shape_q4(xi, eta);
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
  double x = 0.0, y = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Node& n = mesh.nodes[elem.nodes[i]];
    J(0, 0) += s.dN(i, 0) * n.x;
    J(0, 1) += s.dN(i, 0) * n.y;
    J(1, 0) += s.dN(i, 1) * n.x;
    J(1, 1) += s.dN(i, 1) * n.y;
    x += s.N(i) * n.x;
    y += s.N(i) * n.y;
  }
  const double detJ = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0);
  if (!(detJ > 0.0)) {
    throw NonPositiveJacobian("non-positive Jacobian (detJ = " + std::to_string(detJ) +
                              ") in element " + std::to_string(elem.id));
  }
  const Eigen::Matrix2d Jinv = (Eigen::Matrix2d() << J(1, 1), -J(0, 1), -J(1, 0), J(0, 0)).finished() / detJ;

  IsoMap m;
  m.detJ = detJ;
  m.x = x;
  m.y = y;
  m.N = s.N;
  m.B.setZero();
  for (int i = 0; i < 4; ++i) {
    const double dNdx = Jinv(0, 0) * s.dN(i, 0) + Jinv(0, 1) * s.dN(i, 1);
    const double dNdy = Jinv(1, 0) * s.dN(i, 0) + Jinv(1, 1) * s.dN(i, 1);
    m.dNdx(0, i) = dNdx;
    m.dNdx(1, i) = dNdy;
    m.B(0, 2 * i) = dNdx;
    m.B(1, 2 * i + 1) = dNdy;
    m.B(2, 2 * i) = dNdy;
    m.B(2, 2 * i + 1) = dNdx;
  }
  return m;
}

std::vector<IntegrationPoint> Mesh::integration_points() const {
  std::vector<IntegrationPoint> ips;
  ips.reserve(4 * elements.size());
  const auto rule = gauss_2x2();
  for (const Element& el : elements) {
    for (int k = 0; k < 4; ++k) {
      const IsoMap m = isoparametric_map(el, *this, rule[k].xi, rule[k].eta);
      IntegrationPoint ip;
      ip.elem = el.id;
      ip.xi = rule[k].xi;
      ip.eta = rule[k].eta;
      ip.weight = rule[k].weight;
      ip.x = m.x;
      ip.y = m.y;
      ip.index = 4 * el.id + k;
      ips.push_back(ip);
    }
  }
  return ips;
}

void Mesh::validate() const {
  if (nodes.empty()) throw ConsistencyError("mesh has no nodes");
  if (elements.empty()) throw ConsistencyError("mesh has no elements");
  for (int i = 0; i < n_nodes(); ++i) {
    if (nodes[i].id != i) throw ConsistencyError("node ids not contiguous from 0");
    if (!std::isfinite(nodes[i].x) || !std::isfinite(nodes[i].y))
      throw ConsistencyError("non-finite node coordinate");
  }
  for (int i = 0; i < n_elements(); ++i) {
    const Element& el = elements[i];
    if (el.id != i) throw ConsistencyError("element ids not contiguous from 0");
    for (int nid : el.nodes) {
      if (nid < 0 || nid >= n_nodes())
        throw ConsistencyError("element " + std::to_string(el.id) + " references missing node " +
                               std::to_string(nid));
    }
    for (const QuadPoint& q : gauss_2x2()) {
      try {
        isoparametric_map(el, *this, q.xi, q.eta);
      } catch (const NonPositiveJacobian&) {
        throw ConsistencyError("zero-area or inverted element " + std::to_string(el.id));
      }
    }
  }
  std::map<std::pair<int, int>, int> edge_count;
  for (const Element& el : elements)
    for (int e = 0; e < 4; ++e)
      ++edge_count[std::minmax(el.nodes[e], el.nodes[(e + 1) % 4])];
  for (const BoundaryEdge& be : boundary) {
    if (be.elem < 0 || be.elem >= n_elements() || be.edge < 0 || be.edge > 3)
      throw ConsistencyError("boundary edge references invalid element/edge");
    const Element& el = elements[be.elem];
    if (edge_count[std::minmax(el.nodes[be.edge], el.nodes[(be.edge + 1) % 4])] != 1)
      throw ConsistencyError("boundary edge is shared by two elements");
    const double n2 = be.nx * be.nx + be.ny * be.ny;
    if (std::abs(n2 - 1.0) > 1e-9) throw ConsistencyError("boundary normal not unit length");
  }
  if (dirichlet.empty()) throw ConsistencyError("Dirichlet set is empty");
  for (const DirichletBc& bc : dirichlet) {
    if (bc.node < 0 || bc.node >= n_nodes())
      throw ConsistencyError("Dirichlet constraint references missing node");
  }
}

Mesh generate_structured(double width, double height, int nx, int ny, double notch_length,
                         double top_displacement) {
  if (nx < 1 || ny < 1) throw InvalidGeometry("nx and ny must be >= 1");
  if (width <= 0.0 || height <= 0.0) throw InvalidGeometry("domain dimensions must be positive");
  if (notch_length < 0.0 || notch_length > width)
    throw InvalidGeometry("notch length exceeds domain width");

  Mesh mesh;
  const double dx = width / nx;
  const double dy = height / ny;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      mesh.nodes.push_back({j * (nx + 1) + i, i * dx, j * dy});

  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      Element el;
      el.id = j * nx + i;
      el.nodes = {j * (nx + 1) + i, j * (nx + 1) + i + 1, (j + 1) * (nx + 1) + i + 1,
                  (j + 1) * (nx + 1) + i};
      mesh.elements.push_back(el);
    }
  }
  mesh.boundary = detect_boundary(mesh);

  // Rollers on the intact ligament of the symmetry line; the notched segment
  // [0, notch_length) is left free.
  const double tol = 1e-9 * width;
  for (int i = 0; i <= nx; ++i) {
    const Node& n = mesh.nodes[i];
    if (n.x >= notch_length - tol) mesh.dirichlet.push_back({n.id, Dof::Uy, 0.0});
  }
  mesh.dirichlet.push_back({nx, Dof::Ux, 0.0});
  for (int i = 0; i <= nx; ++i) {
    const int id = ny * (nx + 1) + i;
    mesh.dirichlet.push_back({id, Dof::Uy, top_displacement});
  }
  mesh.validate();
  return mesh;
}

Mesh generate_double_notch(double width, double height, int nx, int ny, double notch_length,
                           double top_displacement) {
  if (nx < 1 || ny < 2) throw InvalidGeometry("need nx >= 1, ny >= 2");
  if (ny % 2 != 0) throw InvalidGeometry("ny must be even so the slits lie on a node line");
  if (notch_length < 0.0 || 2.0 * notch_length >= width)
    throw InvalidGeometry("slits meet: notch length must be < width/2");

  Mesh mesh = generate_structured(width, height, nx, ny, 0.0, top_displacement);
  mesh.dirichlet.clear();

  // Duplicate mid-line nodes strictly inside the slits; the slit-tip node is
  // shared. Elements in the row above the line switch to the copies.
  const int jm = ny / 2;
  const double dx = width / nx;
  const double tol = 1e-9 * width;
  std::map<int, int> dup;  // original node id -> top copy id
  for (int i = 0; i <= nx; ++i) {
    const double x = i * dx;
    const bool left = x < notch_length - tol;
    const bool right = x > width - notch_length + tol;
    if (!left && !right) continue;
    const int orig = jm * (nx + 1) + i;
    Node copy = mesh.nodes[orig];
    copy.id = mesh.n_nodes();
    mesh.nodes.push_back(copy);
    dup[orig] = copy.id;
  }
  for (Element& el : mesh.elements) {
    const int j = el.id / nx;
    if (j != jm) continue;  // only the row sitting on the slit line
    for (int& nid : el.nodes) {
      auto it = dup.find(nid);
      if (it != dup.end()) nid = it->second;
    }
  }
  mesh.boundary = detect_boundary(mesh);

  for (int i = 0; i <= nx; ++i) {
    mesh.dirichlet.push_back({i, Dof::Ux, 0.0});
    mesh.dirichlet.push_back({i, Dof::Uy, 0.0});
  }
  for (int i = 0; i <= nx; ++i) {
    const int id = ny * (nx + 1) + i;
    mesh.dirichlet.push_back({id, Dof::Uy, top_displacement});
  }
  mesh.validate();
  return mesh;
}

Mesh generate_l_shape(double size, int n, double load_displacement) {
  if (n < 1) throw InvalidGeometry("n must be >= 1");
  if (size <= 0.0) throw InvalidGeometry("size must be positive");

  Mesh mesh;
  const int g = 2 * n;  // grid cells per side
  const double h = size / g;
  std::vector<std::vector<int>> id(g + 1, std::vector<int>(g + 1, -1));
  for (int j = 0; j <= g; ++j) {
    for (int i = 0; i <= g; ++i) {
      if (i > n && j > n) continue;  // removed upper-right quadrant interior
      id[j][i] = mesh.n_nodes();
      mesh.nodes.push_back({mesh.n_nodes(), i * h, j * h});
    }
  }
  for (int j = 0; j < g; ++j) {
    for (int i = 0; i < g; ++i) {
      if (i >= n && j >= n) continue;
      Element el;
      el.id = mesh.n_elements();
      el.nodes = {id[j][i], id[j][i + 1], id[j + 1][i + 1], id[j + 1][i]};
      mesh.elements.push_back(el);
    }
  }
  mesh.boundary = detect_boundary(mesh);

  for (int j = 0; j <= g; ++j) {
    mesh.dirichlet.push_back({id[j][0], Dof::Ux, 0.0});
    mesh.dirichlet.push_back({id[j][0], Dof::Uy, 0.0});
  }
  for (int j = 0; j <= n; ++j)
    mesh.dirichlet.push_back({id[j][g], Dof::Uy, -load_displacement});
  mesh.validate();
  return mesh;
}

Mesh read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mesh file '" + path + "'");

  Mesh mesh;
  std::vector<char> reversed;  // per element: canonicalized from clockwise input
  long lineno = 0;
  std::string line;

  auto next_tokens = [&](std::vector<std::string>& tok) -> bool {
    tok.clear();
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      std::string t;
      while (ss >> t) tok.push_back(t);
      if (!tok.empty()) return true;
    }
    return false;
  };

  auto expect_count = [&](std::vector<std::string>& tok, const char* section) -> long {
    if (tok.size() != 2 || tok[0] != section)
      throw ParseError(std::string("expected '") + section + " <count>'", lineno);
    try {
      return std::stol(tok[1]);
    } catch (...) {
      throw ParseError("bad count for section " + std::string(section), lineno);
    }
  };

  std::vector<std::string> tok;
  if (!next_tokens(tok)) throw ParseError("empty mesh file", lineno);
  long n_nodes = expect_count(tok, "NODES");
  for (long i = 0; i < n_nodes; ++i) {
    if (!next_tokens(tok)) throw ParseError("truncated NODES section", lineno);
    if (tok.size() != 3) throw ParseError("node row needs '<id> <x> <y>'", lineno);
    try {
      mesh.nodes.push_back({std::stoi(tok[0]), std::stod(tok[1]), std::stod(tok[2])});
    } catch (...) {
      throw ParseError("malformed node row", lineno);
    }
  }

  if (!next_tokens(tok)) throw ParseError("missing ELEMENTS section", lineno);
  long n_elems = expect_count(tok, "ELEMENTS");
  if (n_elems == 0) throw ConsistencyError("empty element section");
  for (long i = 0; i < n_elems; ++i) {
    if (!next_tokens(tok)) throw ParseError("truncated ELEMENTS section", lineno);
    if (tok.size() != 5) throw ParseError("element row needs '<id> <n0> <n1> <n2> <n3>'", lineno);
    Element el;
    try {
      el.id = std::stoi(tok[0]);
      for (int k = 0; k < 4; ++k) el.nodes[k] = std::stoi(tok[k + 1]);
    } catch (...) {
      throw ParseError("malformed element row", lineno);
    }
    mesh.elements.push_back(el);
  }

  // Canonicalize node order counterclockwise before touching geometry.
  reversed.assign(mesh.elements.size(), 0);
  for (size_t i = 0; i < mesh.elements.size(); ++i) {
    Element& el = mesh.elements[i];
    for (int nid : el.nodes)
      if (nid < 0 || nid >= mesh.n_nodes())
        throw ConsistencyError("element " + std::to_string(el.id) + " references missing node " +
                               std::to_string(nid));
    if (signed_area(mesh, el) < 0.0) {
      std::swap(el.nodes[1], el.nodes[3]);
      reversed[i] = 1;
    }
  }

  if (!next_tokens(tok)) throw ParseError("missing BOUNDARY section", lineno);
  long n_bnd = expect_count(tok, "BOUNDARY");
  for (long i = 0; i < n_bnd; ++i) {
    if (!next_tokens(tok)) throw ParseError("truncated BOUNDARY section", lineno);
    if (tok.size() != 3) throw ParseError("boundary row needs '<elem> <edge> <flag>'", lineno);
    BoundaryEdge be;
    try {
      be.elem = std::stoi(tok[0]);
      be.edge = std::stoi(tok[1]);
    } catch (...) {
      throw ParseError("malformed boundary row", lineno);
    }
    be.flag = parse_flag(tok[2], lineno);
    if (be.elem < 0 || be.elem >= mesh.n_elements() || be.edge < 0 || be.edge > 3)
      throw ConsistencyError("boundary edge references invalid element/edge");
    if (reversed[be.elem]) be.edge = 3 - be.edge;
    edge_normal(mesh, mesh.elements[be.elem], be.edge, be.nx, be.ny);
    mesh.boundary.push_back(be);
  }

  if (!next_tokens(tok)) throw ParseError("missing DIRICHLET section", lineno);
  long n_dir = expect_count(tok, "DIRICHLET");
  for (long i = 0; i < n_dir; ++i) {
    if (!next_tokens(tok)) throw ParseError("truncated DIRICHLET section", lineno);
    if (tok.size() != 3) throw ParseError("dirichlet row needs '<node> <dof> <value>'", lineno);
    DirichletBc bc;
    try {
      bc.node = std::stoi(tok[0]);
      bc.value = std::stod(tok[2]);
    } catch (...) {
      throw ParseError("malformed dirichlet row", lineno);
    }
    if (tok[1] == "ux")
      bc.dof = Dof::Ux;
    else if (tok[1] == "uy")
      bc.dof = Dof::Uy;
    else
      throw ParseError("dof must be 'ux' or 'uy'", lineno);
    mesh.dirichlet.push_back(bc);
  }

  mesh.validate();
  return mesh;
}

void write_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "# ifenn mesh, lengths in mm\n";
  out << "NODES " << mesh.n_nodes() << "\n";
  for (const Node& n : mesh.nodes)
    out << n.id << " " << fmt_full(n.x) << " " << fmt_full(n.y) << "\n";
  out << "ELEMENTS " << mesh.n_elements() << "\n";
  for (const Element& el : mesh.elements)
    out << el.id << " " << el.nodes[0] << " " << el.nodes[1] << " " << el.nodes[2] << " "
        << el.nodes[3] << "\n";
  out << "BOUNDARY " << mesh.boundary.size() << "\n";
  for (const BoundaryEdge& be : mesh.boundary)
    out << be.elem << " " << be.edge << " " << flag_name(be.flag) << "\n";
  out << "DIRICHLET " << mesh.dirichlet.size() << "\n";
  for (const DirichletBc& bc : mesh.dirichlet)
    out << bc.node << " " << (bc.dof == Dof::Ux ? "ux" : "uy") << " " << fmt_full(bc.value)
        << "\n";
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace ifenn

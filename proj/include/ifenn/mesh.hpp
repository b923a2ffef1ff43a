#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "ifenn/errors.hpp"

namespace ifenn {

struct Node {
  int id = -1;
  double x = 0.0;  // mm
  double y = 0.0;  // mm
};

/// Bilinear quadrilateral; node ids stored counterclockwise.
struct Element {
  int id = -1;
  std::array<int, 4> nodes{};
};

enum class EdgeFlag { Traction, Free, Flux };

/// Exterior element edge. Local edge e connects local nodes e and (e+1)%4.
struct BoundaryEdge {
  int elem = -1;
  int edge = -1;
  double nx = 0.0, ny = 0.0;  // outward unit normal
  EdgeFlag flag = EdgeFlag::Flux;
};

enum class Dof { Ux = 0, Uy = 1 };

/// Prescribed nodal displacement, scaled by the loadfactor at solve time.
struct DirichletBc {
  int node = -1;
  Dof dof = Dof::Ux;
  double value = 0.0;  // mm per unit loadfactor
};

struct QuadPoint {
  double xi, eta, weight;
};

struct IntegrationPoint {
  int elem = -1;
  double xi = 0.0, eta = 0.0, weight = 0.0;
  double x = 0.0, y = 0.0;  // global coords (mm)
  int index = -1;           // global IP index, 4*elem + local
};

struct Mesh {
  std::vector<Node> nodes;
  std::vector<Element> elements;
  std::vector<BoundaryEdge> boundary;
  std::vector<DirichletBc> dirichlet;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_elements() const { return static_cast<int>(elements.size()); }
  int n_ips() const { return 4 * n_elements(); }

  /// All integration points in global index order (4 per element).
  std::vector<IntegrationPoint> integration_points() const;

  /// Throws ConsistencyError / NonPositiveJacobian on a malformed mesh.
  void validate() const;
};

struct ShapeEval {
  Eigen::Vector4d N;
  Eigen::Matrix<double, 4, 2> dN;  // dN_i/dxi, dN_i/deta
};

/// Bilinear Q4 shape functions on the parent square [-1,1]^2.
ShapeEval shape_q4(double xi, double eta);

/// Full 2x2 Gauss rule on the parent square; weights sum to 4.
std::array<QuadPoint, 4> gauss_2x2();

struct IsoMap {
  Eigen::Matrix<double, 3, 8> B;    // Voigt strain-displacement (exx, eyy, gxy)
  double detJ = 0.0;
  double x = 0.0, y = 0.0;          // mapped global coords
  Eigen::Vector4d N;
  Eigen::Matrix<double, 2, 4> dNdx; // global shape-function gradients
};

/// Isoparametric map at parent point (xi, eta). Throws NonPositiveJacobian.
IsoMap isoparametric_map(const Element& elem, const Mesh& mesh, double xi, double eta);

/// Structured rectangular mesh for the mode-I half-domain setup: rollers
/// (uy = 0) on the bottom edge outside the notched segment [0, notch_length),
/// ux = 0 at the bottom-right corner, uy = top_displacement prescribed on the
/// top edge per unit loadfactor. notch_length = 0 gives the un-notched strip.
Mesh generate_structured(double width, double height, int nx, int ny,
                         double notch_length = 0.0, double top_displacement = 1.0);

/// Direct-tension specimen with two horizontal edge slits at mid-height,
/// realized as duplicated node lines. Bottom edge fixed, top edge pulled.
Mesh generate_double_notch(double width, double height, int nx, int ny,
                           double notch_length, double top_displacement = 1.0);

/// L-shaped domain (square with the upper-right quadrant removed), fixed on
/// the left side, downward load prescribed on the right edge.
Mesh generate_l_shape(double size, int n, double load_displacement = 1.0);

Mesh read_mesh(const std::string& path);
void write_mesh(const Mesh& mesh, const std::string& path);

}  // namespace ifenn

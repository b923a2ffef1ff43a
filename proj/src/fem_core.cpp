#include "ifenn/fem_core.hpp"

#include <cmath>

namespace ifenn {

namespace {

struct IpState {
  IsoMap map;
  Eigen::Vector3d eps;
  EqStrain eq;
};

IpState ip_state(const Element& elem, const Mesh& mesh, const Eigen::Matrix<double, 8, 1>& u_elem,
                 const QuadPoint& q, const Materials& mat) {
  IpState s{isoparametric_map(elem, mesh, q.xi, q.eta), {}, {}};
  s.eps = s.map.B * u_elem;
  s.eq = eq_strain(s.eps, mat.measure, mat.elastic.nu);
  return s;
}

}  // namespace

ElementKernel element_local(const Element& elem, const Mesh& mesh,
                            const Eigen::Matrix<double, 8, 1>& u_elem,
                            std::span<const double, 4> kappa_elem, const Materials& mat) {
  const Eigen::Matrix3d C = elasticity_matrix(mat.elastic);
  ElementKernel k;
  k.J = Eigen::MatrixXd::Zero(8, 8);
  k.R = Eigen::VectorXd::Zero(8);

  const auto rule = gauss_2x2();
  for (int q = 0; q < 4; ++q) {
    const IpState s = ip_state(elem, mesh, u_elem, rule[q], mat);
    const double w = rule[q].weight * s.map.detJ;

    const bool loading = s.eq.value >= kappa_elem[q];
    const double kappa = loading ? s.eq.value : kappa_elem[q];
    k.kappa_trial[q] = kappa;
    const DamageEval dm = damage(kappa, mat.damage);

    const Eigen::Vector3d sigma = (1.0 - dm.d) * (C * s.eps);
    k.R += w * (s.map.B.transpose() * sigma);
    k.J += w * (s.map.B.transpose() * ((1.0 - dm.d) * C) * s.map.B);
    if (loading && dm.dd_dkappa != 0.0) {
      const Eigen::Matrix<double, 8, 1> col = s.map.B.transpose() * (C * s.eps);
      const Eigen::Matrix<double, 1, 8> row =
          dm.dd_dkappa * (s.eq.grad.transpose() * s.map.B);
      k.J -= w * (col * row);
    }
  }
  return k;
}

ElementKernel element_nonlocal(const Element& elem, const Mesh& mesh,
                               const Eigen::Matrix<double, 8, 1>& u_elem,
                               const Eigen::Vector4d& ebar_elem,
                               std::span<const double, 4> kappa_elem, const Materials& mat,
                               double g) {
  const Eigen::Matrix3d C = elasticity_matrix(mat.elastic);
  ElementKernel k;
  k.J = Eigen::MatrixXd::Zero(12, 12);
  k.R = Eigen::VectorXd::Zero(12);

  const auto rule = gauss_2x2();
  for (int q = 0; q < 4; ++q) {
    const IpState s = ip_state(elem, mesh, u_elem, rule[q], mat);
    const double w = rule[q].weight * s.map.detJ;

    const double ebar_ip = s.map.N.dot(ebar_elem);
    const bool loading = ebar_ip >= kappa_elem[q];
    const double kappa = loading ? ebar_ip : kappa_elem[q];
    k.kappa_trial[q] = kappa;
    const DamageEval dm = damage(kappa, mat.damage);
    const double dd_debar = loading ? dm.dd_dkappa : 0.0;

    const Eigen::Vector3d sigma = (1.0 - dm.d) * (C * s.eps);
    const Eigen::Vector2d grad_ebar = s.map.dNdx * ebar_elem;

    // Residuals: momentum block then the screened-Poisson strain block.
    k.R.head<8>() += w * (s.map.B.transpose() * sigma);
    k.R.tail<4>() += w * (s.map.dNdx.transpose() * (g * grad_ebar) +
                          s.map.N * (ebar_ip - s.eq.value));

    // J_uu
    k.J.topLeftCorner<8, 8>() +=
        w * (s.map.B.transpose() * ((1.0 - dm.d) * C) * s.map.B);
    // J_ue = -int B^T C (dd/debar) eps N
    if (dd_debar != 0.0) {
      const Eigen::Matrix<double, 8, 1> col = s.map.B.transpose() * (C * s.eps);
      k.J.topRightCorner<8, 4>() -= w * dd_debar * (col * s.map.N.transpose());
    }
    // J_eu = -int N^T (deq/deps) B
    k.J.bottomLeftCorner<4, 8>() -=
        w * (s.map.N * (s.eq.grad.transpose() * s.map.B));
    // J_ee = int (N^T N + B^T g B)
    k.J.bottomRightCorner<4, 4>() +=
        w * (s.map.N * s.map.N.transpose() + g * (s.map.dNdx.transpose() * s.map.dNdx));
  }
  return k;
}

ElementKernel element_ifenn(const Element& elem, const Mesh& mesh,
                            const Eigen::Matrix<double, 8, 1>& u_elem,
                            std::span<const double, 4> kappa_elem, const Materials& mat,
                            const IFennFeed& feed) {
  if (!feed.covers(4 * elem.id, 4 * elem.id + 4))
    throw MissingFeed("network feed missing for element " + std::to_string(elem.id));

  const Eigen::Matrix3d C = elasticity_matrix(mat.elastic);
  ElementKernel k;
  k.J = Eigen::MatrixXd::Zero(8, 8);
  k.R = Eigen::VectorXd::Zero(8);

  const auto rule = gauss_2x2();
  for (int q = 0; q < 4; ++q) {
    const IpState s = ip_state(elem, mesh, u_elem, rule[q], mat);
    const double w = rule[q].weight * s.map.detJ;
    const int ip = 4 * elem.id + q;

    const double ebar_nn = feed.ebar[ip];
    const bool loading = ebar_nn >= kappa_elem[q];
    const double kappa = loading ? ebar_nn : kappa_elem[q];
    k.kappa_trial[q] = kappa;
    const DamageEval dm = damage(kappa, mat.damage);

    const Eigen::Vector3d sigma = (1.0 - dm.d) * (C * s.eps);
    k.R += w * (s.map.B.transpose() * sigma);
    k.J += w * (s.map.B.transpose() * ((1.0 - dm.d) * C) * s.map.B);

    // Four-factor chain rule: dd/debar_nn * debar_nn/deq * deq/deps * deps/du.
    const double chain = (loading ? dm.dd_dkappa : 0.0) * feed.debar_deq[ip];
    if (chain != 0.0) {
      const Eigen::Matrix<double, 8, 1> col = s.map.B.transpose() * (C * s.eps);
      const Eigen::Matrix<double, 1, 8> row = chain * (s.eq.grad.transpose() * s.map.B);
      k.J -= w * (col * row);
    }
  }
  return k;
}

std::vector<int> GlobalSystem::free_dofs() const {
  std::vector<int> free;
  free.reserve(fixed.size());
  for (int i = 0; i < static_cast<int>(fixed.size()); ++i)
    if (!fixed[i]) free.push_back(i);
  return free;
}

Eigen::SparseMatrix<double> GlobalSystem::reduced_matrix() const {
  std::vector<int> full_to_free(fixed.size(), -1);
  const auto free = free_dofs();
  for (int i = 0; i < static_cast<int>(free.size()); ++i) full_to_free[free[i]] = i;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(J.nonZeros());
  for (int col = 0; col < J.outerSize(); ++col) {
    if (fixed[col]) continue;
    for (Eigen::SparseMatrix<double>::InnerIterator it(J, col); it; ++it) {
      if (fixed[it.row()]) continue;
      trips.emplace_back(full_to_free[it.row()], full_to_free[col], it.value());
    }
  }
  Eigen::SparseMatrix<double> Jf(free.size(), free.size());
  Jf.setFromTriplets(trips.begin(), trips.end());
  return Jf;
}

Eigen::VectorXd GlobalSystem::reduced_residual() const {
  const auto free = free_dofs();
  Eigen::VectorXd Rf(free.size());
  for (int i = 0; i < static_cast<int>(free.size()); ++i) Rf(i) = R(free[i]);
  return Rf;
}

double GlobalSystem::reaction(int node, Dof dof) const {
  return R(dofmap.u_dof(node, static_cast<int>(dof)));
}

GlobalSystem assemble(const Mesh& mesh, const DofMap& dofmap,
                      const std::vector<ElementKernel>& kernels) {
  if (static_cast<int>(kernels.size()) != mesh.n_elements())
    throw DimensionMismatch("one kernel per element required");
  if (dofmap.n_nodes != mesh.n_nodes())
    throw DimensionMismatch("dof map node count does not match mesh");

  const int n = dofmap.total();
  const int ed = dofmap.elem_dofs();

  GlobalSystem sys;
  sys.dofmap = dofmap;
  sys.R = Eigen::VectorXd::Zero(n);
  sys.fixed.assign(n, 0);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(kernels.size() * ed * ed);
  std::vector<int> gdof(ed);

  for (const Element& el : mesh.elements) {
    const ElementKernel& k = kernels[el.id];
    if (k.J.rows() != ed || k.J.cols() != ed || k.R.size() != ed)
      throw DimensionMismatch("kernel dimensions do not match dof map");
    for (int a = 0; a < 4; ++a) {
      gdof[2 * a] = dofmap.u_dof(el.nodes[a], 0);
      gdof[2 * a + 1] = dofmap.u_dof(el.nodes[a], 1);
      if (dofmap.method == Method::NonlocalGradient) gdof[8 + a] = dofmap.ebar_dof(el.nodes[a]);
    }
    for (int r = 0; r < ed; ++r) {
      sys.R(gdof[r]) += k.R(r);
      for (int c = 0; c < ed; ++c) trips.emplace_back(gdof[r], gdof[c], k.J(r, c));
    }
  }

  sys.J.resize(n, n);
  sys.J.setFromTriplets(trips.begin(), trips.end());

  for (const DirichletBc& bc : mesh.dirichlet)
    sys.fixed[dofmap.u_dof(bc.node, static_cast<int>(bc.dof))] = 1;
  return sys;
}

}  // namespace ifenn

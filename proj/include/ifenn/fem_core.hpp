#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <span>
#include <vector>

#include "ifenn/constitutive.hpp"
#include "ifenn/mesh.hpp"

namespace ifenn {

enum class Method { Local, NonlocalGradient, Ifenn };

/// Degree-of-freedom layout. Displacements are interleaved (2*node + comp);
/// the gradient method appends one non-local strain dof per node.
struct DofMap {
  Method method = Method::Local;
  int n_nodes = 0;

  int total() const {
    return method == Method::NonlocalGradient ? 3 * n_nodes : 2 * n_nodes;
  }
  int u_dof(int node, int comp) const { return 2 * node + comp; }
  int ebar_dof(int node) const { return 2 * n_nodes + node; }
  int elem_dofs() const { return method == Method::NonlocalGradient ? 12 : 8; }
};

/// Dense element Jacobian/residual pair plus the trial history at its 4 IPs.
/// Gradient-method kernels are 12x12 ordered [u0x u0y ... u3y | ebar0..ebar3].
struct ElementKernel {
  Eigen::MatrixXd J;
  Eigen::VectorXd R;
  std::array<double, 4> kappa_trial{};
};

struct Materials {
  ElasticParams elastic;
  StrainMeasure measure;
  DamageParams damage;
};

/// Per-IP network outputs consumed by the ifenn kernel, indexed by global IP.
struct IFennFeed {
  std::vector<double> ebar;       // predicted non-local equivalent strain
  std::vector<double> debar_deq;  // its derivative w.r.t. the local equivalent strain

  bool covers(int ip_begin, int ip_end) const {
    return ip_begin >= 0 && ip_end <= static_cast<int>(ebar.size()) &&
           ip_end <= static_cast<int>(debar_deq.size());
  }
};

ElementKernel element_local(const Element& elem, const Mesh& mesh,
                            const Eigen::Matrix<double, 8, 1>& u_elem,
                            std::span<const double, 4> kappa_elem, const Materials& mat);

ElementKernel element_nonlocal(const Element& elem, const Mesh& mesh,
                               const Eigen::Matrix<double, 8, 1>& u_elem,
                               const Eigen::Vector4d& ebar_elem,
                               std::span<const double, 4> kappa_elem, const Materials& mat,
                               double g);

ElementKernel element_ifenn(const Element& elem, const Mesh& mesh,
                            const Eigen::Matrix<double, 8, 1>& u_elem,
                            std::span<const double, 4> kappa_elem, const Materials& mat,
                            const IFennFeed& feed);

/// Assembled global system before Dirichlet condensation, plus everything
/// needed to condense and to recover reactions.
struct GlobalSystem {
  DofMap dofmap;
  Eigen::SparseMatrix<double> J;  // full size
  Eigen::VectorXd R;              // full size
  std::vector<char> fixed;        // per-dof Dirichlet marker

  std::vector<int> free_dofs() const;
  Eigen::SparseMatrix<double> reduced_matrix() const;
  Eigen::VectorXd reduced_residual() const;

  /// Residual entries at constrained dofs are the support reactions.
  double reaction(int node, Dof dof) const;
};

GlobalSystem assemble(const Mesh& mesh, const DofMap& dofmap,
                      const std::vector<ElementKernel>& kernels);

}  // namespace ifenn

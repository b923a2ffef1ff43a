#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <utility>
#include <vector>

#include "ifenn/fem_core.hpp"
#include "ifenn/pinn.hpp"

namespace ifenn {

struct SolverConfig {
  Method method = Method::NonlocalGradient;
  double tol = 1e-6;         // on |delta_u_last| / |delta_u_1|, free dofs
  int max_iter = 20;
  int n_increments = 200;
  double step_reduction = 0.5;
  int max_halvings = 10;
  double l_c = 4.0;          // mm
  std::vector<double> snapshot_lfs;

  double g() const { return 0.5 * l_c * l_c; }
};

struct FieldState {
  Eigen::VectorXd u;     // nodal displacements, 2n
  Eigen::VectorXd ebar;  // nodal non-local strain (gradient method), else empty
  HistoryField history;  // per global IP
  double loadfactor = 0.0;
};

FieldState initial_state(const Mesh& mesh, Method method);

/// Worker count for element-kernel evaluation (default 1). Kernels are pure
/// and stored by element id, so assembly order and results are bitwise
/// identical for any worker count.
void set_kernel_threads(int n);
int kernel_threads();

struct IncrementResult {
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_norms;  // free-dof ||R||_2 per iteration
  std::vector<double> delta_norms;     // free displacement-dof ||delta u||_2 per iteration
  double reaction = 0.0;               // force sum over loaded constrained dofs
  int system_dim = 0;                  // linear-system dimension (free dofs)
  double seconds = 0.0;
};

/// Sparse LU solve; handles the nonsymmetric gradient-method Jacobian.
/// Throws SingularMatrix on a singular or numerically failed factorization.
Eigen::VectorXd linear_solve(const Eigen::SparseMatrix<double>& J, const Eigen::VectorXd& rhs);

/// L2 norms of the free-dof residual and a solution increment.
std::pair<double, double> residual_norms(const GlobalSystem& sys, const Eigen::VectorXd& delta);

/// One load increment at loadfactor lf starting from an accepted state.
/// History is committed only on convergence; on failure the returned state is
/// the input state and result.converged is false. The ifenn method re-queries
/// the network at every iteration and requires mlp != nullptr.
std::pair<FieldState, IncrementResult> newton_increment(const FieldState& state, double lf,
                                                        const SolverConfig& cfg, const Mesh& mesh,
                                                        const Materials& mat,
                                                        const Mlp* mlp = nullptr);

struct CurveRow {
  double lf = 0.0;
  double reaction = 0.0;
  int iterations = 0;
  int ndof = 0;  // linear-system dimension
};

struct AnalysisResult {
  std::vector<IncrementResult> increments;
  std::vector<CurveRow> curve;
  FieldState final_state;
  // One entry per requested snapshot loadfactor: the converged state whose
  // loadfactor is nearest the request.
  std::vector<std::pair<double, FieldState>> snapshots;
  double total_seconds = 0.0;
};

/// Marches the loadfactor from 0 to 1 with automatic step halving on failed
/// increments. Throws AnalysisAborted when the step falls below 1e-6 of the
/// nominal step or the halving budget is exhausted.
AnalysisResult run_analysis(const SolverConfig& cfg, const Mesh& mesh, const Materials& mat,
                            const Mlp* mlp = nullptr);

}  // namespace ifenn

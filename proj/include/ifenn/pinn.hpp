#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ifenn/errors.hpp"

namespace ifenn {

/// Fully connected tanh network. W[l] maps layer l activations (fan_in cols)
/// to layer l+1 (fan_out rows); hidden layers use tanh, the output layer is
/// identity. The eps_eq input (row 3) is multiplied by 10^scale_exp before
/// the first layer and the output is divided by the same factor, so all
/// public entry points speak physical units.
struct Mlp {
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
  int scale_exp = 0;

  int n_layers() const { return static_cast<int>(W.size()); }
  int input_width() const { return static_cast<int>(W.front().cols()); }
  int output_width() const { return static_cast<int>(W.back().rows()); }
  double scale() const;
};

/// Glorot-uniform weights, zero biases; bitwise deterministic for a seed.
Mlp init_xavier(const std::vector<int>& layer_sizes, int scale_exp, std::uint64_t seed);

/// Collocation rows in physical units. Interior rows sit at integration
/// points; boundary rows at boundary nodes and carry outward unit normals.
struct CollocationSet {
  struct Interior {
    double x, y, g, eps_eq, lf;
  };
  struct Boundary {
    double x, y, g, eps_eq, lf, nx, ny;
  };
  bool has_lf = false;
  std::vector<Interior> interior;
  std::vector<Boundary> boundary;

  int input_width() const { return has_lf ? 5 : 4; }
  Eigen::MatrixXd interior_inputs() const;
  Eigen::MatrixXd boundary_inputs() const;
};

/// Network output and its input derivatives, all in physical units.
struct DerivBundle {
  double ebar = 0.0;
  double dx = 0.0, dy = 0.0;    // 1/mm
  double dxx = 0.0, dyy = 0.0;  // 1/mm^2
  double deq = 0.0;             // dimensionless
};

/// X has one column per sample, rows (x, y, g, eps_eq[, lf]).
Eigen::VectorXd forward(const Mlp& mlp, const Eigen::MatrixXd& X);

/// Value and d/d eps_eq only: the per-iteration quantities the solver needs.
void forward_feed(const Mlp& mlp, const Eigen::MatrixXd& X, Eigen::VectorXd& ebar,
                  Eigen::VectorXd& deq);

std::vector<DerivBundle> forward_derivs(const Mlp& mlp, const Eigen::MatrixXd& X);

inline double pde_residual(const DerivBundle& b, double g, double eps_eq) {
  return b.ebar - g * (b.dxx + b.dyy) - eps_eq;
}

inline double bc_residual(const DerivBundle& b, double nx, double ny) {
  return nx * b.dx + ny * b.dy;
}

Eigen::VectorXd flatten_params(const Mlp& mlp);
void set_params(Mlp& mlp, const Eigen::VectorXd& theta);

/// Cost J = ||PDE||_2 over interior points + ||BC||_2 over boundary points
/// (plain L2 norms, not means). Fills the flattened parameter gradient when
/// requested. Throws EmptyDataset when the interior set is empty.
double loss(const Mlp& mlp, const CollocationSet& data, Eigen::VectorXd* grad = nullptr);

struct TrainConfig {
  int epochs = 20000;
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps_hat = 1e-8;
  bool lbfgs_enabled = false;
  int lbfgs_memory = 20;
  int lbfgs_max_steps = 200;
  double lbfgs_grad_tol = 1e-8;
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> loss_history;  // one entry per Adam epoch / L-BFGS step
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Full-batch Adam, then optional L-BFGS polish. Throws DivergedLoss if the
/// cost becomes non-finite.
TrainReport train(Mlp& mlp, const CollocationSet& data, const TrainConfig& cfg);

void save_weights(const Mlp& mlp, const std::string& path);
Mlp load_weights(const std::string& path);

void write_collocation(const CollocationSet& data, const std::string& path);
CollocationSet read_collocation(const std::string& path);

}  // namespace ifenn

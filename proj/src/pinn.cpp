#include "ifenn/pinn.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

namespace ifenn {

namespace {

constexpr int kEqRow = 3;  // eps_eq position in the input block

struct ChainFlags {
  bool xy1 = false;  // d/dx, d/dy
  bool xy2 = false;  // d2/dx2, d2/dy2 (implies xy1)
  bool eq1 = false;  // d/d eps_eq (scaled input)
};

// Preallocated per-level/per-layer buffers. Level l holds activations and
// input sensitivities after layer l-1; layers keep the pre-activation
// derivative products the reverse pass needs.
struct Workspace {
  std::vector<Eigen::MatrixXd> A, Ux, Uy, Vx, Vy, Us;   // levels 0..L
  std::vector<Eigen::MatrixXd> Qx, Qy, Rx, Ry;          // layers 0..L-1
  // Ping-pong adjoint buffers sized to the widest layer.
  Eigen::MatrixXd Abar[2], Uxbar[2], Uybar[2], Vxbar[2], Vybar[2];
  Eigen::MatrixXd Pbar, Qxbar, Qybar, Rxbar, Rybar;

  void prepare(const Mlp& mlp, int N, const ChainFlags& f) {
    const int L = mlp.n_layers();
    auto fit = [N](std::vector<Eigen::MatrixXd>& v, size_t count) { v.resize(count); };
    fit(A, L + 1);
    if (f.xy1) {
      fit(Ux, L + 1);
      fit(Uy, L + 1);
      fit(Qx, L);
      fit(Qy, L);
    }
    if (f.xy2) {
      fit(Vx, L + 1);
      fit(Vy, L + 1);
      fit(Rx, L);
      fit(Ry, L);
    }
    if (f.eq1) fit(Us, L + 1);
  }
};

Eigen::MatrixXd scaled_inputs(const Mlp& mlp, const Eigen::MatrixXd& X) {
  if (X.rows() != mlp.input_width())
    throw ShapeMismatch("input rows " + std::to_string(X.rows()) + " != network input width " +
                        std::to_string(mlp.input_width()));
  Eigen::MatrixXd Z = X;
  if (Z.rows() > kEqRow) Z.row(kEqRow) *= mlp.scale();
  return Z;
}

// Value/sensitivity forward sweep. Z is the scaled input block.
void forward_pass(const Mlp& mlp, const Eigen::MatrixXd& Z, const ChainFlags& f, Workspace& ws) {
  const int L = mlp.n_layers();
  const int N = static_cast<int>(Z.cols());
  const int m = static_cast<int>(Z.rows());
  ws.prepare(mlp, N, f);

  ws.A[0] = Z;
  if (f.xy1) {
    ws.Ux[0].setZero(m, N);
    ws.Uy[0].setZero(m, N);
    ws.Ux[0].row(0).setOnes();
    ws.Uy[0].row(1).setOnes();
  }
  if (f.xy2) {
    ws.Vx[0].setZero(m, N);
    ws.Vy[0].setZero(m, N);
  }
  if (f.eq1) {
    ws.Us[0].setZero(m, N);
    ws.Us[0].row(kEqRow).setOnes();
  }

  for (int l = 0; l < L; ++l) {
    const Eigen::MatrixXd& W = mlp.W[l];
    const int H = static_cast<int>(W.rows());
    ws.A[l + 1].noalias() = W * ws.A[l];
    ws.A[l + 1].colwise() += mlp.b[l];
    if (f.xy1) {
      ws.Qx[l].noalias() = W * ws.Ux[l];
      ws.Qy[l].noalias() = W * ws.Uy[l];
      ws.Ux[l + 1].resize(H, N);
      ws.Uy[l + 1].resize(H, N);
    }
    if (f.xy2) {
      ws.Rx[l].noalias() = W * ws.Vx[l];
      ws.Ry[l].noalias() = W * ws.Vy[l];
      ws.Vx[l + 1].resize(H, N);
      ws.Vy[l + 1].resize(H, N);
    }
    if (f.eq1) {
      ws.Us[l + 1].noalias() = W * ws.Us[l];
    }

    if (l == L - 1) {  // identity output layer: pass everything through
      if (f.xy1) {
        ws.Ux[l + 1] = ws.Qx[l];
        ws.Uy[l + 1] = ws.Qy[l];
      }
      if (f.xy2) {
        ws.Vx[l + 1] = ws.Rx[l];
        ws.Vy[l + 1] = ws.Ry[l];
      }
      continue;
    }

    // Fused tanh chain: a = tanh(p); u = f1 q; v = f2 q^2 + f1 r; us = f1 qs.
    const long total = static_cast<long>(H) * N;
    double* a = ws.A[l + 1].data();
    double* qx = f.xy1 ? ws.Qx[l].data() : nullptr;
    double* qy = f.xy1 ? ws.Qy[l].data() : nullptr;
    double* ux = f.xy1 ? ws.Ux[l + 1].data() : nullptr;
    double* uy = f.xy1 ? ws.Uy[l + 1].data() : nullptr;
    double* rx = f.xy2 ? ws.Rx[l].data() : nullptr;
    double* ry = f.xy2 ? ws.Ry[l].data() : nullptr;
    double* vx = f.xy2 ? ws.Vx[l + 1].data() : nullptr;
    double* vy = f.xy2 ? ws.Vy[l + 1].data() : nullptr;
    double* us = f.eq1 ? ws.Us[l + 1].data() : nullptr;
    for (long i = 0; i < total; ++i) {
      const double t = std::tanh(a[i]);
      a[i] = t;
      const double f1 = 1.0 - t * t;
      if (ux) {
        ux[i] = f1 * qx[i];
        uy[i] = f1 * qy[i];
      }
      if (vx) {
        const double f2 = -2.0 * t * f1;
        vx[i] = f2 * qx[i] * qx[i] + f1 * rx[i];
        vy[i] = f2 * qy[i] * qy[i] + f1 * ry[i];
      }
      if (us) us[i] *= f1;
    }
  }
}

// Reverse accumulation through the sensitivity-augmented sweep. Top-level
// adjoint seeds sit in ws.*bar[(L) & 1]; gW/gb accumulate in place.
void reverse_pass(const Mlp& mlp, Workspace& ws, const ChainFlags& f,
                  std::vector<Eigen::MatrixXd>& gW, std::vector<Eigen::VectorXd>& gb) {
  const int L = mlp.n_layers();
  for (int l = L - 1; l >= 0; --l) {
    const int cur = (l + 1) & 1;
    Eigen::MatrixXd& Abar = ws.Abar[cur];
    Eigen::MatrixXd& Uxbar = ws.Uxbar[cur];
    Eigen::MatrixXd& Uybar = ws.Uybar[cur];
    Eigen::MatrixXd& Vxbar = ws.Vxbar[cur];
    Eigen::MatrixXd& Vybar = ws.Vybar[cur];

    if (l == L - 1) {  // identity output layer
      ws.Pbar = Abar;
      if (f.xy1) {
        ws.Qxbar = Uxbar;
        ws.Qybar = Uybar;
      }
      if (f.xy2) {
        ws.Rxbar = Vxbar;
        ws.Rybar = Vybar;
      }
    } else {
      const int H = static_cast<int>(mlp.W[l].rows());
      const int N = static_cast<int>(ws.A[l + 1].cols());
      ws.Pbar.resize(H, N);
      if (f.xy1) {
        ws.Qxbar.resize(H, N);
        ws.Qybar.resize(H, N);
      }
      if (f.xy2) {
        ws.Rxbar.resize(H, N);
        ws.Rybar.resize(H, N);
      }
      const long total = static_cast<long>(H) * N;
      const double* t = ws.A[l + 1].data();
      const double* qx = f.xy1 ? ws.Qx[l].data() : nullptr;
      const double* qy = f.xy1 ? ws.Qy[l].data() : nullptr;
      const double* rx = f.xy2 ? ws.Rx[l].data() : nullptr;
      const double* ry = f.xy2 ? ws.Ry[l].data() : nullptr;
      const double* ab = Abar.data();
      const double* uxb = f.xy1 ? Uxbar.data() : nullptr;
      const double* uyb = f.xy1 ? Uybar.data() : nullptr;
      const double* vxb = f.xy2 ? Vxbar.data() : nullptr;
      const double* vyb = f.xy2 ? Vybar.data() : nullptr;
      double* pb = ws.Pbar.data();
      double* qxb = f.xy1 ? ws.Qxbar.data() : nullptr;
      double* qyb = f.xy1 ? ws.Qybar.data() : nullptr;
      double* rxb = f.xy2 ? ws.Rxbar.data() : nullptr;
      double* ryb = f.xy2 ? ws.Rybar.data() : nullptr;
      for (long i = 0; i < total; ++i) {
        const double ti = t[i];
        const double f1 = 1.0 - ti * ti;
        const double f2 = -2.0 * ti * f1;
        double acc = ab[i] * f1;
        if (uxb) {
          acc += uxb[i] * qx[i] * f2 + uyb[i] * qy[i] * f2;
          qxb[i] = uxb[i] * f1;
          qyb[i] = uyb[i] * f1;
        }
        if (vxb) {
          const double f3 = -2.0 * f1 * (1.0 - 3.0 * ti * ti);
          acc += vxb[i] * (qx[i] * qx[i] * f3 + rx[i] * f2);
          acc += vyb[i] * (qy[i] * qy[i] * f3 + ry[i] * f2);
          qxb[i] += vxb[i] * 2.0 * qx[i] * f2;
          qyb[i] += vyb[i] * 2.0 * qy[i] * f2;
          rxb[i] = vxb[i] * f1;
          ryb[i] = vyb[i] * f1;
        }
        pb[i] = acc;
      }
    }

    gW[l].noalias() += ws.Pbar * ws.A[l].transpose();
    gb[l] += ws.Pbar.rowwise().sum();
    if (f.xy1) {
      gW[l].noalias() += ws.Qxbar * ws.Ux[l].transpose();
      gW[l].noalias() += ws.Qybar * ws.Uy[l].transpose();
    }
    if (f.xy2) {
      gW[l].noalias() += ws.Rxbar * ws.Vx[l].transpose();
      gW[l].noalias() += ws.Rybar * ws.Vy[l].transpose();
    }

    if (l > 0) {
      const int prev = l & 1;
      const Eigen::MatrixXd& W = mlp.W[l];
      ws.Abar[prev].noalias() = W.transpose() * ws.Pbar;
      if (f.xy1) {
        ws.Uxbar[prev].noalias() = W.transpose() * ws.Qxbar;
        ws.Uybar[prev].noalias() = W.transpose() * ws.Qybar;
      }
      if (f.xy2) {
        ws.Vxbar[prev].noalias() = W.transpose() * ws.Rxbar;
        ws.Vybar[prev].noalias() = W.transpose() * ws.Rybar;
      }
    }
  }
}

double uniform_pm1(std::mt19937_64& rng) {
  // 53-bit mantissa draw in [0,1), mapped to [-1,1); avoids distribution
  // implementation differences across standard libraries.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

std::string fmt_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Input blocks and seed metadata shared between loss evaluations of one
// training run, so the per-epoch work is the two network sweeps only.
struct LossInputs {
  Eigen::MatrixXd Zint, Zbnd;  // already scaled
  std::vector<double> g, eq, nx, ny;
  double scale = 1.0;

  static LossInputs build(const Mlp& mlp, const CollocationSet& data) {
    if (data.interior.empty()) throw EmptyDataset("collocation set has no interior points");
    if (data.input_width() != mlp.input_width())
      throw ShapeMismatch("collocation width does not match network input width");
    LossInputs in;
    in.scale = mlp.scale();
    in.Zint = scaled_inputs(mlp, data.interior_inputs());
    if (!data.boundary.empty()) in.Zbnd = scaled_inputs(mlp, data.boundary_inputs());
    for (const auto& r : data.interior) {
      in.g.push_back(r.g);
      in.eq.push_back(r.eps_eq);
    }
    for (const auto& r : data.boundary) {
      in.nx.push_back(r.nx);
      in.ny.push_back(r.ny);
    }
    return in;
  }
};

double loss_core(const Mlp& mlp, const LossInputs& in, Eigen::VectorXd* grad, Workspace& ws,
                 Workspace& wsb, std::vector<Eigen::MatrixXd>& gW,
                 std::vector<Eigen::VectorXd>& gb) {
  const double S = in.scale;
  const int L = mlp.n_layers();
  const int Ni = static_cast<int>(in.Zint.cols());
  const int Nb = static_cast<int>(in.nx.size());

  if (grad) {
    gW.resize(L);
    gb.resize(L);
    for (int l = 0; l < L; ++l) {
      gW[l].setZero(mlp.W[l].rows(), mlp.W[l].cols());
      gb[l].setZero(mlp.b[l].size());
    }
  }

  ChainFlags fi;
  fi.xy1 = fi.xy2 = true;
  forward_pass(mlp, in.Zint, fi, ws);
  Eigen::RowVectorXd pde(Ni);
  for (int i = 0; i < Ni; ++i) {
    const double ebar = ws.A[L](0, i) / S;
    const double lap = (ws.Vx[L](0, i) + ws.Vy[L](0, i)) / S;
    pde(i) = ebar - in.g[i] * lap - in.eq[i];
  }
  const double j_pde = std::sqrt(pde.squaredNorm());

  ChainFlags fb;
  fb.xy1 = true;
  Eigen::RowVectorXd bc(Nb);
  double j_bc = 0.0;
  if (Nb > 0) {
    forward_pass(mlp, in.Zbnd, fb, wsb);
    for (int i = 0; i < Nb; ++i)
      bc(i) = (in.nx[i] * wsb.Ux[L](0, i) + in.ny[i] * wsb.Uy[L](0, i)) / S;
    j_bc = std::sqrt(bc.squaredNorm());
  }

  if (grad) {
    if (j_pde > 0.0) {
      const int top = L & 1;
      ws.Abar[top].setZero(1, Ni);
      ws.Uxbar[top].setZero(1, Ni);
      ws.Uybar[top].setZero(1, Ni);
      ws.Vxbar[top].setZero(1, Ni);
      ws.Vybar[top].setZero(1, Ni);
      for (int i = 0; i < Ni; ++i) {
        const double w = pde(i) / j_pde;
        ws.Abar[top](0, i) = w / S;
        ws.Vxbar[top](0, i) = -w * in.g[i] / S;
        ws.Vybar[top](0, i) = -w * in.g[i] / S;
      }
      reverse_pass(mlp, ws, fi, gW, gb);
    }
    if (Nb > 0 && j_bc > 0.0) {
      const int top = L & 1;
      wsb.Abar[top].setZero(1, Nb);
      wsb.Uxbar[top].setZero(1, Nb);
      wsb.Uybar[top].setZero(1, Nb);
      for (int i = 0; i < Nb; ++i) {
        const double w = bc(i) / j_bc;
        wsb.Uxbar[top](0, i) = w * in.nx[i] / S;
        wsb.Uybar[top](0, i) = w * in.ny[i] / S;
      }
      reverse_pass(mlp, wsb, fb, gW, gb);
    }

    Eigen::Index n = 0;
    for (int l = 0; l < L; ++l) n += gW[l].size() + gb[l].size();
    grad->resize(n);
    Eigen::Index at = 0;
    for (int l = 0; l < L; ++l) {
      grad->segment(at, gW[l].size()) =
          Eigen::Map<const Eigen::VectorXd>(gW[l].data(), gW[l].size());
      at += gW[l].size();
      grad->segment(at, gb[l].size()) = gb[l];
      at += gb[l].size();
    }
  }
  return j_pde + j_bc;
}

}  // namespace

double Mlp::scale() const { return std::pow(10.0, scale_exp); }

Mlp init_xavier(const std::vector<int>& layer_sizes, int scale_exp, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ShapeMismatch("need at least input and output layer sizes");
  for (int s : layer_sizes)
    if (s < 1) throw ShapeMismatch("layer sizes must be positive");

  Mlp mlp;
  mlp.scale_exp = scale_exp;
  std::mt19937_64 rng(seed);
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd W(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) W(r, c) = limit * uniform_pm1(rng);
    mlp.W.push_back(std::move(W));
    mlp.b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return mlp;
}

Eigen::MatrixXd CollocationSet::interior_inputs() const {
  Eigen::MatrixXd X(input_width(), interior.size());
  for (size_t i = 0; i < interior.size(); ++i) {
    const Interior& r = interior[i];
    X(0, i) = r.x;
    X(1, i) = r.y;
    X(2, i) = r.g;
    X(3, i) = r.eps_eq;
    if (has_lf) X(4, i) = r.lf;
  }
  return X;
}

Eigen::MatrixXd CollocationSet::boundary_inputs() const {
  Eigen::MatrixXd X(input_width(), boundary.size());
  for (size_t i = 0; i < boundary.size(); ++i) {
    const Boundary& r = boundary[i];
    X(0, i) = r.x;
    X(1, i) = r.y;
    X(2, i) = r.g;
    X(3, i) = r.eps_eq;
    if (has_lf) X(4, i) = r.lf;
  }
  return X;
}

Eigen::VectorXd forward(const Mlp& mlp, const Eigen::MatrixXd& X) {
  Workspace ws;
  forward_pass(mlp, scaled_inputs(mlp, X), ChainFlags{}, ws);
  return ws.A.back().row(0).transpose() / mlp.scale();
}

void forward_feed(const Mlp& mlp, const Eigen::MatrixXd& X, Eigen::VectorXd& ebar,
                  Eigen::VectorXd& deq) {
  Workspace ws;
  ChainFlags f;
  f.eq1 = true;
  forward_pass(mlp, scaled_inputs(mlp, X), f, ws);
  ebar = ws.A.back().row(0).transpose() / mlp.scale();
  deq = ws.Us.back().row(0).transpose();  // the 10^c factors cancel
}

std::vector<DerivBundle> forward_derivs(const Mlp& mlp, const Eigen::MatrixXd& X) {
  Workspace ws;
  ChainFlags f;
  f.xy1 = f.xy2 = f.eq1 = true;
  forward_pass(mlp, scaled_inputs(mlp, X), f, ws);
  const double S = mlp.scale();
  std::vector<DerivBundle> out(X.cols());
  for (int i = 0; i < X.cols(); ++i) {
    out[i].ebar = ws.A.back()(0, i) / S;
    out[i].dx = ws.Ux.back()(0, i) / S;
    out[i].dy = ws.Uy.back()(0, i) / S;
    out[i].dxx = ws.Vx.back()(0, i) / S;
    out[i].dyy = ws.Vy.back()(0, i) / S;
    out[i].deq = ws.Us.back()(0, i);
  }
  return out;
}

Eigen::VectorXd flatten_params(const Mlp& mlp) {
  Eigen::Index n = 0;
  for (int l = 0; l < mlp.n_layers(); ++l) n += mlp.W[l].size() + mlp.b[l].size();
  Eigen::VectorXd theta(n);
  Eigen::Index at = 0;
  for (int l = 0; l < mlp.n_layers(); ++l) {
    theta.segment(at, mlp.W[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(mlp.W[l].data(), mlp.W[l].size());
    at += mlp.W[l].size();
    theta.segment(at, mlp.b[l].size()) = mlp.b[l];
    at += mlp.b[l].size();
  }
  return theta;
}

void set_params(Mlp& mlp, const Eigen::VectorXd& theta) {
  Eigen::Index at = 0;
  for (int l = 0; l < mlp.n_layers(); ++l) {
    Eigen::Map<Eigen::VectorXd>(mlp.W[l].data(), mlp.W[l].size()) =
        theta.segment(at, mlp.W[l].size());
    at += mlp.W[l].size();
    mlp.b[l] = theta.segment(at, mlp.b[l].size());
    at += mlp.b[l].size();
  }
  if (at != theta.size()) throw ShapeMismatch("parameter vector size mismatch");
}

double loss(const Mlp& mlp, const CollocationSet& data, Eigen::VectorXd* grad) {
  const LossInputs in = LossInputs::build(mlp, data);
  Workspace ws, wsb;
  std::vector<Eigen::MatrixXd> gW;
  std::vector<Eigen::VectorXd> gb;
  return loss_core(mlp, in, grad, ws, wsb, gW, gb);
}

namespace {

// Two-loop recursion with the standard gamma = s.y / y.y initial scaling.
Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g,
                                const std::deque<Eigen::VectorXd>& S,
                                const std::deque<Eigen::VectorXd>& Y) {
  Eigen::VectorXd q = g;
  const int m = static_cast<int>(S.size());
  std::vector<double> alpha(m), rho(m);
  for (int i = m - 1; i >= 0; --i) {
    rho[i] = 1.0 / Y[i].dot(S[i]);
    alpha[i] = rho[i] * S[i].dot(q);
    q -= alpha[i] * Y[i];
  }
  if (m > 0) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
  for (int i = 0; i < m; ++i) {
    const double beta = rho[i] * Y[i].dot(q);
    q += (alpha[i] - beta) * S[i];
  }
  return q;
}

}  // namespace

TrainReport train(Mlp& mlp, const CollocationSet& data, const TrainConfig& cfg) {
  TrainReport report;
  const LossInputs in = LossInputs::build(mlp, data);
  Workspace ws, wsb;
  std::vector<Eigen::MatrixXd> gW;
  std::vector<Eigen::VectorXd> gb;

  Eigen::VectorXd theta = flatten_params(mlp);
  Eigen::VectorXd g(theta.size());

  report.initial_loss = loss_core(mlp, in, nullptr, ws, wsb, gW, gb);

  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double J = loss_core(mlp, in, &g, ws, wsb, gW, gb);
    if (!std::isfinite(J))
      throw DivergedLoss("cost became non-finite at epoch " + std::to_string(epoch));
    report.loss_history.push_back(J);

    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(cfg.beta1, epoch);
    const double bc2 = 1.0 - std::pow(cfg.beta2, epoch);
    theta.array() -=
        cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps_hat);
    set_params(mlp, theta);
  }

  if (cfg.lbfgs_enabled) {
    std::deque<Eigen::VectorXd> S, Y;
    double J = loss_core(mlp, in, &g, ws, wsb, gW, gb);
    if (!std::isfinite(J)) throw DivergedLoss("cost non-finite entering L-BFGS");
    for (int step = 0; step < cfg.lbfgs_max_steps && g.norm() > cfg.lbfgs_grad_tol; ++step) {
      Eigen::VectorXd d = -lbfgs_direction(g, S, Y);
      double slope = g.dot(d);
      if (!(slope < 0.0)) {
        d = -g;
        slope = g.dot(d);
        if (!(slope < 0.0)) break;
      }
      double alpha = 1.0;
      double J_new = 0.0;
      Eigen::VectorXd theta_new;
      bool accepted = false;
      Mlp scratch = mlp;
      for (int bt = 0; bt < 50; ++bt) {
        theta_new = theta + alpha * d;
        set_params(scratch, theta_new);
        J_new = loss_core(scratch, in, nullptr, ws, wsb, gW, gb);
        if (std::isfinite(J_new) && J_new <= J + 1e-4 * alpha * slope) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;

      Eigen::VectorXd g_new(theta.size());
      set_params(mlp, theta_new);
      J_new = loss_core(mlp, in, &g_new, ws, wsb, gW, gb);
      const Eigen::VectorXd s = theta_new - theta;
      const Eigen::VectorXd y = g_new - g;
      if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
        S.push_back(s);
        Y.push_back(y);
        if (static_cast<int>(S.size()) > cfg.lbfgs_memory) {
          S.pop_front();
          Y.pop_front();
        }
      }
      theta = theta_new;
      g = g_new;
      J = J_new;
      report.loss_history.push_back(J);
    }
  }

  report.final_loss = loss_core(mlp, in, nullptr, ws, wsb, gW, gb);
  if (!std::isfinite(report.final_loss)) throw DivergedLoss("final cost non-finite");
  return report;
}

void save_weights(const Mlp& mlp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "MLPV1 " << mlp.scale_exp << " " << mlp.n_layers();
  out << " " << mlp.input_width();
  for (int l = 0; l < mlp.n_layers(); ++l) out << " " << mlp.W[l].rows();
  out << "\n";
  for (int l = 0; l < mlp.n_layers(); ++l) {
    for (Eigen::Index r = 0; r < mlp.W[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < mlp.W[l].cols(); ++c)
        out << (c ? " " : "") << fmt_full(mlp.W[l](r, c));
      out << "\n";
    }
    for (Eigen::Index r = 0; r < mlp.b[l].size(); ++r)
      out << (r ? " " : "") << fmt_full(mlp.b[l](r));
    out << "\n";
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

Mlp load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open weights file '" + path + "'");

  std::string magic;
  int scale_exp = 0, L = 0;
  if (!(in >> magic)) throw ParseError("empty weights file");
  if (magic != "MLPV1") throw VersionMismatch("unsupported weights format '" + magic + "'");
  if (!(in >> scale_exp >> L)) throw ParseError("malformed weights header");
  if (L < 1) throw VersionMismatch("layer count must be >= 1");
  std::vector<int> sizes(L + 1);
  for (int i = 0; i <= L; ++i) {
    if (!(in >> sizes[i]))
      throw VersionMismatch("header declares " + std::to_string(L) + " layers but sizes are missing");
    if (sizes[i] < 1) throw VersionMismatch("layer sizes must be positive");
  }

  Mlp mlp;
  mlp.scale_exp = scale_exp;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd W(sizes[l + 1], sizes[l]);
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c)
        if (!(in >> W(r, c)))
          throw ParseError("truncated weights data in layer " + std::to_string(l));
    Eigen::VectorXd b(sizes[l + 1]);
    for (Eigen::Index r = 0; r < b.size(); ++r)
      if (!(in >> b(r))) throw ParseError("truncated bias data in layer " + std::to_string(l));
    if (!W.allFinite() || !b.allFinite())
      throw ParseError("non-finite parameter in layer " + std::to_string(l));
    mlp.W.push_back(std::move(W));
    mlp.b.push_back(std::move(b));
  }
  return mlp;
}

void write_collocation(const CollocationSet& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "kind,x,y,g,eps_eq,nx,ny" << (data.has_lf ? ",lf" : "") << "\n";
  for (const auto& r : data.interior) {
    out << "interior," << fmt_full(r.x) << "," << fmt_full(r.y) << "," << fmt_full(r.g) << ","
        << fmt_full(r.eps_eq) << ",,";
    if (data.has_lf) out << "," << fmt_full(r.lf);
    out << "\n";
  }
  for (const auto& r : data.boundary) {
    out << "boundary," << fmt_full(r.x) << "," << fmt_full(r.y) << "," << fmt_full(r.g) << ","
        << fmt_full(r.eps_eq) << "," << fmt_full(r.nx) << "," << fmt_full(r.ny);
    if (data.has_lf) out << "," << fmt_full(r.lf);
    out << "\n";
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

CollocationSet read_collocation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open collocation file '" + path + "'");

  auto split = [](const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        f.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    f.push_back(cur);
    return f;
  };

  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty collocation file");
  ++lineno;
  CollocationSet data;
  const auto header = split(line);
  if (header.size() == 8 && header[7] == "lf")
    data.has_lf = true;
  else if (header.size() != 7)
    throw ParseError("unexpected collocation header", lineno);
  const std::vector<std::string> expect = {"kind", "x", "y", "g", "eps_eq", "nx", "ny"};
  for (size_t i = 0; i < expect.size(); ++i)
    if (header[i] != expect[i]) throw ParseError("unexpected collocation header", lineno);

  auto num = [&](const std::string& s) {
    try {
      size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (...) {
      throw ParseError("bad number '" + s + "'", lineno);
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) throw ParseError("wrong field count", lineno);
    const double lf = data.has_lf ? num(f[7]) : 0.0;
    if (f[0] == "interior") {
      data.interior.push_back({num(f[1]), num(f[2]), num(f[3]), num(f[4]), lf});
    } else if (f[0] == "boundary") {
      data.boundary.push_back(
          {num(f[1]), num(f[2]), num(f[3]), num(f[4]), lf, num(f[5]), num(f[6])});
    } else {
      throw ParseError("kind must be 'interior' or 'boundary'", lineno);
    }
  }
  return data;
}

}  // namespace ifenn

#include "ifenn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace ifenn {

namespace {

std::string fmt_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Snapshot make_snapshot(const Mesh& mesh, const FieldState& state, const Materials& mat,
                       const SolverConfig& cfg, const Mlp* mlp) {
  Snapshot snap;
  snap.lf = state.loadfactor;
  snap.rows.resize(mesh.n_ips());

  IFennFeed feed;
  if (cfg.method == Method::Ifenn) {
    if (!mlp) throw MissingFeed("ifenn snapshot requires the network");
    // Reproduce the converged iterate's driving strain.
    Eigen::MatrixXd X(mlp->input_width(), mesh.n_ips());
    const auto rule = gauss_2x2();
    for (const Element& el : mesh.elements) {
      Eigen::Matrix<double, 8, 1> ue;
      for (int a = 0; a < 4; ++a) {
        ue(2 * a) = state.u(2 * el.nodes[a]);
        ue(2 * a + 1) = state.u(2 * el.nodes[a] + 1);
      }
      for (int q = 0; q < 4; ++q) {
        const IsoMap m = isoparametric_map(el, mesh, rule[q].xi, rule[q].eta);
        const Eigen::Vector3d eps = m.B * ue;
        const int ip = 4 * el.id + q;
        X(0, ip) = m.x;
        X(1, ip) = m.y;
        X(2, ip) = cfg.g();
        X(3, ip) = eq_strain(eps, mat.measure, mat.elastic.nu).value;
        if (mlp->input_width() == 5) X(4, ip) = state.loadfactor;
      }
    }
    Eigen::VectorXd ebar, deq;
    forward_feed(*mlp, X, ebar, deq);
    feed.ebar.assign(ebar.data(), ebar.data() + ebar.size());
  }

  const auto rule = gauss_2x2();
  for (const Element& el : mesh.elements) {
    Eigen::Matrix<double, 8, 1> ue;
    for (int a = 0; a < 4; ++a) {
      ue(2 * a) = state.u(2 * el.nodes[a]);
      ue(2 * a + 1) = state.u(2 * el.nodes[a] + 1);
    }
    for (int q = 0; q < 4; ++q) {
      const IsoMap m = isoparametric_map(el, mesh, rule[q].xi, rule[q].eta);
      const Eigen::Vector3d eps = m.B * ue;
      const EqStrain eq = eq_strain(eps, mat.measure, mat.elastic.nu);
      SnapshotRow& row = snap.rows[4 * el.id + q];
      row.elem = el.id;
      row.ip = q;
      row.x = m.x;
      row.y = m.y;
      row.eps_eq = eq.value;
      switch (cfg.method) {
        case Method::Local:
          row.eps_bar = eq.value;
          break;
        case Method::NonlocalGradient: {
          Eigen::Vector4d eb;
          for (int a = 0; a < 4; ++a) eb(a) = state.ebar(el.nodes[a]);
          row.eps_bar = m.N.dot(eb);
          break;
        }
        case Method::Ifenn:
          row.eps_bar = feed.ebar[4 * el.id + q];
          break;
      }
      row.d = damage(state.history.kappa[4 * el.id + q], mat.damage).d;
    }
  }

  snap.nodal.resize(mesh.n_nodes());
  for (int i = 0; i < mesh.n_nodes(); ++i)
    snap.nodal[i] = {i, mesh.nodes[i].x, mesh.nodes[i].y, state.u(2 * i), state.u(2 * i + 1)};
  return snap;
}

CollocationSet export_collocation(const Snapshot& snap, const Mesh& mesh, double g,
                                  std::optional<double> lf) {
  CollocationSet data;
  data.has_lf = lf.has_value();
  const double lfv = lf.value_or(0.0);

  data.interior.reserve(snap.rows.size());
  for (const SnapshotRow& r : snap.rows)
    data.interior.push_back({r.x, r.y, g, r.eps_eq, lfv});

  // Accumulate edge normals per boundary node, then renormalize.
  std::map<int, Eigen::Vector2d> normals;
  for (const BoundaryEdge& be : mesh.boundary) {
    const Element& el = mesh.elements[be.elem];
    const int a = el.nodes[be.edge];
    const int b = el.nodes[(be.edge + 1) % 4];
    for (int nid : {a, b}) {
      auto [it, inserted] = normals.try_emplace(nid, Eigen::Vector2d::Zero());
      it->second += Eigen::Vector2d(be.nx, be.ny);
    }
  }
  for (const auto& [nid, nsum] : normals) {
    const double len = nsum.norm();
    if (len <= 0.0) continue;  // opposing slit faces cancel exactly
    const Node& node = mesh.nodes[nid];
    // Nearest IP supplies the local strain stored with the boundary row.
    double best = std::numeric_limits<double>::infinity();
    double eps_eq = 0.0;
    for (const SnapshotRow& r : snap.rows) {
      const double d2 = (r.x - node.x) * (r.x - node.x) + (r.y - node.y) * (r.y - node.y);
      if (d2 < best) {
        best = d2;
        eps_eq = r.eps_eq;
      }
    }
    data.boundary.push_back({node.x, node.y, g, eps_eq, lfv, nsum(0) / len, nsum(1) / len});
  }
  return data;
}

std::vector<RsePoint> rse(std::span<const double> reference, std::span<const double> predicted) {
  if (reference.size() != predicted.size())
    throw LengthMismatch("rse: field lengths differ");
  std::vector<RsePoint> out(reference.size());
  for (size_t i = 0; i < reference.size(); ++i) {
    if (reference[i] == 0.0) {
      out[i] = {0.0, false};
    } else {
      const double e = reference[i] - predicted[i];
      out[i] = {e * e / (reference[i] * reference[i]), true};
    }
  }
  return out;
}

double l2_mismatch(std::span<const double> reference, std::span<const double> predicted) {
  if (reference.size() != predicted.size())
    throw LengthMismatch("l2_mismatch: field lengths differ");
  double s = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double e = reference[i] - predicted[i];
    s += e * e;
  }
  return std::sqrt(s);
}

ComparisonReport make_report(std::span<const double> x, std::span<const double> y,
                             std::span<const double> reference,
                             std::span<const double> predicted) {
  if (x.size() != reference.size() || y.size() != reference.size())
    throw LengthMismatch("report: coordinate lengths differ from field length");
  const auto points = rse(reference, predicted);

  ComparisonReport rep;
  rep.rows.resize(points.size());
  rep.l2 = l2_mismatch(reference, predicted);
  double sum = 0.0;
  int defined = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    rep.rows[i] = {static_cast<int>(i), x[i],          y[i], reference[i],
                   predicted[i],        points[i].value, points[i].defined};
    if (points[i].defined) {
      ++defined;
      sum += points[i].value;
      rep.max_rse = std::max(rep.max_rse, points[i].value);
    } else {
      ++rep.n_undefined;
    }
  }
  rep.mean_rse = defined > 0 ? sum / defined : 0.0;
  return rep;
}

CrossMeshEval cross_mesh_eval(const Mlp& mlp, const CollocationSet& data,
                              std::span<const double> reference) {
  if (mlp.input_width() != data.input_width())
    throw ShapeMismatch("network input width does not match collocation width");
  CrossMeshEval out;
  const Eigen::VectorXd pred = forward(mlp, data.interior_inputs());
  out.predicted.assign(pred.data(), pred.data() + pred.size());
  if (!reference.empty()) {
    std::vector<double> xs(data.interior.size()), ys(data.interior.size());
    for (size_t i = 0; i < data.interior.size(); ++i) {
      xs[i] = data.interior[i].x;
      ys[i] = data.interior[i].y;
    }
    out.report = make_report(xs, ys, reference, out.predicted);
  }
  return out;
}

void write_curve_csv(const std::vector<CurveRow>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "lf,reaction,iterations,ndof\n";
  for (const CurveRow& r : curve)
    out << fmt_full(r.lf) << "," << fmt_full(r.reaction) << "," << r.iterations << "," << r.ndof
        << "\n";
}

void write_snapshot_csv(const Snapshot& snap, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "# lf=" << fmt_full(snap.lf) << " reaction=" << fmt_full(snap.reaction) << "\n";
  out << "elem,ip,x,y,eps_eq,eps_bar,d\n";
  for (const SnapshotRow& r : snap.rows)
    out << r.elem << "," << r.ip << "," << fmt_full(r.x) << "," << fmt_full(r.y) << ","
        << fmt_full(r.eps_eq) << "," << fmt_full(r.eps_bar) << "," << fmt_full(r.d) << "\n";
}

void write_nodal_csv(const Snapshot& snap, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "node,x,y,ux,uy\n";
  for (const NodalDisp& n : snap.nodal)
    out << n.node << "," << fmt_full(n.x) << "," << fmt_full(n.y) << "," << fmt_full(n.ux) << ","
        << fmt_full(n.uy) << "\n";
}

Snapshot read_snapshot_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open snapshot file '" + path + "'");
  Snapshot snap;
  std::string line;
  long lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        if (tok.rfind("lf=", 0) == 0) snap.lf = std::stod(tok.substr(3));
        if (tok.rfind("reaction=", 0) == 0) snap.reaction = std::stod(tok.substr(9));
      }
      continue;
    }
    if (!header_seen) {
      if (line.rfind("elem,ip,x,y,eps_eq,eps_bar,d", 0) != 0)
        throw ParseError("unexpected snapshot header", lineno);
      header_seen = true;
      continue;
    }
    SnapshotRow r;
    char c;
    std::istringstream ss(line);
    if (!(ss >> r.elem >> c >> r.ip >> c >> r.x >> c >> r.y >> c >> r.eps_eq >> c >> r.eps_bar >>
          c >> r.d))
      throw ParseError("malformed snapshot row", lineno);
    snap.rows.push_back(r);
  }
  if (!header_seen) throw ParseError("snapshot file has no header");
  return snap;
}

void write_report_csv(const ComparisonReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "index,x,y,ref,pred,rse,flag\n";
  for (const ReportRow& r : report.rows)
    out << r.index << "," << fmt_full(r.x) << "," << fmt_full(r.y) << "," << fmt_full(r.ref) << ","
        << fmt_full(r.pred) << "," << fmt_full(r.rse) << "," << (r.defined ? "ok" : "undefined")
        << "\n";
  out << "summary,l2_mismatch=" << fmt_full(report.l2) << ",max_rse=" << fmt_full(report.max_rse)
      << ",mean_rse=" << fmt_full(report.mean_rse) << ",n_undefined=" << report.n_undefined
      << "\n";
}

void write_loss_history_csv(const std::vector<double>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "epoch,loss\n";
  for (size_t i = 0; i < history.size(); ++i) out << i + 1 << "," << fmt_full(history[i]) << "\n";
}

}  // namespace ifenn

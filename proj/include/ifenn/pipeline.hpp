#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifenn/pinn.hpp"
#include "ifenn/solver.hpp"

namespace ifenn {

struct SnapshotRow {
  int elem = 0, ip = 0;  // element id and local IP 0-3
  double x = 0, y = 0;
  double eps_eq = 0;   // local equivalent strain
  double eps_bar = 0;  // driving equivalent strain (= eps_eq for the local method)
  double d = 0;
};

struct NodalDisp {
  int node = 0;
  double x = 0, y = 0, ux = 0, uy = 0;
};

struct Snapshot {
  double lf = 0.0;
  std::vector<SnapshotRow> rows;  // global IP order, 4 per element
  std::vector<NodalDisp> nodal;
  double reaction = 0.0;
};

/// Field snapshot of a converged state. The ifenn method needs the network
/// to reproduce its driving strain.
Snapshot make_snapshot(const Mesh& mesh, const FieldState& state, const Materials& mat,
                       const SolverConfig& cfg, const Mlp* mlp = nullptr);

/// Interior rows at every IP; boundary rows at boundary nodes with outward
/// normals averaged over adjacent edges and renormalized. Boundary rows carry
/// the nearest IP's eps_eq.
CollocationSet export_collocation(const Snapshot& snap, const Mesh& mesh, double g,
                                  std::optional<double> lf = std::nullopt);

struct RsePoint {
  double value = 0.0;
  bool defined = true;  // false where the reference is exactly zero
};

std::vector<RsePoint> rse(std::span<const double> reference, std::span<const double> predicted);

double l2_mismatch(std::span<const double> reference, std::span<const double> predicted);

struct ReportRow {
  int index = 0;
  double x = 0, y = 0, ref = 0, pred = 0, rse = 0;
  bool defined = true;
};

struct ComparisonReport {
  std::vector<ReportRow> rows;
  double l2 = 0.0;
  double max_rse = 0.0, mean_rse = 0.0;  // over defined points
  int n_undefined = 0;
};

ComparisonReport make_report(std::span<const double> x, std::span<const double> y,
                             std::span<const double> reference, std::span<const double> predicted);

/// Single forward pass of foreign-mesh collocation data through a trained
/// network; the report is filled when a reference field is supplied.
struct CrossMeshEval {
  std::vector<double> predicted;
  ComparisonReport report;
};
CrossMeshEval cross_mesh_eval(const Mlp& mlp, const CollocationSet& data,
                              std::span<const double> reference = {});

void write_curve_csv(const std::vector<CurveRow>& curve, const std::string& path);
void write_snapshot_csv(const Snapshot& snap, const std::string& path);
void write_nodal_csv(const Snapshot& snap, const std::string& path);
Snapshot read_snapshot_csv(const std::string& path);
void write_report_csv(const ComparisonReport& report, const std::string& path);
void write_loss_history_csv(const std::vector<double>& history, const std::string& path);

}  // namespace ifenn

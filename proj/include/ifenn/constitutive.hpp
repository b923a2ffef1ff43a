#pragma once

#include <Eigen/Dense>
#include <vector>

#include "ifenn/errors.hpp"

namespace ifenn {

/// Plane-strain isotropic elasticity constants.
struct ElasticParams {
  double G = 0.0;   // shear modulus (KPa)
  double nu = 0.0;  // Poisson ratio, 0 <= nu < 0.5
  double E() const { return 2.0 * G * (1.0 + nu); }
};

enum class StrainVariant { Lemaitre, ModifiedVonMises };

struct StrainMeasure {
  StrainVariant variant = StrainVariant::Lemaitre;
  double k = 10.0;  // compressive/tensile sensitivity ratio (modified von Mises)
};

enum class DamageLaw { MazarsOriginal, MazarsModified };

struct DamageParams {
  DamageLaw law = DamageLaw::MazarsOriginal;
  double alpha = 0.0;  // residual strength, 0 < alpha <= 1
  double beta = 0.0;   // softening slope, > 0
  double eps_d = 0.0;  // damage-initiation strain threshold, > 0
};

/// Maximum attained driving equivalent strain per global integration point.
struct HistoryField {
  std::vector<double> kappa;

  static HistoryField zeros(int n_ips) { return HistoryField{std::vector<double>(n_ips, 0.0)}; }
};

/// Plane-strain stiffness in Voigt form (exx, eyy, gxy); symmetric positive definite.
Eigen::Matrix3d elasticity_matrix(const ElasticParams& p);

struct EqStrain {
  double value = 0.0;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();  // d eps_eq / d (exx, eyy, gxy)
  bool degenerate = false;                         // gradient clipped at a root kink
};

/// Lemaitre measure: sqrt of the sum of squared positive in-plane principal strains.
EqStrain eq_strain_lemaitre(const Eigen::Vector3d& eps);

/// Modified von Mises measure with invariants I1 = tr(eps), J2 = 3 tr(eps.eps) - tr^2(eps).
EqStrain eq_strain_mvm(const Eigen::Vector3d& eps, const StrainMeasure& m, double nu);

EqStrain eq_strain(const Eigen::Vector3d& eps, const StrainMeasure& m, double nu);

struct DamageEval {
  double d = 0.0;
  double dd_dkappa = 0.0;
};

/// Exponential damage evolution; returns (0, 0) below the threshold.
DamageEval damage(double kappa, const DamageParams& p);

inline double update_history(double kappa_old, double eps_star) {
  return eps_star > kappa_old ? eps_star : kappa_old;
}

}  // namespace ifenn

#include "ifenn/constitutive.hpp"

#include <cmath>
#include <limits>

namespace ifenn {

Eigen::Matrix3d elasticity_matrix(const ElasticParams& p) {
  const double E = p.E();
  const double nu = p.nu;
  const double f = E / ((1.0 + nu) * (1.0 - 2.0 * nu));
  Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
  C(0, 0) = C(1, 1) = f * (1.0 - nu);
  C(0, 1) = C(1, 0) = f * nu;
  C(2, 2) = f * (1.0 - 2.0 * nu) / 2.0;
  return C;
}

EqStrain eq_strain_lemaitre(const Eigen::Vector3d& eps) {
  const double exx = eps(0), eyy = eps(1), s = 0.5 * eps(2);  // tensor shear
  const double m = 0.5 * (exx + eyy);
  const double dd = 0.5 * (exx - eyy);
  const double r = std::sqrt(dd * dd + s * s);
  const double e1 = m + r;
  const double e2 = m - r;

  EqStrain out;
  if (e1 <= 0.0 && e2 <= 0.0) return out;  // full Macaulay clipping

  if (e2 > 0.0) {
    // Both principals positive: sum of squares reduces to the smooth invariant
    // form exx^2 + eyy^2 + gxy^2/2, which also covers coincident eigenvalues.
    const double q = exx * exx + eyy * eyy + 0.5 * eps(2) * eps(2);
    out.value = std::sqrt(q);
    if (out.value > 0.0) out.grad = Eigen::Vector3d(exx, eyy, 0.5 * eps(2)) / out.value;
    return out;
  }

  // Only e1 contributes; r > 0 here since e1 > 0 >= e2.
  out.value = e1;
  const double de1_dxx = 0.5 + 0.5 * dd / r;
  const double de1_dyy = 0.5 - 0.5 * dd / r;
  const double de1_dg = 0.25 * eps(2) / r;  // d e1 / d gxy = s/(2r) with s = gxy/2
  out.grad = Eigen::Vector3d(de1_dxx, de1_dyy, de1_dg);
  return out;
}

EqStrain eq_strain_mvm(const Eigen::Vector3d& eps, const StrainMeasure& m, double nu) {
  const double k = m.k;
  const double exx = eps(0), eyy = eps(1), g = eps(2);
  const double I1 = exx + eyy;                                    // tr(eps), plane strain
  const double J2 = 3.0 * (exx * exx + eyy * eyy + 0.5 * g * g) - I1 * I1;

  const double a = (k - 1.0) / (1.0 - 2.0 * nu);
  const double rad = a * a * I1 * I1 + (2.0 * k / ((1.0 + nu) * (1.0 + nu))) * J2;

  EqStrain out;
  const double first = a / (2.0 * k) * I1;
  const double eps_mach = std::numeric_limits<double>::epsilon();
  if (rad <= eps_mach * eps_mach) {
    // Root kink (only reachable at eps ~ 0): gradient clipped to zero.
    out.value = first > 0.0 ? first : 0.0;
    out.degenerate = true;
    return out;
  }
  const double root = std::sqrt(rad);
  out.value = first + root / (2.0 * k);

  const Eigen::Vector3d dI1(1.0, 1.0, 0.0);
  const Eigen::Vector3d dJ2(6.0 * exx - 2.0 * I1, 6.0 * eyy - 2.0 * I1, 3.0 * g);
  out.grad = (a / (2.0 * k)) * dI1 +
             (1.0 / (4.0 * k * root)) *
                 (2.0 * a * a * I1 * dI1 + (2.0 * k / ((1.0 + nu) * (1.0 + nu))) * dJ2);
  return out;
}

EqStrain eq_strain(const Eigen::Vector3d& eps, const StrainMeasure& m, double nu) {
  return m.variant == StrainVariant::Lemaitre ? eq_strain_lemaitre(eps)
                                              : eq_strain_mvm(eps, m, nu);
}

DamageEval damage(double kappa, const DamageParams& p) {
  DamageEval out;
  if (kappa < p.eps_d) return out;
  const double ex = std::exp(-p.beta * (kappa - p.eps_d));
  if (p.law == DamageLaw::MazarsOriginal) {
    out.d = 1.0 - p.eps_d * (1.0 - p.alpha) / kappa - p.alpha * ex;
    out.dd_dkappa = p.eps_d * (1.0 - p.alpha) / (kappa * kappa) + p.alpha * p.beta * ex;
  } else {
    const double s = (1.0 - p.alpha) + p.alpha * ex;
    out.d = 1.0 - p.eps_d / kappa * s;
    out.dd_dkappa = p.eps_d / (kappa * kappa) * s + p.eps_d / kappa * p.alpha * p.beta * ex;
  }
  if (out.d < 0.0) out.d = 0.0;
  return out;
}

}  // namespace ifenn

#include "pih/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pih {

namespace {

constexpr double kPi = std::numbers::pi;
// Boundaries are closed; this absorbs rounding in sums such as l_a + l_p.
constexpr double kBoundaryTol = 1e-12;

Vec3 radial(int i) {
  const double a = limb_azimuth(i);
  return {std::cos(a), std::sin(a), 0.0};
}

Vec3 tangential(int i) {
  const double a = limb_azimuth(i);
  return {-std::sin(a), std::cos(a), 0.0};
}

double wrap_pi(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

}  // namespace

double limb_azimuth(int limb) { return 2.0 * kPi * limb / 3.0; }

double DeltaParams::r_max() const {
  return 0.8 * std::min(active_rod_len, passive_rod_len);
}

bool DeltaParams::valid() const {
  return active_rod_len > 0 && passive_rod_len > 0 && base_radius > 0 &&
         platform_radius > 0 && pin_length >= 0 &&
         passive_rod_len > base_radius - platform_radius;
}

bool RrsGeometry::valid() const {
  return base_radius > platform_radius && platform_radius > 0 &&
         proximal_len > 0 && distal_len > 0 && h_min < h_max;
}

// ---------------------------------------------------------------------------
// Delta

bool delta_workspace_contains(const Vec3& p, const DeltaParams& g) {
  if (p.z() < g.z_low() - kBoundaryTol || p.z() > g.z_high() + kBoundaryTol) return false;
  return std::hypot(p.x(), p.y()) <= g.r_max() + kBoundaryTol;
}

Vec3 delta_base_hinge(int arm, const DeltaParams& g) {
  return g.base_radius * radial(arm);
}

Vec3 delta_elbow(int arm, double phi, const DeltaParams& g) {
  return delta_base_hinge(arm, g) +
         g.active_rod_len * (std::cos(phi) * radial(arm) - std::sin(phi) * Vec3::UnitZ());
}

Vec3 delta_platform_joint(int arm, const Vec3& p, const DeltaParams& g) {
  return p + g.platform_radius * radial(arm);
}

std::optional<JointAngles3> delta_inverse_kinematics(const Vec3& p,
                                                     const DeltaParams& g) {
  JointAngles3 phi{};
  const double a = g.active_rod_len;
  for (int i = 0; i < 3; ++i) {
    const Vec3 rel = delta_platform_joint(i, p, g) - delta_base_hinge(i, g);
    const double rho = rel.dot(radial(i));
    const double t = rel.dot(tangential(i));
    const double z = rel.z();
    // The passive rod sphere cut by the arm plane.
    const double lp2 = g.passive_rod_len * g.passive_rod_len - t * t;
    if (lp2 < 0.0) return std::nullopt;
    const double r = std::hypot(rho, z);
    if (r == 0.0) return std::nullopt;
    const double k = (a * a + rho * rho + z * z - lp2) / (2.0 * a);
    if (std::abs(k) > r) return std::nullopt;
    // rho cos(phi) - z sin(phi) = k  <=>  r cos(phi + psi) = k
    const double psi = std::atan2(z, rho);
    const double half = std::acos(std::clamp(k / r, -1.0, 1.0));
    const double p1 = wrap_pi(-psi + half);
    const double p2 = wrap_pi(-psi - half);
    const double out = std::cos(p1) >= std::cos(p2) ? p1 : p2;
    if (out < 0.0 || out > kPi) return std::nullopt;
    phi[i] = out;
  }
  return phi;
}

Vec3 delta_pin_tip(const Vec3& p, const DeltaParams& g) {
  return p - Vec3(0.0, 0.0, g.pin_length);
}

bool delta_pose_valid(const Vec3& p, const DeltaParams& g) {
  return delta_workspace_contains(p, g) && delta_inverse_kinematics(p, g).has_value();
}

// ---------------------------------------------------------------------------
// 3-RRS

Mat3 rrs_rotation(double roll, double pitch) {
  return (Eigen::AngleAxisd(roll, Vec3::UnitX()) *
          Eigen::AngleAxisd(pitch, Vec3::UnitY()))
      .toRotationMatrix();
}

Vec3 rrs_base_joint(int limb, const RrsGeometry& g) {
  return g.base_radius * radial(limb);
}

Vec3 rrs_platform_joint(int limb, const RrsConfig& c, const RrsGeometry& g) {
  return rrs_rotation(c.roll, c.pitch) * (g.platform_radius * radial(limb)) +
         Vec3(0.0, 0.0, c.height);
}

bool rrs_config_in_box(const RrsConfig& c, const RrsGeometry& g) {
  return std::abs(c.roll) <= kPi / 4 && std::abs(c.pitch) <= kPi / 4 &&
         c.height >= g.h_min && c.height <= g.h_max;
}

namespace {

bool limb_length_ok(double d, const RrsGeometry& g) {
  return std::abs(d - g.proximal_len) <= g.distal_len + kBoundaryTol;
}

}  // namespace

bool rrs_config_valid(const RrsConfig& c, const RrsGeometry& g) {
  if (!rrs_config_in_box(c, g)) return false;
  for (int i = 0; i < 3; ++i) {
    const double d = (rrs_platform_joint(i, c, g) - rrs_base_joint(i, g)).norm();
    if (!limb_length_ok(d, g)) return false;
  }
  return true;
}

std::optional<LimbSolution> rrs_limb_solve(int limb, const RrsConfig& c,
                                           const RrsGeometry& g) {
  const Vec3 base = rrs_base_joint(limb, g);
  const Vec3 rel = rrs_platform_joint(limb, c, g) - base;
  const double d = rel.norm();
  if (!limb_length_ok(d, g)) return std::nullopt;

  // Horizontal direction of the limb plane, oriented outward.
  Vec3 w(rel.x(), rel.y(), 0.0);
  const double wn = w.norm();
  if (wn > 1e-12) {
    w /= wn;
    if (w.dot(radial(limb)) < 0.0) w = -w;
  } else {
    w = radial(limb);
  }
  const double bh = rel.dot(w);
  const double bz = rel.z();
  const double l1 = g.proximal_len;
  const double l2 = g.distal_len;

  double angle;
  if (d == 0.0) {
    angle = 0.0;
  } else {
    const double cos_beta =
        std::clamp((l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d), -1.0, 1.0);
    const double beta = std::acos(cos_beta);
    const double dir = std::atan2(bz, bh);
    const double t1 = wrap_pi(dir - beta);
    const double t2 = wrap_pi(dir + beta);
    angle = std::cos(t1) >= std::cos(t2) ? t1 : t2;
  }
  const Vec3 elbow = base + l1 * (std::cos(angle) * w + std::sin(angle) * Vec3::UnitZ());
  return LimbSolution{angle, elbow};
}

std::optional<double> rrs_limb_joint_angle(int limb, const RrsConfig& c,
                                           const RrsGeometry& g) {
  auto s = rrs_limb_solve(limb, c, g);
  if (!s) return std::nullopt;
  return s->angle;
}

std::optional<JointAngles3> rrs_joint_angles(const RrsConfig& c, const RrsGeometry& g) {
  JointAngles3 out{};
  for (int i = 0; i < 3; ++i) {
    auto a = rrs_limb_joint_angle(i, c, g);
    if (!a) return std::nullopt;
    out[i] = *a;
  }
  return out;
}

std::optional<Mat3> rrs_jacobian(const RrsConfig& c, const RrsGeometry& g,
                                 double step) {
  Mat3 jac;
  for (int col = 0; col < 3; ++col) {
    RrsConfig plus = c;
    RrsConfig minus = c;
    double* const pp = col == 0 ? &plus.roll : col == 1 ? &plus.pitch : &plus.height;
    double* const pm = col == 0 ? &minus.roll : col == 1 ? &minus.pitch : &minus.height;
    *pp += step;
    *pm -= step;
    auto ap = rrs_joint_angles(plus, g);
    auto am = rrs_joint_angles(minus, g);
    if (!ap || !am) return std::nullopt;
    for (int row = 0; row < 3; ++row) {
      jac(row, col) = wrap_pi((*ap)[row] - (*am)[row]) / (2.0 * step);
    }
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Singular values by one-sided (Hestenes) Jacobi: plane rotations that
// diagonalise m^T m, applied to the columns of m so small singular values
// keep full relative accuracy.

std::array<double, 3> singular_values(const Mat3& m) {
  Mat3 u = m;
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double alpha = u.col(p).squaredNorm();
        const double beta = u.col(q).squaredNorm();
        const double gamma = u.col(p).dot(u.col(q));
        if (gamma == 0.0) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        const Vec3 cp = u.col(p);
        const Vec3 cq = u.col(q);
        u.col(p) = cs * cp - sn * cq;
        u.col(q) = sn * cp + cs * cq;
      }
    }
    if (off < 1e-15) break;
  }
  std::array<double, 3> s{u.col(0).norm(), u.col(1).norm(), u.col(2).norm()};
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

double min_singular_value(const Mat3& m) { return singular_values(m)[2]; }

double condition_number(const Mat3& m) {
  const auto s = singular_values(m);
  if (s[2] == 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / s[2];
}

}  // namespace pih

#pragma once

// Analytic kinematics for the Delta (peg carrier) and the 3-RRS (dome
// carrier). Every function here is pure; the environment, the atlas and the
// baselines all query these as ground truth.

#include <array>
#include <optional>

#include <Eigen/Dense>

namespace pih {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct DeltaParams {
  double active_rod_len = 0.3;   // l_a
  double passive_rod_len = 0.6;  // l_p
  double base_radius = 0.15;
  double platform_radius = 0.05;
  double pin_length = 0.1;  // peg extends along -z from the platform centre

  // Planar bound of the conservative cylinder workspace.
  double r_max() const;
  double z_low() const { return -(active_rod_len + passive_rod_len); }
  double z_high() const { return -(active_rod_len - passive_rod_len); }
  bool valid() const;
};

struct RrsGeometry {
  double base_radius = 0.20;      // R_b
  double platform_radius = 0.12;  // R_p
  double proximal_len = 0.16;     // L_1
  double distal_len = 0.22;       // L_2
  double h_min = 0.10;
  double h_max = 0.30;

  double mid_height() const { return 0.5 * (h_min + h_max); }
  bool valid() const;
};

struct RrsConfig {
  double roll = 0.0;
  double pitch = 0.0;
  double height = 0.0;
};

using JointAngles3 = std::array<double, 3>;

/// Limb/arm azimuths around the vertical axis: 0, 120 and 240 degrees.
double limb_azimuth(int limb);

// --- Delta ----------------------------------------------------------------

bool delta_workspace_contains(const Vec3& p, const DeltaParams& g);

/// Elbow-out inverse kinematics. Returns nullopt when any arm has no real
/// circle-sphere intersection or the elbow-out angle leaves [0, pi].
std::optional<JointAngles3> delta_inverse_kinematics(const Vec3& p,
                                                     const DeltaParams& g);

/// Base hinge of arm i (A_i at phi is hinge + l_a * (cos phi u_i - sin phi z)).
Vec3 delta_base_hinge(int arm, const DeltaParams& g);
Vec3 delta_elbow(int arm, double phi, const DeltaParams& g);
Vec3 delta_platform_joint(int arm, const Vec3& p, const DeltaParams& g);

Vec3 delta_pin_tip(const Vec3& p, const DeltaParams& g);

/// Valid for the environment: inside the cylinder and IK-solvable.
bool delta_pose_valid(const Vec3& p, const DeltaParams& g);

// --- 3-RRS ----------------------------------------------------------------

/// R_x(roll) R_y(pitch).
Mat3 rrs_rotation(double roll, double pitch);

Vec3 rrs_base_joint(int limb, const RrsGeometry& g);
Vec3 rrs_platform_joint(int limb, const RrsConfig& c, const RrsGeometry& g);

bool rrs_config_in_box(const RrsConfig& c, const RrsGeometry& g);
bool rrs_config_valid(const RrsConfig& c, const RrsGeometry& g);

struct LimbSolution {
  double angle;  // elevation of the proximal link above the outward horizontal
  Vec3 elbow;
};

/// Active joint of one limb by the law of cosines in the vertical plane
/// through J_i and B_i. nullopt iff the triangle inequality fails.
std::optional<LimbSolution> rrs_limb_solve(int limb, const RrsConfig& c,
                                           const RrsGeometry& g);
std::optional<double> rrs_limb_joint_angle(int limb, const RrsConfig& c,
                                           const RrsGeometry& g);
std::optional<JointAngles3> rrs_joint_angles(const RrsConfig& c,
                                             const RrsGeometry& g);

inline constexpr double kJacobianStep = 1e-6;

/// Central-difference Jacobian d(theta_1..3)/d(roll, pitch, height).
/// nullopt when any perturbed configuration has no limb solution.
std::optional<Mat3> rrs_jacobian(const RrsConfig& c, const RrsGeometry& g,
                                 double step = kJacobianStep);

// --- Singular values -------------------------------------------------------

/// Singular values in descending order, from a cyclic Jacobi eigen-solve
/// of m^T m.
std::array<double, 3> singular_values(const Mat3& m);
double min_singular_value(const Mat3& m);
/// sigma_max / sigma_min, +inf when sigma_min is zero.
double condition_number(const Mat3& m);

}  // namespace pih

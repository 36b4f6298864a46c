#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/SVD>

#include "pih/kinematics.hpp"

using namespace pih;
using doctest::Approx;

namespace {

DeltaParams delta_defaults() { return DeltaParams{}; }

Vec3 random_delta_pose(std::mt19937_64& rng, const DeltaParams& g) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> z(g.z_low(), g.z_high());
  while (true) {
    Vec3 p(u(rng) * g.r_max(), u(rng) * g.r_max(), z(rng));
    if (delta_workspace_contains(p, g)) return p;
  }
}

RrsConfig random_rrs_config(std::mt19937_64& rng, const RrsGeometry& g) {
  std::uniform_real_distribution<double> tilt(-std::numbers::pi / 4, std::numbers::pi / 4);
  std::uniform_real_distribution<double> h(g.h_min, g.h_max);
  while (true) {
    RrsConfig c{tilt(rng), tilt(rng), h(rng)};
    if (rrs_config_valid(c, g)) return c;
  }
}

}  // namespace

TEST_CASE("delta workspace membership") {
  const DeltaParams g = delta_defaults();
  CHECK(g.r_max() == Approx(0.24));
  CHECK(delta_workspace_contains(Vec3(0, 0, -0.9), g));
  CHECK_FALSE(delta_workspace_contains(Vec3(0.25, 0, -0.5), g));
  CHECK(delta_workspace_contains(Vec3(0.1, 0.1, -0.6), g));
}

TEST_CASE("delta IK on the axis gives three equal angles") {
  const DeltaParams g = delta_defaults();
  auto phi = delta_inverse_kinematics(Vec3(0, 0, -0.6), g);
  REQUIRE(phi);
  CHECK((*phi)[0] == Approx((*phi)[1]).epsilon(1e-12));
  CHECK((*phi)[1] == Approx((*phi)[2]).epsilon(1e-12));
}

TEST_CASE("delta IK rejects poses beyond reach") {
  const DeltaParams g = delta_defaults();
  CHECK_FALSE(delta_inverse_kinematics(Vec3(0, 0, -2.0), g));
  CHECK_FALSE(delta_inverse_kinematics(Vec3(1.0, 0, -0.6), g));
}

TEST_CASE("delta IK closes every arm on random poses") {
  const DeltaParams g = delta_defaults();
  std::mt19937_64 rng(11);
  int solved = 0;
  for (int k = 0; k < 2000; ++k) {
    const Vec3 p = random_delta_pose(rng, g);
    auto phi = delta_inverse_kinematics(p, g);
    if (!phi) continue;
    ++solved;
    for (int i = 0; i < 3; ++i) {
      CHECK((*phi)[i] >= 0.0);
      CHECK((*phi)[i] <= std::numbers::pi);
      const double r = (delta_elbow(i, (*phi)[i], g) - delta_platform_joint(i, p, g)).norm();
      CHECK(std::abs(r - g.passive_rod_len) < 1e-9);
    }
  }
  CHECK(solved > 0);
}

TEST_CASE("rotating a delta pose by 120 degrees permutes the joint angles") {
  const DeltaParams g = delta_defaults();
  std::mt19937_64 rng(5);
  const double c = std::cos(2 * std::numbers::pi / 3), s = std::sin(2 * std::numbers::pi / 3);
  for (int k = 0; k < 200; ++k) {
    const Vec3 p = random_delta_pose(rng, g);
    const Vec3 q(c * p.x() - s * p.y(), s * p.x() + c * p.y(), p.z());
    auto a = delta_inverse_kinematics(p, g);
    auto b = delta_inverse_kinematics(q, g);
    REQUIRE(a.has_value() == b.has_value());
    if (!a) continue;
    for (int i = 0; i < 3; ++i) CHECK((*b)[(i + 1) % 3] == Approx((*a)[i]).epsilon(1e-9));
  }
}

TEST_CASE("pin tip hangs below the platform") {
  DeltaParams g = delta_defaults();
  CHECK((delta_pin_tip(Vec3(0, 0, -0.5), g) - Vec3(0, 0, -0.6)).norm() < 1e-15);
  CHECK((delta_pin_tip(Vec3(0.1, 0.2, -0.4), g) - Vec3(0.1, 0.2, -0.5)).norm() < 1e-15);
  g.pin_length = 0.0;
  CHECK((delta_pin_tip(Vec3(0.1, 0.2, -0.4), g) - Vec3(0.1, 0.2, -0.4)).norm() == 0.0);
}

TEST_CASE("3-RRS validity") {
  RrsGeometry g;
  CHECK(rrs_config_valid({0, 0, g.mid_height()}, g));
  CHECK_FALSE(rrs_config_valid({std::numbers::pi / 3, 0, g.mid_height()}, g));

  SUBCASE("a fully extended limb is still valid") {
    g.h_max = 0.5;
    const double span = g.proximal_len + g.distal_len;
    const double dr = g.base_radius - g.platform_radius;
    const RrsConfig c{0, 0, std::sqrt(span * span - dr * dr)};
    CHECK(rrs_config_valid(c, g));
    auto sol = rrs_limb_solve(0, c, g);
    REQUIRE(sol);
    const Vec3 j = rrs_base_joint(0, g);
    const Vec3 b = rrs_platform_joint(0, c, g);
    // Elbow on the segment J-B: proximal and distal links collinear.
    const Vec3 u = (sol->elbow - j).normalized();
    const Vec3 v = (b - sol->elbow).normalized();
    CHECK(u.dot(v) == Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("3-RRS home pose has equal limbs") {
  const RrsGeometry g;
  auto th = rrs_joint_angles({0, 0, g.mid_height()}, g);
  REQUIRE(th);
  CHECK((*th)[0] == Approx((*th)[1]).epsilon(1e-12));
  CHECK((*th)[1] == Approx((*th)[2]).epsilon(1e-12));
}

TEST_CASE("3-RRS limb closure on random configurations") {
  const RrsGeometry g;
  std::mt19937_64 rng(3);
  for (int k = 0; k < 2000; ++k) {
    const RrsConfig c = random_rrs_config(rng, g);
    for (int i = 0; i < 3; ++i) {
      auto sol = rrs_limb_solve(i, c, g);
      REQUIRE(sol);
      const Vec3 j = rrs_base_joint(i, g);
      const Vec3 b = rrs_platform_joint(i, c, g);
      CHECK(std::abs((sol->elbow - j).norm() - g.proximal_len) < 1e-9);
      CHECK(std::abs((b - sol->elbow).norm() - g.distal_len) < 1e-9);
    }
  }
}

TEST_CASE("3-RRS jacobian") {
  const RrsGeometry g;
  SUBCASE("tilt columns sum to zero at home") {
    auto jac = rrs_jacobian({0, 0, g.mid_height()}, g);
    REQUIRE(jac);
    CHECK(std::abs(jac->col(0).sum()) < 1e-6);
    CHECK(std::abs(jac->col(1).sum()) < 1e-6);
  }
  // Second-order one-sided oracle: (4 f(x + h/2) - f(x + h) - 3 f(x)) / h.
  SUBCASE("central differences agree with one-sided differences") {
    std::mt19937_64 rng(17);
    const double h = 1e-5;
    int checked = 0;
    for (int k = 0; k < 200; ++k) {
      RrsConfig c = random_rrs_config(rng, g);
      c.roll = std::clamp(c.roll, -0.7, 0.7);
      c.pitch = std::clamp(c.pitch, -0.7, 0.7);
      c.height = std::clamp(c.height, g.h_min + 1e-3, g.h_max - 1e-3);
      auto jac = rrs_jacobian(c, g);
      auto base = rrs_joint_angles(c, g);
      if (!jac || !base) continue;
      if (min_singular_value(*jac) < 0.05) continue;
      Mat3 fwd;
      bool ok = true;
      for (int col = 0; col < 3 && ok; ++col) {
        RrsConfig half = c, full = c;
        (col == 0 ? half.roll : col == 1 ? half.pitch : half.height) += h / 2;
        (col == 0 ? full.roll : col == 1 ? full.pitch : full.height) += h;
        auto th = rrs_joint_angles(half, g);
        auto tf = rrs_joint_angles(full, g);
        ok = th.has_value() && tf.has_value();
        if (ok)
          for (int row = 0; row < 3; ++row)
            fwd(row, col) = (4 * (*th)[row] - (*tf)[row] - 3 * (*base)[row]) / h;
      }
      if (!ok) continue;
      CHECK((fwd - *jac).norm() / jac->norm() < 1e-4);
      ++checked;
    }
    CHECK(checked > 50);
  }
  SUBCASE("sigma_min moves little under small perturbations") {
    std::mt19937_64 rng(19);
    for (int k = 0; k < 200; ++k) {
      RrsConfig c = random_rrs_config(rng, g);
      auto a = rrs_jacobian(c, g);
      c.roll += 1e-4;
      c.pitch -= 1e-4;
      auto b = rrs_jacobian(c, g);
      if (!a || !b) continue;
      CHECK(a->allFinite());
      CHECK(std::abs(min_singular_value(*a) - min_singular_value(*b)) < 1e-2);
    }
  }
}

TEST_CASE("singular values") {
  CHECK(min_singular_value(Mat3::Identity()) == Approx(1.0));
  CHECK(condition_number(Mat3::Identity()) == Approx(1.0));

  Mat3 d = Mat3::Zero();
  d.diagonal() << 2, 1, 0;
  CHECK(min_singular_value(d) == 0.0);
  CHECK(condition_number(d) == std::numeric_limits<double>::infinity());

  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    Mat3 m;
    for (int i = 0; i < 9; ++i) m.data()[i] = n(rng);
    const auto ours = singular_values(m);
    const Eigen::JacobiSVD<Mat3> svd(m);
    const Vec3 ref = svd.singularValues();
    for (int i = 0; i < 3; ++i) CHECK(std::abs(ours[i] - ref[i]) < 1e-10);
  }
}

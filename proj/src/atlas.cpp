#include "pih/atlas.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

namespace pih {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

AtlasStats stats_of(const std::vector<double>& v) {
  AtlasStats s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace

bool DimensionlessDesign::feasible() const {
  return std::abs(lambda1 + lambda2 + lambda3 - 4.0) <= 1e-12 && lambda3 > 0.0 &&
         lambda3 < lambda1 && lambda1 < 2.0 && lambda2 > 0.0 && eta > 0.0;
}

DimensionlessDesign to_dimensionless(const RrsGeometry& g) {
  DimensionlessDesign d;
  d.eta = (g.base_radius + 2.0 * g.proximal_len + g.platform_radius) / 4.0;
  d.lambda1 = g.base_radius / d.eta;
  d.lambda2 = 2.0 * g.proximal_len / d.eta;
  d.lambda3 = g.platform_radius / d.eta;
  return d;
}

RrsGeometry from_dimensionless(const DimensionlessDesign& d, double distal_ratio,
                               double h_min, double h_max) {
  if (!d.feasible()) throw DesignError("dimensionless design violates constraints");
  if (!(distal_ratio > 0.0)) throw DesignError("distal ratio must be positive");
  RrsGeometry g;
  g.base_radius = d.lambda1 * d.eta;
  g.proximal_len = 0.5 * d.lambda2 * d.eta;
  g.platform_radius = d.lambda3 * d.eta;
  g.distal_len = distal_ratio * d.eta;
  g.h_min = h_min;
  g.h_max = h_max;
  return g;
}

int OrientationGrid::cells_per_axis() const {
  return static_cast<int>(std::floor(2.0 * half_range / step + 1e-9)) + 1;
}

double OrientationGrid::total_area() const {
  const double n = cells_per_axis();
  return n * n * step * step;
}

AtlasResult compute_atlas(const RrsGeometry& g, const OrientationGrid& grid,
                          double sigma_threshold) {
  AtlasResult out;
  const int n = grid.cells_per_axis();
  out.cells.reserve(static_cast<std::size_t>(n) * n);

  std::mt19937_64 rng(grid.seed);
  std::uniform_real_distribution<double> jitter(-0.5 * grid.step, 0.5 * grid.step);

  double min_sigma = std::numeric_limits<double>::infinity();
  double joint_lo = std::numeric_limits<double>::infinity();
  double joint_hi = -std::numeric_limits<double>::infinity();
  std::vector<double> kappas;

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      AtlasCell cell;
      cell.theta_x = -grid.half_range + i * grid.step;
      cell.theta_y = -grid.half_range + j * grid.step;
      if (grid.jitter) {
        cell.theta_x += jitter(rng);
        cell.theta_y += jitter(rng);
      }
      const RrsConfig c{cell.theta_x, cell.theta_y, grid.height};
      if (rrs_config_valid(c, g)) {
        if (auto jac = rrs_jacobian(c, g)) {
          const auto sv = singular_values(*jac);
          cell.valid = true;
          cell.sigma_min = sv[2];
          cell.kappa = sv[2] > 0.0 ? sv[0] / sv[2] : std::numeric_limits<double>::infinity();
          cell.in_omega = sv[2] >= sigma_threshold;
        }
      }
      if (cell.in_omega) {
        ++out.omega_cells;
        min_sigma = std::min(min_sigma, cell.sigma_min);
        out.max_roll_deg = std::max(out.max_roll_deg, std::abs(cell.theta_x) * kRadToDeg);
        out.max_pitch_deg = std::max(out.max_pitch_deg, std::abs(cell.theta_y) * kRadToDeg);
        kappas.push_back(cell.kappa);
        if (auto q = rrs_joint_angles(c, g)) {
          for (double a : *q) {
            joint_lo = std::min(joint_lo, a * kRadToDeg);
            joint_hi = std::max(joint_hi, a * kRadToDeg);
          }
        }
      }
      out.cells.push_back(cell);
    }
  }

  out.area = out.omega_cells * grid.step * grid.step;
  if (out.omega_cells > 0) {
    out.min_sigma_min = min_sigma;
    out.joint_min_deg = joint_lo;
    out.joint_max_deg = joint_hi;
    const AtlasStats k = stats_of(kappas);
    // Population spread over the region, not a sample estimate.
    double ss = 0.0;
    for (double x : kappas) ss += (x - k.mean) * (x - k.mean);
    const double sd = std::sqrt(ss / static_cast<double>(kappas.size()));
    out.kappa_variation_pct = k.mean > 0.0 ? 100.0 * sd / k.mean : 0.0;
  }
  return out;
}

std::vector<bool> singularity_loci(const RrsGeometry& g, const OrientationGrid& grid) {
  const AtlasResult atlas = compute_atlas(g, grid, kSingularSigma);
  std::vector<bool> loci;
  loci.reserve(atlas.cells.size());
  for (const auto& c : atlas.cells) loci.push_back(!c.valid || c.sigma_min < kSingularSigma);
  return loci;
}

AtlasSummary summarize_atlas(const RrsGeometry& g, OrientationGrid grid,
                             double sigma_threshold, int runs) {
  std::array<std::vector<double>, 7> cols;
  const std::uint64_t base = grid.seed;
  for (int r = 0; r < runs; ++r) {
    grid.seed = base + static_cast<std::uint64_t>(r);
    const AtlasResult a = compute_atlas(g, grid, sigma_threshold);
    cols[0].push_back(a.area);
    cols[1].push_back(a.min_sigma_min);
    cols[2].push_back(a.max_roll_deg);
    cols[3].push_back(a.max_pitch_deg);
    cols[4].push_back(a.kappa_variation_pct);
    cols[5].push_back(a.joint_min_deg);
    cols[6].push_back(a.joint_max_deg);
  }
  return AtlasSummary{stats_of(cols[0]), stats_of(cols[1]), stats_of(cols[2]),
                      stats_of(cols[3]), stats_of(cols[4]), stats_of(cols[5]),
                      stats_of(cols[6])};
}

namespace {

struct Vertex {
  std::array<double, 2> x;
  double f;  // negated area, minimised
};

}  // namespace

OptimizeResult optimize_design(const RrsGeometry& initial, const OrientationGrid& grid,
                               double sigma_threshold, const NelderMeadOptions& options,
                               int summary_runs) {
  const DimensionlessDesign start = to_dimensionless(initial);
  if (!start.feasible()) throw DesignError("initial design violates constraints");
  const double distal_ratio = initial.distal_len / start.eta;

  OptimizeResult result;

  auto design_at = [&](const std::array<double, 2>& x) {
    DimensionlessDesign d;
    d.eta = start.eta;
    d.lambda1 = x[0];
    d.lambda2 = x[1];
    d.lambda3 = 4.0 - x[0] - x[1];
    return d;
  };
  auto objective = [&](const std::array<double, 2>& x) {
    ++result.evaluations;
    const DimensionlessDesign d = design_at(x);
    if (!d.feasible()) return 1.0;  // area -1
    const RrsGeometry g = from_dimensionless(d, distal_ratio, initial.h_min, initial.h_max);
    return -compute_atlas(g, grid, sigma_threshold).area;
  };

  std::array<Vertex, 3> simplex;
  simplex[0].x = {start.lambda1, start.lambda2};
  simplex[1].x = {start.lambda1 + options.initial_edge, start.lambda2};
  simplex[2].x = {start.lambda1, start.lambda2 + options.initial_edge};
  for (auto& v : simplex) v.f = objective(v.x);

  auto lerp = [](const std::array<double, 2>& a, const std::array<double, 2>& b, double t) {
    return std::array<double, 2>{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])};
  };
  auto diameter = [&] {
    double dmax = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j)
        dmax = std::max(dmax, std::hypot(simplex[i].x[0] - simplex[j].x[0],
                                         simplex[i].x[1] - simplex[j].x[1]));
    return dmax;
  };

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    std::stable_sort(simplex.begin(), simplex.end(),
                     [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    if (diameter() < options.tolerance) break;

    const std::array<double, 2> centroid{0.5 * (simplex[0].x[0] + simplex[1].x[0]),
                                         0.5 * (simplex[0].x[1] + simplex[1].x[1])};
    Vertex& worst = simplex[2];
    const Vertex reflected{lerp(centroid, worst.x, -1.0), 0.0};
    const double fr = objective(reflected.x);

    if (fr < simplex[0].f) {
      const std::array<double, 2> ex = lerp(centroid, worst.x, -2.0);
      const double fe = objective(ex);
      worst = fe < fr ? Vertex{ex, fe} : Vertex{reflected.x, fr};
    } else if (fr < simplex[1].f) {
      worst = Vertex{reflected.x, fr};
    } else {
      const bool outside = fr < worst.f;
      const std::array<double, 2> ct =
          outside ? lerp(centroid, reflected.x, 0.5) : lerp(centroid, worst.x, 0.5);
      const double fc = objective(ct);
      if (fc < (outside ? fr : worst.f)) {
        worst = Vertex{ct, fc};
      } else {
        for (int i = 1; i < 3; ++i) {
          simplex[i].x = lerp(simplex[0].x, simplex[i].x, 0.5);
          simplex[i].f = objective(simplex[i].x);
        }
      }
    }
  }
  std::stable_sort(simplex.begin(), simplex.end(),
                   [](const Vertex& a, const Vertex& b) { return a.f < b.f; });

  // The starting point is a vertex of the first simplex and the best vertex
  // never gets worse, so the result is at least as good as the start.
  result.iterations = it;
  result.design = design_at(simplex[0].x);
  result.geometry =
      from_dimensionless(result.design, distal_ratio, initial.h_min, initial.h_max);
  result.atlas = compute_atlas(result.geometry, grid, sigma_threshold);
  if (summary_runs > 0) {
    result.initial_summary = summarize_atlas(initial, grid, sigma_threshold, summary_runs);
    result.final_summary =
        summarize_atlas(result.geometry, grid, sigma_threshold, summary_runs);
  }
  return result;
}

}  // namespace pih

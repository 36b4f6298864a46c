#pragma once

// Orientation-workspace delineation and geometric design optimisation of the
// 3-RRS: singularity maps, conditioning statistics, the dimensionless design
// space and a Nelder-Mead search that maximises the well-conditioned area.

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pih/kinematics.hpp"

namespace pih {

struct DimensionlessDesign {
  double lambda1 = 0.0;  // R_b / eta
  double lambda2 = 0.0;  // 2 L_1 / eta
  double lambda3 = 0.0;  // R_p / eta
  double eta = 0.0;      // (R_b + 2 L_1 + R_p) / 4, metres

  bool feasible() const;
};

class DesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

DimensionlessDesign to_dimensionless(const RrsGeometry& g);

/// Inverse of to_dimensionless. The distal length is distal_ratio * eta and
/// the heights are passed through. Throws DesignError when infeasible.
RrsGeometry from_dimensionless(const DimensionlessDesign& d, double distal_ratio,
                               double h_min, double h_max);

struct OrientationGrid {
  double half_range = std::numbers::pi / 3;
  double step = std::numbers::pi / 180;
  double height = 0.2;
  bool jitter = true;
  std::uint64_t seed = 0;

  int cells_per_axis() const;
  double total_area() const;
};

struct AtlasCell {
  double theta_x = 0.0;
  double theta_y = 0.0;
  bool valid = false;  // in box, all limbs closed and Jacobian defined
  double sigma_min = 0.0;
  double kappa = 0.0;
  bool in_omega = false;
};

struct AtlasResult {
  double area = 0.0;  // rad^2
  int omega_cells = 0;
  double min_sigma_min = 0.0;
  double max_roll_deg = 0.0;
  double max_pitch_deg = 0.0;
  double kappa_variation_pct = 0.0;  // 100 * std / mean of kappa over Omega
  double joint_min_deg = 0.0;
  double joint_max_deg = 0.0;
  std::vector<AtlasCell> cells;  // row-major, theta_x outer
};

inline constexpr double kOmegaSigmaThreshold = 0.15;
inline constexpr double kSingularSigma = 1e-6;

AtlasResult compute_atlas(const RrsGeometry& g, const OrientationGrid& grid,
                          double sigma_threshold = kOmegaSigmaThreshold);

/// Per-cell flag: true where the cell is invalid or sigma_min < 1e-6.
std::vector<bool> singularity_loci(const RrsGeometry& g, const OrientationGrid& grid);

struct NelderMeadOptions {
  double initial_edge = 0.1;
  double tolerance = 1e-3;  // simplex diameter
  int max_iterations = 200;
};

struct AtlasStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct AtlasSummary {
  AtlasStats area;
  AtlasStats min_sigma_min;
  AtlasStats max_roll_deg;
  AtlasStats max_pitch_deg;
  AtlasStats kappa_variation_pct;
  AtlasStats joint_min_deg;
  AtlasStats joint_max_deg;
};

/// Statistics of compute_atlas over `runs` jitter seeds starting at base_seed.
AtlasSummary summarize_atlas(const RrsGeometry& g, OrientationGrid grid,
                             double sigma_threshold, int runs);

struct OptimizeResult {
  DimensionlessDesign design;
  RrsGeometry geometry;
  AtlasResult atlas;  // at the optimisation seed
  AtlasSummary initial_summary;
  AtlasSummary final_summary;
  int iterations = 0;
  int evaluations = 0;
};

/// Maximise the well-conditioned area over (lambda1, lambda2) with
/// lambda3 = 4 - lambda1 - lambda2, holding eta, the distal/eta ratio and
/// the heights of `initial` fixed. Infeasible points score -1.
OptimizeResult optimize_design(const RrsGeometry& initial, const OrientationGrid& grid,
                               double sigma_threshold = kOmegaSigmaThreshold,
                               const NelderMeadOptions& options = {},
                               int summary_runs = 10);

}  // namespace pih

#pragma once

// Rollout evaluation, baselines and the ablation suite.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pih/config.hpp"
#include "pih/env.hpp"
#include "pih/net.hpp"
#include "pih/trainer.hpp"

namespace pih {

/// Welford running mean and sample standard deviation.
class RunningStats {
 public:
  void add(double x);
  std::size_t count() const { return n_; }
  double mean() const { return n_ ? mean_ : 0.0; }
  double stddev() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual void reset(const Env& env, std::uint64_t seed) { (void)env, (void)seed; }
  /// `obs` is the (possibly perturbed) normalised observation.
  virtual int act(const Env& env, const Observation& obs, const ActionMask& mask) = 0;
};

/// Masked argmax of the zero-noise network.
class GreedyPolicy : public Policy {
 public:
  GreedyPolicy(QNetwork net, Params params);
  std::string name() const override { return "greedy"; }
  int act(const Env& env, const Observation& obs, const ActionMask& mask) override;

 private:
  QNetwork net_;
  Params params_;
  NoiseState zero_;
};

class RandomPolicy : public Policy {
 public:
  std::string name() const override { return "random"; }
  void reset(const Env& env, std::uint64_t seed) override;
  int act(const Env& env, const Observation& obs, const ActionMask& mask) override;

 private:
  std::mt19937_64 rng_;
};

/// Drives the Delta upward and keeps commanding past the workspace boundary.
class ViolatingPolicy : public Policy {
 public:
  std::string name() const override { return "violating"; }
  int act(const Env& env, const Observation& obs, const ActionMask& mask) override;
};

/// Open-loop two-phase script per target: tilt the dome so the hole axis is
/// vertical (on the rotation lattice), then move the pin along a staircase
/// approximation of the straight segment to a point above the mouth and
/// push axially. The plan is fixed when the target is selected.
class PlannerPolicy : public Policy {
 public:
  std::string name() const override { return "planner"; }
  void reset(const Env& env, std::uint64_t seed) override;
  int act(const Env& env, const Observation& obs, const ActionMask& mask) override;

  /// Tilt (roll, pitch) that turns a platform-frame normal to +z.
  static std::pair<double, double> alignment_tilt(const Vec3& local_normal);
  static std::vector<int> plan(const Env& env, int target);

 private:
  std::vector<int> script_;
  std::size_t cursor_ = 0;
  int planned_target_ = -1;
  bool hover_up_ = true;
};

std::unique_ptr<Policy> make_policy(const std::string& kind, const Checkpoint* checkpoint);

struct EpisodeMetrics {
  bool success = false;
  double completion_time_s = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> alignment_errors_deg;
  int collisions = 0;
  double energy = 0.0;
  double rms_error_mm = 0.0;
  int steps = 0;
  double reward = 0.0;
  int holes = 0;
  int violations = 0;
  bool singular = false;
  bool completed = false;
};

/// One rollout. Gaussian noise of `noise_sigma` perturbs only the policy's
/// observation. `trace` receives per-step JSON lines when given.
EpisodeMetrics run_episode(Env& env, Policy& policy, std::uint64_t seed, double noise_sigma,
                           std::ostream* trace = nullptr);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;
};

struct SeedMetrics {
  int seed = 0;
  double success_pct = 0.0;
  double completion_time_s = 0.0;  // mean over successful episodes (NaN if none)
  double alignment_error_deg = 0.0;  // mean over insertion events (NaN if none)
  double collisions = 0.0;
  double energy = 0.0;
  double rms_error_mm = 0.0;
  double singular_terminations = 0.0;  // count per seed
};

struct MetricsTable {
  std::string policy;
  std::vector<SeedMetrics> seeds;
  std::vector<EpisodeMetrics> episodes;  // all seeds, in order
  std::vector<int> episode_seed_index;
  MetricSummary success_pct, completion_time_s, alignment_error_deg, collisions, energy,
      rms_error_mm;
};

struct EvalProtocol {
  int episodes = 100;
  int seeds = 5;
  double noise_sigma = 0.0;
  std::uint64_t base_seed = 1000;
};

MetricsTable evaluate(const EvalProtocol& protocol, const DeltaParams& delta,
                      const RrsGeometry& rrs, const TaskConfig& task,
                      const std::function<std::unique_ptr<Policy>()>& make);

/// Per-episode rows: seed, episode, success, completion_time_s, alignment_error_deg,
/// collisions, energy, rms_error_mm, steps, reward, holes, violations, singular.
void write_metrics_csv(std::ostream& os, const MetricsTable& table);
std::string metrics_table_json(const MetricsTable& table);

// ---------------------------------------------------------------------------

struct AblationCellSpec {
  std::string name;
  AblationFlags flags;
  bool optimized_geometry = true;
};

struct AblationSeedResult {
  std::uint64_t seed = 0;
  double final_success_pct = 0.0;  // greedy evaluation of the final network
  std::int64_t steps_to_threshold = -1;  // first step where the moving success rate > threshold
  int singular_terminations = 0;
  int violation_terminations = 0;  // singular or dead-end episode endings
  int episodes = 0;
  double mean_reward = 0.0;
};

struct AblationCellResult {
  AblationCellSpec spec;
  std::vector<AblationSeedResult> seeds;
  MetricSummary success_pct, singular_terminations, violation_terminations;
  bool failed = false;
  std::string error;
};

struct AblationTable {
  std::vector<AblationCellResult> cells;
};

/// Standard rows: full Rainbow, each single removal, and the initial
/// geometry (the full row doubles as the optimised-geometry row).
std::vector<AblationCellSpec> standard_ablation_cells();

std::int64_t steps_to_threshold(const std::vector<EpisodeRecord>& episodes, int window,
                                double threshold);

AblationSeedResult summarize_training(const TrainResult& run, const AppConfig& cfg,
                                      std::uint64_t seed, int eval_episodes);

AblationTable run_ablation_suite(const AppConfig& cfg, const std::vector<AblationCellSpec>& cells,
                                 const std::vector<std::uint64_t>& seeds, int eval_episodes,
                                 const std::function<void(const std::string&)>& progress = {});

std::string ablation_table_json(const AblationTable& table);
void write_ablation_csv(std::ostream& os, const AblationTable& table);

}  // namespace pih

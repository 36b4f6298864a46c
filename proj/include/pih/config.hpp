#pragma once

// JSON run configuration: {delta, rrs, task, train, eval}. Every section and
// key is optional; unknown keys are rejected with the line they appear on.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pih/env.hpp"
#include "pih/kinematics.hpp"
#include "pih/net.hpp"

namespace pih {

struct AblationFlags {
  bool double_q = true;
  bool dueling = true;
  bool per = true;
  bool nstep = true;
  bool noisy = true;
  bool distributional = true;

  static AblationFlags vanilla() { return {false, false, false, false, false, false}; }
  /// Disable one component by name ("double", "dueling", "per", "nstep",
  /// "noisy", "distributional") or all of them ("all"/"vanilla").
  void disable(const std::string& name);
  std::string describe() const;
  bool operator==(const AblationFlags&) const = default;
};

struct TrainConfig {
  double lr = 1e-4;
  double lr_decay = 0.999;  // per episode
  double lr_min = 1e-5;
  double weight_decay = 1e-5;
  double grad_clip = 5.0;
  double gamma = 0.99;
  int n_step = 3;
  int batch = 64;
  double tau = 1e-3;
  int atoms = 51;
  double v_min = -10.0;
  double v_max = 200.0;
  std::vector<int> hidden = {256, 128, 64};
  std::int64_t total_steps = 100000;
  std::int64_t buffer_capacity = 1000000;
  double alpha = 0.6;
  double beta_start = 0.4;
  double beta_end = 1.0;
  double eps_per = 1e-3;
  std::int64_t warmup = 1000;
  // Only used when NoisyNet exploration is off.
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_decay_steps = 10000;
  LossKind loss = LossKind::kHuber;
  std::int64_t checkpoint_every = 0;  // steps; 0 writes only the final checkpoint
  bool optimize_geometry = true;      // run the design optimiser on rrs first
  std::uint64_t seed = 1;
  AblationFlags flags;

  NetConfig net_config() const;
};

struct EvalConfig {
  int episodes = 100;
  int seeds = 5;
  double noise_sigma = 0.0;
  std::string policy = "checkpoint";  // checkpoint | planner | random | violating
  int ablation_eval_episodes = 20;
};

struct AppConfig {
  DeltaParams delta;
  RrsGeometry rrs;
  TaskConfig task;
  TrainConfig train;
  EvalConfig eval;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

AppConfig parse_config(const std::string& text);
AppConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const AppConfig& cfg);
/// FNV-1a 64 over the canonical serialisation, as 16 hex digits.
std::string config_hash(const AppConfig& cfg);
/// Validate value ranges; throws ConfigError.
void validate_config(const AppConfig& cfg);

}  // namespace pih

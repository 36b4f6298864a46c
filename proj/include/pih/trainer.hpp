#pragma once

// Rainbow training loop: masked action selection, categorical double-DQN
// targets, Adam with weight decay and clipping, Polyak target updates,
// prioritized n-step replay, curriculum and per-episode logging.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pih/config.hpp"
#include "pih/env.hpp"
#include "pih/net.hpp"
#include "pih/replay.hpp"

namespace pih {

/// Argmax over Q with masked actions excluded; ties go to the lowest index.
/// Returns -1 for an empty mask.
int masked_argmax(std::span<const double> q, const ActionMask& mask);

int select_action(const QNetwork& net, const Params& params, const NoiseState& noise,
                  const Observation& obs, const ActionMask& mask);

/// Categorical projection of reward + discount * z_j onto the support.
/// `done` collapses every atom onto clip(reward).
std::vector<double> project_distribution(std::span<const double> next_probs,
                                         std::span<const double> support, double reward,
                                         double discount, bool done);

/// Learning target for one n-step transition. With `double_q` the online
/// net (zero noise) picks the next action and the target net scores it;
/// otherwise the target net does both.
Target build_target(const QNetwork& net, const Params& online, const Params& target,
                    const NStepTransition& t, double gamma, bool double_q);

/// build_target for a whole batch, sharing the network passes.
std::vector<Target> build_targets(const QNetwork& net, const Params& online, const Params& target,
                                  std::span<const NStepTransition* const> batch, double gamma,
                                  bool double_q);

class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Params& params, const std::vector<double>& grad, double lr);
  std::int64_t steps() const { return t_; }

 private:
  std::vector<double> m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
};

/// target <- (1 - tau) target + tau online.
void polyak_update(Params& target, const Params& online, double tau);

struct TrainDiagnostics {
  double loss = 0.0;
  double mean_max_q = 0.0;
  double grad_norm = 0.0;  // before clipping
  std::vector<double> td_error;
};

struct EpisodeRecord {
  int episode = 0;
  std::int64_t end_step = 0;
  int steps = 0;
  double reward = 0.0;
  double duration_s = 0.0;
  int holes = 0;
  bool success = false;
  int violations = 0;
  bool singular = false;
  bool dead_end = false;
  bool completed = false;
  int stage = 0;
  double loss = 0.0;   // mean over this episode's updates (0 before warmup)
  double max_q = 0.0;  // mean over this episode's updates
  double lr = 0.0;
  double noise_mag = 0.0;
  double epsilon = 0.0;
};

std::string episode_to_json(const EpisodeRecord& r);
EpisodeRecord episode_from_json(const std::string& line);

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::uint64_t seed);

  const QNetwork& net() const { return net_; }
  const Params& online() const { return online_; }
  const Params& target() const { return target_; }
  Params& online_mut() { return online_; }
  Params& target_mut() { return target_; }
  const PrioritizedBuffer& buffer() const { return buffer_; }
  double lr() const { return lr_; }

  /// Exploration policy for one environment step (noise resample or epsilon).
  int act(const Observation& obs, const ActionMask& mask, std::int64_t step);
  double epsilon(std::int64_t step) const;
  double noise_magnitude() const;

  /// Feed one raw transition; emitted n-step transitions enter the buffer.
  void observe(const RawTransition& t);
  void end_episode();  // flush the n-step queue
  bool ready() const;
  TrainDiagnostics train_step(std::int64_t step);
  void decay_lr();

 private:
  TrainConfig cfg_;
  QNetwork net_;
  Params online_;
  Params target_;
  Adam adam_;
  PrioritizedBuffer buffer_;
  NStepQueue nstep_;
  NoiseState act_noise_;
  NoiseState batch_noise_;
  std::mt19937_64 noise_rng_;
  std::mt19937_64 replay_rng_;
  std::mt19937_64 explore_rng_;
  double lr_;
  std::vector<double> grad_;
};

struct TrainOptions {
  std::filesystem::path out_dir;            // empty: keep everything in memory
  std::optional<RrsGeometry> rrs_override;  // skips the geometry optimiser
  std::ostream* trace = nullptr;            // per-step JSON lines
  std::function<void(const EpisodeRecord&)> on_episode;
};

struct TrainResult {
  NetConfig net_config;
  Params params;
  RrsGeometry geometry;
  std::vector<EpisodeRecord> episodes;
  std::int64_t steps = 0;
  int final_stage = 0;
};

/// Geometry the agent trains on: the optimised design when
/// train.optimize_geometry is set, otherwise the configured one.
RrsGeometry resolve_geometry(const AppConfig& cfg);

TrainResult run_training(const AppConfig& cfg, const TrainOptions& options = {});

/// Deterministic per-episode reset seed.
std::uint64_t episode_seed(std::uint64_t base, std::uint64_t episode);

}  // namespace pih

#pragma once

// Dueling, distributional, noisy Q-network with hand-written backprop.
//
// Parameters live in one flat vector so the optimiser, the Polyak update
// and checkpoints all work on contiguous storage. The network object only
// describes the layout; parameter vectors are plain values that can be
// copied into snapshots (target network, evaluation) freely.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pih {

inline constexpr int kStateDim = 12;
inline constexpr int kNumActions = 12;

using Params = std::vector<double>;

struct NetConfig {
  int input_dim = kStateDim;
  std::array<int, 3> hidden = {256, 128, 64};
  int actions = kNumActions;
  int atoms = 51;  // forced to 1 when not distributional
  double v_min = -10.0;
  double v_max = 200.0;
  bool dueling = true;
  bool noisy = true;
  bool distributional = true;

  int out_atoms() const { return distributional ? atoms : 1; }
  bool operator==(const NetConfig&) const = default;
};

/// One dense layer's slice of the flat parameter vector. Weights are
/// row-major [out][in]. Noisy layers carry a second (sigma) weight and bias
/// block directly after the mean block.
struct LayerLayout {
  std::string name;
  int in = 0;
  int out = 0;
  bool noisy = false;
  std::size_t w_mu = 0, b_mu = 0, w_sigma = 0, b_sigma = 0;
};

struct NoiseState {
  // Per noisy layer: f(eps_in) and f(eps_out), f(x) = sign(x) sqrt(|x|).
  std::vector<std::vector<double>> eps_in;
  std::vector<std::vector<double>> eps_out;
  bool zero = true;
};

enum class LossKind { kHuber, kCrossEntropy };

class NetworkFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Activations kept for one sample so that backward can run later.
struct ForwardCache {
  std::vector<std::vector<double>> acts;  // input, then post-ReLU hidden
  std::vector<double> head_value;         // atoms (dueling only)
  std::vector<double> head_adv;           // actions * atoms
  std::vector<double> logits;             // actions * atoms, combined
  std::vector<double> probs;              // softmax per action (distributional)
  std::vector<double> q;                  // expected value per action
};

struct LossResult {
  double loss = 0.0;  // (1/B) sum_i w_i L_i
  std::vector<double> per_sample_loss;
  std::vector<double> td_error;  // E[prediction] - E[target]
  std::vector<double> max_q;     // max_a Q(s_i, a) of the prediction
};

/// One training target: a projected distribution (distributional head) or
/// a scalar return (scalar head, size 1).
using Target = std::vector<double>;

class QNetwork {
 public:
  explicit QNetwork(NetConfig config);

  const NetConfig& config() const { return config_; }
  const std::vector<LayerLayout>& layers() const { return layers_; }
  std::size_t param_count() const { return param_count_; }
  std::span<const double> support() const { return support_; }

  /// Uniform(+-1/sqrt(fan_in)) means, sigma = 0.5/sqrt(fan_in) for noisy layers.
  Params init_params(std::uint64_t seed) const;

  NoiseState zero_noise() const;
  void resample_noise(NoiseState& noise, std::mt19937_64& rng) const;
  /// || sigma .* eps || over all noisy weights and biases.
  double noise_magnitude(const Params& params, const NoiseState& noise) const;

  void forward(const Params& params, const NoiseState& noise,
               std::span<const double> input, ForwardCache& cache) const;

  /// Same as forward() for every input, sharing weight reads across samples.
  void forward_batch(const Params& params, const NoiseState& noise,
                     std::span<const std::array<double, kStateDim>> inputs,
                     std::vector<ForwardCache>& caches) const;

  /// Q-values only (no cache kept by the caller).
  std::array<double, kNumActions> q_values(const Params& params, const NoiseState& noise,
                                           std::span<const double> input) const;

  /// Weighted loss and its gradient w.r.t. all parameters (written into
  /// `grad`, which is resized and zeroed). No clipping here.
  LossResult gradients(const Params& params, const NoiseState& noise,
                       std::span<const std::array<double, kStateDim>> inputs,
                       std::span<const int> actions, std::span<const Target> targets,
                       std::span<const double> weights, LossKind loss,
                       std::vector<double>& grad) const;

  /// Loss only, same definition as gradients().
  LossResult loss(const Params& params, const NoiseState& noise,
                  std::span<const std::array<double, kStateDim>> inputs,
                  std::span<const int> actions, std::span<const Target> targets,
                  std::span<const double> weights, LossKind loss) const;

  /// Clamp every sigma entry to be non-negative.
  void clamp_sigma(Params& params) const;
  /// Mask of sigma entries in the flat vector.
  std::vector<bool> sigma_mask() const;

 private:
  double sample_loss(const ForwardCache& cache, int action, const Target& target,
                     LossKind kind, std::vector<double>* dlogits) const;
  void backward_batch(const Params& params, const NoiseState& noise,
                      const std::vector<ForwardCache>& caches,
                      std::vector<std::vector<double>>& dlogits,
                      std::vector<double>& grad) const;
  void finish_head(ForwardCache& cache) const;

  NetConfig config_;
  std::vector<LayerLayout> layers_;  // 3 hidden, then value (if dueling), then advantage/q
  std::vector<double> support_;
  std::size_t param_count_ = 0;
};

/// Scaled L2 norm clip. Returns the pre-clip norm.
double clip_gradient(std::vector<double>& grad, double max_norm);

double expected_value(std::span<const double> probs, std::span<const double> support);

// Checkpoints: little-endian binary with a magic/version header, the net
// config, a layer-shape manifest and the flat parameter array.
void save_checkpoint(const std::filesystem::path& path, const QNetwork& net,
                     const Params& params);
struct Checkpoint {
  NetConfig config;
  Params params;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pih

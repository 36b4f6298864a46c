#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <deque>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "pih/net.hpp"

namespace pih {

using Observation = std::array<double, kStateDim>;
using ActionMask = std::bitset<kNumActions>;

struct RawTransition {
  Observation state{};
  int action = 0;
  double reward = 0.0;
  Observation next_state{};
  ActionMask next_mask;
  bool done = false;  // no bootstrap from next_state
};

struct NStepTransition {
  Observation state{};
  int action = 0;
  double reward = 0.0;  // sum_{i<k} gamma^i r_i
  Observation next_state{};
  ActionMask next_mask;
  bool done = false;
  int horizon = 1;  // k; the bootstrap discount is gamma^k
};

/// Assembles n-step transitions from consecutive raw steps of one episode.
class NStepQueue {
 public:
  NStepQueue(int n, double gamma);

  /// Emits the transition starting at the oldest queued step once n steps
  /// are queued, or when `t` ends the episode.
  std::optional<NStepTransition> push_raw(const RawTransition& t);
  /// Remaining partial transitions at episode end; leaves the queue empty.
  std::vector<NStepTransition> flush();
  void clear() { queue_.clear(); }
  std::size_t size() const { return queue_.size(); }
  int n() const { return n_; }

 private:
  NStepTransition assemble() const;

  int n_;
  double gamma_;
  std::deque<RawTransition> queue_;
};

/// Binary sum tree over a power-of-two number of leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  void set(std::size_t index, double value);
  double get(std::size_t index) const { return tree_[leaves_ + index]; }
  double total() const { return tree_[1]; }
  /// Leaf whose prefix interval contains `mass` (0 <= mass < total).
  std::size_t find(double mass) const;
  std::size_t capacity() const { return capacity_; }
  /// Sum of leaves recomputed from scratch.
  double leaf_sum() const;

 private:
  std::size_t capacity_;
  std::size_t leaves_;
  std::vector<double> tree_;
};

class ReplayError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct SampledBatch {
  std::vector<std::size_t> indices;
  std::vector<const NStepTransition*> items;
  std::vector<double> weights;  // max-normalised to (0, 1]
};

/// Proportional prioritized replay with FIFO eviction. Priorities p_i are
/// stored raw; the tree holds p_i^alpha. alpha = 0 gives uniform replay.
class PrioritizedBuffer {
 public:
  PrioritizedBuffer(std::size_t capacity, double alpha, double eps_per = 1e-3);

  /// Insert at the running maximum priority (1.0 before any update).
  std::size_t insert(NStepTransition t);
  void insert_with_priority(NStepTransition t, double priority);
  SampledBatch sample(std::size_t batch, double beta, std::mt19937_64& rng) const;
  /// p_i = |td_i| + eps_per.
  void update_priorities(const std::vector<std::size_t>& indices,
                         const std::vector<double>& td_errors);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  double max_priority() const { return max_priority_; }
  double priority(std::size_t i) const { return priorities_.at(i); }
  double alpha() const { return alpha_; }
  const SumTree& tree() const { return tree_; }
  const NStepTransition& at(std::size_t i) const { return data_.at(i); }

 private:
  void set_priority(std::size_t i, double p);

  std::size_t capacity_;
  double alpha_;
  double eps_per_;
  SumTree tree_;
  std::vector<NStepTransition> data_;
  std::vector<double> priorities_;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
  double max_priority_ = 1.0;
};

/// Linear anneal from start to end over `steps`.
double linear_schedule(double start, double end, double progress_steps, double steps);

}  // namespace pih

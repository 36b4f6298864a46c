#include "pih/replay.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace pih {

NStepQueue::NStepQueue(int n, double gamma) : n_(n), gamma_(gamma) {
  if (n < 1) throw ReplayError("n-step horizon must be >= 1");
}

NStepTransition NStepQueue::assemble() const {
  const RawTransition& first = queue_.front();
  NStepTransition out;
  out.state = first.state;
  out.action = first.action;
  double discount = 1.0;
  int k = 0;
  for (const auto& raw : queue_) {
    out.reward += discount * raw.reward;
    discount *= gamma_;
    ++k;
    out.next_state = raw.next_state;
    out.next_mask = raw.next_mask;
    out.done = raw.done;
    if (raw.done || k == n_) break;
  }
  out.horizon = k;
  return out;
}

std::optional<NStepTransition> NStepQueue::push_raw(const RawTransition& t) {
  queue_.push_back(t);
  if (static_cast<int>(queue_.size()) >= n_ || t.done) {
    NStepTransition out = assemble();
    queue_.pop_front();
    return out;
  }
  return std::nullopt;
}

std::vector<NStepTransition> NStepQueue::flush() {
  std::vector<NStepTransition> out;
  while (!queue_.empty()) {
    out.push_back(assemble());
    queue_.pop_front();
  }
  return out;
}

// ---------------------------------------------------------------------------

SumTree::SumTree(std::size_t capacity)
    : capacity_(capacity), leaves_(std::bit_ceil(std::max<std::size_t>(capacity, 1))) {
  tree_.assign(2 * leaves_, 0.0);
}

void SumTree::set(std::size_t index, double value) {
  std::size_t node = leaves_ + index;
  tree_[node] = value;
  // Recompute parents from children rather than propagating a delta, so
  // rounding cannot accumulate in the internal nodes.
  for (node >>= 1; node >= 1; node >>= 1) tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
}

std::size_t SumTree::find(double mass) const {
  std::size_t node = 1;
  while (node < leaves_) {
    const double left = tree_[2 * node];
    if (mass < left || tree_[2 * node + 1] <= 0.0) {
      node = 2 * node;
    } else {
      mass -= left;
      node = 2 * node + 1;
    }
  }
  return std::min(node - leaves_, capacity_ - 1);
}

double SumTree::leaf_sum() const {
  double s = 0.0;
  for (std::size_t i = 0; i < capacity_; ++i) s += tree_[leaves_ + i];
  return s;
}

// ---------------------------------------------------------------------------

PrioritizedBuffer::PrioritizedBuffer(std::size_t capacity, double alpha, double eps_per)
    : capacity_(capacity), alpha_(alpha), eps_per_(eps_per), tree_(capacity) {
  if (capacity == 0) throw ReplayError("replay capacity must be positive");
  priorities_.assign(capacity, 0.0);
}

void PrioritizedBuffer::set_priority(std::size_t i, double p) {
  priorities_[i] = p;
  tree_.set(i, std::pow(p, alpha_));
}

std::size_t PrioritizedBuffer::insert(NStepTransition t) {
  const std::size_t slot = next_;
  insert_with_priority(std::move(t), max_priority_);
  return slot;
}

void PrioritizedBuffer::insert_with_priority(NStepTransition t, double priority) {
  if (!(priority > 0.0)) throw ReplayError("priority must be positive");
  const std::size_t slot = next_;
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[slot] = std::move(t);
  }
  set_priority(slot, priority);
  max_priority_ = std::max(max_priority_, priority);
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

SampledBatch PrioritizedBuffer::sample(std::size_t batch, double beta,
                                       std::mt19937_64& rng) const {
  if (size_ == 0) throw ReplayError("sampling from an empty replay buffer");
  SampledBatch out;
  out.indices.reserve(batch);
  out.items.reserve(batch);
  out.weights.reserve(batch);
  const double total = tree_.total();
  std::uniform_real_distribution<double> u(0.0, total);
  double wmax = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t i = tree_.find(u(rng));
    if (i >= size_) i = size_ - 1;
    const double prob = tree_.get(i) / total;
    const double w = std::pow(static_cast<double>(size_) * prob, -beta);
    wmax = std::max(wmax, w);
    out.indices.push_back(i);
    out.items.push_back(&data_[i]);
    out.weights.push_back(w);
  }
  for (double& w : out.weights) w /= wmax;
  return out;
}

void PrioritizedBuffer::update_priorities(const std::vector<std::size_t>& indices,
                                          const std::vector<double>& td_errors) {
  if (indices.size() != td_errors.size()) throw ReplayError("priority update shape mismatch");
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size_) throw ReplayError("priority update index out of range");
    const double p = std::abs(td_errors[k]) + eps_per_;
    set_priority(indices[k], p);
    max_priority_ = std::max(max_priority_, p);
  }
}

double linear_schedule(double start, double end, double progress_steps, double steps) {
  if (steps <= 0.0) return end;
  const double f = std::clamp(progress_steps / steps, 0.0, 1.0);
  return start + f * (end - start);
}

}  // namespace pih

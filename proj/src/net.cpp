#include "pih/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pih/simd/kernels.hpp"

namespace pih {

namespace {

double noise_transform(double x) { return std::copysign(std::sqrt(std::abs(x)), x); }

double huber(double x) {
  const double a = std::abs(x);
  return a <= 1.0 ? 0.5 * x * x : a - 0.5;
}

void softmax(std::span<const double> logits, std::span<double> out) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
}

}  // namespace

QNetwork::QNetwork(NetConfig config) : config_(config) {
  if (!config_.distributional) config_.atoms = 1;
  if (config_.atoms < 1 || config_.actions < 1 || config_.input_dim < 1)
    throw NetworkFault("invalid network shape");
  if (config_.distributional && (config_.atoms < 2 || !(config_.v_max > config_.v_min)))
    throw NetworkFault("distributional head needs >= 2 atoms on a proper interval");

  std::size_t offset = 0;
  auto add = [&](std::string name, int in, int out, bool noisy) {
    LayerLayout l;
    l.name = std::move(name);
    l.in = in;
    l.out = out;
    l.noisy = noisy;
    l.w_mu = offset;
    offset += static_cast<std::size_t>(in) * out;
    l.b_mu = offset;
    offset += out;
    if (noisy) {
      l.w_sigma = offset;
      offset += static_cast<std::size_t>(in) * out;
      l.b_sigma = offset;
      offset += out;
    }
    layers_.push_back(std::move(l));
  };
  int in = config_.input_dim;
  for (int i = 0; i < 3; ++i) {
    add("hidden" + std::to_string(i), in, config_.hidden[i], false);
    in = config_.hidden[i];
  }
  const int atoms = config_.atoms;
  if (config_.dueling) {
    add("value", in, atoms, config_.noisy);
    add("advantage", in, config_.actions * atoms, config_.noisy);
  } else {
    add("q", in, config_.actions * atoms, config_.noisy);
  }
  param_count_ = offset;

  if (config_.distributional) {
    support_.resize(atoms);
    const double dz = (config_.v_max - config_.v_min) / (atoms - 1);
    for (int j = 0; j < atoms; ++j) support_[j] = config_.v_min + j * dz;
  }
}

Params QNetwork::init_params(std::uint64_t seed) const {
  Params p(param_count_, 0.0);
  std::mt19937_64 rng(seed);
  for (const auto& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t nw = static_cast<std::size_t>(l.in) * l.out;
    for (std::size_t i = 0; i < nw; ++i) p[l.w_mu + i] = u(rng);
    for (int i = 0; i < l.out; ++i) p[l.b_mu + i] = u(rng);
    if (l.noisy) {
      const double s = 0.5 / std::sqrt(static_cast<double>(l.in));
      std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(l.w_sigma), nw, s);
      std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(l.b_sigma), l.out, s);
    }
  }
  return p;
}

NoiseState QNetwork::zero_noise() const {
  NoiseState n;
  for (const auto& l : layers_) {
    if (!l.noisy) continue;
    n.eps_in.emplace_back(l.in, 0.0);
    n.eps_out.emplace_back(l.out, 0.0);
  }
  n.zero = true;
  return n;
}

void QNetwork::resample_noise(NoiseState& noise, std::mt19937_64& rng) const {
  if (noise.eps_in.empty()) noise = zero_noise();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < noise.eps_in.size(); ++k) {
    for (double& e : noise.eps_in[k]) e = noise_transform(normal(rng));
    for (double& e : noise.eps_out[k]) e = noise_transform(normal(rng));
  }
  noise.zero = noise.eps_in.empty();
}

double QNetwork::noise_magnitude(const Params& params, const NoiseState& noise) const {
  if (noise.zero) return 0.0;
  double ss = 0.0;
  std::size_t k = 0;
  for (const auto& l : layers_) {
    if (!l.noisy) continue;
    const auto& ei = noise.eps_in[k];
    const auto& eo = noise.eps_out[k];
    for (int o = 0; o < l.out; ++o) {
      const double* row = params.data() + l.w_sigma + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) {
        const double v = row[i] * eo[o] * ei[i];
        ss += v * v;
      }
      const double b = params[l.b_sigma + o] * eo[o];
      ss += b * b;
    }
    ++k;
  }
  return std::sqrt(ss);
}

namespace {

// y = W x + b (+ noise terms). `k` is the noisy-layer index or -1.
void layer_forward(const LayerLayout& l, const Params& p, const NoiseState& noise, int k,
                   std::span<const double> x, std::span<double> y,
                   std::vector<double>& scratch) {
  const auto& kt = simd::kernels();
  const std::size_t in = static_cast<std::size_t>(l.in);
  for (int o = 0; o < l.out; ++o) {
    y[o] = kt.dot(p.data() + l.w_mu + o * in, x.data(), in) + p[l.b_mu + o];
  }
  if (l.noisy && !noise.zero) {
    const auto& ei = noise.eps_in[k];
    const auto& eo = noise.eps_out[k];
    scratch.assign(in, 0.0);
    kt.fma_mul(ei.data(), x.data(), scratch.data(), in);
    for (int o = 0; o < l.out; ++o) {
      y[o] += eo[o] * (kt.dot(p.data() + l.w_sigma + o * in, scratch.data(), in) +
                       p[l.b_sigma + o]);
    }
  }
}

// Batched rows are processed four at a time; a short final group is padded
// with a zero row whose results are discarded.
struct RowGroups {
  std::vector<double> zero_in, sink_out;
  std::vector<std::array<const double*, 4>> in;
  std::vector<std::array<double*, 4>> out;
  std::vector<int> count;

  void build(const std::vector<const double*>& x, const std::vector<double*>& y,
             std::size_t in_dim, std::size_t out_dim) {
    zero_in.assign(in_dim, 0.0);
    sink_out.assign(out_dim, 0.0);
    in.clear();
    out.clear();
    count.clear();
    for (std::size_t b = 0; b < x.size(); b += 4) {
      std::array<const double*, 4> gi{};
      std::array<double*, 4> go{};
      const int n = static_cast<int>(std::min<std::size_t>(4, x.size() - b));
      for (int k = 0; k < 4; ++k) {
        gi[k] = k < n ? x[b + k] : zero_in.data();
        go[k] = k < n ? (y.empty() ? nullptr : y[b + k]) : sink_out.data();
      }
      in.push_back(gi);
      out.push_back(go);
      count.push_back(n);
    }
  }
};

void dense_batch(const double* w, const double* bias, const RowGroups& g, std::size_t in,
                 int out, const double* eps_out) {
  const auto& kt = simd::kernels();
  double r[4];
  for (int o = 0; o < out; ++o) {
    const double* row = w + o * in;
    const double scale = eps_out ? eps_out[o] : 1.0;
    for (std::size_t gi = 0; gi < g.in.size(); ++gi) {
      kt.dot4(row, g.in[gi].data(), r, in);
      for (int k = 0; k < g.count[gi]; ++k) g.out[gi][k][o] += scale * (r[k] + bias[o]);
    }
  }
}

void layer_forward_batch(const LayerLayout& l, const Params& p, const NoiseState& noise, int k,
                         const std::vector<const double*>& x, const std::vector<double*>& y,
                         std::vector<std::vector<double>>& xe) {
  const std::size_t in = static_cast<std::size_t>(l.in);
  for (double* row : y) std::fill_n(row, l.out, 0.0);
  RowGroups g;
  g.build(x, y, in, static_cast<std::size_t>(l.out));
  dense_batch(p.data() + l.w_mu, p.data() + l.b_mu, g, in, l.out, nullptr);
  if (l.noisy && !noise.zero) {
    const auto& kt = simd::kernels();
    xe.resize(x.size());
    std::vector<const double*> xp(x.size());
    for (std::size_t b = 0; b < x.size(); ++b) {
      xe[b].assign(in, 0.0);
      kt.fma_mul(noise.eps_in[k].data(), x[b], xe[b].data(), in);
      xp[b] = xe[b].data();
    }
    g.build(xp, y, in, static_cast<std::size_t>(l.out));
    dense_batch(p.data() + l.w_sigma, p.data() + l.b_sigma, g, in, l.out,
                noise.eps_out[k].data());
  }
}

// Accumulates dW = sum_b dy_b x_b^T (and db) and, when dx is non-empty,
// dx_b += W^T dy_b.
void dense_backward_batch(const double* w, double* gw, double* gb,
                          const std::vector<const double*>& x,
                          const std::vector<const double*>& dy, const std::vector<double*>& dx,
                          std::size_t in, int out) {
  const auto& kt = simd::kernels();
  RowGroups g;
  g.build(x, dx, in, in);
  const std::size_t batch = x.size();
  for (int o = 0; o < out; ++o) {
    double* grow = gw + o * in;
    const double* wrow = w + o * in;
    for (std::size_t gi = 0; gi < g.in.size(); ++gi) {
      double c[4] = {0.0, 0.0, 0.0, 0.0};
      bool any = false;
      for (int k = 0; k < g.count[gi]; ++k) {
        c[k] = dy[gi * 4 + k][o];
        any = any || c[k] != 0.0;
      }
      if (!any) continue;
      gb[o] += (c[0] + c[1]) + (c[2] + c[3]);
      kt.axpy4(c, g.in[gi].data(), grow, in);
      if (!dx.empty()) kt.scatter4(c, wrow, g.out[gi].data(), in);
    }
  }
  (void)batch;
}

void layer_backward_batch(const LayerLayout& l, const Params& p, const NoiseState& noise,
                          int k, const std::vector<const double*>& x,
                          const std::vector<const double*>& dy, const std::vector<double*>& dx,
                          std::vector<double>& grad) {
  const std::size_t in = static_cast<std::size_t>(l.in);
  dense_backward_batch(p.data() + l.w_mu, grad.data() + l.w_mu, grad.data() + l.b_mu, x, dy, dx,
                       in, l.out);
  if (!(l.noisy && !noise.zero)) return;
  const auto& kt = simd::kernels();
  const auto& ei = noise.eps_in[k];
  const auto& eo = noise.eps_out[k];
  const std::size_t batch = x.size();
  std::vector<std::vector<double>> xe(batch), dye(batch), dxe(batch);
  std::vector<const double*> xp(batch), dyp(batch);
  std::vector<double*> dxp;
  for (std::size_t b = 0; b < batch; ++b) {
    xe[b].assign(in, 0.0);
    kt.fma_mul(ei.data(), x[b], xe[b].data(), in);
    xp[b] = xe[b].data();
    dye[b].resize(l.out);
    for (int o = 0; o < l.out; ++o) dye[b][o] = dy[b][o] * eo[o];
    dyp[b] = dye[b].data();
    if (!dx.empty()) {
      dxe[b].assign(in, 0.0);
      dxp.push_back(dxe[b].data());
    }
  }
  dense_backward_batch(p.data() + l.w_sigma, grad.data() + l.w_sigma, grad.data() + l.b_sigma,
                       xp, dyp, dxp, in, l.out);
  if (!dx.empty())
    for (std::size_t b = 0; b < batch; ++b) kt.fma_mul(dxe[b].data(), ei.data(), dx[b], in);
}

}  // namespace

void QNetwork::forward(const Params& params, const NoiseState& noise,
                       std::span<const double> input, ForwardCache& cache) const {
  if (params.size() != param_count_) throw NetworkFault("parameter vector size mismatch");
  if (static_cast<int>(input.size()) != config_.input_dim)
    throw NetworkFault("input dimension mismatch");
  std::vector<double> scratch;

  cache.acts.resize(4);
  cache.acts[0].assign(input.begin(), input.end());
  for (int i = 0; i < 3; ++i) {
    const auto& l = layers_[i];
    auto& y = cache.acts[i + 1];
    y.resize(l.out);
    layer_forward(l, params, noise, -1, cache.acts[i], y, scratch);
    for (double& v : y) v = v > 0.0 ? v : 0.0;
  }
  const auto& h = cache.acts[3];
  const std::size_t width = static_cast<std::size_t>(config_.actions) * config_.atoms;
  if (config_.dueling) {
    cache.head_value.resize(config_.atoms);
    cache.head_adv.resize(width);
    layer_forward(layers_[3], params, noise, 0, h, cache.head_value, scratch);
    layer_forward(layers_[4], params, noise, 1, h, cache.head_adv, scratch);
  } else {
    cache.logits.resize(width);
    layer_forward(layers_[3], params, noise, 0, h, cache.logits, scratch);
  }
  finish_head(cache);
}

void QNetwork::forward_batch(const Params& params, const NoiseState& noise,
                             std::span<const std::array<double, kStateDim>> inputs,
                             std::vector<ForwardCache>& caches) const {
  if (params.size() != param_count_) throw NetworkFault("parameter vector size mismatch");
  if (config_.input_dim != kStateDim) throw NetworkFault("input dimension mismatch");
  const std::size_t batch = inputs.size();
  caches.resize(batch);
  std::vector<std::vector<double>> xe;
  std::vector<const double*> x(batch);
  std::vector<double*> y(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    caches[b].acts.resize(4);
    caches[b].acts[0].assign(inputs[b].begin(), inputs[b].end());
  }
  for (int i = 0; i < 3; ++i) {
    for (std::size_t b = 0; b < batch; ++b) {
      caches[b].acts[i + 1].resize(layers_[i].out);
      x[b] = caches[b].acts[i].data();
      y[b] = caches[b].acts[i + 1].data();
    }
    layer_forward_batch(layers_[i], params, noise, -1, x, y, xe);
    for (std::size_t b = 0; b < batch; ++b)
      for (double& v : caches[b].acts[i + 1]) v = v > 0.0 ? v : 0.0;
  }
  const std::size_t width = static_cast<std::size_t>(config_.actions) * config_.atoms;
  for (std::size_t b = 0; b < batch; ++b) x[b] = caches[b].acts[3].data();
  if (config_.dueling) {
    for (std::size_t b = 0; b < batch; ++b) {
      caches[b].head_value.resize(config_.atoms);
      y[b] = caches[b].head_value.data();
    }
    layer_forward_batch(layers_[3], params, noise, 0, x, y, xe);
    for (std::size_t b = 0; b < batch; ++b) {
      caches[b].head_adv.resize(width);
      y[b] = caches[b].head_adv.data();
    }
    layer_forward_batch(layers_[4], params, noise, 1, x, y, xe);
  } else {
    for (std::size_t b = 0; b < batch; ++b) {
      caches[b].logits.resize(width);
      y[b] = caches[b].logits.data();
    }
    layer_forward_batch(layers_[3], params, noise, 0, x, y, xe);
  }
  for (auto& c : caches) finish_head(c);
}

void QNetwork::finish_head(ForwardCache& cache) const {
  const int atoms = config_.atoms;
  const int actions = config_.actions;
  cache.logits.resize(static_cast<std::size_t>(actions) * atoms);
  if (config_.dueling) {
    for (int j = 0; j < atoms; ++j) {
      double mean = 0.0;
      for (int a = 0; a < actions; ++a) mean += cache.head_adv[a * atoms + j];
      mean /= actions;
      for (int a = 0; a < actions; ++a)
        cache.logits[a * atoms + j] = cache.head_value[j] + cache.head_adv[a * atoms + j] - mean;
    }
  }

  for (double v : cache.logits)
    if (!std::isfinite(v)) throw NetworkFault("non-finite network output");

  cache.q.resize(actions);
  if (config_.distributional) {
    cache.probs.resize(cache.logits.size());
    for (int a = 0; a < actions; ++a) {
      std::span<const double> lg(cache.logits.data() + a * atoms, atoms);
      std::span<double> pr(cache.probs.data() + a * atoms, atoms);
      softmax(lg, pr);
      cache.q[a] = expected_value(pr, support_);
    }
  } else {
    cache.probs.clear();
    for (int a = 0; a < actions; ++a) cache.q[a] = cache.logits[a];
  }
}

std::array<double, kNumActions> QNetwork::q_values(const Params& params,
                                                   const NoiseState& noise,
                                                   std::span<const double> input) const {
  ForwardCache cache;
  forward(params, noise, input, cache);
  std::array<double, kNumActions> q{};
  std::copy_n(cache.q.begin(), std::min<std::size_t>(kNumActions, cache.q.size()), q.begin());
  return q;
}

double QNetwork::sample_loss(const ForwardCache& cache, int action, const Target& target,
                             LossKind kind, std::vector<double>* dlogits) const {
  const int atoms = config_.atoms;
  if (dlogits) dlogits->assign(cache.logits.size(), 0.0);
  if (!config_.distributional) {
    const double diff = cache.q[action] - target.at(0);
    if (dlogits) (*dlogits)[action] = std::clamp(diff, -1.0, 1.0);
    return huber(diff);
  }
  if (static_cast<int>(target.size()) != atoms) throw NetworkFault("target size mismatch");
  const double* p = cache.probs.data() + action * atoms;
  double loss = 0.0;
  if (kind == LossKind::kHuber) {
    double pg = 0.0;
    std::vector<double> g(atoms);
    for (int j = 0; j < atoms; ++j) {
      const double diff = p[j] - target[j];
      loss += huber(diff);
      g[j] = std::clamp(diff, -1.0, 1.0);
      pg += p[j] * g[j];
    }
    if (dlogits)
      for (int j = 0; j < atoms; ++j) (*dlogits)[action * atoms + j] = p[j] * (g[j] - pg);
  } else {
    const double* lg = cache.logits.data() + action * atoms;
    double m = lg[0];
    for (int j = 1; j < atoms; ++j) m = std::max(m, lg[j]);
    double s = 0.0;
    for (int j = 0; j < atoms; ++j) s += std::exp(lg[j] - m);
    const double lse = m + std::log(s);
    double tsum = 0.0;
    for (int j = 0; j < atoms; ++j) {
      loss -= target[j] * (lg[j] - lse);
      tsum += target[j];
    }
    if (dlogits)
      for (int j = 0; j < atoms; ++j) (*dlogits)[action * atoms + j] = tsum * p[j] - target[j];
  }
  return loss;
}

void QNetwork::backward_batch(const Params& params, const NoiseState& noise,
                              const std::vector<ForwardCache>& caches,
                              std::vector<std::vector<double>>& dlogits,
                              std::vector<double>& grad) const {
  const int atoms = config_.atoms;
  const int actions = config_.actions;
  const std::size_t batch = caches.size();
  std::vector<std::vector<double>> dh(batch, std::vector<double>(config_.hidden[2], 0.0));
  std::vector<const double*> x(batch), dy(batch);
  std::vector<double*> dx(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    x[b] = caches[b].acts[3].data();
    dx[b] = dh[b].data();
  }

  if (config_.dueling) {
    std::vector<std::vector<double>> dv(batch, std::vector<double>(atoms, 0.0));
    for (std::size_t b = 0; b < batch; ++b) {
      auto& dl = dlogits[b];
      for (int a = 0; a < actions; ++a)
        for (int j = 0; j < atoms; ++j) dv[b][j] += dl[a * atoms + j];
      // Centred advantages: d adv = d logit - mean over actions.
      for (int a = 0; a < actions; ++a)
        for (int j = 0; j < atoms; ++j) dl[a * atoms + j] -= dv[b][j] / actions;
      dy[b] = dv[b].data();
    }
    layer_backward_batch(layers_[3], params, noise, 0, x, dy, dx, grad);
    for (std::size_t b = 0; b < batch; ++b) dy[b] = dlogits[b].data();
    layer_backward_batch(layers_[4], params, noise, 1, x, dy, dx, grad);
  } else {
    for (std::size_t b = 0; b < batch; ++b) dy[b] = dlogits[b].data();
    layer_backward_batch(layers_[3], params, noise, 0, x, dy, dx, grad);
  }

  std::vector<std::vector<double>> cur = std::move(dh), next;
  for (int i = 2; i >= 0; --i) {
    next.assign(i > 0 ? batch : 0, std::vector<double>(layers_[i].in, 0.0));
    std::vector<double*> dxi;
    for (std::size_t b = 0; b < batch; ++b) {
      // ReLU: gradient passes where the activation is positive.
      const auto& act = caches[b].acts[i + 1];
      for (std::size_t k = 0; k < cur[b].size(); ++k)
        if (act[k] <= 0.0) cur[b][k] = 0.0;
      x[b] = caches[b].acts[i].data();
      dy[b] = cur[b].data();
      if (i > 0) dxi.push_back(next[b].data());
    }
    layer_backward_batch(layers_[i], params, noise, -1, x, dy, dxi, grad);
    cur = std::move(next);
  }
}

LossResult QNetwork::gradients(const Params& params, const NoiseState& noise,
                               std::span<const std::array<double, kStateDim>> inputs,
                               std::span<const int> actions, std::span<const Target> targets,
                               std::span<const double> weights, LossKind kind,
                               std::vector<double>& grad) const {
  const std::size_t batch = inputs.size();
  if (actions.size() != batch || targets.size() != batch || weights.size() != batch)
    throw NetworkFault("batch shape mismatch");
  grad.assign(param_count_, 0.0);
  LossResult r;
  r.per_sample_loss.resize(batch);
  r.td_error.resize(batch);
  r.max_q.resize(batch);
  std::vector<ForwardCache> caches;
  forward_batch(params, noise, inputs, caches);
  std::vector<std::vector<double>> dlogits(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const ForwardCache& cache = caches[i];
    const double l = sample_loss(cache, actions[i], targets[i], kind, &dlogits[i]);
    r.per_sample_loss[i] = l;
    r.loss += weights[i] * l;
    const double tv = config_.distributional ? expected_value(targets[i], support_)
                                             : targets[i].at(0);
    r.td_error[i] = cache.q[actions[i]] - tv;
    r.max_q[i] = *std::max_element(cache.q.begin(), cache.q.end());
    const double scale = weights[i] / static_cast<double>(batch);
    for (double& v : dlogits[i]) v *= scale;
  }
  if (batch > 0) backward_batch(params, noise, caches, dlogits, grad);
  r.loss /= static_cast<double>(batch);
  for (double g : grad)
    if (!std::isfinite(g)) throw NetworkFault("non-finite gradient");
  return r;
}

LossResult QNetwork::loss(const Params& params, const NoiseState& noise,
                          std::span<const std::array<double, kStateDim>> inputs,
                          std::span<const int> actions, std::span<const Target> targets,
                          std::span<const double> weights, LossKind kind) const {
  const std::size_t batch = inputs.size();
  LossResult r;
  r.per_sample_loss.resize(batch);
  r.td_error.resize(batch);
  r.max_q.resize(batch);
  ForwardCache cache;
  for (std::size_t i = 0; i < batch; ++i) {
    forward(params, noise, inputs[i], cache);
    const double l = sample_loss(cache, actions[i], targets[i], kind, nullptr);
    r.per_sample_loss[i] = l;
    r.loss += weights[i] * l;
    const double tv = config_.distributional ? expected_value(targets[i], support_)
                                             : targets[i].at(0);
    r.td_error[i] = cache.q[actions[i]] - tv;
    r.max_q[i] = *std::max_element(cache.q.begin(), cache.q.end());
  }
  r.loss /= static_cast<double>(batch);
  return r;
}

std::vector<bool> QNetwork::sigma_mask() const {
  std::vector<bool> mask(param_count_, false);
  for (const auto& l : layers_) {
    if (!l.noisy) continue;
    const std::size_t nw = static_cast<std::size_t>(l.in) * l.out;
    for (std::size_t i = 0; i < nw; ++i) mask[l.w_sigma + i] = true;
    for (int i = 0; i < l.out; ++i) mask[l.b_sigma + i] = true;
  }
  return mask;
}

void QNetwork::clamp_sigma(Params& params) const {
  for (const auto& l : layers_) {
    if (!l.noisy) continue;
    const std::size_t nw = static_cast<std::size_t>(l.in) * l.out;
    for (std::size_t i = 0; i < nw; ++i) params[l.w_sigma + i] = std::max(0.0, params[l.w_sigma + i]);
    for (int i = 0; i < l.out; ++i) params[l.b_sigma + i] = std::max(0.0, params[l.b_sigma + i]);
  }
}

double clip_gradient(std::vector<double>& grad, double max_norm) {
  const double norm = std::sqrt(simd::dot(grad, grad));
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

double expected_value(std::span<const double> probs, std::span<const double> support) {
  double s = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) s += probs[j] * support[j];
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'I', 'H', 'Q', 'N', 'E', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw NetworkFault("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const QNetwork& net,
                     const Params& params) {
  if (params.size() != net.param_count()) throw NetworkFault("parameter vector size mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NetworkFault("cannot write checkpoint " + path.string());
  const NetConfig& c = net.config();
  out.write(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  put<std::int32_t>(out, c.input_dim);
  for (int h : c.hidden) put<std::int32_t>(out, h);
  put<std::int32_t>(out, c.actions);
  put<std::int32_t>(out, c.atoms);
  put(out, c.v_min);
  put(out, c.v_max);
  put<std::uint8_t>(out, c.dueling);
  put<std::uint8_t>(out, c.noisy);
  put<std::uint8_t>(out, c.distributional);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.name.size()));
    out.write(l.name.data(), static_cast<std::streamsize>(l.name.size()));
    put<std::int32_t>(out, l.in);
    put<std::int32_t>(out, l.out);
    put<std::uint8_t>(out, l.noisy);
  }
  put<std::uint64_t>(out, params.size());
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!out) throw NetworkFault("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NetworkFault("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw NetworkFault("not a network checkpoint: " + path.string());
  if (get<std::uint32_t>(in) != kCheckpointVersion)
    throw NetworkFault("unsupported checkpoint version");
  Checkpoint ck;
  NetConfig& c = ck.config;
  c.input_dim = get<std::int32_t>(in);
  for (int& h : c.hidden) h = get<std::int32_t>(in);
  c.actions = get<std::int32_t>(in);
  c.atoms = get<std::int32_t>(in);
  c.v_min = get<double>(in);
  c.v_max = get<double>(in);
  c.dueling = get<std::uint8_t>(in) != 0;
  c.noisy = get<std::uint8_t>(in) != 0;
  c.distributional = get<std::uint8_t>(in) != 0;
  const QNetwork net(c);
  const auto nlayers = get<std::uint32_t>(in);
  if (nlayers != net.layers().size()) throw NetworkFault("checkpoint layer manifest mismatch");
  for (const auto& l : net.layers()) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto lin = get<std::int32_t>(in);
    const auto lout = get<std::int32_t>(in);
    const bool noisy = get<std::uint8_t>(in) != 0;
    if (!in || name != l.name || lin != l.in || lout != l.out || noisy != l.noisy)
      throw NetworkFault("checkpoint layer manifest mismatch at " + l.name);
  }
  const auto count = get<std::uint64_t>(in);
  if (count != net.param_count()) throw NetworkFault("checkpoint parameter count mismatch");
  ck.params.resize(count);
  in.read(reinterpret_cast<char*>(ck.params.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw NetworkFault("truncated checkpoint");
  return ck;
}

}  // namespace pih

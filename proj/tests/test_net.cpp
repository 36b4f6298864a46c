#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "pih/net.hpp"

using namespace pih;
using doctest::Approx;

namespace {

using Input = std::array<double, kStateDim>;

std::vector<Input> random_inputs(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Input> out(n);
  for (auto& x : out)
    for (double& v : x) v = u(rng);
  return out;
}

Target random_target(const QNetwork& net, std::mt19937_64& rng) {
  const int atoms = net.config().out_atoms();
  if (atoms == 1) return {std::uniform_real_distribution<double>(-0.5, 0.5)(rng)};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Target t(atoms);
  double s = 0.0;
  for (double& v : t) s += (v = u(rng));
  for (double& v : t) v /= s;
  return t;
}

std::size_t expected_count(const NetConfig& c) {
  std::size_t n = 0;
  int in = c.input_dim;
  for (int h : c.hidden) {
    n += std::size_t(in) * h + h;
    in = h;
  }
  const int mult = c.noisy ? 2 : 1;
  const int atoms = c.out_atoms();
  if (c.dueling) n += mult * (std::size_t(in) * atoms + atoms);
  n += mult * (std::size_t(in) * c.actions * atoms + std::size_t(c.actions) * atoms);
  return n;
}

std::vector<NetConfig> all_variants() {
  std::vector<NetConfig> out;
  for (int mask = 0; mask < 8; ++mask) {
    NetConfig c;
    c.dueling = mask & 1;
    c.noisy = mask & 2;
    c.distributional = mask & 4;
    out.push_back(c);
  }
  return out;
}

}  // namespace

TEST_CASE("parameter counts follow the layer sizes") {
  for (const NetConfig& c : all_variants()) {
    const QNetwork net(c);
    CHECK(net.param_count() == expected_count(c));
    CHECK(net.init_params(1).size() == net.param_count());
  }
  const QNetwork full(NetConfig{});
  CHECK(full.param_count() == 130670);
}

TEST_CASE("forward produces normalised distributions and is deterministic") {
  const QNetwork net(NetConfig{});
  const Params p = net.init_params(4);
  std::mt19937_64 rng(1);
  const auto inputs = random_inputs(rng, 8);
  NoiseState noise = net.zero_noise();
  net.resample_noise(noise, rng);
  for (const auto& x : inputs) {
    ForwardCache a, b;
    net.forward(p, net.zero_noise(), x, a);
    net.forward(p, net.zero_noise(), x, b);
    CHECK(a.q == b.q);
    ForwardCache n;
    net.forward(p, noise, x, n);
    for (int act = 0; act < kNumActions; ++act) {
      double s = 0.0;
      for (int j = 0; j < 51; ++j) {
        const double pr = n.probs[act * 51 + j];
        CHECK(pr >= 0.0);
        s += pr;
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("batched forward matches single-sample forward") {
  for (const NetConfig& c : all_variants()) {
    const QNetwork net(c);
    const Params p = net.init_params(9);
    std::mt19937_64 rng(2);
    NoiseState noise = net.zero_noise();
    net.resample_noise(noise, rng);
    const auto inputs = random_inputs(rng, 7);
    std::vector<ForwardCache> batch;
    net.forward_batch(p, noise, inputs, batch);
    REQUIRE(batch.size() == inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      ForwardCache one;
      net.forward(p, noise, inputs[i], one);
      for (int a = 0; a < kNumActions; ++a) CHECK(batch[i].q[a] == Approx(one.q[a]).epsilon(1e-12));
    }
  }
}

TEST_CASE("expected value over the support") {
  const QNetwork net(NetConfig{});
  const auto z = net.support();
  REQUIRE(z.size() == 51);
  CHECK(z.front() == -10.0);
  CHECK(z.back() == 200.0);
  std::vector<double> one_hot(51, 0.0);
  one_hot.back() = 1.0;
  CHECK(expected_value(one_hot, z) == Approx(200.0));
  std::vector<double> uniform(51, 1.0 / 51);
  CHECK(expected_value(uniform, z) == Approx(95.0));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> r(51);
  double s = 0.0;
  for (double& v : r) s += (v = u(rng));
  for (double& v : r) v /= s;
  long double direct = 0.0L;
  for (int j = 0; j < 51; ++j) direct += static_cast<long double>(r[j]) * z[j];
  CHECK(expected_value(r, z) == Approx(static_cast<double>(direct)).epsilon(1e-12));
}

TEST_CASE("a batch whose targets equal the prediction has zero gradient") {
  for (LossKind kind : {LossKind::kHuber, LossKind::kCrossEntropy}) {
    for (const NetConfig& c : all_variants()) {
      const QNetwork net(c);
      const Params p = net.init_params(5);
      std::mt19937_64 rng(4);
      const auto inputs = random_inputs(rng, 4);
      const std::vector<int> actions = {0, 3, 7, 11};
      std::vector<Target> targets;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        ForwardCache fc;
        net.forward(p, net.zero_noise(), inputs[i], fc);
        const int a = actions[i];
        if (c.distributional)
          targets.emplace_back(fc.probs.begin() + a * 51, fc.probs.begin() + (a + 1) * 51);
        else
          targets.push_back({fc.q[a]});
      }
      const std::vector<double> w(4, 1.0);
      std::vector<double> grad;
      net.gradients(p, net.zero_noise(), inputs, actions, targets, w, kind, grad);
      const double norm = std::sqrt(std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
      CHECK(norm < 1e-12);
    }
  }
}

TEST_CASE("analytic gradients match central differences on every layer type") {
  const double h = 1e-5;
  for (LossKind kind : {LossKind::kHuber, LossKind::kCrossEntropy}) {
    for (const NetConfig& c : all_variants()) {
      if (!c.distributional && kind == LossKind::kCrossEntropy) continue;
      CAPTURE(c.dueling);
      CAPTURE(c.noisy);
      CAPTURE(c.distributional);
      const QNetwork net(c);
      Params p = net.init_params(7);
      std::mt19937_64 rng(8);
      NoiseState noise = net.zero_noise();
      net.resample_noise(noise, rng);
      const auto inputs = random_inputs(rng, 5);
      const std::vector<int> actions = {1, 4, 4, 9, 11};
      std::vector<Target> targets;
      for (int i = 0; i < 5; ++i) targets.push_back(random_target(net, rng));
      const std::vector<double> w = {1.0, 0.5, 0.8, 0.3, 1.0};

      std::vector<double> grad;
      net.gradients(p, noise, inputs, actions, targets, w, kind, grad);

      // Sample from each parameter block of each layer.
      std::vector<std::size_t> picks;
      for (const LayerLayout& l : net.layers()) {
        const std::size_t wn = std::size_t(l.in) * l.out;
        std::uniform_int_distribution<std::size_t> wi(0, wn - 1), bi(0, l.out - 1);
        for (int k = 0; k < 4; ++k) {
          picks.push_back(l.w_mu + wi(rng));
          picks.push_back(l.b_mu + bi(rng));
          if (l.noisy) {
            picks.push_back(l.w_sigma + wi(rng));
            picks.push_back(l.b_sigma + bi(rng));
          }
        }
      }
      int checked = 0;
      for (std::size_t idx : picks) {
        const double orig = p[idx];
        p[idx] = orig + h;
        const double lp = net.loss(p, noise, inputs, actions, targets, w, kind).loss;
        p[idx] = orig - h;
        const double lm = net.loss(p, noise, inputs, actions, targets, w, kind).loss;
        p[idx] = orig;
        const double numeric = (lp - lm) / (2 * h);
        const double analytic = grad[idx];
        CAPTURE(idx);
        CAPTURE(analytic);
        CAPTURE(numeric);
        CHECK(std::abs(analytic - numeric) <=
              1e-4 * std::max(std::abs(analytic), std::abs(numeric)) + 1e-9);
        ++checked;
      }
      CHECK(checked >= 24);
    }
  }
}

TEST_CASE("sigma clamping and gradient clipping") {
  const QNetwork net(NetConfig{});
  Params p = net.init_params(1);
  const auto mask = net.sigma_mask();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (mask[i]) p[i] = -0.3;
  net.clamp_sigma(p);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (mask[i]) CHECK(p[i] >= 0.0);

  std::vector<double> g(10, 3.0);
  const double before = clip_gradient(g, 5.0);
  CHECK(before == Approx(std::sqrt(90.0)));
  CHECK(std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0)) == Approx(5.0));
  std::vector<double> small(3, 0.1);
  clip_gradient(small, 5.0);
  CHECK(small[0] == 0.1);
}

TEST_CASE("noise resampling perturbs the greedy choice") {
  const QNetwork net(NetConfig{});
  const Params p = net.init_params(2);
  std::mt19937_64 rng(6);
  const auto inputs = random_inputs(rng, 1);
  const auto clean = net.q_values(p, net.zero_noise(), inputs[0]);
  const int clean_best = int(std::max_element(clean.begin(), clean.end()) - clean.begin());
  NoiseState noise = net.zero_noise();
  bool changed_q = false, changed_best = false;
  for (std::uint64_t s = 0; s < 200; ++s) {
    std::mt19937_64 r(s);
    net.resample_noise(noise, r);
    const auto q = net.q_values(p, noise, inputs[0]);
    changed_q = changed_q || q != clean;
    changed_best = changed_best ||
                   int(std::max_element(q.begin(), q.end()) - q.begin()) != clean_best;
  }
  CHECK(changed_q);
  CHECK(changed_best);
  CHECK(net.noise_magnitude(p, net.zero_noise()) == 0.0);
  CHECK(net.noise_magnitude(p, noise) > 0.0);
}

TEST_CASE("checkpoint round trip") {
  NetConfig c;
  c.dueling = false;
  const QNetwork net(c);
  const Params p = net.init_params(3);
  const auto path = std::filesystem::temp_directory_path() / "pih_test_ckpt.bin";
  save_checkpoint(path, net, p);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config == c);
  CHECK(back.params == p);
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}

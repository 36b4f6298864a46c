#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include <boost/math/special_functions/gamma.hpp>

#include "pih/replay.hpp"

using namespace pih;
using doctest::Approx;

namespace {

RawTransition raw(double reward, bool done = false, int tag = 0) {
  RawTransition t;
  t.state[0] = tag;
  t.next_state[0] = tag + 1;
  t.action = tag % kNumActions;
  t.reward = reward;
  t.done = done;
  return t;
}

NStepTransition item(int tag) {
  NStepTransition t;
  t.state[0] = tag;
  return t;
}

std::vector<long> draw_counts(const PrioritizedBuffer& buf, long draws, double beta,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<long> counts(buf.size(), 0);
  long done = 0;
  while (done < draws) {
    const auto b = buf.sample(64, beta, rng);
    for (std::size_t i : b.indices) {
      if (done == draws) break;
      ++counts[i];
      ++done;
    }
  }
  return counts;
}

}  // namespace

TEST_CASE("n-step return over three unit rewards") {
  NStepQueue q(3, 0.99);
  CHECK_FALSE(q.push_raw(raw(1, false, 0)));
  CHECK_FALSE(q.push_raw(raw(1, false, 1)));
  auto t = q.push_raw(raw(1, false, 2));
  REQUIRE(t);
  CHECK(t->reward == Approx(2.9701).epsilon(1e-14));
  CHECK(t->horizon == 3);
  CHECK(t->state[0] == 0);
  CHECK(t->next_state[0] == 3);
  CHECK_FALSE(t->done);
}

TEST_CASE("a one-step episode emits a one-step transition") {
  NStepQueue q(3, 0.99);
  auto t = q.push_raw(raw(5, true));
  std::vector<NStepTransition> all;
  if (t) all.push_back(*t);
  for (auto& f : q.flush()) all.push_back(f);
  REQUIRE(all.size() == 1);
  CHECK(all[0].horizon == 1);
  CHECK(all[0].reward == 5.0);
  CHECK(all[0].done);
  CHECK(q.size() == 0);
}

TEST_CASE("n = 1 is plain one-step replay") {
  NStepQueue q(1, 0.9);
  for (int k = 0; k < 5; ++k) {
    auto t = q.push_raw(raw(k, false, k));
    REQUIRE(t);
    CHECK(t->reward == k);
    CHECK(t->horizon == 1);
    CHECK(t->state[0] == k);
  }
}

TEST_CASE("n-step returns match a brute-force sum") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> r(-3.0, 5.0);
  std::uniform_int_distribution<int> len(1, 12), nd(1, 5);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = nd(rng);
    const double gamma = 0.9 + 0.01 * (trial % 10);
    const int steps = len(rng);
    const bool terminal = trial % 2 == 0;
    std::vector<double> rewards(steps);
    for (double& v : rewards) v = r(rng);

    NStepQueue q(n, gamma);
    std::vector<NStepTransition> out;
    for (int k = 0; k < steps; ++k) {
      const bool last = k == steps - 1;
      if (auto t = q.push_raw(raw(rewards[k], last && terminal, k))) out.push_back(*t);
    }
    for (auto& f : q.flush()) out.push_back(f);

    REQUIRE(out.size() == std::size_t(steps));
    for (int k = 0; k < steps; ++k) {
      const NStepTransition& t = out[k];
      const int horizon = std::min(n, steps - k);
      double expect = 0.0, g = 1.0;
      for (int i = 0; i < horizon; ++i, g *= gamma) expect += g * rewards[k + i];
      CHECK(t.state[0] == k);
      CHECK(t.horizon == horizon);
      CHECK(t.reward == Approx(expect).epsilon(1e-12));
      CHECK(t.next_state[0] == k + horizon);
      CHECK(t.done == (terminal && k + horizon == steps));
    }
  }
}

TEST_CASE("one transition per raw step once the queue is warm") {
  NStepQueue q(3, 0.99);
  int emitted = 0;
  for (int k = 0; k < 20; ++k)
    if (q.push_raw(raw(1, false, k))) ++emitted;
  CHECK(emitted == 18);
  CHECK(q.flush().size() == 2);
}

TEST_CASE("sum tree") {
  SumTree t(5);
  CHECK(t.capacity() == 5);
  t.set(0, 1.0);
  t.set(1, 2.0);
  t.set(4, 3.0);
  CHECK(t.total() == 6.0);
  CHECK(t.find(0.5) == 0);
  CHECK(t.find(1.5) == 1);
  CHECK(t.find(2.99) == 1);
  CHECK(t.find(3.5) == 4);
  CHECK(t.find(5.99) == 4);

  SUBCASE("root stays consistent under mixed operations") {
    SumTree big(1000);
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> idx(0, 999);
    std::uniform_real_distribution<double> val(0.0, 10.0);
    for (int op = 0; op < 100000; ++op) {
      if (op % 3 == 2 && big.total() > 0)
        (void)big.find(val(rng) / 10.0 * big.total() * 0.999);
      else
        big.set(idx(rng), val(rng));
    }
    const double sum = big.leaf_sum();
    CHECK(std::abs(big.total() - sum) <= 1e-6 * sum);
  }
}

TEST_CASE("equal priorities sample uniformly with unit weights") {
  PrioritizedBuffer buf(8, 0.6);
  for (int k = 0; k < 8; ++k) buf.insert(item(k));
  std::mt19937_64 rng(1);
  const auto b = buf.sample(32, 0.4, rng);
  for (double w : b.weights) CHECK(w == Approx(1.0));
  const auto counts = draw_counts(buf, 80000, 0.4, 2);
  for (long c : counts) CHECK(std::abs(c - 10000) < 5 * std::sqrt(10000 * 7.0 / 8.0));
}

TEST_CASE("priorities 3 and 1 with alpha 1 sample at 3:1") {
  PrioritizedBuffer buf(2, 1.0, 0.0);
  buf.insert_with_priority(item(0), 3.0);
  buf.insert_with_priority(item(1), 1.0);
  const long n = 100000;
  const auto counts = draw_counts(buf, n, 0.4, 3);
  const double sd = std::sqrt(n * 0.75 * 0.25);
  CHECK(std::abs(counts[0] - 0.75 * n) < 3 * sd);
}

TEST_CASE("alpha 0 and beta 1 give unit weights") {
  PrioritizedBuffer buf(6, 0.0);
  for (int k = 0; k < 6; ++k) buf.insert_with_priority(item(k), 0.1 + k);
  std::mt19937_64 rng(5);
  const auto b = buf.sample(64, 1.0, rng);
  for (double w : b.weights) CHECK(w == Approx(1.0));
}

TEST_CASE("sampling frequencies pass a chi-square test against p^alpha") {
  PrioritizedBuffer buf(16, 0.6);
  std::vector<double> p(16);
  double z = 0.0;
  for (int k = 0; k < 16; ++k) {
    p[k] = 0.05 + 0.3 * k;
    buf.insert_with_priority(item(k), p[k]);
    z += std::pow(p[k], 0.6);
  }
  const long n = 100000;
  const auto counts = draw_counts(buf, n, 0.4, 7);
  double chi2 = 0.0;
  for (int k = 0; k < 16; ++k) {
    const double e = n * std::pow(p[k], 0.6) / z;
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  const double pvalue = boost::math::gamma_q(15 / 2.0, chi2 / 2.0);
  CAPTURE(chi2);
  CHECK(pvalue > 0.01);
}

TEST_CASE("priority updates, weights and FIFO eviction") {
  PrioritizedBuffer buf(4, 0.6, 1e-3);
  for (int k = 0; k < 4; ++k) buf.insert(item(k));
  CHECK(buf.max_priority() == 1.0);
  buf.update_priorities({0, 1, 2, 3}, {0.0, -2.0, 0.5, 4.0});
  CHECK(buf.priority(0) == Approx(1e-3));
  CHECK(buf.priority(1) == Approx(2.001));
  CHECK(buf.max_priority() == Approx(4.001));
  for (std::size_t i = 0; i < 4; ++i) CHECK(buf.priority(i) > 0.0);

  std::mt19937_64 rng(9);
  const auto b = buf.sample(64, 0.5, rng);
  double wmax = 0.0;
  for (double w : b.weights) {
    CHECK(w > 0.0);
    CHECK(w <= 1.0 + 1e-12);
    wmax = std::max(wmax, w);
  }
  CHECK(wmax == Approx(1.0));

  buf.insert(item(10));
  CHECK(buf.size() == 4);
  CHECK(buf.at(0).state[0] == 10);
  CHECK(buf.priority(0) == Approx(4.001));
  CHECK(std::abs(buf.tree().total() - buf.tree().leaf_sum()) < 1e-12);
}

TEST_CASE("linear schedule") {
  CHECK(linear_schedule(0.4, 1.0, 0, 100) == Approx(0.4));
  CHECK(linear_schedule(0.4, 1.0, 50, 100) == Approx(0.7));
  CHECK(linear_schedule(0.4, 1.0, 500, 100) == Approx(1.0));
}

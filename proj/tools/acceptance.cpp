// acceptance: runs the ten acceptance checks and prints one PASS/FAIL line each.
//
//   acceptance --config configs/smoke.json --out acceptance_runs
//   acceptance --only 1,2,3,4,5
//
// Exit status: 0 when every selected check passes, 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "CLI11.hpp"
#include "pih/atlas.hpp"
#include "pih/config.hpp"
#include "pih/eval.hpp"
#include "pih/trainer.hpp"

namespace fs = std::filesystem;
using namespace pih;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 ----------------------------------------------------------------------

Outcome check_kinematics() {
  const DeltaParams dg;
  const RrsGeometry rg;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> z(dg.z_low(), dg.z_high());
  double worst_delta = 0.0;
  int delta_poses = 0;
  while (delta_poses < 10000) {
    const Vec3 p(u(rng) * dg.r_max(), u(rng) * dg.r_max(), z(rng));
    if (!delta_workspace_contains(p, dg)) continue;
    const auto phi = delta_inverse_kinematics(p, dg);
    if (!phi) continue;
    ++delta_poses;
    for (int i = 0; i < 3; ++i) {
      const double len = (delta_elbow(i, (*phi)[i], dg) - delta_platform_joint(i, p, dg)).norm();
      worst_delta = std::max(worst_delta, std::abs(len - dg.passive_rod_len));
    }
  }

  std::uniform_real_distribution<double> tilt(-std::numbers::pi / 4, std::numbers::pi / 4);
  std::uniform_real_distribution<double> h(rg.h_min, rg.h_max);
  double worst_rrs = 0.0;
  int rrs_configs = 0;
  while (rrs_configs < 10000) {
    const RrsConfig c{tilt(rng), tilt(rng), h(rng)};
    if (!rrs_config_valid(c, rg)) continue;
    ++rrs_configs;
    for (int i = 0; i < 3; ++i) {
      const auto sol = rrs_limb_solve(i, c, rg);
      if (!sol) {
        worst_rrs = std::numeric_limits<double>::infinity();
        continue;
      }
      const Vec3 j = rrs_base_joint(i, rg);
      const Vec3 b = rrs_platform_joint(i, c, rg);
      worst_rrs = std::max({worst_rrs, std::abs((sol->elbow - j).norm() - rg.proximal_len),
                            std::abs((b - sol->elbow).norm() - rg.distal_len)});
    }
  }
  return {worst_delta < 1e-9 && worst_rrs < 1e-9,
          fmt("delta max residual %.2e m, 3-RRS max residual %.2e m", worst_delta, worst_rrs)};
}

// 2 ----------------------------------------------------------------------

std::vector<double> brute_force_projection(const std::vector<double>& probs,
                                           const std::vector<double>& z, double r, double g,
                                           bool done) {
  std::vector<double> m(z.size(), 0.0);
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double tz = std::clamp(done ? r : r + g * z[j], z.front(), z.back());
    std::size_t lo = 0;
    while (lo + 1 < z.size() && z[lo + 1] <= tz) ++lo;
    if (z[lo] == tz || lo + 1 == z.size()) {
      m[lo] += probs[j];
      continue;
    }
    const double w_hi = (tz - z[lo]) / (z[lo + 1] - z[lo]);
    m[lo] += probs[j] * (1.0 - w_hi);
    m[lo + 1] += probs[j] * w_hi;
  }
  return m;
}

Outcome check_projection() {
  const std::vector<double> z = {-2.0, -0.5, 1.0, 2.5, 4.0};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0), r(-6.0, 8.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> p(5);
    double s = 0.0;
    for (double& v : p) s += (v = u(rng));
    for (double& v : p) v /= s;
    const double rew = r(rng);
    const double gamma = u(rng);
    const bool done = u(rng) < 0.25;
    const auto ours = project_distribution(p, z, rew, gamma, done);
    const auto ref = brute_force_projection(p, z, rew, gamma, done);
    for (int j = 0; j < 5; ++j) worst = std::max(worst, std::abs(ours[j] - ref[j]));
  }
  return {worst <= 1e-12, fmt("max deviation %.2e over 1000 cases", worst)};
}

// 3 ----------------------------------------------------------------------

Outcome check_gradients() {
  const QNetwork net(NetConfig{});
  Params p = net.init_params(3);
  std::mt19937_64 rng(3);
  NoiseState noise = net.zero_noise();
  net.resample_noise(noise, rng);

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Observation> inputs(8);
  for (auto& x : inputs)
    for (double& v : x) v = u(rng);
  std::vector<int> actions;
  std::vector<Target> targets;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    actions.push_back(static_cast<int>(rng() % kNumActions));
    Target t(net.config().out_atoms());
    double s = 0.0;
    for (double& v : t) s += (v = u(rng));
    for (double& v : t) v /= s;
    targets.push_back(t);
  }
  const std::vector<double> w(inputs.size(), 1.0);
  const LossKind kind = TrainConfig{}.loss;
  std::vector<double> grad;
  net.gradients(p, noise, inputs, actions, targets, w, kind, grad);

  // Spread 100 picks over every parameter block of every layer.
  struct Block {
    std::size_t begin, size;
  };
  std::vector<Block> blocks;
  for (const LayerLayout& l : net.layers()) {
    const std::size_t nw = static_cast<std::size_t>(l.in) * l.out;
    blocks.push_back({l.w_mu, nw});
    blocks.push_back({l.b_mu, static_cast<std::size_t>(l.out)});
    if (l.noisy) {
      blocks.push_back({l.w_sigma, nw});
      blocks.push_back({l.b_sigma, static_cast<std::size_t>(l.out)});
    }
  }
  std::vector<std::size_t> picks;
  for (int k = 0; k < 100; ++k) {
    const Block& b = blocks[k % blocks.size()];
    picks.push_back(b.begin + rng() % b.size);
  }

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t idx : picks) {
    const double orig = p[idx];
    p[idx] = orig + h;
    const double lp = net.loss(p, noise, inputs, actions, targets, w, kind).loss;
    p[idx] = orig - h;
    const double lm = net.loss(p, noise, inputs, actions, targets, w, kind).loss;
    p[idx] = orig;
    const double numeric = (lp - lm) / (2 * h);
    const double scale = std::max({std::abs(grad[idx]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(grad[idx] - numeric) / scale);
  }
  return {worst <= 1e-4,
          fmt("max relative error %.2e over %zu parameters in %zu blocks", worst, picks.size(),
              blocks.size())};
}

// 4 ----------------------------------------------------------------------

Outcome check_replay() {
  const double alpha = 0.6;
  PrioritizedBuffer buf(16, alpha);
  std::vector<double> p(16);
  double zsum = 0.0;
  for (int k = 0; k < 16; ++k) {
    p[k] = 0.05 + 0.3 * k;
    NStepTransition t;
    t.state[0] = k;
    buf.insert_with_priority(t, p[k]);
    zsum += std::pow(p[k], alpha);
  }
  std::mt19937_64 rng(4);
  const long draws = 100000;
  std::vector<long> counts(16, 0);
  long done = 0;
  while (done < draws) {
    const auto b = buf.sample(64, 0.4, rng);
    for (std::size_t i : b.indices) {
      if (done == draws) break;
      ++counts[i];
      ++done;
    }
  }
  double chi2 = 0.0;
  for (int k = 0; k < 16; ++k) {
    const double e = draws * std::pow(p[k], alpha) / zsum;
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  const double pvalue = boost::math::gamma_q(15 / 2.0, chi2 / 2.0);

  SumTree tree(1000);
  std::uniform_int_distribution<std::size_t> idx(0, 999);
  std::uniform_real_distribution<double> val(0.0, 10.0);
  for (int k = 0; k < 100000; ++k) {
    if (k % 3 == 2 && tree.total() > 0.0) {
      tree.find(std::uniform_real_distribution<double>(0.0, tree.total())(rng));
    } else {
      tree.set(idx(rng), k % 7 == 0 ? 0.0 : val(rng));
    }
  }
  const double drift = std::abs(tree.total() - tree.leaf_sum());
  return {pvalue > 0.01 && drift <= 1e-6,
          fmt("chi2 %.2f p=%.3f, sum-tree drift %.2e", chi2, pvalue, drift)};
}

// 5 ----------------------------------------------------------------------

Outcome check_reward() {
  const RewardEvents none{}, v{true, false, false}, z{false, true, false}, u{false, false, true};
  struct Case {
    RewardEvents ev;
    double d, delta_d;
    int holes;
    double t, expected;
  };
  const Case cases[] = {
      {v, 0.2, 0.0, 0, 3.0, -3.0},     {z, 0.0, 0.0, 1, 0.0, 255.0},
      {none, 0.02, 0.01, 0, 1.0, 2.47}, {u, 0.0, 0.0, 1, 2.0, -1.0},
      {z, 0.0, 0.0, 2, 30.0, 240.0},    {z, 0.0, 0.0, 6, 60.0, 300.0},
      {z, 0.0, 0.0, 1, 90.0, 135.0},    {none, 0.05, 0.0, 0, 0.0, -0.06},
      {none, 0.04, -0.02, 0, 0.0, -0.05}, {none, 0.0, 0.02, 0, 0.0, 6.99},
      {none, 0.03, 0.005, 0, 0.0, 0.21}, {none, 0.1, 0.1, 3, 10.0, 4.89},
  };
  int ok = 0;
  double worst = 0.0;
  for (const Case& c : cases) {
    const double err = std::abs(shaped_reward(c.ev, c.d, c.delta_d, c.holes, c.t, 60.0) - c.expected);
    worst = std::max(worst, err);
    ok += err <= 1e-12;
  }
  return {ok == 12, fmt("%d/12 fixtures, max deviation %.1e", ok, worst)};
}

// 6 ----------------------------------------------------------------------

struct GeometryResult {
  RrsGeometry optimized;
  Outcome outcome;
};

GeometryResult check_geometry(const AppConfig& cfg) {
  OrientationGrid grid;
  grid.height = cfg.rrs.mid_height();
  const OptimizeResult r = optimize_design(cfg.rrs, grid, kOmegaSigmaThreshold, {}, 10);
  const double before = r.initial_summary.area.mean;
  const double after = r.final_summary.area.mean;
  const double gain = before > 0.0 ? after / before - 1.0 : 0.0;
  const double spread = after > 0.0 ? r.final_summary.area.stddev / after : 1.0;
  const double sigma = r.atlas.min_sigma_min;
  GeometryResult g;
  g.optimized = r.geometry;
  g.outcome = {gain >= 0.20 && sigma >= 0.15 && spread < 0.05,
               fmt("A_w %.3f -> %.3f rad^2 (%+.1f%%), min sigma_min %.3f, jitter std %.2f%% of mean",
                   before, after, 100.0 * gain, sigma, 100.0 * spread)};
  return g;
}

// 7-10 -------------------------------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  TrainResult train;
  double quartile[4] = {0, 0, 0, 0};
  double success = 0.0;  // greedy, percent
  int violation_terminations = 0;
  int singular_terminations = 0;
};

void quartiles(const std::vector<EpisodeRecord>& eps, double out[4]) {
  const std::size_t n = eps.size();
  for (int q = 0; q < 4; ++q) {
    const std::size_t lo = q * n / 4, hi = (q + 1) * n / 4;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += eps[i].reward;
    out[q] = hi > lo ? s / double(hi - lo) : std::numeric_limits<double>::quiet_NaN();
  }
}

EvalProtocol greedy_protocol(const AppConfig& cfg, std::uint64_t seed, double noise) {
  EvalProtocol p;
  p.episodes = cfg.eval.episodes;
  p.seeds = 1;
  p.base_seed = 5000 + seed;
  p.noise_sigma = noise;
  return p;
}

MetricsTable greedy_eval(const AppConfig& cfg, const TrainResult& run, std::uint64_t seed,
                         double noise) {
  const QNetwork net(run.net_config);
  return evaluate(greedy_protocol(cfg, seed, noise), cfg.delta, run.geometry, cfg.task,
                  [&] { return std::make_unique<GreedyPolicy>(net, run.params); });
}

SeedRun train_seed(const AppConfig& base, std::uint64_t seed, const AblationFlags& flags,
                   const RrsGeometry& geometry, const fs::path& dir) {
  AppConfig cfg = base;
  cfg.train.seed = seed;
  cfg.train.flags = flags;
  TrainOptions opts;
  opts.rrs_override = geometry;
  opts.out_dir = dir;
  SeedRun r;
  r.seed = seed;
  r.train = run_training(cfg, opts);
  quartiles(r.train.episodes, r.quartile);
  for (const EpisodeRecord& e : r.train.episodes) {
    r.singular_terminations += e.singular;
    r.violation_terminations += e.singular || e.dead_end;
  }
  r.success = greedy_eval(cfg, r.train, seed, 0.0).success_pct.mean;
  return r;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  return std::equal(std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>(),
                    std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pih acceptance checks"};
  std::string config_path = PIH_SMOKE_CONFIG;
  std::string out = "acceptance_runs";
  std::vector<int> only;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  app.add_option("--config", config_path, "smoke configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out, "directory for training runs");
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--seeds", seeds, "training seeds")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  AppConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << "\n";
    return 1;
  }
  const std::set<int> wanted(only.begin(), only.end());
  auto selected = [&](int k) { return wanted.empty() || wanted.count(k); };

  int failures = 0;
  auto report = [&](int k, const char* name, const Outcome& o, double secs) {
    std::printf("[%s] %2d %-24s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", k, name, o.detail.c_str(),
                secs);
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto timed = [&](int k, const char* name, const std::function<Outcome()>& fn) {
    if (!selected(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("fault: ") + e.what()};
    }
    report(k, name, o, seconds_since(t0));
  };

  timed(1, "kinematic soundness", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = check_kinematics();
    const double s = seconds_since(t0);
    o.pass = o.pass && s < 10.0;
    return o;
  });
  timed(2, "distributional projection", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = check_projection();
    o.pass = o.pass && seconds_since(t0) < 5.0;
    return o;
  });
  timed(3, "gradient correctness", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = check_gradients();
    o.pass = o.pass && seconds_since(t0) < 60.0;
    return o;
  });
  timed(4, "PER statistics", check_replay);
  timed(5, "reward exactness", check_reward);

  const bool need_training = selected(7) || selected(8) || selected(9) || selected(10);
  std::optional<RrsGeometry> optimized;
  if (selected(6) || need_training) {
    const auto t0 = std::chrono::steady_clock::now();
    GeometryResult g;
    try {
      g = check_geometry(cfg);
      optimized = g.optimized;
      g.outcome.pass = g.outcome.pass && seconds_since(t0) < 600.0;
    } catch (const std::exception& e) {
      g.outcome = {false, std::string("fault: ") + e.what()};
    }
    if (selected(6)) report(6, "geometry optimisation", g.outcome, seconds_since(t0));
  }
  if (!need_training) return failures ? 1 : 0;
  if (!optimized) {
    std::printf("training checks skipped: no optimised geometry\n");
    return 1;
  }

  const fs::path root(out);
  std::map<std::uint64_t, SeedRun> rainbow;
  double rainbow_secs = 0.0;
  auto rainbow_run = [&](std::uint64_t s) -> const SeedRun& {
    auto it = rainbow.find(s);
    if (it != rainbow.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    SeedRun r = train_seed(cfg, s, AblationFlags{}, *optimized,
                           root / ("rainbow_seed" + std::to_string(s)));
    rainbow_secs += seconds_since(t0);
    return rainbow.emplace(s, std::move(r)).first->second;
  };

  timed(7, "desk-scale learning", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    int good = 0, vanilla_lower = 0;
    std::ostringstream per;
    for (std::uint64_t s : seeds) {
      const SeedRun& r = rainbow_run(s);
      const SeedRun v = train_seed(cfg, s, AblationFlags::vanilla(), *optimized,
                                   root / ("vanilla_seed" + std::to_string(s)));
      const bool rising = r.quartile[3] > r.quartile[0];
      good += rising && r.success >= 50.0;
      vanilla_lower += v.success < r.success;
      per << fmt(" | s%llu Q %.1f/%.1f/%.1f/%.1f ok %.0f%% vanilla %.0f%%",
                 static_cast<unsigned long long>(s), r.quartile[0], r.quartile[1], r.quartile[2],
                 r.quartile[3], r.success, v.success);
    }
    const int need = static_cast<int>(seeds.size()) - 1;
    const double secs = seconds_since(t0);
    return Outcome{good >= need && vanilla_lower >= need && secs < 1800.0,
                   fmt("rising and >=50%%: %d/%zu, vanilla lower: %d/%zu", good, seeds.size(),
                       vanilla_lower, seeds.size()) +
                       per.str()};
  });

  timed(8, "geometry ablation", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const double reused = rainbow_secs;
    int opt_term = 0, init_term = 0;
    double opt_success = 0.0, init_success = 0.0;
    for (std::uint64_t s : seeds) {
      const SeedRun& o = rainbow_run(s);
      const SeedRun i = train_seed(cfg, s, AblationFlags{}, cfg.rrs,
                                   root / ("initial_seed" + std::to_string(s)));
      opt_term += o.violation_terminations;
      init_term += i.violation_terminations;
      opt_success += o.success / seeds.size();
      init_success += i.success / seeds.size();
    }
    const double secs = seconds_since(t0) + (rainbow_secs - reused);
    return Outcome{opt_term < init_term && opt_success >= init_success && secs < 3600.0,
                   fmt("terminations optimised %d vs initial %d, success %.1f%% vs %.1f%%",
                       opt_term, init_term, opt_success, init_success)};
  });

  timed(9, "determinism", [&] {
    const std::uint64_t s = seeds.front();
    rainbow_run(s);
    const fs::path a = root / ("rainbow_seed" + std::to_string(s));
    const fs::path b = root / ("rerun_seed" + std::to_string(s));
    train_seed(cfg, s, AblationFlags{}, *optimized, b);
    const bool logs = same_bytes(a / "episodes.jsonl", b / "episodes.jsonl");
    const bool ckpt = same_bytes(a / "checkpoint.bin", b / "checkpoint.bin");
    return Outcome{logs && ckpt, fmt("episode log %s, checkpoint %s", logs ? "identical" : "differs",
                                     ckpt ? "identical" : "differs")};
  });

  timed(10, "observation-noise robustness", [&] {
    int degraded = 0, faults = 0;
    std::ostringstream per;
    for (std::uint64_t s : seeds) {
      const SeedRun& r = rainbow_run(s);
      try {
        const MetricsTable clean = greedy_eval(cfg, r.train, s, 0.0);
        const MetricsTable noisy = greedy_eval(cfg, r.train, s, 0.01);
        bool finite = true;
        for (const MetricSummary* m : {&noisy.success_pct, &noisy.collisions, &noisy.energy,
                                       &noisy.rms_error_mm})
          finite = finite && std::isfinite(m->mean) && std::isfinite(m->stddev);
        faults += !finite;
        degraded += noisy.success_pct.mean <= clean.success_pct.mean;
        per << fmt(" | s%llu %.0f%% -> %.0f%%", static_cast<unsigned long long>(s),
                   clean.success_pct.mean, noisy.success_pct.mean);
      } catch (const std::exception& e) {
        ++faults;
        per << " | s" << s << " fault: " << e.what();
      }
    }
    const int need = static_cast<int>(seeds.size()) - 1;
    return Outcome{faults == 0 && degraded >= need,
                   fmt("faults %d, noisy <= clean on %d/%zu", faults, degraded, seeds.size()) +
                       per.str()};
  });

  return failures ? 1 : 0;
}

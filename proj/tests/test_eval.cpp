#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "pih/eval.hpp"

using namespace pih;
using doctest::Approx;

namespace {

TaskConfig smoke_task(int max_steps) {
  TaskConfig t;
  t.holes = TaskConfig::smoke_holes();
  t.max_steps = max_steps;
  return t;
}

EvalProtocol small(int episodes, int seeds) {
  EvalProtocol p;
  p.episodes = episodes;
  p.seeds = seeds;
  return p;
}

std::function<std::unique_ptr<Policy>()> maker(const std::string& kind) {
  return [kind] { return make_policy(kind, nullptr); };
}

}  // namespace

TEST_CASE("running statistics") {
  RunningStats s;
  CHECK(s.stddev() == 0.0);
  const double xs[] = {2, 4, 4, 4, 5, 5, 7, 9};
  for (double x : xs) s.add(x);
  CHECK(s.count() == 8);
  CHECK(s.mean() == Approx(5.0));
  CHECK(s.stddev() == Approx(std::sqrt(32.0 / 7.0)));
}

TEST_CASE("alignment tilt turns the normal to vertical") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (int k = 0; k < 100; ++k) {
    const Vec3 n = Vec3(u(rng), u(rng), 1.0).normalized();
    const auto [roll, pitch] = PlannerPolicy::alignment_tilt(n);
    CHECK((rrs_rotation(roll, pitch) * n - Vec3::UnitZ()).norm() < 1e-12);
  }
}

TEST_CASE("always-violating policy never succeeds and runs to the step limit") {
  const TaskConfig task = smoke_task(30);
  const MetricsTable t = evaluate(small(5, 2), DeltaParams{}, RrsGeometry{}, task, maker("violating"));
  CHECK(t.success_pct.mean == 0.0);
  CHECK(t.collisions.mean == 0.0);
  for (const EpisodeMetrics& e : t.episodes) {
    CHECK(e.steps == 30);
    CHECK_FALSE(e.success);
    CHECK(e.violations > 0);
  }
}

TEST_CASE("planner inserts into reachable targets") {
  const TaskConfig task = smoke_task(100);
  const MetricsTable t = evaluate(small(10, 2), DeltaParams{}, RrsGeometry{}, task, maker("planner"));
  CHECK(t.success_pct.mean == 100.0);
  CHECK(t.success_pct.stddev == 0.0);
  CHECK(t.alignment_error_deg.mean <= task.insert_angle_tol_deg);
  CHECK(t.completion_time_s.mean > 0.0);
}

TEST_CASE("random policy metrics are finite and bounded") {
  const TaskConfig task = smoke_task(60);
  const MetricsTable t = evaluate(small(8, 2), DeltaParams{}, RrsGeometry{}, task, maker("random"));
  CHECK(t.success_pct.mean >= 0.0);
  CHECK(t.success_pct.mean <= 100.0);
  for (const MetricSummary* m : {&t.success_pct, &t.collisions, &t.energy, &t.rms_error_mm}) {
    CHECK(std::isfinite(m->mean));
    CHECK(m->stddev >= 0.0);
  }
  REQUIRE(t.seeds.size() == 2);
  CHECK(t.episodes.size() == 16);

  const MetricsTable again = evaluate(small(8, 2), DeltaParams{}, RrsGeometry{}, task, maker("random"));
  CHECK(metrics_table_json(again) == metrics_table_json(t));
}

TEST_CASE("episode success equals the disjunction of traced insertions") {
  const TaskConfig task = smoke_task(60);
  Env env(DeltaParams{}, RrsGeometry{}, task);
  for (const char* kind : {"planner", "random"}) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      auto policy = make_policy(kind, nullptr);
      std::stringstream trace;
      const EpisodeMetrics m = run_episode(env, *policy, seed, 0.0, &trace);
      bool any = false;
      int lines = 0;
      std::string line;
      while (std::getline(trace, line)) {
        const auto j = nlohmann::json::parse(line);
        any = any || j.at("insertion").get<bool>();
        ++lines;
      }
      CHECK(any == m.success);
      CHECK(lines == m.steps);
    }
  }
}

TEST_CASE("observation noise reaches the policy without faults") {
  const TaskConfig task = smoke_task(40);
  EvalProtocol p = small(4, 2);
  p.noise_sigma = 0.01;
  const MetricsTable t = evaluate(p, DeltaParams{}, RrsGeometry{}, task, maker("random"));
  CHECK(std::isfinite(t.energy.mean));
}

TEST_CASE("metrics outputs") {
  const TaskConfig task = smoke_task(30);
  const MetricsTable t = evaluate(small(3, 2), DeltaParams{}, RrsGeometry{}, task, maker("planner"));
  std::stringstream csv;
  write_metrics_csv(csv, t);
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("seed,episode,success", 0) == 0);
  int rows = 0;
  std::string line;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 6);
  const auto j = nlohmann::json::parse(metrics_table_json(t));
  CHECK(j.dump().find("Success rate (%)") != std::string::npos);
}

TEST_CASE("steps to threshold") {
  std::vector<EpisodeRecord> eps(30);
  for (int i = 0; i < 30; ++i) {
    eps[i].end_step = 100 * (i + 1);
    eps[i].success = i >= 10;
  }
  // Window 20 exceeds 0.75 once 16 of the last 20 succeed: episode index 25.
  CHECK(steps_to_threshold(eps, 20, 0.75) == 2600);
  CHECK(steps_to_threshold(std::vector<EpisodeRecord>(5), 20, 0.75) == -1);
}

TEST_CASE("standard ablation rows") {
  const auto cells = standard_ablation_cells();
  REQUIRE(cells.size() == 8);
  CHECK(cells.front().flags == AblationFlags{});
  CHECK(cells.front().optimized_geometry);
  CHECK_FALSE(cells.back().optimized_geometry);
  int single = 0;
  for (const auto& c : cells) {
    const AblationFlags& f = c.flags;
    const int off = !f.double_q + !f.dueling + !f.per + !f.nstep + !f.noisy + !f.distributional;
    single += off == 1;
  }
  CHECK(single == 6);
}

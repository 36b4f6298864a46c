#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "pih/env.hpp"

using namespace pih;
using doctest::Approx;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

int action(Dof dof, int sign) { return ActionId{dof, sign}.index(); }

Env smoke_env() {
  TaskConfig task;
  task.holes = TaskConfig::smoke_holes();
  return Env(DeltaParams{}, RrsGeometry{}, task);
}

RrsConfig home(const Env& env) { return {0.0, 0.0, env.rrs().mid_height()}; }

// Delta pose that puts the pin tip `above` metres over the home apex.
Vec3 above_apex(const Env& env, double above) {
  return Vec3(0, 0, env.home_apex_z() + above + env.delta().pin_length);
}

struct RewardCase {
  RewardEvents ev;
  double d, delta_d;
  int holes;
  double t;
  double expected;
};

}  // namespace

TEST_CASE("shaped reward fixtures") {
  const RewardEvents none{}, v{true, false, false}, z{false, true, false}, u{false, false, true};
  const RewardCase cases[] = {
      {v, 0.2, 0.0, 0, 3.0, -3.0},
      {z, 0.0, 0.0, 1, 0.0, 255.0},
      {none, 0.02, 0.01, 0, 1.0, 2.47},
      {u, 0.0, 0.0, 1, 2.0, -1.0},
      {z, 0.0, 0.0, 2, 30.0, 240.0},
      {z, 0.0, 0.0, 6, 60.0, 300.0},
      {z, 0.0, 0.0, 1, 90.0, 135.0},
      {none, 0.05, 0.0, 0, 0.0, -0.06},
      {none, 0.04, -0.02, 0, 0.0, -0.05},
      {none, 0.0, 0.02, 0, 0.0, 6.99},
      {none, 0.03, 0.005, 0, 0.0, 0.21},
      {none, 0.1, 0.1, 3, 10.0, 4.89},
  };
  for (const RewardCase& c : cases) {
    CAPTURE(c.expected);
    const double r = shaped_reward(c.ev, c.d, c.delta_d, c.holes, c.t, 60.0);
    CHECK(std::abs(r - c.expected) <= 1e-12);
  }
  CHECK_THROWS_AS(shaped_reward({true, true, false}, 0, 0, 1, 0, 60), EnvError);
}

TEST_CASE("action ids") {
  for (int i = 0; i < kNumActions; ++i) CHECK(ActionId::from_index(i).index() == i);
  CHECK(ActionId::from_index(0).dof == Dof::kX);
  CHECK(ActionId::from_index(0).sign == 1);
  CHECK(ActionId::from_index(5).dof == Dof::kZ);
  CHECK(ActionId::from_index(5).sign == -1);
  CHECK(ActionId::from_index(11).dof == Dof::kHeight);
  CHECK_FALSE(ActionId::from_index(7).moves_delta());
}

TEST_CASE("insertion check thresholds") {
  const Vec3 hole(0.1, 0.0, -0.9);
  const Vec3 up(0, 0, 1);
  const Vec3 pin_axis(0, 0, -1);
  CHECK(insertion_check(hole, hole, up, pin_axis, 0.005, 2.0));
  CHECK_FALSE(insertion_check(hole + Vec3(0.006, 0, 0), hole, up, pin_axis, 0.005, 2.0));
  const Vec3 tilted(std::sin(1.9 * kDeg), 0, std::cos(1.9 * kDeg));
  CHECK(insertion_check(hole + Vec3(0, 0.004, 0), hole, tilted, pin_axis, 0.005, 2.0));
  const Vec3 too_far(std::sin(2.1 * kDeg), 0, std::cos(2.1 * kDeg));
  CHECK_FALSE(insertion_check(hole, hole, too_far, pin_axis, 0.005, 2.0));
}

TEST_CASE("curriculum switching") {
  auto history = [](int successes, int total) {
    std::deque<bool> h;
    for (int i = 0; i < total; ++i) h.push_back(i < successes);
    return h;
  };
  CHECK(curriculum_update(history(16, 20), 0) == 1);
  CHECK(curriculum_update(history(15, 20), 0) == 0);
  CHECK(curriculum_update(history(19, 19), 0) == 0);
  CHECK(curriculum_update(history(0, 20), 1) == 1);
}

TEST_CASE("trajectory metrics") {
  Trajectory still;
  for (int k = 0; k < 4; ++k) still.points.push_back({0.1 * k, Vec3(0, 0, -0.8), {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, false});
  still.reference_start = Vec3(0, 0, -0.8);
  still.reference_end = Vec3(0, 0, -0.9);
  CHECK(energy_proxy(still) == 0.0);
  CHECK(rms_path_error(still) == 0.0);
  CHECK(collision_count(still) == 0);

  Trajectory line = still;
  for (int k = 0; k < 4; ++k) line.points[k].pin = Vec3(0, 0, -0.8 - 0.1 * k / 3.0);
  CHECK(rms_path_error(line) < 1e-15);

  // Joint 0 moves 0.1 then 0.3 rad; joint 5 moves 0.2 then 0; dt = 0.1 s.
  Trajectory moves;
  moves.points.push_back({0.0, Vec3::Zero(), {0, 0, 0, 0, 0, 0}, false});
  moves.points.push_back({0.1, Vec3::Zero(), {0.1, 0, 0, 0, 0, 0.2}, true});
  moves.points.push_back({0.2, Vec3::Zero(), {0.4, 0, 0, 0, 0, 0.2}, false});
  const double hand = (1.0 + 4.0) * 0.1 + 9.0 * 0.1;
  CHECK(energy_proxy(moves) == Approx(hand).epsilon(1e-12));
  CHECK(collision_count(moves) == 1);

  Trajectory offset = still;
  for (auto& p : offset.points) p.pin = Vec3(0.003, 0.004, -0.85);
  CHECK(rms_path_error(offset) == Approx(0.005).epsilon(1e-12));
}

TEST_CASE("default hole layout") {
  TaskConfig task;
  const auto& holes = task.layout();
  REQUIRE(holes.size() == 6);
  const Env env(DeltaParams{}, RrsGeometry{}, task);
  int active = 0;
  for (int i = 0; i < 6; ++i) {
    if (env.hole_active(i)) {
      ++active;
      CHECK(holes[i].colatitude_deg == 35.0);
    }
    const Vec3 radial = (env.hole_position(i) - env.dome_centre(home(env))).normalized();
    CHECK((radial - env.hole_normal(i)).norm() < 1e-12);
    CHECK(env.hole_normal(i).norm() == Approx(1.0).epsilon(1e-12));
  }
  CHECK(active == 4);
  CHECK(env.active_hole_count() == 4);
}

TEST_CASE("reset") {
  Env env = smoke_env();
  const StateVector a = env.reset(42);
  const StateVector b = env.reset(42);
  CHECK(a.as_array() == b.as_array());
  CHECK(env.steps() == 0);
  CHECK(a.roll == 0.0);
  CHECK(a.pitch == 0.0);
  CHECK((env.hole_normal(0) - Vec3::UnitZ()).norm() < 1e-12);

  for (std::uint64_t s = 0; s < 1000; ++s) {
    const StateVector st = env.reset(s);
    CHECK(delta_workspace_contains(st.p_delta, env.delta()));
    CHECK(env.holes_filled() == 0);
  }
}

TEST_CASE("action masking") {
  Env env = smoke_env();
  env.reset(1);

  env.place(Vec3(0, 0, -0.6), home(env));
  CHECK(env.valid_actions().all());

  const double r = env.delta().r_max();
  env.place(Vec3(r, 0, -0.6), home(env));
  CHECK_FALSE(env.valid_actions().test(action(Dof::kX, +1)));
  CHECK(env.valid_actions().test(action(Dof::kX, -1)));

  env.place(Vec3(0, 0, -0.6), {std::numbers::pi / 4, 0.0, env.rrs().mid_height()});
  CHECK_FALSE(env.valid_actions().test(action(Dof::kRoll, +1)));
  CHECK(env.valid_actions().test(action(Dof::kRoll, -1)));
}

TEST_CASE("violating step leaves the state unchanged") {
  Env env = smoke_env();
  env.reset(1);
  const double r = env.delta().r_max();
  env.place(Vec3(r, 0, -0.6), home(env));
  const StateVector before = env.state();
  const StepOutcome out = env.step(action(Dof::kX, +1));
  CHECK(out.events.violation);
  CHECK(out.reward == -3.0);
  CHECK_FALSE(out.terminal);
  CHECK(env.state().as_array() == before.as_array());
}

TEST_CASE("first insertion at t = 0 pays 255, a repeat costs 1") {
  Env env = smoke_env();
  env.reset(1);
  env.place(above_apex(env, 0.02), home(env));
  const StepOutcome in = env.step(action(Dof::kZ, -1));
  CHECK(in.events.insertion);
  CHECK(in.inserted_hole == 0);
  CHECK(in.reward == 255.0);
  CHECK(in.holes_filled == 1);
  CHECK(env.hole_filled(0));
  CHECK(env.target() == 1);
  CHECK(in.alignment_error_deg < 1e-9);

  env.step(action(Dof::kZ, +1));
  const StepOutcome again = env.step(action(Dof::kZ, -1));
  CHECK(again.events.duplicate);
  CHECK_FALSE(again.events.insertion);
  CHECK(again.reward == -1.0);
}

TEST_CASE("completion, timeout and state invariants") {
  Env env = smoke_env();
  TaskConfig task = env.task();
  task.max_steps = 3;
  Env short_env(env.delta(), env.rrs(), task);
  short_env.reset(3);
  StepOutcome out;
  for (int k = 0; k < 3 && !out.terminal; ++k) out = short_env.step(action(Dof::kZ, +1));
  CHECK(out.terminal);
  CHECK(out.timeout);
  CHECK(short_env.steps() == 3);

  std::mt19937_64 rng(8);
  for (std::uint64_t ep = 0; ep < 20; ++ep) {
    env.reset(ep);
    for (int k = 0; k < 200; ++k) {
      const ActionMask mask = env.valid_actions();
      std::uniform_int_distribution<int> pick(0, kNumActions - 1);
      const int a = pick(rng);
      const StepOutcome o = env.step(a);
      const int events = int(o.events.violation) + int(o.events.insertion) + int(o.events.duplicate);
      CHECK(events <= 1);
      if (!mask.test(a)) CHECK(o.events.violation);
      const StateVector& s = env.state();
      CHECK(s.n_target.norm() == Approx(1.0).epsilon(1e-9));
      CHECK((s.e_rel - (env.hole_position(env.target()) - env.pin_tip())).norm() < 1e-12);
      CHECK(delta_workspace_contains(s.p_delta, env.delta()));
      CHECK(rrs_config_valid(env.rrs_config(), env.rrs()));
      for (double x : env.normalized()) CHECK(std::isfinite(x));
      if (o.terminal) break;
    }
  }
}

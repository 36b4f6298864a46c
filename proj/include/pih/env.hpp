#pragma once

// Cooperative peg-in-hole MDP: the Delta carries a vertical peg, the 3-RRS
// carries a dome with target holes. Discrete increments over six DoF,
// kinematic masking, shaped reward, insertion bookkeeping and curriculum.

#include <array>
#include <cstdint>
#include <deque>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pih/kinematics.hpp"
#include "pih/replay.hpp"

namespace pih {

enum class Dof { kX, kY, kZ, kRoll, kPitch, kHeight };

/// Action ids: 2*dof + (0 for +, 1 for -).
struct ActionId {
  Dof dof;
  int sign;  // +1 or -1

  static ActionId from_index(int index);
  int index() const;
  bool moves_delta() const { return dof == Dof::kX || dof == Dof::kY || dof == Dof::kZ; }
};

std::string action_name(int index);

struct HoleSpec {
  double colatitude_deg = 0.0;  // from the dome axis
  double azimuth_deg = 0.0;
  int stage = 0;  // 0: active in both stages; 1: only once the curriculum advances
};

struct TaskConfig {
  double dome_radius = 0.15;
  std::vector<HoleSpec> holes;  // empty: default six-hole dome
  double hole_radius = 0.008;
  double insert_position_tol = 0.005;  // m
  double insert_angle_tol_deg = 2.0;
  double pos_step = 0.02;  // Delta translations and 3-RRS height
  double rot_step = 0.03;  // rad
  double dt = 0.1;         // s per step
  int max_steps = 1200;
  double task_time = 60.0;       // T_task in the time bonus
  double mount_clearance = 0.05;  // dome apex below the lowest Delta pose at home
  double reset_radius = 0.1;      // max horizontal pin offset from the dome axis at reset
  double reset_height_min = 0.04; // pin height above the home apex at reset
  double reset_height_max = 0.16;
  double singular_sigma = 0.15;   // 3-RRS commands landing below this terminate
  int curriculum_window = 20;
  double curriculum_threshold = 0.75;
  int initial_stage = 0;

  /// Default six-hole layout: apex, one at 15 deg, four peripheral at 35 deg.
  static std::vector<HoleSpec> default_holes();
  /// Two-hole smoke layout used for desk-scale training checks.
  static std::vector<HoleSpec> smoke_holes();
  const std::vector<HoleSpec>& layout() const;
};

struct StateVector {
  Vec3 p_delta = Vec3::Zero();
  double roll = 0.0;
  double pitch = 0.0;
  double height = 0.0;
  Vec3 e_rel = Vec3::Zero();
  Vec3 n_target = Vec3::UnitZ();

  std::array<double, kStateDim> as_array() const;
};

struct RewardEvents {
  bool violation = false;  // v_t
  bool insertion = false;  // z_t
  bool duplicate = false;  // u_t
};

/// Shaped reward. `d` and `delta_d` feed the nominal branch only.
double shaped_reward(const RewardEvents& ev, double d, double delta_d, int holes_filled,
                     double t_seconds, double task_time);

struct StepOutcome {
  double reward = 0.0;
  StateVector state;
  bool terminal = false;
  RewardEvents events;
  bool singular = false;  // command rejected near a 3-RRS singularity (terminal)
  bool dead_end = false;  // no valid action remained (terminal)
  bool timeout = false;
  bool completed = false;  // all active holes filled
  bool collision = false;  // pin inside the dome outside every hole disc
  int holes_filled = 0;
  int inserted_hole = -1;
  double alignment_error_deg = 0.0;  // at the insertion event
};

bool insertion_check(const Vec3& pin_tip, const Vec3& hole, const Vec3& hole_normal,
                     const Vec3& pin_axis, double position_tol, double angle_tol_deg);

struct TrajectoryPoint {
  double t = 0.0;
  Vec3 pin = Vec3::Zero();
  std::array<double, 6> joints{};  // Delta phi_1..3, then 3-RRS theta_1..3
  bool collision = false;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  Vec3 reference_start = Vec3::Zero();  // pin tip at reset
  Vec3 reference_end = Vec3::Zero();    // first target hole mouth at reset
};

/// Rising edges of the collision flag.
int collision_count(const Trajectory& traj);
/// sum ||dq/dt||^2 dt over all six active joints.
double energy_proxy(const Trajectory& traj);
/// RMS distance of the pin path to the reference segment, metres.
double rms_path_error(const Trajectory& traj);

/// Curriculum stage after the latest episode; never regresses.
int curriculum_update(const std::deque<bool>& recent_successes, int stage, int window = 20,
                      double threshold = 0.75);

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NormalizationBounds {
  std::array<double, kStateDim> lo{};
  std::array<double, kStateDim> hi{};
};

class Env {
 public:
  Env(DeltaParams delta, RrsGeometry rrs, TaskConfig task);

  StateVector reset(std::uint64_t seed);
  ActionMask valid_actions() const;
  StepOutcome step(int action);

  const StateVector& state() const { return state_; }
  Observation normalized() const { return normalize(state_); }
  Observation normalize(const StateVector& s) const;
  const NormalizationBounds& bounds() const { return bounds_; }

  int stage() const { return stage_; }
  void set_stage(int stage) { stage_ = stage; }
  int steps() const { return steps_; }
  double time() const { return steps_ * task_.dt; }
  int holes_filled() const;
  int active_hole_count() const;
  bool hole_active(int i) const;
  bool hole_filled(int i) const { return filled_.at(i); }
  int target() const { return target_; }
  std::size_t hole_count() const { return local_pos_.size(); }

  Vec3 pin_tip() const { return delta_pin_tip(state_.p_delta, delta_); }
  Vec3 dome_centre(const RrsConfig& c) const;
  Vec3 hole_position(int i) const;
  Vec3 hole_normal(int i) const;
  Vec3 hole_position(int i, const RrsConfig& c) const;
  Vec3 hole_normal(int i, const RrsConfig& c) const;
  RrsConfig rrs_config() const { return {state_.roll, state_.pitch, state_.height}; }
  double mount_height() const { return mount_z_; }
  double home_apex_z() const;
  bool pin_in_collision() const;

  const Trajectory& trajectory() const { return trajectory_; }
  const DeltaParams& delta() const { return delta_; }
  const RrsGeometry& rrs() const { return rrs_; }
  const TaskConfig& task() const { return task_; }

  /// Configuration after applying `action` (no validity check).
  void apply_increment(int action, Vec3& p, RrsConfig& c) const;
  bool delta_valid(const Vec3& p) const;
  bool rrs_valid(const RrsConfig& c) const;
  bool rrs_singular(const RrsConfig& c) const;

  /// Direct state placement for fixtures; recomputes target and e_rel.
  void place(const Vec3& p_delta, const RrsConfig& c);

 private:
  void refresh_state();
  int nearest_unfilled_target() const;
  double distance_to_target() const;
  void record_point(bool collision);

  DeltaParams delta_;
  RrsGeometry rrs_;
  TaskConfig task_;
  double mount_z_ = 0.0;
  std::vector<Vec3> local_pos_;
  std::vector<Vec3> local_normal_;
  std::vector<int> hole_stage_;
  std::vector<bool> filled_;
  NormalizationBounds bounds_;

  StateVector state_;
  int stage_ = 0;
  int steps_ = 0;
  int target_ = 0;
  double prev_distance_ = 0.0;
  bool was_colliding_ = false;
  Trajectory trajectory_;
};

}  // namespace pih

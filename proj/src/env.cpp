#include "pih/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pih {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kQuarterPi = std::numbers::pi / 4.0;
const Vec3 kPinAxis(0.0, 0.0, -1.0);

Vec3 unit_from_spherical(double colatitude_deg, double azimuth_deg) {
  const double c = colatitude_deg * kDegToRad;
  const double a = azimuth_deg * kDegToRad;
  return {std::sin(c) * std::cos(a), std::sin(c) * std::sin(a), std::cos(c)};
}

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

double distance_to_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// Actions

ActionId ActionId::from_index(int index) {
  if (index < 0 || index >= kNumActions) throw EnvError("action index out of range");
  return {static_cast<Dof>(index / 2), index % 2 == 0 ? +1 : -1};
}

int ActionId::index() const { return 2 * static_cast<int>(dof) + (sign > 0 ? 0 : 1); }

std::string action_name(int index) {
  static constexpr const char* kNames[] = {"x", "y", "z", "roll", "pitch", "height"};
  const ActionId a = ActionId::from_index(index);
  return std::string(kNames[static_cast<int>(a.dof)]) + (a.sign > 0 ? "+" : "-");
}

// ---------------------------------------------------------------------------
// Task layout

std::vector<HoleSpec> TaskConfig::default_holes() {
  return {
      {0.0, 0.0, 1},  {15.0, 45.0, 1}, {35.0, 0.0, 0},
      {35.0, 90.0, 0}, {35.0, 180.0, 0}, {35.0, 270.0, 0},
  };
}

std::vector<HoleSpec> TaskConfig::smoke_holes() { return {{0.0, 0.0, 0}, {15.0, 0.0, 0}}; }

const std::vector<HoleSpec>& TaskConfig::layout() const {
  static const std::vector<HoleSpec> kDefault = default_holes();
  return holes.empty() ? kDefault : holes;
}

std::array<double, kStateDim> StateVector::as_array() const {
  return {p_delta.x(), p_delta.y(), p_delta.z(), roll,       pitch,      height,
          e_rel.x(),   e_rel.y(),   e_rel.z(),   n_target.x(), n_target.y(), n_target.z()};
}

// ---------------------------------------------------------------------------
// Reward and predicates

double shaped_reward(const RewardEvents& ev, double d, double delta_d, int holes_filled,
                     double t_seconds, double task_time) {
  const int v = ev.violation ? 1 : 0;
  const int z = ev.insertion ? 1 : 0;
  const int u = ev.duplicate ? 1 : 0;
  const int nominal = 1 - v - z - u;
  if (nominal < 0) throw EnvError("reward events are not exclusive");
  double r = -3.0 * v;
  r += (150.0 + 25.0 * holes_filled + 80.0 * (1.0 - t_seconds / task_time)) * z;
  r += -1.0 * u;
  if (nominal == 1) {
    r += -0.01 - d + 50.0 * std::max(delta_d, 0.0) + 200.0 * std::max(0.03 - d, 0.0);
  }
  return r;
}

bool insertion_check(const Vec3& pin_tip, const Vec3& hole, const Vec3& hole_normal,
                     const Vec3& pin_axis, double position_tol, double angle_tol_deg) {
  if ((pin_tip - hole).norm() > position_tol) return false;
  return angle_between(pin_axis, -hole_normal) <= angle_tol_deg * kDegToRad;
}

int collision_count(const Trajectory& traj) {
  int count = 0;
  bool prev = false;
  for (const auto& p : traj.points) {
    if (p.collision && !prev) ++count;
    prev = p.collision;
  }
  return count;
}

double energy_proxy(const Trajectory& traj) {
  double e = 0.0;
  for (std::size_t k = 1; k < traj.points.size(); ++k) {
    const auto& a = traj.points[k - 1];
    const auto& b = traj.points[k];
    const double dt = b.t - a.t;
    if (dt <= 0.0) continue;
    double ss = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double rate = (b.joints[j] - a.joints[j]) / dt;
      ss += rate * rate;
    }
    e += ss * dt;
  }
  return e;
}

double rms_path_error(const Trajectory& traj) {
  if (traj.points.empty()) return 0.0;
  double ss = 0.0;
  for (const auto& p : traj.points) {
    const double d = distance_to_segment(p.pin, traj.reference_start, traj.reference_end);
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(traj.points.size()));
}

int curriculum_update(const std::deque<bool>& recent, int stage, int window,
                      double threshold) {
  if (stage >= 1) return stage;
  if (static_cast<int>(recent.size()) < window) return stage;
  int wins = 0;
  for (auto it = recent.end() - window; it != recent.end(); ++it) wins += *it ? 1 : 0;
  return static_cast<double>(wins) / window > threshold ? 1 : stage;
}

// ---------------------------------------------------------------------------
// Environment

Env::Env(DeltaParams delta, RrsGeometry rrs, TaskConfig task)
    : delta_(delta), rrs_(rrs), task_(std::move(task)) {
  if (!delta_.valid()) throw EnvError("invalid Delta parameters");
  if (!rrs_.valid()) throw EnvError("invalid 3-RRS geometry");
  for (const auto& h : task_.layout()) {
    const Vec3 n = unit_from_spherical(h.colatitude_deg, h.azimuth_deg);
    local_normal_.push_back(n);
    local_pos_.push_back(task_.dome_radius * n);
    hole_stage_.push_back(h.stage);
  }
  if (local_pos_.empty()) throw EnvError("task has no holes");
  filled_.assign(local_pos_.size(), false);
  stage_ = task_.initial_stage;
  if (active_hole_count() == 0) throw EnvError("no hole is active in the initial stage");

  // Dome apex at home sits mount_clearance below the lowest Delta pose.
  mount_z_ = delta_.z_low() - task_.mount_clearance - rrs_.mid_height() - task_.dome_radius;

  const double rdome = task_.dome_radius;
  const double rmax = delta_.r_max();
  const double pin_zlo = delta_.z_low() - delta_.pin_length;
  const double pin_zhi = delta_.z_high() - delta_.pin_length;
  const double hole_zlo = mount_z_ + rrs_.h_min - rdome;
  const double hole_zhi = mount_z_ + rrs_.h_max + rdome;
  bounds_.lo = {-rmax, -rmax, delta_.z_low(), -kQuarterPi, -kQuarterPi, rrs_.h_min,
                -rdome - rmax, -rdome - rmax, hole_zlo - pin_zhi, -1.0, -1.0, -1.0};
  bounds_.hi = {rmax, rmax, delta_.z_high(), kQuarterPi, kQuarterPi, rrs_.h_max,
                rdome + rmax, rdome + rmax, hole_zhi - pin_zlo, 1.0, 1.0, 1.0};

  state_.p_delta = Vec3(0.0, 0.0, home_apex_z() + 0.1 + delta_.pin_length);
  state_.height = rrs_.mid_height();
  refresh_state();
}

double Env::home_apex_z() const {
  return mount_z_ + rrs_.mid_height() + task_.dome_radius;
}

bool Env::hole_active(int i) const { return hole_stage_.at(i) <= stage_; }

int Env::holes_filled() const {
  return static_cast<int>(std::count(filled_.begin(), filled_.end(), true));
}

int Env::active_hole_count() const {
  int n = 0;
  for (std::size_t i = 0; i < hole_stage_.size(); ++i) n += hole_active(static_cast<int>(i));
  return n;
}

Vec3 Env::dome_centre(const RrsConfig& c) const { return {0.0, 0.0, mount_z_ + c.height}; }

Vec3 Env::hole_position(int i, const RrsConfig& c) const {
  return dome_centre(c) + rrs_rotation(c.roll, c.pitch) * local_pos_.at(i);
}

Vec3 Env::hole_normal(int i, const RrsConfig& c) const {
  return rrs_rotation(c.roll, c.pitch) * local_normal_.at(i);
}

Vec3 Env::hole_position(int i) const { return hole_position(i, rrs_config()); }
Vec3 Env::hole_normal(int i) const { return hole_normal(i, rrs_config()); }

bool Env::delta_valid(const Vec3& p) const { return delta_pose_valid(p, delta_); }
bool Env::rrs_valid(const RrsConfig& c) const { return rrs_config_valid(c, rrs_); }

bool Env::rrs_singular(const RrsConfig& c) const {
  auto jac = rrs_jacobian(c, rrs_);
  if (!jac) return true;
  return min_singular_value(*jac) < task_.singular_sigma;
}

void Env::apply_increment(int action, Vec3& p, RrsConfig& c) const {
  const ActionId a = ActionId::from_index(action);
  const double lin = a.sign * task_.pos_step;
  const double rot = a.sign * task_.rot_step;
  switch (a.dof) {
    case Dof::kX: p.x() += lin; break;
    case Dof::kY: p.y() += lin; break;
    case Dof::kZ: p.z() += lin; break;
    case Dof::kRoll: c.roll += rot; break;
    case Dof::kPitch: c.pitch += rot; break;
    case Dof::kHeight: c.height += lin; break;
  }
}

ActionMask Env::valid_actions() const {
  ActionMask mask;
  for (int a = 0; a < kNumActions; ++a) {
    Vec3 p = state_.p_delta;
    RrsConfig c = rrs_config();
    apply_increment(a, p, c);
    mask[a] = ActionId::from_index(a).moves_delta() ? delta_valid(p) : rrs_valid(c);
  }
  return mask;
}

int Env::nearest_unfilled_target() const {
  int best = -1;
  double best_d = 0.0;
  const Vec3 pin = pin_tip();
  for (std::size_t i = 0; i < local_pos_.size(); ++i) {
    const int k = static_cast<int>(i);
    if (!hole_active(k) || filled_[i]) continue;
    const double d = (hole_position(k) - pin).norm();
    if (best < 0 || d < best_d) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

void Env::refresh_state() {
  const int t = nearest_unfilled_target();
  if (t >= 0) target_ = t;
  state_.e_rel = hole_position(target_) - pin_tip();
  state_.n_target = hole_normal(target_);
}

double Env::distance_to_target() const { return state_.e_rel.norm(); }

bool Env::pin_in_collision() const {
  const RrsConfig c = rrs_config();
  const Vec3 pin = pin_tip();
  const Vec3 q = pin - dome_centre(c);
  const Vec3 up = rrs_rotation(c.roll, c.pitch) * Vec3::UnitZ();
  if (q.norm() >= task_.dome_radius || q.dot(up) <= 0.0) return false;
  for (std::size_t i = 0; i < local_pos_.size(); ++i) {
    const int k = static_cast<int>(i);
    const Vec3 n = hole_normal(k, c);
    const Vec3 r = pin - hole_position(k, c);
    if ((r - r.dot(n) * n).norm() <= task_.hole_radius) return false;
  }
  return true;
}

void Env::record_point(bool collision) {
  TrajectoryPoint pt;
  pt.t = time();
  pt.pin = pin_tip();
  if (auto q = delta_inverse_kinematics(state_.p_delta, delta_))
    for (int j = 0; j < 3; ++j) pt.joints[j] = (*q)[j];
  if (auto q = rrs_joint_angles(rrs_config(), rrs_))
    for (int j = 0; j < 3; ++j) pt.joints[3 + j] = (*q)[j];
  pt.collision = collision;
  trajectory_.points.push_back(pt);
}

void Env::place(const Vec3& p_delta, const RrsConfig& c) {
  state_.p_delta = p_delta;
  state_.roll = c.roll;
  state_.pitch = c.pitch;
  state_.height = c.height;
  refresh_state();
  prev_distance_ = distance_to_target();
}

StateVector Env::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double s = task_.pos_step;
  const int kr = static_cast<int>(std::floor(task_.reset_radius / s + 1e-9));
  const int kz_lo = static_cast<int>(std::ceil(task_.reset_height_min / s - 1e-9));
  const int kz_hi = static_cast<int>(std::floor(task_.reset_height_max / s + 1e-9));
  if (kz_hi < kz_lo) throw EnvError("empty reset height range");
  std::uniform_int_distribution<int> dxy(-kr, kr);
  std::uniform_int_distribution<int> dz(kz_lo, kz_hi);

  std::fill(filled_.begin(), filled_.end(), false);
  steps_ = 0;
  state_.roll = 0.0;
  state_.pitch = 0.0;
  state_.height = rrs_.mid_height();

  // Start poses lie on the increment lattice through the home apex so every
  // hole mouth is reachable to within the tilt quantisation.
  const double apex = home_apex_z();
  bool found = false;
  for (int attempt = 0; attempt < 100 && !found; ++attempt) {
    const int kx = dxy(rng);
    const int ky = dxy(rng);
    const int kz = dz(rng);
    if (std::hypot(kx * s, ky * s) > task_.reset_radius + 1e-12) continue;
    const Vec3 pin(kx * s, ky * s, apex + kz * s);
    const Vec3 p = pin + Vec3(0.0, 0.0, delta_.pin_length);
    if (!delta_valid(p)) continue;
    state_.p_delta = p;
    refresh_state();
    found = valid_actions().any();
  }
  if (!found) throw EnvError("no valid initial Delta pose in 100 samples");

  prev_distance_ = distance_to_target();
  was_colliding_ = pin_in_collision();
  trajectory_ = Trajectory{};
  trajectory_.reference_start = pin_tip();
  trajectory_.reference_end = hole_position(target_);
  record_point(was_colliding_);
  return state_;
}

StepOutcome Env::step(int action) {
  StepOutcome out;
  const double t = time();
  Vec3 p = state_.p_delta;
  RrsConfig c = rrs_config();
  apply_increment(action, p, c);
  const bool delta_move = ActionId::from_index(action).moves_delta();
  const bool valid = delta_move ? delta_valid(p) : rrs_valid(c);

  if (!valid) {
    out.events.violation = true;
  } else if (!delta_move && rrs_singular(c)) {
    out.events.violation = true;
    out.singular = true;
  } else {
    state_.p_delta = p;
    state_.roll = c.roll;
    state_.pitch = c.pitch;
    state_.height = c.height;
    state_.e_rel = hole_position(target_) - pin_tip();
    state_.n_target = hole_normal(target_);

    const Vec3 pin = pin_tip();
    for (std::size_t i = 0; i < local_pos_.size(); ++i) {
      const int k = static_cast<int>(i);
      if (!hole_active(k)) continue;
      if (!insertion_check(pin, hole_position(k), hole_normal(k), kPinAxis,
                           task_.insert_position_tol, task_.insert_angle_tol_deg))
        continue;
      if (!filled_[i]) {
        filled_[i] = true;
        out.events.insertion = true;
        out.events.duplicate = false;
        out.inserted_hole = k;
        out.alignment_error_deg = angle_between(kPinAxis, -hole_normal(k)) / kDegToRad;
        break;
      }
      out.events.duplicate = true;
    }
  }

  out.holes_filled = holes_filled();
  const double d = distance_to_target();
  out.reward = shaped_reward(out.events, d, prev_distance_ - d, out.holes_filled, t,
                             task_.task_time);
  if (out.events.insertion) {
    refresh_state();
    prev_distance_ = distance_to_target();
  } else if (!out.events.violation) {
    prev_distance_ = d;
  }

  ++steps_;
  out.completed = true;
  for (std::size_t i = 0; i < filled_.size(); ++i)
    if (hole_active(static_cast<int>(i)) && !filled_[i]) out.completed = false;
  out.timeout = steps_ >= task_.max_steps;
  out.terminal = out.completed || out.singular || out.timeout;
  if (!out.terminal && valid_actions().none()) {
    out.dead_end = true;
    out.terminal = true;
    if (!out.events.insertion && !out.events.duplicate && !out.events.violation) {
      out.events.violation = true;
      out.reward = shaped_reward(out.events, d, 0.0, out.holes_filled, t, task_.task_time);
    }
  }

  out.collision = pin_in_collision();
  record_point(out.collision);
  out.state = state_;
  return out;
}

Observation Env::normalize(const StateVector& s) const {
  const auto raw = s.as_array();
  Observation o{};
  for (int i = 0; i < kStateDim; ++i) o[i] = (raw[i] - bounds_.lo[i]) / (bounds_.hi[i] - bounds_.lo[i]);
  return o;
}

}  // namespace pih

#include "pih/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "json.hpp"
#include "pih/atlas.hpp"

namespace pih {

using nlohmann::json;

void RunningStats::add(double x) {
  ++n_;
  const double d = x - mean_;
  mean_ += d / static_cast<double>(n_);
  m2_ += d * (x - mean_);
}

double RunningStats::stddev() const {
  return n_ > 1 ? std::sqrt(m2_ / static_cast<double>(n_ - 1)) : 0.0;
}

// ---------------------------------------------------------------------------
// Policies

GreedyPolicy::GreedyPolicy(QNetwork net, Params params)
    : net_(std::move(net)), params_(std::move(params)), zero_(net_.zero_noise()) {
  if (params_.size() != net_.param_count()) throw NetworkFault("checkpoint shape mismatch");
}

int GreedyPolicy::act(const Env&, const Observation& obs, const ActionMask& mask) {
  const int a = select_action(net_, params_, zero_, obs, mask);
  return a < 0 ? 0 : a;
}

void RandomPolicy::reset(const Env&, std::uint64_t seed) { rng_.seed(seed ^ 0x72616e64ull); }

int RandomPolicy::act(const Env&, const Observation&, const ActionMask& mask) {
  std::vector<int> valid;
  for (int a = 0; a < kNumActions; ++a)
    if (mask[a]) valid.push_back(a);
  if (valid.empty()) return 0;
  std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
  return valid[pick(rng_)];
}

int ViolatingPolicy::act(const Env&, const Observation&, const ActionMask&) {
  return ActionId{Dof::kZ, +1}.index();
}

std::pair<double, double> PlannerPolicy::alignment_tilt(const Vec3& n) {
  const double pitch = std::atan2(-n.x(), n.z());
  const double rho = std::hypot(n.x(), n.z());
  const double roll = std::atan2(n.y(), rho);
  return {roll, pitch};
}

std::vector<int> PlannerPolicy::plan(const Env& env, int target) {
  const TaskConfig& task = env.task();
  const RrsConfig c0 = env.rrs_config();
  const Vec3 local = rrs_rotation(c0.roll, c0.pitch).transpose() * env.hole_normal(target);
  const auto [roll, pitch] = alignment_tilt(local);

  std::vector<int> script;
  auto repeat = [&](Dof dof, long count) {
    const int sign = count >= 0 ? +1 : -1;
    for (long k = 0; k < std::labs(count); ++k) script.push_back(ActionId{dof, sign}.index());
  };

  // Back away from the dome surface before re-orienting it.
  const Vec3 pin0 = env.pin_tip();
  const int retract = (pin0 - env.dome_centre(c0)).norm() < task.dome_radius + 0.03 ? 2 : 0;
  repeat(Dof::kZ, retract);

  const long kr = std::lround(roll / task.rot_step) - std::lround(c0.roll / task.rot_step);
  const long kp = std::lround(pitch / task.rot_step) - std::lround(c0.pitch / task.rot_step);
  repeat(Dof::kRoll, kr);
  repeat(Dof::kPitch, kp);

  RrsConfig aligned = c0;
  aligned.roll = std::lround(roll / task.rot_step) * task.rot_step;
  aligned.pitch = std::lround(pitch / task.rot_step) * task.rot_step;
  const Vec3 mouth = env.hole_position(target, aligned);
  const Vec3 start = pin0 + Vec3(0.0, 0.0, retract * task.pos_step);
  const Vec3 approach = mouth + Vec3(0.0, 0.0, 2.0 * task.pos_step);

  long n[3];
  long total = 0;
  for (int i = 0; i < 3; ++i) {
    n[i] = std::lround((approach[i] - start[i]) / task.pos_step);
    total += std::labs(n[i]);
  }
  // Staircase that stays closest to the straight segment.
  long done[3] = {0, 0, 0};
  for (long k = 1; k <= total; ++k) {
    int best = -1;
    double lag = -1e300;
    for (int i = 0; i < 3; ++i) {
      if (done[i] == std::labs(n[i])) continue;
      const double l = static_cast<double>(std::labs(n[i])) * k / total - done[i];
      if (l > lag) {
        lag = l;
        best = i;
      }
    }
    ++done[best];
    script.push_back(ActionId{static_cast<Dof>(best), n[best] >= 0 ? +1 : -1}.index());
  }
  repeat(Dof::kZ, -2);
  return script;
}

void PlannerPolicy::reset(const Env&, std::uint64_t) {
  script_.clear();
  cursor_ = 0;
  planned_target_ = -1;
  hover_up_ = true;
}

int PlannerPolicy::act(const Env& env, const Observation&, const ActionMask&) {
  if (env.target() != planned_target_ && !env.hole_filled(env.target())) {
    planned_target_ = env.target();
    script_ = plan(env, planned_target_);
    cursor_ = 0;
  }
  if (cursor_ < script_.size()) return script_[cursor_++];
  hover_up_ = !hover_up_;
  return ActionId{Dof::kZ, hover_up_ ? -1 : +1}.index();
}

std::unique_ptr<Policy> make_policy(const std::string& kind, const Checkpoint* checkpoint) {
  if (kind == "checkpoint" || kind == "greedy") {
    if (!checkpoint) throw std::invalid_argument("greedy policy needs a checkpoint");
    return std::make_unique<GreedyPolicy>(QNetwork(checkpoint->config), checkpoint->params);
  }
  if (kind == "random") return std::make_unique<RandomPolicy>();
  if (kind == "planner") return std::make_unique<PlannerPolicy>();
  if (kind == "violating") return std::make_unique<ViolatingPolicy>();
  throw std::invalid_argument("unknown policy '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Rollouts

EpisodeMetrics run_episode(Env& env, Policy& policy, std::uint64_t seed, double noise_sigma,
                           std::ostream* trace) {
  EpisodeMetrics m;
  env.reset(seed);
  policy.reset(env, seed);
  std::mt19937_64 rng(seed ^ 0x6f62736eull);
  std::normal_distribution<double> gauss(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);

  while (true) {
    Observation obs = env.normalized();
    if (noise_sigma > 0.0)
      for (double& v : obs) v += gauss(rng);
    const ActionMask mask = env.valid_actions();
    const int a = policy.act(env, obs, mask);
    const double t = env.time();
    const StepOutcome out = env.step(a);
    if (trace) {
      const auto s = out.state.as_array();
      *trace << json{{"t", t},
                     {"state", std::vector<double>(s.begin(), s.end())},
                     {"action", a},
                     {"reward", out.reward},
                     {"violation", out.events.violation},
                     {"insertion", out.events.insertion},
                     {"duplicate", out.events.duplicate},
                     {"singular", out.singular},
                     {"terminal", out.terminal}}
                    .dump()
             << '\n';
    }
    m.reward += out.reward;
    m.violations += out.events.violation ? 1 : 0;
    if (out.events.insertion) {
      if (!m.success) m.completion_time_s = env.time();
      m.success = true;
      m.alignment_errors_deg.push_back(out.alignment_error_deg);
    }
    if (out.terminal) {
      m.singular = out.singular;
      m.completed = out.completed;
      m.holes = out.holes_filled;
      break;
    }
  }
  const Trajectory& traj = env.trajectory();
  m.collisions = collision_count(traj);
  m.energy = energy_proxy(traj);
  m.rms_error_mm = 1000.0 * rms_path_error(traj);
  m.steps = env.steps();
  return m;
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
  RunningStats s;
  for (double v : values)
    if (std::isfinite(v)) s.add(v);
  return {s.count() ? s.mean() : std::numeric_limits<double>::quiet_NaN(), s.stddev()};
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json summary_json(const MetricSummary& s) {
  return {{"mean", finite_or_null(s.mean)}, {"std", finite_or_null(s.stddev)}};
}

}  // namespace

MetricsTable evaluate(const EvalProtocol& protocol, const DeltaParams& delta,
                      const RrsGeometry& rrs, const TaskConfig& task,
                      const std::function<std::unique_ptr<Policy>()>& make) {
  if (protocol.episodes < 1 || protocol.seeds < 1)
    throw std::invalid_argument("evaluation needs at least one episode and one seed");
  MetricsTable table;
  std::vector<double> succ, comp, align, coll, energy, rms;
  for (int s = 0; s < protocol.seeds; ++s) {
    Env env(delta, rrs, task);
    auto policy = make();
    table.policy = policy->name();
    RunningStats ss, cs, as, ls, es, rs;
    int singular = 0;
    for (int e = 0; e < protocol.episodes; ++e) {
      const std::uint64_t seed =
          episode_seed(protocol.base_seed + static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(e));
      EpisodeMetrics m = run_episode(env, *policy, seed, protocol.noise_sigma);
      ss.add(m.success ? 100.0 : 0.0);
      if (m.success) cs.add(m.completion_time_s);
      for (double a : m.alignment_errors_deg) as.add(a);
      ls.add(m.collisions);
      es.add(m.energy);
      rs.add(m.rms_error_mm);
      singular += m.singular ? 1 : 0;
      table.episodes.push_back(std::move(m));
      table.episode_seed_index.push_back(s);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SeedMetrics sm;
    sm.seed = s;
    sm.success_pct = ss.mean();
    sm.completion_time_s = cs.count() ? cs.mean() : nan;
    sm.alignment_error_deg = as.count() ? as.mean() : nan;
    sm.collisions = ls.mean();
    sm.energy = es.mean();
    sm.rms_error_mm = rs.mean();
    sm.singular_terminations = singular;
    table.seeds.push_back(sm);
    succ.push_back(sm.success_pct);
    comp.push_back(sm.completion_time_s);
    align.push_back(sm.alignment_error_deg);
    coll.push_back(sm.collisions);
    energy.push_back(sm.energy);
    rms.push_back(sm.rms_error_mm);
  }
  table.success_pct = summarize(succ);
  table.completion_time_s = summarize(comp);
  table.alignment_error_deg = summarize(align);
  table.collisions = summarize(coll);
  table.energy = summarize(energy);
  table.rms_error_mm = summarize(rms);
  return table;
}

void write_metrics_csv(std::ostream& os, const MetricsTable& table) {
  os << "seed,episode,success,completion_time_s,alignment_error_deg,collisions,energy,"
        "rms_error_mm,steps,reward,holes,violations,singular\n";
  std::vector<int> counter(table.seeds.size(), 0);
  for (std::size_t i = 0; i < table.episodes.size(); ++i) {
    const auto& m = table.episodes[i];
    const int s = table.episode_seed_index[i];
    double align = std::numeric_limits<double>::quiet_NaN();
    if (!m.alignment_errors_deg.empty()) {
      align = 0.0;
      for (double a : m.alignment_errors_deg) align += a;
      align /= static_cast<double>(m.alignment_errors_deg.size());
    }
    auto num = [](double v) { return std::isfinite(v) ? json(v).dump() : std::string(); };
    os << s << ',' << counter[s]++ << ',' << (m.success ? 1 : 0) << ','
       << num(m.completion_time_s) << ',' << num(align) << ',' << m.collisions << ','
       << num(m.energy) << ',' << num(m.rms_error_mm) << ',' << m.steps << ',' << num(m.reward)
       << ',' << m.holes << ',' << m.violations << ',' << (m.singular ? 1 : 0) << '\n';
  }
}

std::string metrics_table_json(const MetricsTable& table) {
  json seeds = json::array();
  for (const auto& s : table.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"success_pct", s.success_pct},
                     {"completion_time_s", finite_or_null(s.completion_time_s)},
                     {"alignment_error_deg", finite_or_null(s.alignment_error_deg)},
                     {"collisions", s.collisions},
                     {"energy", s.energy},
                     {"rms_error_mm", s.rms_error_mm},
                     {"singular_terminations", s.singular_terminations}});
  }
  json j = {{"policy", table.policy},
            {"episodes", table.episodes.size()},
            {"Success rate (%)", summary_json(table.success_pct)},
            {"Completion time (s)", summary_json(table.completion_time_s)},
            {"Alignment error (deg)", summary_json(table.alignment_error_deg)},
            {"Collisions per episode", summary_json(table.collisions)},
            {"Energy proxy", summary_json(table.energy)},
            {"RMS trajectory error (mm)", summary_json(table.rms_error_mm)},
            {"per_seed", seeds}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Ablations

std::vector<AblationCellSpec> standard_ablation_cells() {
  std::vector<AblationCellSpec> cells;
  cells.push_back({"Rainbow (full)", AblationFlags{}, true});
  const char* names[] = {"double", "dueling", "per", "nstep", "noisy", "distributional"};
  for (const char* n : names) {
    AblationFlags f;
    f.disable(n);
    cells.push_back({std::string("- ") + n, f, true});
  }
  cells.push_back({"Initial geometry", AblationFlags{}, false});
  return cells;
}

std::int64_t steps_to_threshold(const std::vector<EpisodeRecord>& episodes, int window,
                                double threshold) {
  int wins = 0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    wins += episodes[i].success ? 1 : 0;
    if (i >= static_cast<std::size_t>(window)) wins -= episodes[i - window].success ? 1 : 0;
    if (i + 1 >= static_cast<std::size_t>(window) &&
        static_cast<double>(wins) / window > threshold)
      return episodes[i].end_step;
  }
  return -1;
}

AblationSeedResult summarize_training(const TrainResult& run, const AppConfig& cfg,
                                      std::uint64_t seed, int eval_episodes) {
  AblationSeedResult r;
  r.seed = seed;
  r.episodes = static_cast<int>(run.episodes.size());
  double reward = 0.0;
  for (const auto& e : run.episodes) {
    r.singular_terminations += e.singular ? 1 : 0;
    r.violation_terminations += (e.singular || e.dead_end) ? 1 : 0;
    reward += e.reward;
  }
  r.mean_reward = r.episodes ? reward / r.episodes : 0.0;
  r.steps_to_threshold =
      steps_to_threshold(run.episodes, cfg.task.curriculum_window, cfg.task.curriculum_threshold);
  EvalProtocol p;
  p.episodes = eval_episodes;
  p.seeds = 1;
  p.base_seed = 5000 + seed;
  const QNetwork net(run.net_config);
  const MetricsTable t = evaluate(p, cfg.delta, run.geometry, cfg.task, [&] {
    return std::make_unique<GreedyPolicy>(net, run.params);
  });
  r.final_success_pct = t.success_pct.mean;
  return r;
}

AblationTable run_ablation_suite(const AppConfig& cfg, const std::vector<AblationCellSpec>& cells,
                                 const std::vector<std::uint64_t>& seeds, int eval_episodes,
                                 const std::function<void(const std::string&)>& progress) {
  AblationTable table;
  std::optional<RrsGeometry> optimized;
  for (const auto& spec : cells) {
    AblationCellResult cell;
    cell.spec = spec;
    try {
      if (spec.optimized_geometry && !optimized) {
        AppConfig c = cfg;
        c.train.optimize_geometry = true;
        optimized = resolve_geometry(c);
      }
      const RrsGeometry geometry = spec.optimized_geometry ? *optimized : cfg.rrs;
      std::vector<double> succ, sing, viol;
      for (std::uint64_t seed : seeds) {
        if (progress) progress(spec.name + " seed " + std::to_string(seed));
        AppConfig c = cfg;
        c.train.flags = spec.flags;
        c.train.seed = seed;
        TrainOptions opts;
        opts.rrs_override = geometry;
        const TrainResult run = run_training(c, opts);
        AblationSeedResult r = summarize_training(run, c, seed, eval_episodes);
        succ.push_back(r.final_success_pct);
        sing.push_back(r.singular_terminations);
        viol.push_back(r.violation_terminations);
        cell.seeds.push_back(r);
      }
      cell.success_pct = summarize(succ);
      cell.singular_terminations = summarize(sing);
      cell.violation_terminations = summarize(viol);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    table.cells.push_back(std::move(cell));
  }
  return table;
}

std::string ablation_table_json(const AblationTable& table) {
  json rows = json::object();
  for (const auto& c : table.cells) {
    json seeds = json::array();
    for (const auto& s : c.seeds)
      seeds.push_back({{"seed", s.seed},
                       {"final_success_pct", s.final_success_pct},
                       {"steps_to_threshold", s.steps_to_threshold},
                       {"singular_terminations", s.singular_terminations},
                       {"violation_terminations", s.violation_terminations},
                       {"episodes", s.episodes},
                       {"mean_reward", s.mean_reward}});
    json row = {{"flags", c.spec.flags.describe()},
                {"geometry", c.spec.optimized_geometry ? "optimized" : "initial"},
                {"failed", c.failed}};
    if (c.failed) {
      row["error"] = c.error;
    } else {
      row["Success rate (%)"] = summary_json(c.success_pct);
      row["Singular. terminations"] = summary_json(c.singular_terminations);
      row["Violation terminations"] = summary_json(c.violation_terminations);
      row["per_seed"] = seeds;
    }
    rows[c.spec.name] = row;
  }
  return json{{"rows", rows}}.dump(2) + "\n";
}

void write_ablation_csv(std::ostream& os, const AblationTable& table) {
  os << "row,seed,final_success_pct,steps_to_threshold,singular_terminations,"
        "violation_terminations,episodes,mean_reward\n";
  for (const auto& c : table.cells) {
    if (c.failed) {
      os << '"' << c.spec.name << "\",,,,,,,\n";
      continue;
    }
    for (const auto& s : c.seeds)
      os << '"' << c.spec.name << "\"," << s.seed << ',' << json(s.final_success_pct).dump()
         << ',' << s.steps_to_threshold << ',' << s.singular_terminations << ','
         << s.violation_terminations << ',' << s.episodes << ',' << json(s.mean_reward).dump()
         << '\n';
  }
}

}  // namespace pih

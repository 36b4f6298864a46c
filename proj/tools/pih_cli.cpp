// pih: command-line entry point.
//
//   pih atlas          --config cfg.json --out runs/a1
//   pih optimize       --config cfg.json --out runs/o1
//   pih train          --config cfg.json --seed 3 --steps 10000 --ablate per,noisy --out runs/t1
//   pih eval           --config cfg.json --checkpoint runs/t1/checkpoint.bin --out runs/e1
//   pih ablate         --config cfg.json --seeds 1,2,3 --out runs/ab
//   pih export-curves  runs/t1
//
// Exit status: 0 ok, 1 user error (flags, config, missing files), 2 internal fault.

#include <cmath>
#include <deque>
#include <optional>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pih/atlas.hpp"
#include "pih/config.hpp"
#include "pih/eval.hpp"
#include "pih/simd/kernels.hpp"
#include "pih/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pih;

namespace {

struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UserError("cannot write " + path.string());
  out << text;
}

struct Run {
  std::string subcommand;
  fs::path out;
  AppConfig cfg;
  std::vector<std::string> overrides;
  std::vector<std::uint64_t> seeds;
  std::string started = utc_now();

  void begin() {
    validate_config(cfg);
    fs::create_directories(out);
    write_text(out / "config.json", serialize_config(cfg));
  }

  void finish(const json& extra = json::object()) const {
    json j = {{"subcommand", subcommand},
              {"version", PIH_VERSION},
              {"config_hash", config_hash(cfg)},
              {"seeds", seeds},
              {"overrides", overrides},
              {"out_dir", out.string()},
              {"simd", std::string(simd::isa_name(simd::active_isa()))},
              {"started_at", started},
              {"finished_at", utc_now()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    write_text(out / "manifest.json", j.dump(2) + "\n");
  }
};

AppConfig load_or_default(const std::string& path) {
  if (path.empty()) return AppConfig{};
  if (!fs::exists(path)) throw UserError("config file not found: " + path);
  return load_config(path);
}

json atlas_summary_json(const AtlasResult& a) {
  return {{"area_rad2", a.area},
          {"omega_cells", a.omega_cells},
          {"min_sigma_min", a.min_sigma_min},
          {"max_roll_deg", a.max_roll_deg},
          {"max_pitch_deg", a.max_pitch_deg},
          {"kappa_variation_pct", a.kappa_variation_pct},
          {"joint_min_deg", a.joint_min_deg},
          {"joint_max_deg", a.joint_max_deg}};
}

json stats_json(const AtlasStats& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

json summary_stats_json(const AtlasSummary& s) {
  return {{"Orientation workspace (rad2)", stats_json(s.area)},
          {"Min sigma_min", stats_json(s.min_sigma_min)},
          {"Max roll (deg)", stats_json(s.max_roll_deg)},
          {"Max pitch (deg)", stats_json(s.max_pitch_deg)},
          {"Condition number variation (%)", stats_json(s.kappa_variation_pct)},
          {"Joint angle min (deg)", stats_json(s.joint_min_deg)},
          {"Joint angle max (deg)", stats_json(s.joint_max_deg)}};
}

json geometry_json(const RrsGeometry& g) {
  const DimensionlessDesign d = to_dimensionless(g);
  return {{"base_radius", g.base_radius},
          {"platform_radius", g.platform_radius},
          {"proximal_len", g.proximal_len},
          {"distal_len", g.distal_len},
          {"h_min", g.h_min},
          {"h_max", g.h_max},
          {"lambda1", d.lambda1},
          {"lambda2", d.lambda2},
          {"lambda3", d.lambda3},
          {"eta", d.eta}};
}

void write_cells_csv(const fs::path& path, const AtlasResult& a) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "theta_x,theta_y,valid,sigma_min,kappa,in_omega\n";
  for (const auto& c : a.cells) {
    out << json(c.theta_x).dump() << ',' << json(c.theta_y).dump() << ',' << (c.valid ? 1 : 0)
        << ',' << (c.valid ? json(c.sigma_min).dump() : "") << ','
        << (c.valid && std::isfinite(c.kappa) ? json(c.kappa).dump() : "") << ','
        << (c.in_omega ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------

int cmd_atlas(Run& run, std::uint64_t seed, double threshold, bool optimized, int z_slices) {
  run.seeds = {seed};
  run.begin();
  RrsGeometry g = run.cfg.rrs;
  if (optimized) {
    AppConfig c = run.cfg;
    c.train.optimize_geometry = true;
    g = resolve_geometry(c);
  }
  OrientationGrid grid;
  grid.height = g.mid_height();
  grid.seed = seed;
  const AtlasResult a = compute_atlas(g, grid, threshold);
  write_cells_csv(run.out / "cells.csv", a);

  std::vector<bool> loci = singularity_loci(g, grid);
  {
    std::ofstream out(run.out / "singularity_loci.csv", std::ios::binary | std::ios::trunc);
    out << "theta_x,theta_y,singular\n";
    for (std::size_t i = 0; i < a.cells.size(); ++i)
      out << json(a.cells[i].theta_x).dump() << ',' << json(a.cells[i].theta_y).dump() << ','
          << (loci[i] ? 1 : 0) << '\n';
  }
  if (z_slices > 0) {
    std::ofstream out(run.out / "atlas_z.csv", std::ios::binary | std::ios::trunc);
    out << "height,area_rad2,omega_cells,min_sigma_min\n";
    for (int k = 0; k < z_slices; ++k) {
      OrientationGrid gz = grid;
      gz.height = z_slices == 1 ? g.mid_height()
                                : g.h_min + (g.h_max - g.h_min) * k / (z_slices - 1.0);
      const AtlasResult az = compute_atlas(g, gz, threshold);
      out << json(gz.height).dump() << ',' << json(az.area).dump() << ',' << az.omega_cells
          << ',' << json(az.min_sigma_min).dump() << '\n';
    }
  }
  json summary = atlas_summary_json(a);
  summary["geometry"] = geometry_json(g);
  summary["height"] = grid.height;
  summary["sigma_threshold"] = threshold;
  write_text(run.out / "summary.json", summary.dump(2) + "\n");

  // Before/after comparison against the optimised design.
  const OptimizeResult opt = optimize_design(run.cfg.rrs, grid, threshold);
  json table = {{"initial", summary_stats_json(opt.initial_summary)},
                {"optimized", summary_stats_json(opt.final_summary)},
                {"initial_geometry", geometry_json(run.cfg.rrs)},
                {"optimized_geometry", geometry_json(opt.geometry)}};
  write_text(run.out / "comparison.json", table.dump(2) + "\n");
  std::cout << "A_w = " << a.area << " rad^2 (" << a.omega_cells << " cells), min sigma_min "
            << a.min_sigma_min << "\n";
  run.finish();
  return 0;
}

int cmd_optimize(Run& run, double threshold) {
  run.seeds = {0};
  run.begin();
  OrientationGrid grid;
  grid.height = run.cfg.rrs.mid_height();
  const OptimizeResult opt = optimize_design(run.cfg.rrs, grid, threshold);
  json j = {{"initial_geometry", geometry_json(run.cfg.rrs)},
            {"optimized_geometry", geometry_json(opt.geometry)},
            {"iterations", opt.iterations},
            {"evaluations", opt.evaluations},
            {"atlas_at_optimisation_seed", atlas_summary_json(opt.atlas)},
            {"initial", summary_stats_json(opt.initial_summary)},
            {"optimized", summary_stats_json(opt.final_summary)}};
  write_text(run.out / "design.json", j.dump(2) + "\n");
  AppConfig optimized = run.cfg;
  optimized.rrs = opt.geometry;
  optimized.train.optimize_geometry = false;
  write_text(run.out / "optimized_config.json", serialize_config(optimized));
  write_cells_csv(run.out / "cells.csv", opt.atlas);
  const double before = opt.initial_summary.area.mean;
  const double after = opt.final_summary.area.mean;
  std::cout << "A_w " << before << " -> " << after << " rad^2 (" << (after / before - 1.0) * 100.0
            << "%)\n";
  run.finish();
  return 0;
}

int cmd_train(Run& run, const std::string& trace_path) {
  run.seeds = {run.cfg.train.seed};
  run.begin();
  std::ofstream trace;
  TrainOptions opts;
  opts.out_dir = run.out;
  if (!trace_path.empty()) {
    trace.open(trace_path, std::ios::binary | std::ios::trunc);
    if (!trace) throw UserError("cannot write trace file " + trace_path);
    opts.trace = &trace;
  }
  const TrainResult r = run_training(run.cfg, opts);
  int successes = 0;
  double reward = 0.0;
  for (const auto& e : r.episodes) {
    successes += e.success ? 1 : 0;
    reward += e.reward;
  }
  const std::size_t n = r.episodes.size();
  json summary = {{"steps", r.steps},
                  {"episodes", n},
                  {"final_stage", r.final_stage},
                  {"flags", run.cfg.train.flags.describe()},
                  {"seed", run.cfg.train.seed},
                  {"param_count", r.params.size()},
                  {"training_success_pct", n ? 100.0 * successes / n : 0.0},
                  {"mean_episode_reward", n ? reward / n : 0.0},
                  {"geometry", geometry_json(r.geometry)}};
  write_text(run.out / "train_summary.json", summary.dump(2) + "\n");
  std::cout << "trained " << r.steps << " steps over " << n << " episodes\n";
  run.finish();
  return 0;
}

int cmd_eval(Run& run, const std::string& checkpoint_path, const std::string& trace_path,
             const std::string& geometry) {
  std::optional<Checkpoint> ckpt;
  if (run.cfg.eval.policy == "checkpoint") {
    if (checkpoint_path.empty()) throw UserError("eval with policy 'checkpoint' needs --checkpoint");
    if (!fs::exists(checkpoint_path)) throw UserError("checkpoint not found: " + checkpoint_path);
    ckpt = load_checkpoint(checkpoint_path);
  }
  run.seeds.clear();
  for (int s = 0; s < run.cfg.eval.seeds; ++s) run.seeds.push_back(1000 + s);
  run.begin();
  RrsGeometry g = run.cfg.rrs;
  if (geometry == "optimized" || (geometry == "config" && run.cfg.train.optimize_geometry)) {
    AppConfig c = run.cfg;
    c.train.optimize_geometry = true;
    g = resolve_geometry(c);
  }
  EvalProtocol p;
  p.episodes = run.cfg.eval.episodes;
  p.seeds = run.cfg.eval.seeds;
  p.noise_sigma = run.cfg.eval.noise_sigma;
  const std::string kind = run.cfg.eval.policy;
  const MetricsTable t = evaluate(p, run.cfg.delta, g, run.cfg.task, [&] {
    return make_policy(kind, ckpt ? &*ckpt : nullptr);
  });
  {
    std::ofstream csv(run.out / "metrics.csv", std::ios::binary | std::ios::trunc);
    write_metrics_csv(csv, t);
  }
  write_text(run.out / "table.json", metrics_table_json(t));
  if (!trace_path.empty()) {
    std::ofstream trace(trace_path, std::ios::binary | std::ios::trunc);
    if (!trace) throw UserError("cannot write trace file " + trace_path);
    Env env(run.cfg.delta, g, run.cfg.task);
    auto policy = make_policy(kind, ckpt ? &*ckpt : nullptr);
    run_episode(env, *policy, episode_seed(1000, 0), p.noise_sigma, &trace);
  }
  std::cout << kind << ": success " << t.success_pct.mean << " +- " << t.success_pct.stddev
            << " %\n";
  run.finish();
  return 0;
}

int cmd_ablate(Run& run, const std::string& rows) {
  run.begin();
  std::vector<AblationCellSpec> cells = standard_ablation_cells();
  if (!rows.empty()) {
    std::vector<AblationCellSpec> picked;
    std::stringstream ss(rows);
    std::string name;
    while (std::getline(ss, name, ',')) {
      bool found = false;
      for (const auto& c : cells) {
        const bool match = c.name == name || c.name == "- " + name ||
                           (name == "full" && c.name == "Rainbow (full)") ||
                           (name == "initial" && c.name == "Initial geometry");
        if (match) {
          picked.push_back(c);
          found = true;
        }
      }
      if (name == "vanilla") {
        picked.push_back({"Vanilla DQN", AblationFlags::vanilla(), true});
        found = true;
      }
      if (!found) throw UserError("unknown ablation row '" + name + "'");
    }
    cells = picked;
  }
  const AblationTable t = run_ablation_suite(run.cfg, cells, run.seeds,
                                             run.cfg.eval.ablation_eval_episodes,
                                             [](const std::string& m) { std::cerr << m << "\n"; });
  write_text(run.out / "table.json", ablation_table_json(t));
  std::ofstream csv(run.out / "metrics.csv", std::ios::binary | std::ios::trunc);
  write_ablation_csv(csv, t);
  run.finish();
  return 0;
}

int cmd_export_curves(const fs::path& run_dir, fs::path out) {
  const fs::path log = run_dir / "episodes.jsonl";
  if (!fs::exists(log)) throw UserError("no episodes.jsonl in " + run_dir.string());
  if (out.empty()) out = run_dir / "curves.csv";
  std::ifstream in(log, std::ios::binary);
  std::ofstream csv(out, std::ios::binary | std::ios::trunc);
  if (!csv) throw UserError("cannot write " + out.string());
  csv << "episode,reward,reward_ma10,duration_s,holes,success,loss,max_q,lr,noise_mag\n";
  std::deque<double> window;
  double sum = 0.0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const EpisodeRecord r = episode_from_json(line);
    window.push_back(r.reward);
    sum += r.reward;
    if (window.size() > 10) {
      sum -= window.front();
      window.pop_front();
    }
    csv << r.episode << ',' << json(r.reward).dump() << ','
        << json(sum / static_cast<double>(window.size())).dump() << ','
        << json(r.duration_s).dump() << ',' << r.holes << ',' << (r.success ? 1 : 0) << ','
        << json(r.loss).dump() << ',' << json(r.max_q).dump() << ',' << json(r.lr).dump() << ','
        << json(r.noise_mag).dump() << '\n';
  }
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoull(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UserError("bad seed '" + item + "' in --seeds");
    }
  }
  if (out.empty()) throw UserError("--seeds is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delta + 3-RRS peg-in-hole: design optimisation and Rainbow DQN"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PIH_VERSION);

  std::string config_path, out_dir, checkpoint, trace, ablate, rows, seeds_list, policy,
      geometry = "config";
  std::uint64_t seed = 0;
  std::int64_t steps = -1;
  int episodes = -1, eval_seeds = -1, z_slices = 0;
  double threshold = kOmegaSigmaThreshold, noise = -1.0;
  bool optimized = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->required();
  };

  auto* atlas = app.add_subcommand("atlas", "singularity/conditioning atlas of the 3-RRS");
  common(atlas);
  atlas->add_option("--seed", seed, "jitter seed");
  atlas->add_option("--threshold", threshold, "sigma_min threshold of the well-conditioned set");
  atlas->add_flag("--optimized", optimized, "map the optimised design instead");
  atlas->add_option("--z-slices", z_slices, "also sweep this many platform heights");

  auto* optimize = app.add_subcommand("optimize", "Nelder-Mead design optimisation");
  common(optimize);
  optimize->add_option("--threshold", threshold, "sigma_min threshold");

  auto* train = app.add_subcommand("train", "train a Rainbow agent");
  common(train);
  train->add_option("--seed", seed, "training seed");
  train->add_option("--steps", steps, "environment step budget");
  train->add_option("--ablate", ablate, "components to remove: double,dueling,per,nstep,noisy,distributional,all");
  train->add_option("--trace", trace, "per-step JSON-lines trace file");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or a baseline policy");
  common(eval);
  eval->add_option("--checkpoint", checkpoint, "network checkpoint");
  eval->add_option("--policy", policy, "checkpoint | planner | random | violating");
  eval->add_option("--episodes", episodes, "episodes per seed");
  eval->add_option("--seeds", eval_seeds, "number of evaluation seeds");
  eval->add_option("--noise", noise, "observation noise sigma");
  eval->add_option("--geometry", geometry, "config | optimized | initial")
      ->check(CLI::IsMember({"config", "optimized", "initial"}));
  eval->add_option("--trace", trace, "trace the first episode to this file");

  auto* ablation = app.add_subcommand("ablate", "Rainbow component and geometry ablations");
  common(ablation);
  ablation->add_option("--seeds", seeds_list, "comma-separated training seeds")->default_val("1,2,3,4,5");
  ablation->add_option("--rows", rows, "subset of rows: full,double,dueling,per,nstep,noisy,distributional,initial,vanilla");
  ablation->add_option("--steps", steps, "environment step budget per run");
  ablation->add_option("--episodes", episodes, "greedy evaluation episodes per run");

  std::string run_dir, curves_out;
  auto* curves = app.add_subcommand("export-curves", "plot-ready CSV from a training run");
  curves->add_option("run", run_dir, "training output directory")->required();
  curves->add_option("--out", curves_out, "CSV path (default <run>/curves.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (curves->parsed()) return cmd_export_curves(run_dir, curves_out);

    Run run;
    run.out = out_dir;
    run.cfg = load_or_default(config_path);
    run.subcommand = app.get_subcommands().front()->get_name();
    auto note = [&](const std::string& s) { run.overrides.push_back(s); };

    if (atlas->parsed()) return cmd_atlas(run, seed, threshold, optimized, z_slices);
    if (optimize->parsed()) return cmd_optimize(run, threshold);
    if (train->parsed()) {
      if (train->count("--seed")) {
        run.cfg.train.seed = seed;
        note("train.seed=" + std::to_string(seed));
      }
      if (steps >= 0) {
        run.cfg.train.total_steps = steps;
        note("train.total_steps=" + std::to_string(steps));
      }
      if (!ablate.empty()) {
        std::stringstream ss(ablate);
        std::string flag;
        while (std::getline(ss, flag, ',')) run.cfg.train.flags.disable(flag);
        note("train.flags=" + run.cfg.train.flags.describe());
      }
      return cmd_train(run, trace);
    }
    if (eval->parsed()) {
      if (!policy.empty()) {
        run.cfg.eval.policy = policy;
        note("eval.policy=" + policy);
      }
      if (episodes > 0) {
        run.cfg.eval.episodes = episodes;
        note("eval.episodes=" + std::to_string(episodes));
      }
      if (eval_seeds > 0) {
        run.cfg.eval.seeds = eval_seeds;
        note("eval.seeds=" + std::to_string(eval_seeds));
      }
      if (noise >= 0.0) {
        run.cfg.eval.noise_sigma = noise;
        note("eval.noise_sigma=" + json(noise).dump());
      }
      if (geometry != "config") note("geometry=" + geometry);
      return cmd_eval(run, checkpoint, trace, geometry);
    }
    if (ablation->parsed()) {
      run.seeds = parse_seed_list(seeds_list);
      if (steps >= 0) {
        run.cfg.train.total_steps = steps;
        note("train.total_steps=" + std::to_string(steps));
      }
      if (episodes > 0) {
        run.cfg.eval.ablation_eval_episodes = episodes;
        note("eval.ablation_eval_episodes=" + std::to_string(episodes));
      }
      return cmd_ablate(run, rows);
    }
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DesignError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

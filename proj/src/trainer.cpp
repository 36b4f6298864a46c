#include "pih/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "json.hpp"
#include "pih/atlas.hpp"
#include "pih/simd/kernels.hpp"

namespace pih {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::vector<double> target_next_values(const QNetwork& net, const Params& params,
                                       const NoiseState& zero, const Observation& s,
                                       ForwardCache& cache) {
  net.forward(params, zero, s, cache);
  return cache.q;
}

}  // namespace

std::uint64_t episode_seed(std::uint64_t base, std::uint64_t episode) {
  return splitmix64(splitmix64(base) ^ (episode * 0xd1342543de82ef95ull + 1));
}

int masked_argmax(std::span<const double> q, const ActionMask& mask) {
  int best = -1;
  double best_q = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < q.size() && a < mask.size(); ++a) {
    if (!mask[a]) continue;
    if (best < 0 || q[a] > best_q) {
      best = static_cast<int>(a);
      best_q = q[a];
    }
  }
  return best;
}

int select_action(const QNetwork& net, const Params& params, const NoiseState& noise,
                  const Observation& obs, const ActionMask& mask) {
  const auto q = net.q_values(params, noise, obs);
  return masked_argmax(q, mask);
}

std::vector<double> project_distribution(std::span<const double> next_probs,
                                         std::span<const double> support, double reward,
                                         double discount, bool done) {
  const std::size_t n = support.size();
  const double vmin = support.front();
  const double vmax = support.back();
  const double dz = (vmax - vmin) / static_cast<double>(n - 1);
  std::vector<double> m(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double tz = std::clamp(done ? reward : reward + discount * support[j], vmin, vmax);
    const double b = (tz - vmin) / dz;
    const double lo = std::floor(b);
    const double hi = std::ceil(b);
    const auto l = static_cast<std::size_t>(lo);
    const auto u = std::min(static_cast<std::size_t>(hi), n - 1);
    if (l == u) {
      m[l] += next_probs[j];
    } else {
      m[l] += next_probs[j] * (hi - b);
      m[u] += next_probs[j] * (b - lo);
    }
  }
  return m;
}

Target build_target(const QNetwork& net, const Params& online, const Params& target,
                    const NStepTransition& t, double gamma, bool double_q) {
  const NoiseState zero = net.zero_noise();
  const double discount = std::pow(gamma, t.horizon);
  const bool distributional = net.config().distributional;
  const bool done = t.done || t.next_mask.none();

  if (done) {
    if (!distributional) return {t.reward};
    const int atoms = net.config().atoms;
    std::vector<double> dummy(atoms, 1.0 / atoms);
    return project_distribution(dummy, net.support(), t.reward, 0.0, true);
  }

  ForwardCache cache;
  int next_action;
  if (double_q) {
    const auto q_online = target_next_values(net, online, zero, t.next_state, cache);
    next_action = masked_argmax(q_online, t.next_mask);
    net.forward(target, zero, t.next_state, cache);
  } else {
    net.forward(target, zero, t.next_state, cache);
    next_action = masked_argmax(cache.q, t.next_mask);
  }
  if (!distributional) return {t.reward + discount * cache.q[next_action]};
  const int atoms = net.config().atoms;
  std::span<const double> probs(cache.probs.data() + next_action * atoms, atoms);
  return project_distribution(probs, net.support(), t.reward, discount, false);
}

std::vector<Target> build_targets(const QNetwork& net, const Params& online, const Params& target,
                                  std::span<const NStepTransition* const> batch, double gamma,
                                  bool double_q) {
  const NoiseState zero = net.zero_noise();
  const bool distributional = net.config().distributional;
  const int atoms = net.config().atoms;
  std::vector<Target> out(batch.size());
  std::vector<std::size_t> live;
  std::vector<std::array<double, kStateDim>> next;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const NStepTransition& t = *batch[i];
    if (t.done || t.next_mask.none()) {
      if (!distributional) {
        out[i] = {t.reward};
      } else {
        std::vector<double> dummy(atoms, 1.0 / atoms);
        out[i] = project_distribution(dummy, net.support(), t.reward, 0.0, true);
      }
    } else {
      live.push_back(i);
      next.push_back(t.next_state);
    }
  }
  if (live.empty()) return out;
  std::vector<ForwardCache> eval, pick;
  net.forward_batch(target, zero, next, eval);
  if (double_q) net.forward_batch(online, zero, next, pick);
  for (std::size_t k = 0; k < live.size(); ++k) {
    const NStepTransition& t = *batch[live[k]];
    const double discount = std::pow(gamma, t.horizon);
    const auto& sel = double_q ? pick[k].q : eval[k].q;
    const int a = masked_argmax(sel, t.next_mask);
    if (!distributional) {
      out[live[k]] = {t.reward + discount * eval[k].q[a]};
    } else {
      std::span<const double> probs(eval[k].probs.data() + a * atoms, atoms);
      out[live[k]] = project_distribution(probs, net.support(), t.reward, discount, false);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : m_(n, 0.0), v_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(Params& params, const std::vector<double>& grad, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void polyak_update(Params& target, const Params& online, double tau) {
  if (target.size() != online.size()) throw NetworkFault("Polyak update size mismatch");
  simd::axpby(1.0 - tau, tau, online, target);
}

// ---------------------------------------------------------------------------

std::string episode_to_json(const EpisodeRecord& r) {
  json j = {{"episode", r.episode},   {"end_step", r.end_step},     {"steps", r.steps},
            {"reward", r.reward},     {"duration_s", r.duration_s}, {"holes", r.holes},
            {"success", r.success},   {"violations", r.violations}, {"singular", r.singular},
            {"dead_end", r.dead_end}, {"completed", r.completed},   {"stage", r.stage},
            {"loss", r.loss},         {"max_q", r.max_q},           {"lr", r.lr},
            {"noise_mag", r.noise_mag}, {"epsilon", r.epsilon}};
  return j.dump();
}

EpisodeRecord episode_from_json(const std::string& line) {
  const json j = json::parse(line);
  EpisodeRecord r;
  r.episode = j.at("episode");
  r.end_step = j.at("end_step");
  r.steps = j.at("steps");
  r.reward = j.at("reward");
  r.duration_s = j.at("duration_s");
  r.holes = j.at("holes");
  r.success = j.at("success");
  r.violations = j.at("violations");
  r.singular = j.at("singular");
  r.dead_end = j.at("dead_end");
  r.completed = j.at("completed");
  r.stage = j.at("stage");
  r.loss = j.at("loss");
  r.max_q = j.at("max_q");
  r.lr = j.at("lr");
  r.noise_mag = j.at("noise_mag");
  r.epsilon = j.at("epsilon");
  return r;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      net_(cfg.net_config()),
      buffer_(static_cast<std::size_t>(cfg.buffer_capacity), cfg.flags.per ? cfg.alpha : 0.0,
              cfg.eps_per),
      nstep_(cfg.flags.nstep ? cfg.n_step : 1, cfg.gamma),
      noise_rng_(splitmix64(seed ^ 0x6e6f697365ull)),
      replay_rng_(splitmix64(seed ^ 0x7265706c6179ull)),
      explore_rng_(splitmix64(seed ^ 0x6578706cull)),
      lr_(cfg.lr) {
  online_ = net_.init_params(splitmix64(seed));
  target_ = online_;
  adam_ = Adam(online_.size());
  act_noise_ = net_.zero_noise();
  batch_noise_ = net_.zero_noise();
}

double Trainer::epsilon(std::int64_t step) const {
  if (cfg_.flags.noisy) return 0.0;
  return linear_schedule(cfg_.epsilon_start, cfg_.epsilon_end, static_cast<double>(step),
                         static_cast<double>(cfg_.epsilon_decay_steps));
}

int Trainer::act(const Observation& obs, const ActionMask& mask, std::int64_t step) {
  if (cfg_.flags.noisy) {
    net_.resample_noise(act_noise_, noise_rng_);
    return select_action(net_, online_, act_noise_, obs, mask);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(explore_rng_) < epsilon(step)) {
    std::vector<int> valid;
    for (int a = 0; a < kNumActions; ++a)
      if (mask[a]) valid.push_back(a);
    std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
    return valid[pick(explore_rng_)];
  }
  return select_action(net_, online_, act_noise_, obs, mask);
}

double Trainer::noise_magnitude() const {
  return cfg_.flags.noisy ? net_.noise_magnitude(online_, act_noise_) : 0.0;
}

void Trainer::observe(const RawTransition& t) {
  if (auto tr = nstep_.push_raw(t)) buffer_.insert(*tr);
}

void Trainer::end_episode() {
  for (auto& tr : nstep_.flush()) buffer_.insert(std::move(tr));
}

bool Trainer::ready() const {
  const auto need = std::max<std::int64_t>(cfg_.warmup, cfg_.batch);
  return static_cast<std::int64_t>(buffer_.size()) >= need;
}

TrainDiagnostics Trainer::train_step(std::int64_t step) {
  const double beta = linear_schedule(cfg_.beta_start, cfg_.beta_end, static_cast<double>(step),
                                      static_cast<double>(cfg_.total_steps));
  const SampledBatch batch = buffer_.sample(static_cast<std::size_t>(cfg_.batch), beta, replay_rng_);
  if (cfg_.flags.noisy) net_.resample_noise(batch_noise_, noise_rng_);

  const std::size_t b = batch.items.size();
  std::vector<std::array<double, kStateDim>> inputs(b);
  std::vector<int> actions(b);
  for (std::size_t i = 0; i < b; ++i) {
    inputs[i] = batch.items[i]->state;
    actions[i] = batch.items[i]->action;
  }
  const std::vector<Target> targets =
      build_targets(net_, online_, target_, batch.items, cfg_.gamma, cfg_.flags.double_q);

  TrainDiagnostics d;
  const LossResult lr = net_.gradients(online_, batch_noise_, inputs, actions, targets,
                                       batch.weights, cfg_.loss, grad_);
  if (!std::isfinite(lr.loss)) throw NetworkFault("non-finite loss at step " + std::to_string(step));
  if (cfg_.weight_decay > 0.0) simd::axpy(cfg_.weight_decay, online_, grad_);
  d.grad_norm = clip_gradient(grad_, cfg_.grad_clip);
  adam_.step(online_, grad_, lr_);
  net_.clamp_sigma(online_);
  if (cfg_.flags.per) buffer_.update_priorities(batch.indices, lr.td_error);
  polyak_update(target_, online_, cfg_.tau);

  d.loss = lr.loss;
  double mq = 0.0;
  for (double q : lr.max_q) mq += q;
  d.mean_max_q = b ? mq / static_cast<double>(b) : 0.0;
  d.td_error = lr.td_error;
  return d;
}

void Trainer::decay_lr() { lr_ = std::max(cfg_.lr_min, lr_ * cfg_.lr_decay); }

// ---------------------------------------------------------------------------

RrsGeometry resolve_geometry(const AppConfig& cfg) {
  if (!cfg.train.optimize_geometry) return cfg.rrs;
  OrientationGrid grid;
  grid.height = cfg.rrs.mid_height();
  return optimize_design(cfg.rrs, grid, kOmegaSigmaThreshold, {}, 0).geometry;
}

namespace {

void write_trace(std::ostream& os, double t, const StateVector& s, int action,
                 const StepOutcome& o) {
  const auto arr = s.as_array();
  json j = {{"t", t},
            {"state", std::vector<double>(arr.begin(), arr.end())},
            {"action", action},
            {"reward", o.reward},
            {"violation", o.events.violation},
            {"insertion", o.events.insertion},
            {"duplicate", o.events.duplicate},
            {"singular", o.singular},
            {"terminal", o.terminal}};
  os << j.dump() << '\n';
}

}  // namespace

TrainResult run_training(const AppConfig& cfg, const TrainOptions& options) {
  TrainResult result;
  result.geometry = options.rrs_override ? *options.rrs_override : resolve_geometry(cfg);
  Env env(cfg.delta, result.geometry, cfg.task);
  Trainer trainer(cfg.train, cfg.train.seed);
  result.net_config = trainer.net().config();

  std::ofstream episodes_out;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    episodes_out.open(options.out_dir / "episodes.jsonl", std::ios::binary | std::ios::trunc);
  }

  const std::int64_t total = cfg.train.total_steps;
  std::int64_t step = 0;
  std::deque<bool> recent;
  int episode = 0;
  while (step < total) {
    env.reset(episode_seed(cfg.train.seed, static_cast<std::uint64_t>(episode)));
    Observation obs = env.normalized();
    ActionMask mask = env.valid_actions();
    EpisodeRecord rec;
    rec.episode = episode;
    rec.stage = env.stage();
    double loss_sum = 0.0, q_sum = 0.0;
    int updates = 0;
    bool finished = false;

    while (step < total) {
      const double t_now = env.time();
      const int a = trainer.act(obs, mask, step);
      const StepOutcome out = env.step(a);
      ++step;
      if (options.trace) write_trace(*options.trace, t_now, out.state, a, out);

      rec.reward += out.reward;
      rec.violations += out.events.violation ? 1 : 0;
      rec.success = rec.success || out.events.insertion;

      const Observation next = env.normalized();
      const ActionMask next_mask = env.valid_actions();
      RawTransition raw;
      raw.state = obs;
      raw.action = a;
      raw.reward = out.reward;
      raw.next_state = next;
      raw.next_mask = next_mask;
      raw.done = out.terminal;
      trainer.observe(raw);
      if (out.terminal) trainer.end_episode();

      if (trainer.ready()) {
        const TrainDiagnostics d = trainer.train_step(step);
        loss_sum += d.loss;
        q_sum += d.mean_max_q;
        ++updates;
      }
      if (!options.out_dir.empty() && cfg.train.checkpoint_every > 0 &&
          step % cfg.train.checkpoint_every == 0) {
        save_checkpoint(options.out_dir / ("checkpoint_" + std::to_string(step) + ".bin"),
                        trainer.net(), trainer.online());
      }

      obs = next;
      mask = next_mask;
      if (out.terminal) {
        rec.singular = out.singular;
        rec.dead_end = out.dead_end;
        rec.completed = out.completed;
        rec.holes = out.holes_filled;
        finished = true;
        break;
      }
    }
    if (!finished) break;  // budget ran out mid-episode

    rec.end_step = step;
    rec.steps = env.steps();
    rec.duration_s = env.time();
    rec.loss = updates ? loss_sum / updates : 0.0;
    rec.max_q = updates ? q_sum / updates : 0.0;
    rec.lr = trainer.lr();
    rec.noise_mag = trainer.noise_magnitude();
    rec.epsilon = trainer.epsilon(step);
    result.episodes.push_back(rec);
    if (episodes_out) episodes_out << episode_to_json(rec) << '\n';
    if (options.on_episode) options.on_episode(rec);

    recent.push_back(rec.success);
    if (static_cast<int>(recent.size()) > cfg.task.curriculum_window) recent.pop_front();
    env.set_stage(curriculum_update(recent, env.stage(), cfg.task.curriculum_window,
                                    cfg.task.curriculum_threshold));
    trainer.decay_lr();
    ++episode;
  }

  result.steps = step;
  result.final_stage = env.stage();
  result.params = trainer.online();
  if (!options.out_dir.empty())
    save_checkpoint(options.out_dir / "checkpoint.bin", trainer.net(), trainer.online());
  return result;
}

}  // namespace pih

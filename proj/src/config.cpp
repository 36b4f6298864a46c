#include "pih/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace pih {

using nlohmann::json;

namespace {

int line_at(const std::string& text, std::size_t pos) {
  int line = 1;
  for (std::size_t i = 0; i < pos && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

// Position of `"key"` used as an object key at or after `from`.
std::size_t find_key(const std::string& text, const std::string& key, std::size_t from) {
  const std::string quoted = "\"" + key + "\"";
  for (std::size_t p = text.find(quoted, from); p != std::string::npos;
       p = text.find(quoted, p + 1)) {
    std::size_t q = p + quoted.size();
    while (q < text.size() && std::isspace(static_cast<unsigned char>(text[q]))) ++q;
    if (q < text.size() && text[q] == ':') return p;
  }
  return std::string::npos;
}

int key_line(const std::string& text, const std::string& section, const std::string& key) {
  std::size_t from = 0;
  if (!section.empty()) {
    from = find_key(text, section, 0);
    if (from == std::string::npos) return 0;
  }
  const std::size_t p = find_key(text, key, from);
  return p == std::string::npos ? 0 : line_at(text, p);
}

[[noreturn]] void fail_at(const std::string& text, const std::string& section,
                          const std::string& key, const std::string& what) {
  const int line = key_line(text, section, key);
  std::ostringstream os;
  os << "config";
  if (line > 0) os << " line " << line;
  os << ": ";
  if (!section.empty()) os << section << ".";
  os << key << ": " << what;
  throw ConfigError(os.str());
}

// Reads the keys of one section, rejecting anything not registered.
class SectionReader {
 public:
  SectionReader(const std::string& text, const json& root, std::string name)
      : text_(text), name_(std::move(name)) {
    if (root.contains(name_)) {
      obj_ = &root.at(name_);
      if (!obj_->is_object()) fail_at(text_, "", name_, "expected an object");
    }
  }

  template <typename T>
  void number(const char* key, T& out) {
    known_.push_back(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    if (!v.is_number()) fail_at(text_, name_, key, "expected a number");
    if constexpr (std::is_integral_v<T>) {
      const double d = v.get<double>();
      if (v.is_number_float() && std::floor(d) != d)
        fail_at(text_, name_, key, "expected an integer");
      out = v.is_number_float() ? static_cast<T>(d) : v.get<T>();
    } else {
      out = v.get<T>();
    }
  }

  void boolean(const char* key, bool& out) {
    known_.push_back(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    if (!v.is_boolean()) fail_at(text_, name_, key, "expected true or false");
    out = v.get<bool>();
  }

  void string(const char* key, std::string& out) {
    known_.push_back(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    if (!v.is_string()) fail_at(text_, name_, key, "expected a string");
    out = v.get<std::string>();
  }

  const json* raw(const char* key) {
    known_.push_back(key);
    if (!obj_ || !obj_->contains(key)) return nullptr;
    return &obj_->at(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    fail_at(text_, name_, key, what);
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items()) {
      bool ok = false;
      for (const auto& name : known_) ok = ok || name == k;
      if (!ok) fail_at(text_, name_, k, "unknown key");
    }
  }

 private:
  const std::string& text_;
  std::string name_;
  const json* obj_ = nullptr;
  std::vector<std::string> known_;
};

const char* loss_name(LossKind k) { return k == LossKind::kHuber ? "huber" : "cross_entropy"; }

json holes_json(const std::vector<HoleSpec>& holes) {
  if (holes.empty()) return "default";
  json arr = json::array();
  for (const auto& h : holes)
    arr.push_back({{"colatitude_deg", h.colatitude_deg},
                   {"azimuth_deg", h.azimuth_deg},
                   {"stage", h.stage}});
  return arr;
}

}  // namespace

void AblationFlags::disable(const std::string& name) {
  if (name == "double") double_q = false;
  else if (name == "dueling") dueling = false;
  else if (name == "per") per = false;
  else if (name == "nstep") nstep = false;
  else if (name == "noisy") noisy = false;
  else if (name == "distributional") distributional = false;
  else if (name == "all" || name == "vanilla") *this = vanilla();
  else throw ConfigError("unknown ablation flag '" + name + "'");
}

std::string AblationFlags::describe() const {
  if (*this == AblationFlags{}) return "rainbow";
  if (*this == vanilla()) return "vanilla";
  std::string s;
  auto add = [&](bool on, const char* n) {
    if (!on) s += std::string(s.empty() ? "-" : ",-") + n;
  };
  add(double_q, "double");
  add(dueling, "dueling");
  add(per, "per");
  add(nstep, "nstep");
  add(noisy, "noisy");
  add(distributional, "distributional");
  return s;
}

NetConfig TrainConfig::net_config() const {
  NetConfig nc;
  if (hidden.size() != 3) throw ConfigError("train.hidden must list three layer sizes");
  nc.hidden = {hidden[0], hidden[1], hidden[2]};
  nc.atoms = atoms;
  nc.v_min = v_min;
  nc.v_max = v_max;
  nc.dueling = flags.dueling;
  nc.noisy = flags.noisy;
  nc.distributional = flags.distributional;
  return nc;
}

AppConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config line " + std::to_string(line_at(text, e.byte > 0 ? e.byte - 1 : 0)) +
                      ": malformed JSON");
  }
  if (!root.is_object()) throw ConfigError("config line 1: top level must be an object");
  for (const auto& [k, v] : root.items()) {
    if (k != "delta" && k != "rrs" && k != "task" && k != "train" && k != "eval")
      fail_at(text, "", k, "unknown section");
  }

  AppConfig cfg;
  {
    SectionReader r(text, root, "delta");
    r.number("active_rod_len", cfg.delta.active_rod_len);
    r.number("passive_rod_len", cfg.delta.passive_rod_len);
    r.number("base_radius", cfg.delta.base_radius);
    r.number("platform_radius", cfg.delta.platform_radius);
    r.number("pin_length", cfg.delta.pin_length);
    r.finish();
  }
  {
    SectionReader r(text, root, "rrs");
    r.number("base_radius", cfg.rrs.base_radius);
    r.number("platform_radius", cfg.rrs.platform_radius);
    r.number("proximal_len", cfg.rrs.proximal_len);
    r.number("distal_len", cfg.rrs.distal_len);
    r.number("h_min", cfg.rrs.h_min);
    r.number("h_max", cfg.rrs.h_max);
    r.finish();
  }
  {
    SectionReader r(text, root, "task");
    TaskConfig& t = cfg.task;
    r.number("dome_radius", t.dome_radius);
    if (const json* h = r.raw("holes")) {
      if (h->is_string()) {
        const auto s = h->get<std::string>();
        if (s == "default") t.holes.clear();
        else if (s == "smoke") t.holes = TaskConfig::smoke_holes();
        else r.fail("holes", "expected \"default\", \"smoke\" or a list");
      } else if (h->is_array()) {
        t.holes.clear();
        for (const auto& e : *h) {
          if (!e.is_object()) r.fail("holes", "each hole must be an object");
          HoleSpec spec;
          for (const auto& [k, v] : e.items()) {
            if (!v.is_number()) r.fail(k, "expected a number");
            if (k == "colatitude_deg") spec.colatitude_deg = v.get<double>();
            else if (k == "azimuth_deg") spec.azimuth_deg = v.get<double>();
            else if (k == "stage") spec.stage = v.get<int>();
            else r.fail(k, "unknown key");
          }
          t.holes.push_back(spec);
        }
      } else {
        r.fail("holes", "expected \"default\", \"smoke\" or a list");
      }
    }
    r.number("hole_radius", t.hole_radius);
    r.number("insert_position_tol", t.insert_position_tol);
    r.number("insert_angle_tol_deg", t.insert_angle_tol_deg);
    r.number("pos_step", t.pos_step);
    r.number("rot_step", t.rot_step);
    r.number("dt", t.dt);
    r.number("max_steps", t.max_steps);
    r.number("task_time", t.task_time);
    r.number("mount_clearance", t.mount_clearance);
    r.number("reset_radius", t.reset_radius);
    r.number("reset_height_min", t.reset_height_min);
    r.number("reset_height_max", t.reset_height_max);
    r.number("singular_sigma", t.singular_sigma);
    r.number("curriculum_window", t.curriculum_window);
    r.number("curriculum_threshold", t.curriculum_threshold);
    r.number("initial_stage", t.initial_stage);
    r.finish();
  }
  {
    SectionReader r(text, root, "train");
    TrainConfig& t = cfg.train;
    r.number("lr", t.lr);
    r.number("lr_decay", t.lr_decay);
    r.number("lr_min", t.lr_min);
    r.number("weight_decay", t.weight_decay);
    r.number("grad_clip", t.grad_clip);
    r.number("gamma", t.gamma);
    r.number("n_step", t.n_step);
    r.number("batch", t.batch);
    r.number("tau", t.tau);
    r.number("atoms", t.atoms);
    r.number("v_min", t.v_min);
    r.number("v_max", t.v_max);
    if (const json* h = r.raw("hidden")) {
      if (!h->is_array()) r.fail("hidden", "expected a list of three integers");
      t.hidden.clear();
      for (const auto& e : *h) {
        if (!e.is_number_integer()) r.fail("hidden", "expected a list of three integers");
        t.hidden.push_back(e.get<int>());
      }
    }
    r.number("total_steps", t.total_steps);
    r.number("buffer_capacity", t.buffer_capacity);
    r.number("alpha", t.alpha);
    r.number("beta_start", t.beta_start);
    r.number("beta_end", t.beta_end);
    r.number("eps_per", t.eps_per);
    r.number("warmup", t.warmup);
    r.number("epsilon_start", t.epsilon_start);
    r.number("epsilon_end", t.epsilon_end);
    r.number("epsilon_decay_steps", t.epsilon_decay_steps);
    std::string loss = loss_name(t.loss);
    r.string("loss", loss);
    if (loss == "huber") t.loss = LossKind::kHuber;
    else if (loss == "cross_entropy") t.loss = LossKind::kCrossEntropy;
    else r.fail("loss", "expected \"huber\" or \"cross_entropy\"");
    r.number("checkpoint_every", t.checkpoint_every);
    r.boolean("optimize_geometry", t.optimize_geometry);
    r.number("seed", t.seed);
    if (const json* f = r.raw("flags")) {
      if (!f->is_object()) r.fail("flags", "expected an object");
      for (const auto& [k, v] : f->items()) {
        if (!v.is_boolean()) r.fail(k, "expected true or false");
        const bool on = v.get<bool>();
        if (k == "double") t.flags.double_q = on;
        else if (k == "dueling") t.flags.dueling = on;
        else if (k == "per") t.flags.per = on;
        else if (k == "nstep") t.flags.nstep = on;
        else if (k == "noisy") t.flags.noisy = on;
        else if (k == "distributional") t.flags.distributional = on;
        else r.fail(k, "unknown ablation flag");
      }
    }
    r.finish();
  }
  {
    SectionReader r(text, root, "eval");
    r.number("episodes", cfg.eval.episodes);
    r.number("seeds", cfg.eval.seeds);
    r.number("noise_sigma", cfg.eval.noise_sigma);
    r.string("policy", cfg.eval.policy);
    r.number("ablation_eval_episodes", cfg.eval.ablation_eval_episodes);
    r.finish();
  }
  validate_config(cfg);
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const AppConfig& cfg) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  require(cfg.delta.valid(), "delta geometry is invalid");
  require(cfg.rrs.valid(), "rrs geometry is invalid");
  const TaskConfig& t = cfg.task;
  require(t.dome_radius > 0 && t.hole_radius > 0, "task radii must be positive");
  require(t.pos_step > 0 && t.rot_step > 0 && t.dt > 0, "task steps must be positive");
  require(t.max_steps > 0 && t.task_time > 0, "task.max_steps and task.task_time must be positive");
  require(t.reset_height_min <= t.reset_height_max, "task reset heights are reversed");
  require(t.curriculum_window >= 1, "task.curriculum_window must be >= 1");
  for (const auto& h : t.holes) require(h.stage == 0 || h.stage == 1, "hole stage must be 0 or 1");
  const TrainConfig& tr = cfg.train;
  require(tr.lr > 0 && tr.lr_min > 0 && tr.lr_decay > 0 && tr.lr_decay <= 1, "train learning-rate fields");
  require(tr.weight_decay >= 0 && tr.grad_clip > 0, "train.weight_decay / grad_clip");
  require(tr.gamma >= 0 && tr.gamma <= 1, "train.gamma must lie in [0, 1]");
  require(tr.n_step >= 1 && tr.batch >= 1, "train.n_step and train.batch must be >= 1");
  require(tr.tau >= 0 && tr.tau <= 1, "train.tau must lie in [0, 1]");
  require(tr.atoms >= 2 && tr.v_max > tr.v_min, "train support");
  require(tr.hidden.size() == 3, "train.hidden must list three layer sizes");
  for (int h : tr.hidden) require(h >= 1, "train.hidden sizes must be positive");
  require(tr.total_steps >= 0 && tr.buffer_capacity >= 1 && tr.warmup >= 0, "train budgets");
  require(tr.alpha >= 0 && tr.beta_start >= 0 && tr.beta_end >= 0 && tr.eps_per > 0, "train PER fields");
  require(tr.checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
  require(cfg.eval.episodes >= 1 && cfg.eval.seeds >= 1, "eval.episodes and eval.seeds must be >= 1");
  require(cfg.eval.noise_sigma >= 0, "eval.noise_sigma must be >= 0");
  const auto& p = cfg.eval.policy;
  require(p == "checkpoint" || p == "planner" || p == "random" || p == "violating",
          "eval.policy must be checkpoint, planner, random or violating");
}

std::string serialize_config(const AppConfig& cfg) {
  json j;
  j["delta"] = {{"active_rod_len", cfg.delta.active_rod_len},
                {"passive_rod_len", cfg.delta.passive_rod_len},
                {"base_radius", cfg.delta.base_radius},
                {"platform_radius", cfg.delta.platform_radius},
                {"pin_length", cfg.delta.pin_length}};
  j["rrs"] = {{"base_radius", cfg.rrs.base_radius},   {"platform_radius", cfg.rrs.platform_radius},
              {"proximal_len", cfg.rrs.proximal_len}, {"distal_len", cfg.rrs.distal_len},
              {"h_min", cfg.rrs.h_min},               {"h_max", cfg.rrs.h_max}};
  const TaskConfig& t = cfg.task;
  j["task"] = {{"dome_radius", t.dome_radius},
               {"holes", holes_json(t.holes)},
               {"hole_radius", t.hole_radius},
               {"insert_position_tol", t.insert_position_tol},
               {"insert_angle_tol_deg", t.insert_angle_tol_deg},
               {"pos_step", t.pos_step},
               {"rot_step", t.rot_step},
               {"dt", t.dt},
               {"max_steps", t.max_steps},
               {"task_time", t.task_time},
               {"mount_clearance", t.mount_clearance},
               {"reset_radius", t.reset_radius},
               {"reset_height_min", t.reset_height_min},
               {"reset_height_max", t.reset_height_max},
               {"singular_sigma", t.singular_sigma},
               {"curriculum_window", t.curriculum_window},
               {"curriculum_threshold", t.curriculum_threshold},
               {"initial_stage", t.initial_stage}};
  const TrainConfig& tr = cfg.train;
  j["train"] = {{"lr", tr.lr},
                {"lr_decay", tr.lr_decay},
                {"lr_min", tr.lr_min},
                {"weight_decay", tr.weight_decay},
                {"grad_clip", tr.grad_clip},
                {"gamma", tr.gamma},
                {"n_step", tr.n_step},
                {"batch", tr.batch},
                {"tau", tr.tau},
                {"atoms", tr.atoms},
                {"v_min", tr.v_min},
                {"v_max", tr.v_max},
                {"hidden", tr.hidden},
                {"total_steps", tr.total_steps},
                {"buffer_capacity", tr.buffer_capacity},
                {"alpha", tr.alpha},
                {"beta_start", tr.beta_start},
                {"beta_end", tr.beta_end},
                {"eps_per", tr.eps_per},
                {"warmup", tr.warmup},
                {"epsilon_start", tr.epsilon_start},
                {"epsilon_end", tr.epsilon_end},
                {"epsilon_decay_steps", tr.epsilon_decay_steps},
                {"loss", loss_name(tr.loss)},
                {"checkpoint_every", tr.checkpoint_every},
                {"optimize_geometry", tr.optimize_geometry},
                {"seed", tr.seed},
                {"flags",
                 {{"double", tr.flags.double_q},
                  {"dueling", tr.flags.dueling},
                  {"per", tr.flags.per},
                  {"nstep", tr.flags.nstep},
                  {"noisy", tr.flags.noisy},
                  {"distributional", tr.flags.distributional}}}};
  j["eval"] = {{"episodes", cfg.eval.episodes},
               {"seeds", cfg.eval.seeds},
               {"noise_sigma", cfg.eval.noise_sigma},
               {"policy", cfg.eval.policy},
               {"ablation_eval_episodes", cfg.eval.ablation_eval_episodes}};
  return j.dump(2) + "\n";
}

std::string config_hash(const AppConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pih

#include "aco/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "aco/common.hpp"

namespace aco {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
  bool in_digest;
};

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail("config_invalid", "key " + key + ": bad float '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int d = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail("config_invalid", "key " + key + ": bad int '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config_invalid", "key " + key + ": bad bool '" + v + "'");
}

#define F_DOUBLE(key, member, dig)                                        \
  {key, [](const Config& c) { return fmt_double(c.member); },             \
   [](Config& c, const std::string& v) { c.member = parse_double(key, v); }, dig}
#define F_INT(key, member, dig)                                           \
  {key, [](const Config& c) { return std::to_string(c.member); },         \
   [](Config& c, const std::string& v) { c.member = parse_int(key, v); }, dig}
#define F_BOOL(key, member, dig)                                          \
  {key, [](const Config& c) { return c.member ? "true" : "false"; },      \
   [](Config& c, const std::string& v) { c.member = parse_bool(key, v); }, dig}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      F_INT("data.height", data_height, true),
      F_INT("data.width", data_width, true),
      F_INT("data.episodes", data_episodes, true),
      F_INT("data.episode_length", data_episode_length, true),
      F_DOUBLE("data.kappa_max", data_kappa_max, true),
      F_INT("data.min_segment", data_min_segment, true),
      F_INT("data.max_segment", data_max_segment, true),
      F_DOUBLE("data.train_fraction", data_train_fraction, true),
      F_DOUBLE("data.speed", data_speed, true),
      F_INT("flow.block", flow_block, true),
      F_INT("flow.search_radius", flow_search_radius, true),
      F_DOUBLE("inv.lr", inv_lr, true),
      F_DOUBLE("inv.wd", inv_wd, true),
      F_INT("inv.epochs", inv_epochs, true),
      F_INT("inv.batch", inv_batch, true),
      F_INT("inv.hidden", inv_hidden, true),
      F_DOUBLE("aco.tau", aco_tau, true),
      F_DOUBLE("aco.epsilon", aco_epsilon, true),
      F_DOUBLE("aco.alpha", aco_alpha, true),
      F_DOUBLE("aco.lambda_ins", aco_lambda_ins, true),
      F_DOUBLE("aco.lambda_act", aco_lambda_act, true),
      F_INT("aco.d_e", aco_d_e, true),
      F_INT("aco.d_p", aco_d_p, true),
      F_INT("aco.proj_hidden", aco_proj_hidden, true),
      F_INT("aco.capacity", aco_capacity, true),
      F_INT("aco.sample_n", aco_sample_n, true),
      F_INT("aco.batch", aco_batch, true),
      F_DOUBLE("aco.lr", aco_lr, true),
      F_DOUBLE("aco.wd", aco_wd, true),
      F_INT("aco.epochs", aco_epochs, true),
      {"aco.loss_form",
       [](const Config& c) {
         return std::string(c.aco_loss_form == LossForm::as_written ? "as_written"
                                                                    : "infonce");
       },
       [](Config& c, const std::string& v) {
         if (v == "as_written")
           c.aco_loss_form = LossForm::as_written;
         else if (v == "infonce")
           c.aco_loss_form = LossForm::infonce;
         else
           fail("config_invalid", "aco.loss_form: '" + v + "'");
       },
       true},
      F_BOOL("aco.use_ground_truth_actions", aco_use_ground_truth_actions, true),
      F_BOOL("aco.enable_crop_flip", aco_enable_crop_flip, true),
      F_DOUBLE("aug.gray_prob", aug_gray_prob, true),
      F_DOUBLE("aug.jitter_scale", aug_jitter_scale, true),
      F_DOUBLE("aug.jitter_shift", aug_jitter_shift, true),
      F_DOUBLE("aug.blur_prob", aug_blur_prob, true),
      F_DOUBLE("aug.blur_sigma_min", aug_blur_sigma_min, true),
      F_DOUBLE("aug.blur_sigma_max", aug_blur_sigma_max, true),
      F_DOUBLE("bc.lr", bc_lr, false),
      F_DOUBLE("bc.wd", bc_wd, false),
      F_INT("bc.epochs", bc_epochs, false),
      F_INT("bc.batch", bc_batch, false),
      F_BOOL("bc.freeze_encoder", bc_freeze_encoder, false),
      F_INT("bc.use_standardizer", bc_use_standardizer, false),
      F_DOUBLE("bc.success_budget", bc_success_budget, false),
      F_DOUBLE("probe.lr", probe_lr, false),
      F_INT("probe.epochs", probe_epochs, false),
      F_INT("probe.batch", probe_batch, false),
      F_INT("embed.knn", embed_knn, false),
  };
  return f;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields())
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  fail("config_unknown_key", "unknown config key '" + key + "'");
}

std::string Config::render() const {
  std::ostringstream os;
  for (const Field& f : fields()) os << f.key << " = " << f.get(*this) << "\n";
  return os.str();
}

uint64_t Config::pipeline_digest() const {
  // FNV-1a over the canonical rendering of pipeline-critical keys
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const Field& f : fields())
    if (f.in_digest) {
      mix(f.key);
      mix("=");
      mix(f.get(*this));
      mix("\n");
    }
  return h;
}

void Config::validate() const {
  auto req = [](bool ok, const std::string& what) {
    if (!ok) fail("config_invalid", what);
  };
  req(data_height > 0 && data_width > 0, "frame dims must be positive");
  req(data_height % flow_block == 0 && data_width % flow_block == 0,
      "frame dims must be divisible by flow.block");
  req(data_episodes >= 2, "data.episodes must be >= 2");
  req(data_episode_length >= 2, "data.episode_length must be >= 2");
  req(data_kappa_max > 0, "data.kappa_max must be > 0");
  req(data_min_segment >= 1 && data_max_segment >= data_min_segment,
      "bad curvature segment bounds");
  req(data_train_fraction > 0 && data_train_fraction < 1,
      "data.train_fraction must be in (0,1)");
  req(aco_tau > 0, "aco.tau must be > 0");
  req(aco_epsilon > 0, "aco.epsilon must be > 0");
  req(aco_alpha >= 0 && aco_alpha < 1, "aco.alpha must be in [0,1)");
  req(aco_lambda_ins >= 0 && aco_lambda_act >= 0, "loss weights must be >= 0");
  req(aco_sample_n >= 1, "aco.sample_n must be >= 1");
  req(aco_capacity >= aco_sample_n, "aco.capacity must be >= aco.sample_n");
  req(aco_batch >= 1, "aco.batch must be >= 1");
  req(aco_d_e >= 1 && aco_d_p >= 1 && aco_proj_hidden >= 1, "bad net dims");
  req(flow_block >= 1 && flow_search_radius >= 1, "bad flow params");
  req(bc_use_standardizer >= -1 && bc_use_standardizer <= 1,
      "bc.use_standardizer must be -1, 0 or 1");
}

void Config::apply_paper_scale() {
  aco_batch = 256;
  aco_capacity = 40960;
  aco_epochs = 100;
  aco_lr = 0.03;
  aco_wd = 0.0001;
  aco_sample_n = 4096;
  inv_epochs = 50;
  inv_batch = 256;
  bc_epochs = 100;
  bc_batch = 128;
}

Config Config::parse_text(const std::string& text) {
  Config c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto strip = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail("config_invalid", "line " + std::to_string(lineno) + ": missing '='");
    c.set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("missing_input", "cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str());
}

}  // namespace aco

#include "aren/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aren/tensor.hpp"

namespace aren {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_i64(const std::string& v, int64_t& out) {
  const char* b = v.data();
  const char* e = b + v.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && !v.empty();
}

bool parse_u64(const std::string& v, uint64_t& out) {
  const char* b = v.data();
  const char* e = b + v.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && !v.empty();
}

bool parse_f64(const std::string& v, double& out) {
  if (v.empty()) return false;
  char* end = nullptr;
  out = std::strtod(v.c_str(), &end);
  return end == v.c_str() + v.size();
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "on") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "off") {
    out = false;
    return true;
  }
  return false;
}

std::string fmt_f64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct KvTarget {
  RunConfig* cfg;
  TrainState* state;
  bool* has_state;
};

// Applies one section.key=value; returns false when the key is unknown or the
// value does not parse. `err` gets the reason.
bool apply_kv(const KvTarget& t, const std::string& section, const std::string& key,
              const std::string& value, std::string& err) {
  RunConfig& c = *t.cfg;
  auto i64 = [&](int64_t& f) {
    if (!parse_i64(value, f)) {
      err = "expected integer, got '" + value + "'";
      return false;
    }
    return true;
  };
  auto u64 = [&](uint64_t& f) {
    if (!parse_u64(value, f)) {
      err = "expected unsigned integer, got '" + value + "'";
      return false;
    }
    return true;
  };
  auto f64 = [&](double& f) {
    if (!parse_f64(value, f)) {
      err = "expected number, got '" + value + "'";
      return false;
    }
    return true;
  };
  auto bol = [&](bool& f) {
    if (!parse_bool(value, f)) {
      err = "expected true/false, got '" + value + "'";
      return false;
    }
    return true;
  };

  if (section == "model") {
    if (key == "levels") return i64(c.levels);
    if (key == "attention") return bol(c.attention);
    if (key == "width") return i64(c.width);
    if (key == "latent_dim") return i64(c.latent_dim);
    if (key == "codebook_size") return i64(c.codebook_size);
    if (key == "attention_max_pixels") return i64(c.attention_max_pixels);
    if (key == "mask_input") return bol(c.mask_input);
  } else if (section == "data") {
    if (key == "dir") {
      c.data_dir = value;
      return true;
    }
    if (key == "resolution") return i64(c.resolution);
    if (key == "split") return f64(c.split);
    if (key == "seed") return u64(c.seed);
  } else if (section == "train") {
    if (key == "epochs") return i64(c.epochs);
    if (key == "batch_size") return i64(c.batch_size);
    if (key == "lr") return f64(c.lr);
    if (key == "beta") return f64(c.beta);
    if (key == "adv_weight") return f64(c.adv_weight);
  } else if (section == "task") {
    if (key == "kind") {
      c.task = value;
      return true;
    }
    if (key == "mask_fraction") return f64(c.mask_fraction);
    if (key == "noise_sigma") return f64(c.noise_sigma);
    if (key == "blur_sigma_x") return f64(c.blur_sigma_x);
    if (key == "blur_sigma_y") return f64(c.blur_sigma_y);
    if (key == "blur_kx") return i64(c.blur_kx);
    if (key == "blur_ky") return i64(c.blur_ky);
  } else if (section == "output") {
    if (key == "dir") {
      c.output_dir = value;
      return true;
    }
  } else if (section == "state" && t.state != nullptr) {
    *t.has_state = true;
    TrainState& s = *t.state;
    if (key == "rng") return u64(s.rng_state);
    if (key == "epoch") return i64(s.epoch);
    if (key == "gen_steps") return i64(s.gen_steps);
    if (key == "disc_steps") return i64(s.disc_steps);
    if (key == "sigma_data") return f64(s.sigma_data);
  } else {
    err = "unknown section [" + section + "]";
    return false;
  }
  err = "unknown key '" + key + "' in [" + section + "]";
  return false;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.resolution = resolution;
  m.input_channels = (mask_input || task == "mask") ? 4 : 3;
  m.levels = levels;
  m.attention = attention;
  m.width = width;
  m.latent_dim = latent_dim;
  m.codebook_size = codebook_size;
  m.attention_max_pixels = attention_max_pixels;
  return m;
}

DegradeSpec RunConfig::degrade_spec(uint64_t degrade_seed) const {
  DegradeSpec d;
  if (task == "mask")
    d.kind = DegradeKind::Mask;
  else if (task == "noise")
    d.kind = DegradeKind::Noise;
  else if (task == "blur")
    d.kind = DegradeKind::Blur;
  else
    throw ContractError("task '" + task + "' has no degradation");
  d.mask_fraction = mask_fraction;
  d.noise_sigma_frac = noise_sigma;
  d.blur_sigma_x = blur_sigma_x;
  d.blur_sigma_y = blur_sigma_y;
  d.blur_kx = blur_kx;
  d.blur_ky = blur_ky;
  d.seed = degrade_seed;
  return d;
}

ConfigParse parse_config_text(const std::string& text) {
  ConfigParse out;
  KvTarget target{&out.cfg, &out.state, &out.has_state};
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) {
        out.errors.push_back("line " + std::to_string(line_no) + ": malformed section header '" + s + "'");
        continue;
      }
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos) {
      out.errors.push_back("line " + std::to_string(line_no) + ": expected key = value, got '" + s + "'");
      continue;
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (section.empty()) {
      out.errors.push_back("line " + std::to_string(line_no) + ": key '" + key + "' before any [section]");
      continue;
    }
    std::string err;
    if (!apply_kv(target, section, key, value, err))
      out.errors.push_back("line " + std::to_string(line_no) + ": " + section + "." + key + ": " + err);
  }
  return out;
}

ConfigParse parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value,
                    std::vector<std::string>& errors) {
  size_t dot = dotted_key.find('.');
  if (dot == std::string::npos) {
    errors.push_back("override '" + dotted_key + "': expected section.key");
    return;
  }
  KvTarget target{&cfg, nullptr, nullptr};
  std::string err;
  if (!apply_kv(target, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value, err))
    errors.push_back("override '" + dotted_key + "': " + err);
}

std::vector<std::string> validate_config(const RunConfig& cfg, bool need_data) {
  std::vector<std::string> errs;
  auto bad = [&](const std::string& m) { errs.push_back(m); };

  if (cfg.levels < 1 || cfg.levels > 3) bad("model.levels must be in [1,3]");
  if (cfg.width < 1) bad("model.width must be >= 1");
  if (cfg.latent_dim < 1) bad("model.latent_dim must be >= 1");
  if (cfg.codebook_size < 2) bad("model.codebook_size must be >= 2");
  if (cfg.attention_max_pixels < 1) bad("model.attention_max_pixels must be >= 1");

  if (cfg.resolution < 8)
    bad("data.resolution must be >= 8");
  else if (cfg.levels >= 1 && cfg.levels <= 3) {
    try {
      cfg.model_config().validate();
    } catch (const ContractError& e) {
      bad(e.what());
    }
  }
  if (!(cfg.split > 0.0 && cfg.split < 1.0)) bad("data.split must be in (0,1)");
  if (need_data && cfg.data_dir.empty()) bad("data.dir is required");

  if (cfg.epochs < 1) bad("train.epochs must be >= 1");
  if (cfg.batch_size < 1) bad("train.batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) bad("train.lr must be > 0");
  if (cfg.beta < 0.0) bad("train.beta must be >= 0");
  if (cfg.adv_weight < 0.0) bad("train.adv_weight must be >= 0");

  if (cfg.task != "none" && cfg.task != "mask" && cfg.task != "noise" && cfg.task != "blur")
    bad("task.kind must be one of none|mask|noise|blur");
  else if (cfg.task != "none") {
    try {
      cfg.degrade_spec(0).validate();
    } catch (const ContractError& e) {
      bad(e.what());
    }
  }

  if (cfg.output_dir.empty()) bad("output.dir must not be empty");
  return errs;
}

std::string serialize_config(const RunConfig& cfg, bool include_output) {
  std::ostringstream o;
  const bool mask_in = cfg.mask_input || cfg.task == "mask";
  o << "[model]\n";
  o << "levels = " << cfg.levels << "\n";
  o << "attention = " << (cfg.attention ? "true" : "false") << "\n";
  o << "width = " << cfg.width << "\n";
  o << "latent_dim = " << cfg.latent_dim << "\n";
  o << "codebook_size = " << cfg.codebook_size << "\n";
  o << "attention_max_pixels = " << cfg.attention_max_pixels << "\n";
  o << "mask_input = " << (mask_in ? "true" : "false") << "\n";
  o << "\n[data]\n";
  o << "dir = " << cfg.data_dir << "\n";
  o << "resolution = " << cfg.resolution << "\n";
  o << "split = " << fmt_f64(cfg.split) << "\n";
  o << "seed = " << cfg.seed << "\n";
  o << "\n[train]\n";
  o << "epochs = " << cfg.epochs << "\n";
  o << "batch_size = " << cfg.batch_size << "\n";
  o << "lr = " << fmt_f64(cfg.lr) << "\n";
  o << "beta = " << fmt_f64(cfg.beta) << "\n";
  o << "adv_weight = " << fmt_f64(cfg.adv_weight) << "\n";
  o << "\n[task]\n";
  o << "kind = " << cfg.task << "\n";
  o << "mask_fraction = " << fmt_f64(cfg.mask_fraction) << "\n";
  o << "noise_sigma = " << fmt_f64(cfg.noise_sigma) << "\n";
  o << "blur_sigma_x = " << fmt_f64(cfg.blur_sigma_x) << "\n";
  o << "blur_sigma_y = " << fmt_f64(cfg.blur_sigma_y) << "\n";
  o << "blur_kx = " << cfg.blur_kx << "\n";
  o << "blur_ky = " << cfg.blur_ky << "\n";
  if (include_output) {
    o << "\n[output]\n";
    o << "dir = " << cfg.output_dir << "\n";
  }
  return o.str();
}

std::string serialize_config_with_state(const RunConfig& cfg, const TrainState& state) {
  std::ostringstream o;
  o << serialize_config(cfg, /*include_output=*/false);
  o << "\n[state]\n";
  o << "rng = " << state.rng_state << "\n";
  o << "epoch = " << state.epoch << "\n";
  o << "gen_steps = " << state.gen_steps << "\n";
  o << "disc_steps = " << state.disc_steps << "\n";
  o << "sigma_data = " << fmt_f64(state.sigma_data) << "\n";
  return o.str();
}

}  // namespace aren

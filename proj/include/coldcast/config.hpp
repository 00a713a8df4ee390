#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "coldcast/experiments.hpp"
#include "coldcast/synthgen.hpp"

namespace coldcast {

// ---------------------------------------------------------------------------
// Run configuration: INI-style sections, every key optional, defaults match
// the published training setup. Precedence: defaults < config file < flags.
// Unknown sections or keys are rejected; the resolved document round-trips
// and its hash stamps every report.

struct RunConfig {
  // [data]
  std::string csv;
  bool include_mean_at = false;
  std::uint64_t split_seed = 42;
  int n_trials = 3;
  int n_cultivars = 6;
  std::vector<int> seasons = {8};
  int start_year = 2000;
  int label_period = 7;
  double label_noise_sd = 0.5;
  double perturb_scale = 0.1;
  std::uint64_t weather_seed = 1;
  std::uint64_t synth_seed = 1;
  FergusonParams base;

  // [model]
  std::string variant = "multih";
  std::string scale = "paper";  // paper | desk
  std::array<int, 3> fc_dims = {1024, 2048, 1024};
  int gru_hidden = 2048;
  int embed_dim = 12;

  // [train]
  double lr = 1e-3;
  int batch = 12;
  int epochs = 400;
  std::uint64_t train_seed = 0;
  std::string precision = "double";  // double | single
  int finetune_epochs = 400;
  double finetune_lr = 1e-3;

  // [ferguson_grid]
  FergusonGrid grid;

  // [experiment]
  std::vector<std::string> sizes = {"2", "5", "10", "20", "all"};
  std::vector<int> targets;  // empty = top seasons counts, up to 3
  int jobs = 1;
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key " + key + ": expected true/false, got '" + v + "'");
}

inline double parse_num(const std::string& v, const std::string& key) {
  char* end = nullptr;
  double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw UsageError("config key " + key + ": bad number '" + v + "'");
  }
  return d;
}

inline int parse_int(const std::string& v, const std::string& key) {
  double d = parse_num(v, key);
  if (d != double(long(d))) throw UsageError("config key " + key + ": expected integer");
  return int(d);
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  double d = parse_num(v, key);
  if (d < 0 || d != double(std::uint64_t(d))) {
    throw UsageError("config key " + key + ": expected non-negative integer");
  }
  return std::uint64_t(d);
}

inline std::vector<std::string> split_tokens(const std::string& v) {
  std::string cleaned = v;
  for (char& c : cleaned) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(cleaned);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  for (const auto& tok : split_tokens(v)) out.push_back(parse_int(tok, key));
  return out;
}

}  // namespace detail

/// Applies one `section.key = value` setting. Throws UsageError for unknown
/// keys or malformed values.
inline void apply_config_entry(RunConfig& cfg, const std::string& section,
                               const std::string& key, const std::string& value) {
  using namespace detail;
  const std::string qual = section + "." + key;

  if (section == "data") {
    if (key == "csv") cfg.csv = value;
    else if (key == "include_mean_at") cfg.include_mean_at = parse_bool(value, qual);
    else if (key == "split_seed") cfg.split_seed = parse_u64(value, qual);
    else if (key == "n_trials") cfg.n_trials = parse_int(value, qual);
    else if (key == "n_cultivars") cfg.n_cultivars = parse_int(value, qual);
    else if (key == "seasons") cfg.seasons = parse_int_list(value, qual);
    else if (key == "start_year") cfg.start_year = parse_int(value, qual);
    else if (key == "label_period") cfg.label_period = parse_int(value, qual);
    else if (key == "label_noise_sd") cfg.label_noise_sd = parse_num(value, qual);
    else if (key == "perturb_scale") cfg.perturb_scale = parse_num(value, qual);
    else if (key == "weather_seed") cfg.weather_seed = parse_u64(value, qual);
    else if (key == "synth_seed") cfg.synth_seed = parse_u64(value, qual);
    else if (key == "base_t_th") cfg.base.t_th = parse_num(value, qual);
    else if (key == "base_k_a_endo") cfg.base.k_a_endo = parse_num(value, qual);
    else if (key == "base_k_a_eco") cfg.base.k_a_eco = parse_num(value, qual);
    else if (key == "base_k_d_endo") cfg.base.k_d_endo = parse_num(value, qual);
    else if (key == "base_k_d_eco") cfg.base.k_d_eco = parse_num(value, qual);
    else if (key == "base_h_min") cfg.base.h_min = parse_num(value, qual);
    else if (key == "base_h_max") cfg.base.h_max = parse_num(value, qual);
    else if (key == "base_c_star") cfg.base.c_star = parse_num(value, qual);
    else if (key == "base_theta") cfg.base.theta = parse_num(value, qual);
    else if (key == "base_h_init") cfg.base.h_init = parse_num(value, qual);
    else throw UsageError("unknown config key [" + section + "] " + key);
  } else if (section == "model") {
    if (key == "variant") {
      parse_variant(value);  // validates
      cfg.variant = value;
    } else if (key == "scale") {
      if (value != "paper" && value != "desk") {
        throw UsageError("model.scale must be paper or desk");
      }
      cfg.scale = value;
      if (value == "desk") {
        cfg.fc_dims = {64, 128, 64};
        cfg.gru_hidden = 128;
        cfg.epochs = 200;
        cfg.finetune_epochs = 200;
      }
    } else if (key == "fc_dims") {
      auto dims = parse_int_list(value, qual);
      if (dims.size() != 3) throw UsageError("model.fc_dims needs exactly 3 values");
      cfg.fc_dims = {dims[0], dims[1], dims[2]};
    } else if (key == "gru_hidden") cfg.gru_hidden = parse_int(value, qual);
    else if (key == "embed_dim") cfg.embed_dim = parse_int(value, qual);
    else throw UsageError("unknown config key [" + section + "] " + key);
  } else if (section == "train") {
    if (key == "lr") cfg.lr = parse_num(value, qual);
    else if (key == "batch") cfg.batch = parse_int(value, qual);
    else if (key == "epochs") cfg.epochs = parse_int(value, qual);
    else if (key == "seed") cfg.train_seed = parse_u64(value, qual);
    else if (key == "precision") {
      if (value != "double" && value != "single") {
        throw UsageError("train.precision must be double or single");
      }
      cfg.precision = value;
    } else if (key == "finetune_epochs") cfg.finetune_epochs = parse_int(value, qual);
    else if (key == "finetune_lr") cfg.finetune_lr = parse_num(value, qual);
    else throw UsageError("unknown config key [" + section + "] " + key);
  } else if (section == "ferguson_grid") {
    auto vals = parse_number_list(value, qual);
    if (vals.empty()) throw UsageError("config key " + qual + ": empty list");
    if (key == "t_th") cfg.grid.t_th = vals;
    else if (key == "k_a_endo") cfg.grid.k_a_endo = vals;
    else if (key == "k_a_eco") cfg.grid.k_a_eco = vals;
    else if (key == "k_d_endo") cfg.grid.k_d_endo = vals;
    else if (key == "k_d_eco") cfg.grid.k_d_eco = vals;
    else if (key == "h_min") cfg.grid.h_min = vals;
    else if (key == "h_max") cfg.grid.h_max = vals;
    else if (key == "c_star") cfg.grid.c_star = vals;
    else if (key == "theta") cfg.grid.theta = vals;
    else if (key == "h_init") cfg.grid.h_init = vals;
    else throw UsageError("unknown config key [" + section + "] " + key);
  } else if (section == "experiment") {
    if (key == "sizes") {
      cfg.sizes = detail::split_tokens(value);
      if (cfg.sizes.empty()) throw UsageError("experiment.sizes: empty list");
      for (const auto& s : cfg.sizes) {
        if (s != "all") detail::parse_int(s, qual);
      }
    } else if (key == "targets") cfg.targets = parse_int_list(value, qual);
    else if (key == "jobs") cfg.jobs = parse_int(value, qual);
    else throw UsageError("unknown config key [" + section + "] " + key);
  } else {
    throw UsageError("unknown config section [" + section + "]");
  }
}

/// Parses an INI document onto `cfg`. `model.scale` is applied first so
/// explicit keys in the same file override the preset.
inline void apply_config_text(RunConfig& cfg, const std::string& text) {
  struct Entry {
    std::string section, key, value;
  };
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = csv::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw UsageError("config line " + std::to_string(lineno) +
                                            ": malformed section header");
      section = csv::trim(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    if (section.empty()) {
      throw UsageError("config line " + std::to_string(lineno) + ": key outside any section");
    }
    entries.push_back({section, csv::trim(t.substr(0, eq)), csv::trim(t.substr(eq + 1))});
  }
  for (const auto& e : entries) {
    if (e.section == "model" && e.key == "scale") apply_config_entry(cfg, e.section, e.key, e.value);
  }
  for (const auto& e : entries) {
    if (e.section == "model" && e.key == "scale") continue;
    apply_config_entry(cfg, e.section, e.key, e.value);
  }
}

inline std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += v[i];
  }
  return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    if constexpr (std::is_same_v<T, double>) out += format_double(v[i]);
    else out += std::to_string(v[i]);
  }
  return out;
}

/// Canonical fully-resolved document; its hash identifies the run.
inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[data]\n";
  o << "csv = " << c.csv << '\n';
  o << "include_mean_at = " << (c.include_mean_at ? "true" : "false") << '\n';
  o << "split_seed = " << c.split_seed << '\n';
  o << "n_trials = " << c.n_trials << '\n';
  o << "n_cultivars = " << c.n_cultivars << '\n';
  o << "seasons = " << join_numbers(c.seasons) << '\n';
  o << "start_year = " << c.start_year << '\n';
  o << "label_period = " << c.label_period << '\n';
  o << "label_noise_sd = " << format_double(c.label_noise_sd) << '\n';
  o << "perturb_scale = " << format_double(c.perturb_scale) << '\n';
  o << "weather_seed = " << c.weather_seed << '\n';
  o << "synth_seed = " << c.synth_seed << '\n';
  o << "base_t_th = " << format_double(c.base.t_th) << '\n';
  o << "base_k_a_endo = " << format_double(c.base.k_a_endo) << '\n';
  o << "base_k_a_eco = " << format_double(c.base.k_a_eco) << '\n';
  o << "base_k_d_endo = " << format_double(c.base.k_d_endo) << '\n';
  o << "base_k_d_eco = " << format_double(c.base.k_d_eco) << '\n';
  o << "base_h_min = " << format_double(c.base.h_min) << '\n';
  o << "base_h_max = " << format_double(c.base.h_max) << '\n';
  o << "base_c_star = " << format_double(c.base.c_star) << '\n';
  o << "base_theta = " << format_double(c.base.theta) << '\n';
  o << "base_h_init = " << format_double(c.base.h_init) << '\n';
  o << "[model]\n";
  o << "scale = " << c.scale << '\n';
  o << "variant = " << c.variant << '\n';
  o << "fc_dims = " << c.fc_dims[0] << ' ' << c.fc_dims[1] << ' ' << c.fc_dims[2] << '\n';
  o << "gru_hidden = " << c.gru_hidden << '\n';
  o << "embed_dim = " << c.embed_dim << '\n';
  o << "[train]\n";
  o << "lr = " << format_double(c.lr) << '\n';
  o << "batch = " << c.batch << '\n';
  o << "epochs = " << c.epochs << '\n';
  o << "seed = " << c.train_seed << '\n';
  o << "precision = " << c.precision << '\n';
  o << "finetune_epochs = " << c.finetune_epochs << '\n';
  o << "finetune_lr = " << format_double(c.finetune_lr) << '\n';
  o << "[ferguson_grid]\n";
  o << "t_th = " << join_numbers(c.grid.t_th) << '\n';
  o << "k_a_endo = " << join_numbers(c.grid.k_a_endo) << '\n';
  o << "k_a_eco = " << join_numbers(c.grid.k_a_eco) << '\n';
  o << "k_d_endo = " << join_numbers(c.grid.k_d_endo) << '\n';
  o << "k_d_eco = " << join_numbers(c.grid.k_d_eco) << '\n';
  o << "h_min = " << join_numbers(c.grid.h_min) << '\n';
  o << "h_max = " << join_numbers(c.grid.h_max) << '\n';
  o << "c_star = " << join_numbers(c.grid.c_star) << '\n';
  o << "theta = " << join_numbers(c.grid.theta) << '\n';
  if (!c.grid.h_init.empty()) o << "h_init = " << join_numbers(c.grid.h_init) << '\n';
  o << "[experiment]\n";
  o << "sizes = " << join_list(c.sizes) << '\n';
  o << "targets = " << join_numbers(c.targets) << '\n';
  o << "jobs = " << c.jobs << '\n';
  return o.str();
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(serialize_config(c))); }

// ---------------------------------------------------------------------------
// Derived pieces.

inline SynthSpec make_synth_spec(const RunConfig& c) {
  SynthSpec s;
  s.n_cultivars = c.n_cultivars;
  s.seasons_per_cultivar = c.seasons;
  s.start_year = c.start_year;
  s.base = c.base;
  s.perturb_scale = c.perturb_scale;
  s.label_period = c.label_period;
  s.label_noise_sd = c.label_noise_sd;
  s.weather_seed = c.weather_seed;
  s.seed = c.synth_seed;
  return s;
}

inline FeatureSet make_feature_set(const RunConfig& c) {
  return FeatureSet{c.include_mean_at};
}

inline ModelSpec make_model_spec(const RunConfig& c) {
  ModelSpec spec;
  spec.variant = parse_variant(c.variant);
  spec.input_dim = make_feature_set(c).count();
  spec.fc_dims = c.fc_dims;
  spec.gru_hidden = c.gru_hidden;
  // Elementwise combination pins the embedding width to the input width.
  spec.embed_dim = (spec.variant == Variant::add_embed || spec.variant == Variant::mult_embed)
                       ? spec.input_dim
                       : c.embed_dim;
  return spec;
}

inline ExperimentSetup make_experiment_setup(const RunConfig& c) {
  ExperimentSetup ex;
  ex.n_trials = c.n_trials;
  ex.split_seed = c.split_seed;
  ex.seed = c.train_seed;
  ex.train = TrainConfig{c.lr, c.batch, c.epochs};
  ex.finetune = TrainConfig{c.finetune_lr, c.batch, c.finetune_epochs};
  ex.base_spec = make_model_spec(c);
  ex.grid = c.grid;
  ex.jobs = c.jobs;
  ex.config_hash = config_hash(c);
  return ex;
}

}  // namespace coldcast

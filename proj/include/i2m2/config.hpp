#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "i2m2/experts.hpp"
#include "i2m2/presets.hpp"
#include "i2m2/text.hpp"

namespace i2m2 {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Full description of one experiment: generator preset and sizes, training
// hyperparameters, the variant/seed grid, and output settings.
struct ExperimentConfig {
  // [generator]
  std::string preset_name = "both-deps";
  int n_train = 4000;
  int n_test = 4000;

  // [train]
  TrainConfig train;

  // [experiment]
  std::vector<std::string> variants = {"uni-1", "uni-2", "intra", "inter", "i2m2"};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<double> noise_grid = {0.0, 0.25, 0.5, 1.0};
  std::string noise_mode = "additive-gaussian";
  std::string ood_mode = "drop-selection";

  // [output]
  std::string out_dir = "runs";
  bool timings = false;

  bool operator==(const ExperimentConfig&) const = default;
};

inline const std::set<std::string>& known_variants() {
  static const std::set<std::string> names = {
      "uni-1", "uni-2", "intra",   "inter",   "i2m2",
      "i2m2-scratch", "i2m2-pretrain", "ens-1x3", "ens-2x3", "ens-mix"};
  return names;
}

namespace detail {

struct KeySetter {
  ExperimentConfig* cfg;

  void set(const std::string& section, const std::string& key, std::string_view value,
           const std::string& where) {
    try {
      if (section == "generator") {
        if (key == "preset") cfg->preset_name = std::string(value);
        else if (key == "n_train") cfg->n_train = as_int(value);
        else if (key == "n_test") cfg->n_test = as_int(value);
        else unknown(section, key, where);
      } else if (section == "train") {
        if (key == "lr_stage1") cfg->train.lr_stage1 = parse_double(value);
        else if (key == "lr_stage2") cfg->train.lr_stage2 = parse_double(value);
        else if (key == "weight_decay") cfg->train.weight_decay = parse_double(value);
        else if (key == "epochs_stage1") cfg->train.epochs_stage1 = as_int(value);
        else if (key == "epochs_stage2") cfg->train.epochs_stage2 = as_int(value);
        else if (key == "batch_size") cfg->train.batch_size = as_int(value);
        else if (key == "validation_fraction") cfg->train.validation_fraction = parse_double(value);
        else if (key == "patience") cfg->train.patience = as_int(value);
        else if (key == "hidden") cfg->train.hidden_sizes = as_int_list(value);
        else unknown(section, key, where);
      } else if (section == "experiment") {
        if (key == "variants") cfg->variants = as_string_list(value);
        else if (key == "seeds") cfg->seeds = as_u64_list(value);
        else if (key == "noise_grid") cfg->noise_grid = as_double_list(value);
        else if (key == "noise_mode") cfg->noise_mode = std::string(value);
        else if (key == "ood_mode") cfg->ood_mode = std::string(value);
        else unknown(section, key, where);
      } else if (section == "output") {
        if (key == "out") cfg->out_dir = std::string(value);
        else if (key == "timings") cfg->timings = as_bool(value);
        else unknown(section, key, where);
      } else {
        throw ConfigError(where + ": unknown section [" + section + "]");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(where + ": bad value for '" + section + "." + key + "': " + e.what());
    }
  }

  [[noreturn]] static void unknown(const std::string& section, const std::string& key,
                                   const std::string& where) {
    throw ConfigError(where + ": unknown key '" + key + "' in section [" + section + "]");
  }

  static int as_int(std::string_view v) { return static_cast<int>(parse_int(v)); }
  static bool as_bool(std::string_view v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw std::invalid_argument("expected true or false");
  }
  static std::vector<std::string> as_string_list(std::string_view v) {
    std::vector<std::string> out;
    for (auto part : split(v, ',')) {
      part = strip(part);
      if (!part.empty()) out.emplace_back(part);
    }
    return out;
  }
  static std::vector<int> as_int_list(std::string_view v) {
    std::vector<int> out;
    for (const auto& s : as_string_list(v)) out.push_back(as_int(s));
    return out;
  }
  static std::vector<std::uint64_t> as_u64_list(std::string_view v) {
    std::vector<std::uint64_t> out;
    for (const auto& s : as_string_list(v)) out.push_back(parse_u64(s));
    return out;
  }
  static std::vector<double> as_double_list(std::string_view v) {
    std::vector<double> out;
    for (const auto& s : as_string_list(v)) out.push_back(parse_double(s));
    return out;
  }
};

}  // namespace detail

// Constraint checks shared by the file parser and --set overrides.
inline void validate_config(const ExperimentConfig& cfg) {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError("config constraint violated: " + message);
  };
  require(cfg.n_train >= 100, "n_train must be >= 100");
  require(cfg.n_test >= 100, "n_test must be >= 100");
  require(!cfg.seeds.empty(), "seeds must name at least one seed");
  require(!cfg.variants.empty(), "variants must name at least one variant");
  for (const auto& v : cfg.variants)
    require(known_variants().count(v) == 1, "unknown variant '" + v + "'");
  const auto presets = preset_names();
  require(std::find(presets.begin(), presets.end(), cfg.preset_name) != presets.end(),
          "unknown preset '" + cfg.preset_name + "'");
  require(cfg.noise_mode == "additive-gaussian" || cfg.noise_mode == "rician-magnitude",
          "noise_mode must be additive-gaussian or rician-magnitude");
  require(cfg.ood_mode == "drop-selection" || cfg.ood_mode == "flip-interaction" ||
              cfg.ood_mode == "shift-means",
          "ood_mode must be drop-selection, flip-interaction or shift-means");
  for (double s : cfg.noise_grid) require(s >= 0.0, "noise_grid entries must be nonnegative");
  try {
    cfg.train.validate(static_cast<std::size_t>(cfg.n_train));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config constraint violated: ") + e.what());
  }
}

// Flat `key = value` format with [section] headers. Unknown sections, keys,
// malformed values and constraint violations all raise ConfigError naming
// the offending line.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  detail::KeySetter setter{&cfg};

  std::string section;
  int line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    const auto line = strip(raw);
    const std::string where = "line " + std::to_string(line_no);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = std::string(strip(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + ": expected 'key = value'");
    const std::string key(strip(line.substr(0, eq)));
    const auto value = strip(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' before any [section]");
    if (key.empty()) throw ConfigError(where + ": empty key");
    setter.set(section, key, value, where);
  }
  validate_config(cfg);
  return cfg;
}

// One `section.key=value` pair, as given to --set; applied after file parse.
inline void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "': expected section.key=value");
  const auto path = strip(assignment.substr(0, eq));
  const auto value = strip(assignment.substr(eq + 1));
  const auto dot = path.find('.');
  if (dot == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "': expected section.key=value");
  detail::KeySetter setter{&cfg};
  setter.set(std::string(strip(path.substr(0, dot))), std::string(strip(path.substr(dot + 1))),
             value, "override '" + std::string(path) + "'");
}

inline std::string dump_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[generator]\n";
  os << "preset = " << cfg.preset_name << '\n';
  os << "n_train = " << cfg.n_train << '\n';
  os << "n_test = " << cfg.n_test << '\n';
  os << "\n[train]\n";
  os << "lr_stage1 = " << format_double(cfg.train.lr_stage1) << '\n';
  os << "lr_stage2 = " << format_double(cfg.train.lr_stage2) << '\n';
  os << "weight_decay = " << format_double(cfg.train.weight_decay) << '\n';
  os << "epochs_stage1 = " << cfg.train.epochs_stage1 << '\n';
  os << "epochs_stage2 = " << cfg.train.epochs_stage2 << '\n';
  os << "batch_size = " << cfg.train.batch_size << '\n';
  os << "validation_fraction = " << format_double(cfg.train.validation_fraction) << '\n';
  os << "patience = " << cfg.train.patience << '\n';
  os << "hidden = ";
  for (std::size_t i = 0; i < cfg.train.hidden_sizes.size(); ++i)
    os << (i ? "," : "") << cfg.train.hidden_sizes[i];
  os << '\n';
  os << "\n[experiment]\n";
  os << "variants = ";
  for (std::size_t i = 0; i < cfg.variants.size(); ++i) os << (i ? "," : "") << cfg.variants[i];
  os << '\n';
  os << "seeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
  os << '\n';
  os << "noise_grid = ";
  for (std::size_t i = 0; i < cfg.noise_grid.size(); ++i)
    os << (i ? "," : "") << format_double(cfg.noise_grid[i]);
  os << '\n';
  os << "noise_mode = " << cfg.noise_mode << '\n';
  os << "ood_mode = " << cfg.ood_mode << '\n';
  os << "\n[output]\n";
  os << "out = " << cfg.out_dir << '\n';
  os << "timings = " << (cfg.timings ? "true" : "false") << '\n';
  return os.str();
}

// Digest of the fully resolved configuration; names output files.
inline std::string config_digest(const ExperimentConfig& cfg) {
  return to_hex16(fnv1a64(dump_config(cfg)));
}

}  // namespace i2m2

#ifndef SONOKIN_CONFIG_HPP
#define SONOKIN_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sonokin/common.hpp"
#include "sonokin/experiment.hpp"
#include "sonokin/synth.hpp"

namespace sonokin {

// Flat key=value run configuration. Every knob has a named key with a default;
// unknown keys are rejected up front. Lines starting with '#' are comments.

struct RunConfig {
  SynthConfig synth;
  FeatureConfig features;
  ExperimentConfig experiment;
  double stats_alpha = 0.05;
  int stats_family_size = 6;  // all pairwise comparisons of the 2x2 conditions
};

namespace detail {

struct ConfigKey {
  const char* name;
  const char* description;
};

inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"synth.subjects", "number of synthetic subjects (default 7)"},
      {"synth.seed", "master seed for cohort generation (default 1)"},
      {"synth.level_strides", "level-walk strides per trial (default 41)"},
      {"synth.incline_strides", "incline strides per trial (default 38)"},
      {"synth.decline_strides", "decline strides per trial (default 42)"},
      {"synth.stair_trials", "stair trials per task (default 5)"},
      {"synth.frame_rate_hz", "ultrasound frame rate (default 20)"},
      {"synth.image_width_px", "frame width in pixels (default 36)"},
      {"synth.image_height_px", "frame height in pixels (default 36)"},
      {"synth.pixel_spacing_mm", "isotropic pixel spacing (default 0.5)"},
      {"synth.noise_sd_intensity", "pixel noise SD in 8-bit units (default 2)"},
      {"synth.kinematics_noise_sd_deg", "angle measurement noise SD (default 1)"},
      {"synth.kinematics_velocity_noise_sd_deg_s",
       "velocity measurement noise SD (default 5)"},
      {"synth.stride_period_jitter", "fractional stride period jitter SD (default 0.03)"},
      {"synth.injectivity_margin", "required echo-feature separation per unit state (default 0.5)"},
      {"synth.velocity_weight_amp", "echo model velocity channel amplitude (default 10)"},
      {"features.kernel_size_mm", "square kernel side (default 3.0)"},
      {"features.standardize", "z-score features per training fold (default true)"},
      {"experiment.holdout_fraction", "treadmill holdout fraction (default 0.20)"},
      {"experiment.seed", "experiment seed (default 0)"},
      {"experiment.max_train", "training row cap per fold, 0 disables (default 2000)"},
      {"experiment.hyperopt_max_rows", "rows used in hyperparameter search (default 128)"},
      {"experiment.optim_max_iterations", "simplex iterations per restart (default 80)"},
      {"experiment.optim_restarts", "hyperparameter search restarts (default 2)"},
      {"experiment.refit_per_fold", "refit hyperparameters per fold (default true)"},
      {"experiment.kernel", "rq | poly2 (default rq)"},
      {"experiment.workers", "parallel workers, 0 = all cores (default 0)"},
      {"stats.alpha", "posthoc significance level; strict tier at alpha/5 (default 0.05)"},
      {"stats.family_size", "Bonferroni family size (default 6)"},
  };
  return schema;
}

inline bool known_key(const std::string& key) {
  for (const auto& k : config_schema())
    if (key == k.name) return true;
  return false;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorCode::ConfigError, key + ": expected true/false, got '" + v + "'");
}

}  // namespace detail

inline void apply_config_entry(RunConfig& config, const std::string& key,
                               const std::string& value) {
  if (!detail::known_key(key))
    fail(ErrorCode::ConfigError, "unknown config key '" + key + "'");
  auto as_int = [&] { return static_cast<int>(parse_int(value, key)); };
  auto as_u64 = [&] { return static_cast<std::uint64_t>(parse_int(value, key)); };
  auto as_double = [&] { return parse_double(value, key); };

  if (key == "synth.subjects") config.synth.subjects = as_int();
  else if (key == "synth.seed") config.synth.seed = as_u64();
  else if (key == "synth.level_strides") config.synth.level_strides = as_int();
  else if (key == "synth.incline_strides") config.synth.incline_strides = as_int();
  else if (key == "synth.decline_strides") config.synth.decline_strides = as_int();
  else if (key == "synth.stair_trials") config.synth.stair_trials = as_int();
  else if (key == "synth.frame_rate_hz") config.synth.frame_rate_hz = as_double();
  else if (key == "synth.image_width_px") config.synth.image_width_px = as_int();
  else if (key == "synth.image_height_px") config.synth.image_height_px = as_int();
  else if (key == "synth.pixel_spacing_mm") config.synth.pixel_spacing_mm = as_double();
  else if (key == "synth.noise_sd_intensity") config.synth.noise_sd_intensity = as_double();
  else if (key == "synth.kinematics_noise_sd_deg")
    config.synth.kinematics_noise_sd_deg = as_double();
  else if (key == "synth.kinematics_velocity_noise_sd_deg_s")
    config.synth.kinematics_velocity_noise_sd_deg_s = as_double();
  else if (key == "synth.stride_period_jitter")
    config.synth.stride_period_jitter = as_double();
  else if (key == "synth.injectivity_margin")
    config.synth.injectivity_margin = as_double();
  else if (key == "synth.velocity_weight_amp")
    config.synth.echo.velocity_weight_amp = as_double();
  else if (key == "features.kernel_size_mm") config.features.kernel_size_mm = as_double();
  else if (key == "features.standardize")
    config.features.standardize = detail::parse_bool(value, key);
  else if (key == "experiment.holdout_fraction")
    config.experiment.holdout_fraction = as_double();
  else if (key == "experiment.seed") config.experiment.seed = as_u64();
  else if (key == "experiment.max_train") config.experiment.max_train = as_int();
  else if (key == "experiment.hyperopt_max_rows")
    config.experiment.hyperopt_max_rows = as_int();
  else if (key == "experiment.optim_max_iterations")
    config.experiment.optim.max_iterations = as_int();
  else if (key == "experiment.optim_restarts") config.experiment.optim.restarts = as_int();
  else if (key == "experiment.refit_per_fold")
    config.experiment.refit_per_fold = detail::parse_bool(value, key);
  else if (key == "experiment.kernel") {
    if (value == "rq") config.experiment.kernel_family = KernelFamily::RationalQuadratic;
    else if (value == "poly2")
      config.experiment.kernel_family = KernelFamily::PolynomialDegree2;
    else fail(ErrorCode::ConfigError, "experiment.kernel: expected rq or poly2");
  } else if (key == "experiment.workers") config.experiment.workers = as_int();
  else if (key == "stats.alpha") config.stats_alpha = as_double();
  else if (key == "stats.family_size") config.stats_family_size = as_int();
}

inline RunConfig load_config_file(const std::string& path) {
  RunConfig config;
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open config " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string trimmed;
    for (char c : line)
      if (c != '\r') trimmed.push_back(c);
    // strip whitespace
    const auto begin = trimmed.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    const auto end = trimmed.find_last_not_of(" \t");
    trimmed = trimmed.substr(begin, end - begin + 1);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ConfigError,
           path + ":" + std::to_string(lineno) + ": expected key = value");
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    apply_config_entry(config, strip(trimmed.substr(0, eq)), strip(trimmed.substr(eq + 1)));
  }
  return config;
}

inline std::string config_schema_text() {
  std::string out = "configuration keys (key = value per line, # for comments):\n";
  for (const auto& k : detail::config_schema()) {
    out += "  ";
    out += k.name;
    out += "  -- ";
    out += k.description;
    out += "\n";
  }
  return out;
}

}  // namespace sonokin

#endif  // SONOKIN_CONFIG_HPP

#ifndef SONOKIN_SYNTH_HPP
#define SONOKIN_SYNTH_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sonokin/common.hpp"
#include "sonokin/csv.hpp"
#include "sonokin/features.hpp"
#include "sonokin/frames.hpp"
#include "sonokin/rng.hpp"

namespace sonokin {

// ---------------------------------------------------------------------------
// Task templates: knee angle as a sum of <= 4 harmonics over percent gait
// cycle, with the analytic derivative as the velocity. Every template shares
// the same heel-strike angle so stride boundaries stay continuous.
// ---------------------------------------------------------------------------

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kHeelStrikeAngleDeg = 12.0;

struct Harmonic {
  double amplitude_deg = 0.0;
  double phase_rad = 0.0;
};

struct TaskTemplate {
  Task task = Task::Level;
  double stride_period_s = 1.3;
  std::array<Harmonic, 3> harmonics{};

  double offset() const {
    double c0 = kHeelStrikeAngleDeg;
    for (const auto& h : harmonics) c0 -= h.amplitude_deg * std::cos(h.phase_rad);
    return c0;
  }

  /// Knee angle at percent p in [0, 100], amplitude-scaled by `amp`.
  double angle(double p, double amp = 1.0) const {
    double v = kHeelStrikeAngleDeg;
    for (std::size_t k = 0; k < harmonics.size(); ++k) {
      const auto& h = harmonics[k];
      v += amp * h.amplitude_deg *
           (std::cos(kTwoPi * static_cast<double>(k + 1) * p / 100.0 - h.phase_rad) -
            std::cos(h.phase_rad));
    }
    return v;
  }

  /// d(angle)/dp in degrees per percent.
  double angle_slope(double p, double amp = 1.0) const {
    double v = 0.0;
    for (std::size_t k = 0; k < harmonics.size(); ++k) {
      const auto& h = harmonics[k];
      const double w = kTwoPi * static_cast<double>(k + 1) / 100.0;
      v -= amp * h.amplitude_deg * w *
           std::sin(kTwoPi * static_cast<double>(k + 1) * p / 100.0 - h.phase_rad);
    }
    return v;
  }

  double peak_swing_flexion(double amp = 1.0) const {
    double peak = -1e300;
    for (int i = 500; i <= 1000; ++i) peak = std::max(peak, angle(i / 10.0, amp));
    return peak;
  }
};

inline TaskTemplate default_task_template(Task task) {
  TaskTemplate t;
  t.task = task;
  switch (task) {
    case Task::Level:
      t.stride_period_s = 1.30;
      t.harmonics = {{{22.0, 4.20}, {14.0, 1.80}, {3.0, 0.20}}};
      break;
    case Task::Incline:
      t.stride_period_s = 1.45;
      t.harmonics = {{{24.0, 4.25}, {15.0, 1.95}, {3.5, 0.35}}};
      break;
    case Task::Decline:
      t.stride_period_s = 1.40;
      t.harmonics = {{{20.0, 4.10}, {13.0, 1.70}, {4.0, 0.10}}};
      break;
    case Task::StairAscent:
      t.stride_period_s = 1.50;
      t.harmonics = {{{34.0, 4.05}, {17.0, 1.70}, {4.0, 0.30}}};
      break;
    case Task::StairDescent:
      t.stride_period_s = 1.40;
      t.harmonics = {{{32.0, 4.00}, {16.0, 1.60}, {3.0, 0.20}}};
      break;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Echo model: pixel intensity is a depth-structured baseline plus a two-channel
// response to the joint state, pushed through a bounded smooth map. Kernel-mean
// features of this image are injective in (angle, velocity) over task ranges.
// This is a regression test-bed, not an acoustic simulator.
// ---------------------------------------------------------------------------

struct EchoModel {
  double baseline_mid = 128.0;
  double baseline_amp = 30.0;
  double angle_weight_amp = 50.0;
  double velocity_weight_amp = 10.0;
  double column_mod_amp = 0.15;
  double angle_center_deg = 40.0;
  double angle_halfwidth_deg = 35.0;
  double velocity_scale_deg_s = 250.0;

  double state_channel_angle(double angle_deg) const {
    return std::tanh((angle_deg - angle_center_deg) / angle_halfwidth_deg);
  }
  double state_channel_velocity(double velocity_deg_s) const {
    return std::tanh(velocity_deg_s / velocity_scale_deg_s);
  }

  /// Noise-free pixel value before 8-bit rounding.
  double pixel_value(int z, int x, int height, int width, double angle_deg,
                     double velocity_deg_s) const {
    const double zu = static_cast<double>(z) / height;
    const double xu = static_cast<double>(x) / width;
    const double b = baseline_mid + baseline_amp * std::sin(kTwoPi * zu);
    const double w1 = angle_weight_amp * std::sin(kTwoPi * zu + 0.7);
    const double w2 = velocity_weight_amp * std::cos(kTwoPi * zu + 0.3);
    const double colmod = 1.0 + column_mod_amp * std::cos(kTwoPi * xu);
    return b + colmod * (w1 * state_channel_angle(angle_deg) +
                         w2 * state_channel_velocity(velocity_deg_s));
  }
};

struct SynthConfig {
  int subjects = 7;
  // stride counts per task (paper-mean defaults); stairs are per-trial sequences
  int level_strides = 41;
  int incline_strides = 38;
  int decline_strides = 42;
  int stair_trials = 5;
  std::array<int, 5> ascent_steady_per_trial = {3, 2, 3, 2, 3};   // totals 13
  std::array<int, 5> descent_steady_per_trial = {3, 3, 3, 3, 3};  // totals 15
  double frame_rate_hz = 20.0;
  int image_width_px = 36;
  int image_height_px = 36;
  double pixel_spacing_mm = 0.5;
  EchoModel echo;
  double noise_sd_intensity = 2.0;
  double kinematics_noise_sd_deg = 1.0;
  double kinematics_velocity_noise_sd_deg_s = 5.0;
  double stride_period_jitter = 0.03;  // fractional SD of per-stride period
  double subject_amp_spread = 0.05;    // per-subject curve amplitude scatter
  double injectivity_margin = 0.5;     // required feature separation per unit state
  double kinematics_rate_hz = 100.0;
  std::uint64_t seed = 1;
};

struct GroundTruthSample {
  std::int64_t timestamp_ms = 0;
  double true_angle_deg = 0.0;
  double true_velocity_deg_s = 0.0;
};

struct SynthTrial {
  TrialRecord trial;
  std::vector<GroundTruthSample> truth;  // noise-free kinematics, kept out of training
};

namespace detail {

struct PlannedStride {
  const TaskTemplate* curve_a = nullptr;  // base curve
  const TaskTemplate* curve_b = nullptr;  // when set, blend a -> b across the stride
  double period_s = 1.0;
  StrideLabel label = StrideLabel::SteadyState;
};

struct StrideSchedule {
  std::vector<PlannedStride> strides;
  std::vector<double> start_s;  // per stride, plus total duration at the back
  double total_s = 0.0;

  void finalize() {
    start_s.clear();
    double t = 0.0;
    for (const auto& s : strides) {
      start_s.push_back(t);
      t += s.period_s;
    }
    total_s = t;
  }

  /// Noise-free state at time t (seconds from trial start).
  void state_at(double t, double amp, double* angle, double* velocity) const {
    std::size_t i = strides.size() - 1;
    for (std::size_t k = 0; k + 1 < strides.size(); ++k) {
      if (t < start_s[k + 1]) {
        i = k;
        break;
      }
    }
    const auto& s = strides[i];
    const double local = t - start_s[i];
    const double p = 100.0 * local / s.period_s;
    const double dpdt = 100.0 / s.period_s;
    if (s.curve_b == nullptr) {
      *angle = s.curve_a->angle(p, amp);
      *velocity = s.curve_a->angle_slope(p, amp) * dpdt;
    } else {
      // linear blend across the stride keeps heel-strike endpoints shared
      const double u = p / 100.0;
      const double a0 = s.curve_a->angle(p, amp);
      const double a1 = s.curve_b->angle(p, amp);
      const double d0 = s.curve_a->angle_slope(p, amp);
      const double d1 = s.curve_b->angle_slope(p, amp);
      *angle = (1.0 - u) * a0 + u * a1;
      *velocity = ((1.0 - u) * d0 + u * d1 + (a1 - a0) / 100.0) * dpdt;
    }
  }
};

}  // namespace detail

/// Generate one trial: gait events at stride boundaries, kinematics at
/// kinematics_rate_hz with additive noise, frames at frame_rate_hz rendered
/// from the echo model. Deterministic for a given rng seed.
inline SynthTrial generate_trial(const std::string& subject_id, Task task, int trial_index,
                                 const SynthConfig& config, std::uint64_t trial_seed) {
  Rng rng(trial_seed);
  const double amp = 1.0 + config.subject_amp_spread * (2.0 * rng.uniform() - 1.0);

  const TaskTemplate level_template = default_task_template(Task::Level);
  const TaskTemplate main_template = default_task_template(task);
  const TaskTemplate* level = &level_template;
  const TaskTemplate* main_curve = &main_template;

  detail::StrideSchedule schedule;
  auto jittered = [&](double period) {
    return period * (1.0 + config.stride_period_jitter * rng.gaussian());
  };

  if (!is_stair_task(task)) {
    int count = task == Task::Level     ? config.level_strides
                : task == Task::Incline ? config.incline_strides
                                        : config.decline_strides;
    for (int i = 0; i < count; ++i)
      schedule.strides.push_back({main_curve, nullptr, jittered(main_curve->stride_period_s),
                                  StrideLabel::SteadyState});
  } else {
    const auto& steady_counts = task == Task::StairAscent ? config.ascent_steady_per_trial
                                                          : config.descent_steady_per_trial;
    const int steady =
        steady_counts[static_cast<std::size_t>(trial_index) % steady_counts.size()];
    // walk-to-stair transition, steady stair strides, stair-to-walk transition
    schedule.strides.push_back({level, main_curve,
                                jittered(0.5 * (level->stride_period_s + main_curve->stride_period_s)),
                                StrideLabel::WalkToStair});
    for (int i = 0; i < steady; ++i)
      schedule.strides.push_back({main_curve, nullptr, jittered(main_curve->stride_period_s),
                                  StrideLabel::SteadyState});
    schedule.strides.push_back({main_curve, level,
                                jittered(0.5 * (level->stride_period_s + main_curve->stride_period_s)),
                                StrideLabel::StairToWalk});
  }
  schedule.finalize();

  SynthTrial out;
  out.trial.subject_id = subject_id;
  out.trial.task = task;
  out.trial.trial_index = trial_index;

  // gait events: heel-strike at each stride boundary (toe-off at 60% for
  // completeness), transition annotation on the opening heel-strike
  for (std::size_t i = 0; i < schedule.strides.size(); ++i) {
    GaitEvent hs;
    hs.timestamp_ms = static_cast<std::int64_t>(std::llround(schedule.start_s[i] * 1000.0));
    hs.kind = GaitEventKind::HeelStrike;
    if (schedule.strides[i].label == StrideLabel::WalkToStair)
      hs.annotation = TransitionMark::WalkToStair;
    else if (schedule.strides[i].label == StrideLabel::StairToWalk)
      hs.annotation = TransitionMark::StairToWalk;
    out.trial.events.push_back(hs);
    GaitEvent to;
    to.timestamp_ms = static_cast<std::int64_t>(
        std::llround((schedule.start_s[i] + 0.6 * schedule.strides[i].period_s) * 1000.0));
    to.kind = GaitEventKind::ToeOff;
    out.trial.events.push_back(to);
  }
  GaitEvent last_hs;
  last_hs.timestamp_ms = static_cast<std::int64_t>(std::llround(schedule.total_s * 1000.0));
  last_hs.kind = GaitEventKind::HeelStrike;
  out.trial.events.push_back(last_hs);
  std::sort(out.trial.events.begin(), out.trial.events.end(),
            [](const GaitEvent& a, const GaitEvent& b) { return a.timestamp_ms < b.timestamp_ms; });

  // kinematics stream with measurement noise; ground truth kept separately
  const std::int64_t kin_step_ms =
      static_cast<std::int64_t>(std::llround(1000.0 / config.kinematics_rate_hz));
  const std::int64_t total_ms = static_cast<std::int64_t>(std::llround(schedule.total_s * 1000.0));
  for (std::int64_t t = 0; t <= total_ms; t += kin_step_ms) {
    double angle = 0.0, velocity = 0.0;
    schedule.state_at(static_cast<double>(t) / 1000.0, amp, &angle, &velocity);
    out.truth.push_back({t, angle, velocity});
    KinematicsSample s;
    s.timestamp_ms = t;
    s.knee_angle_deg = angle + config.kinematics_noise_sd_deg * rng.gaussian();
    s.knee_velocity_deg_s =
        velocity + config.kinematics_velocity_noise_sd_deg_s * rng.gaussian();
    out.trial.kinematics.push_back(s);
  }

  // frames at the nominal rate, inside the kinematics span
  const std::int64_t frame_step_ms =
      static_cast<std::int64_t>(std::llround(1000.0 / config.frame_rate_hz));
  const int W = config.image_width_px;
  const int H = config.image_height_px;
  for (std::int64_t t = 0; t + frame_step_ms <= total_ms; t += frame_step_ms) {
    double angle = 0.0, velocity = 0.0;
    schedule.state_at(static_cast<double>(t) / 1000.0, amp, &angle, &velocity);
    UltrasoundFrame f;
    f.timestamp_ms = t;
    f.width_px = W;
    f.height_px = H;
    f.pixel_spacing_mm = config.pixel_spacing_mm;
    f.intensities.resize(static_cast<std::size_t>(W) * H);
    for (int z = 0; z < H; ++z) {
      for (int x = 0; x < W; ++x) {
        double v = config.echo.pixel_value(z, x, H, W, angle, velocity);
        if (config.noise_sd_intensity > 0.0) v += config.noise_sd_intensity * rng.gaussian();
        const double clamped = std::min(255.0, std::max(0.0, std::round(v)));
        f.intensities[static_cast<std::size_t>(z) * W + x] =
            static_cast<std::uint8_t>(clamped);
      }
    }
    out.trial.frames.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cohort generation: files on disk in the trial formats plus a manifest and
// per-trial ground-truth CSVs.
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string subject_id;
  Task task = Task::Level;
  int trial_index = 0;
  std::string frames_path;
  std::string events_path;
  std::string kinematics_path;
};

inline void write_ground_truth_csv(const std::string& path,
                                   const std::vector<GroundTruthSample>& truth) {
  CsvWriter w(path);
  w.row({"timestamp_ms", "true_angle", "true_velocity"});
  for (const auto& s : truth)
    w.row({std::to_string(s.timestamp_ms), format_double(s.true_angle_deg, 12),
           format_double(s.true_velocity_deg_s, 12)});
  w.close();
}

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  CsvWriter w(path);
  w.row({"subject_id", "task", "trial_index", "frames_path", "events_path", "kinematics_path"});
  for (const auto& e : entries)
    w.row({e.subject_id, task_name(e.task), std::to_string(e.trial_index), e.frames_path,
           e.events_path, e.kinematics_path});
  w.close();
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  auto table = read_csv(path);
  int c_s = table.column("subject_id");
  int c_t = table.column("task");
  int c_i = table.column("trial_index");
  int c_f = table.column("frames_path");
  int c_e = table.column("events_path");
  int c_k = table.column("kinematics_path");
  if (c_s < 0 || c_t < 0 || c_i < 0 || c_f < 0 || c_e < 0 || c_k < 0)
    fail(ErrorCode::MalformedRow, path + ": bad manifest header");
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    std::string where = path + ":" + std::to_string(table.line_numbers[i]);
    ManifestEntry e;
    e.subject_id = row[c_s];
    e.task = task_from_name(row[c_t]);
    e.trial_index = static_cast<int>(parse_int(row[c_i], where));
    e.frames_path = row[c_f];
    e.events_path = row[c_e];
    e.kinematics_path = row[c_k];
    entries.push_back(e);
  }
  return entries;
}

/// Writes the full cohort under out_dir; paths in the manifest are relative to it.
/// Per-trial seeds derive from (subject, task, trial) counters, so the output is
/// byte-identical for a given config regardless of generation order.
inline std::vector<ManifestEntry> generate_cohort(const SynthConfig& config,
                                                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create " + out_dir + ": " + ec.message());

  std::vector<ManifestEntry> manifest;
  for (int s = 0; s < config.subjects; ++s) {
    const std::string subject_id = "S" + std::to_string(s + 1);
    for (std::size_t ti = 0; ti < kAllTasks.size(); ++ti) {
      const Task task = kAllTasks[ti];
      const int trials = is_stair_task(task) ? config.stair_trials : 1;
      for (int tr = 0; tr < trials; ++tr) {
        const std::uint64_t seed = Rng::derive_seed(
            config.seed, static_cast<std::uint64_t>(s) + 1, ti + 1,
            static_cast<std::uint64_t>(tr) + 1);
        SynthTrial st = generate_trial(subject_id, task, tr, config, seed);
        const std::string stem =
            subject_id + "_" + task_name(task) + "_t" + std::to_string(tr);
        ManifestEntry e;
        e.subject_id = subject_id;
        e.task = task;
        e.trial_index = tr;
        e.frames_path = stem + ".uskf";
        e.events_path = stem + "_events.csv";
        e.kinematics_path = stem + "_kinematics.csv";
        write_trial(st.trial, out_dir + "/" + e.frames_path, out_dir + "/" + e.events_path,
                    out_dir + "/" + e.kinematics_path);
        write_ground_truth_csv(out_dir + "/" + stem + "_truth.csv", st.truth);
        manifest.push_back(e);
      }
    }
  }
  write_manifest(out_dir + "/manifest.csv", manifest);
  return manifest;
}

/// Minimum feature-space separation per unit normalized state distance over a
/// dense state grid; a positive margin means the regression target is
/// identifiable from the features.
inline double feature_injectivity_margin(const SynthConfig& config, double angle_min,
                                         double angle_max, double vel_min, double vel_max,
                                         int grid = 12) {
  FrameSequence frames;
  std::vector<std::pair<double, double>> states;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const double a = angle_min + (angle_max - angle_min) * i / (grid - 1);
      const double v = vel_min + (vel_max - vel_min) * j / (grid - 1);
      states.emplace_back(a, v);
      UltrasoundFrame f;
      f.timestamp_ms = static_cast<std::int64_t>(frames.size()) * 50;
      f.width_px = config.image_width_px;
      f.height_px = config.image_height_px;
      f.pixel_spacing_mm = config.pixel_spacing_mm;
      f.intensities.resize(static_cast<std::size_t>(f.width_px) * f.height_px);
      for (int z = 0; z < f.height_px; ++z)
        for (int x = 0; x < f.width_px; ++x) {
          const double raw = config.echo.pixel_value(z, x, f.height_px, f.width_px, a, v);
          f.intensities[static_cast<std::size_t>(z) * f.width_px + x] =
              static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(raw))));
        }
      frames.push_back(std::move(f));
    }
  }
  FeatureConfig fc;
  FeatureMatrix fm = extract_intensity_features(frames, fc);
  const double angle_span = angle_max - angle_min;
  const double vel_span = vel_max - vel_min;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      const double da = (states[i].first - states[j].first) / angle_span;
      const double dv = (states[i].second - states[j].second) / vel_span;
      const double ds = std::sqrt(da * da + dv * dv);
      const double df = (fm.values.row(static_cast<Eigen::Index>(i)) -
                         fm.values.row(static_cast<Eigen::Index>(j)))
                            .norm();
      worst = std::min(worst, df / ds);
    }
  }
  return worst;
}

}  // namespace sonokin

#endif  // SONOKIN_SYNTH_HPP

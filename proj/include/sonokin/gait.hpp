#ifndef SONOKIN_GAIT_HPP
#define SONOKIN_GAIT_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sonokin/common.hpp"
#include "sonokin/frames.hpp"

namespace sonokin {

enum class StrideLabel { SteadyState, WalkToStair, StairToWalk };

inline const char* stride_label_name(StrideLabel l) {
  switch (l) {
    case StrideLabel::SteadyState: return "steady_state";
    case StrideLabel::WalkToStair: return "walk_to_stair";
    case StrideLabel::StairToWalk: return "stair_to_walk";
  }
  return "?";
}

/// Heel-strike to next heel-strike of the instrumented leg.
struct Stride {
  std::string subject_id;
  Task task = Task::Level;
  int trial_index = 0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  StrideLabel label = StrideLabel::SteadyState;
  std::vector<int> sample_rows;  // indices into the trial's synchronized samples
};

struct SegmentationResult {
  std::vector<Stride> strides;
  int dropped_empty = 0;  // strides discarded for holding zero synchronized samples
};

/// One stride per consecutive heel-strike pair. A transition annotation on any event
/// in [start, end) labels the stride; the closing heel-strike belongs to the next one.
inline SegmentationResult segment_strides(const TrialRecord& trial,
                                          const std::vector<SyncSample>& sync) {
  std::vector<std::int64_t> heel_strikes;
  for (const auto& e : trial.events)
    if (e.kind == GaitEventKind::HeelStrike) heel_strikes.push_back(e.timestamp_ms);
  if (heel_strikes.size() < 2)
    fail(ErrorCode::InsufficientEvents,
         "stride segmentation needs >= 2 heel-strikes, got " +
             std::to_string(heel_strikes.size()));

  SegmentationResult result;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i + 1 < heel_strikes.size(); ++i) {
    Stride s;
    s.subject_id = trial.subject_id;
    s.task = trial.task;
    s.trial_index = trial.trial_index;
    s.start_ms = heel_strikes[i];
    s.end_ms = heel_strikes[i + 1];
    for (const auto& e : trial.events) {
      if (e.timestamp_ms < s.start_ms || e.timestamp_ms >= s.end_ms) continue;
      if (e.annotation == TransitionMark::WalkToStair) s.label = StrideLabel::WalkToStair;
      else if (e.annotation == TransitionMark::StairToWalk) s.label = StrideLabel::StairToWalk;
    }
    while (cursor < sync.size() && sync[cursor].timestamp_ms < s.start_ms) ++cursor;
    std::size_t j = cursor;
    while (j < sync.size() && sync[j].timestamp_ms < s.end_ms) {
      s.sample_rows.push_back(static_cast<int>(j));
      ++j;
    }
    if (s.sample_rows.empty()) {
      ++result.dropped_empty;
      continue;
    }
    result.strides.push_back(std::move(s));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Time normalization to percent gait cycle
// ---------------------------------------------------------------------------

constexpr int kGridPoints = 101;  // 0%,1%,...,100%

struct TimedValue {
  std::int64_t timestamp_ms = 0;
  double value = 0.0;
};

/// Linear interpolation of `signal` at 101 equispaced times across [start_ms, end_ms].
/// Values beyond the signal's ends clamp to the first/last sample.
inline std::array<double, kGridPoints> resample_percent_cycle(
    std::int64_t start_ms, std::int64_t end_ms, const std::vector<TimedValue>& signal) {
  int inside = 0;
  for (const auto& p : signal)
    if (p.timestamp_ms >= start_ms && p.timestamp_ms < end_ms) ++inside;
  if (inside < 2)
    fail(ErrorCode::TooFewSamples, "need >= 2 signal samples inside the stride, got " +
                                       std::to_string(inside));

  std::array<double, kGridPoints> out{};
  std::size_t hi = 0;
  for (int g = 0; g < kGridPoints; ++g) {
    const double t = static_cast<double>(start_ms) +
                     (static_cast<double>(end_ms - start_ms) * g) / (kGridPoints - 1);
    while (hi < signal.size() && static_cast<double>(signal[hi].timestamp_ms) < t) ++hi;
    if (hi == 0) {
      out[g] = signal.front().value;
    } else if (hi == signal.size()) {
      out[g] = signal.back().value;
    } else {
      const auto& a = signal[hi - 1];
      const auto& b = signal[hi];
      const double span = static_cast<double>(b.timestamp_ms - a.timestamp_ms);
      const double u = (t - static_cast<double>(a.timestamp_ms)) / span;
      out[g] = a.value + u * (b.value - a.value);
    }
  }
  return out;
}

struct NormalizedStride {
  StrideLabel label = StrideLabel::SteadyState;
  std::array<double, kGridPoints> angle_deg{};
  std::array<double, kGridPoints> velocity_deg_s{};
};

inline NormalizedStride normalize_stride(const Stride& stride,
                                         const std::vector<TimedValue>& angle_signal,
                                         const std::vector<TimedValue>& velocity_signal) {
  NormalizedStride n;
  n.label = stride.label;
  n.angle_deg = resample_percent_cycle(stride.start_ms, stride.end_ms, angle_signal);
  n.velocity_deg_s = resample_percent_cycle(stride.start_ms, stride.end_ms, velocity_signal);
  return n;
}

/// Pointwise mean and population SD across a stride set.
struct TrajectoryBand {
  std::array<double, kGridPoints> mean{};
  std::array<double, kGridPoints> sd{};
};

inline TrajectoryBand trajectory_band(const std::vector<std::array<double, kGridPoints>>& curves) {
  if (curves.empty()) fail(ErrorCode::EmptyInput, "trajectory band over an empty stride set");
  TrajectoryBand band;
  const double n = static_cast<double>(curves.size());
  for (int g = 0; g < kGridPoints; ++g) {
    // accumulate deviations from the first curve so identical strides come out
    // with an exact zero SD instead of rounding residue
    const double shift = curves.front()[g];
    double sum = 0.0;
    for (const auto& c : curves) sum += c[g] - shift;
    const double mean_dev = sum / n;
    double ss = 0.0;
    for (const auto& c : curves) ss += (c[g] - shift - mean_dev) * (c[g] - shift - mean_dev);
    band.mean[g] = shift + mean_dev;
    band.sd[g] = std::sqrt(ss / n);
  }
  return band;
}

}  // namespace sonokin

#endif  // SONOKIN_GAIT_HPP

#ifndef SONOKIN_FRAMES_HPP
#define SONOKIN_FRAMES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sonokin/binio.hpp"
#include "sonokin/common.hpp"
#include "sonokin/csv.hpp"

namespace sonokin {

enum class Task { Level, Incline, Decline, StairAscent, StairDescent };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::Level: return "level";
    case Task::Incline: return "incline";
    case Task::Decline: return "decline";
    case Task::StairAscent: return "stair_ascent";
    case Task::StairDescent: return "stair_descent";
  }
  return "?";
}

inline Task task_from_name(const std::string& s) {
  if (s == "level") return Task::Level;
  if (s == "incline") return Task::Incline;
  if (s == "decline") return Task::Decline;
  if (s == "stair_ascent") return Task::StairAscent;
  if (s == "stair_descent") return Task::StairDescent;
  fail(ErrorCode::MalformedRow, "unknown task '" + s + "'");
}

constexpr std::array<Task, 5> kAllTasks = {Task::Level, Task::Incline, Task::Decline,
                                           Task::StairAscent, Task::StairDescent};

inline bool is_stair_task(Task t) {
  return t == Task::StairAscent || t == Task::StairDescent;
}

/// One B-mode raster. Row 0 is the most superficial tissue.
struct UltrasoundFrame {
  std::int64_t timestamp_ms = 0;
  int width_px = 0;
  int height_px = 0;
  double pixel_spacing_mm = 0.0;  // isotropic, mm per pixel
  std::vector<std::uint8_t> intensities;  // row-major, width*height

  std::uint8_t at(int row, int col) const {
    return intensities[static_cast<std::size_t>(row) * width_px + col];
  }
};

using FrameSequence = std::vector<UltrasoundFrame>;

enum class GaitEventKind { HeelStrike, ToeOff };
enum class TransitionMark { None, WalkToStair, StairToWalk };

struct GaitEvent {
  std::int64_t timestamp_ms = 0;
  GaitEventKind kind = GaitEventKind::HeelStrike;
  TransitionMark annotation = TransitionMark::None;
};

struct KinematicsSample {
  std::int64_t timestamp_ms = 0;
  double knee_angle_deg = 0.0;      // flexion positive
  double knee_velocity_deg_s = 0.0;
};

struct TrialRecord {
  std::string subject_id;
  Task task = Task::Level;
  int trial_index = 0;
  FrameSequence frames;
  std::vector<GaitEvent> events;
  std::vector<KinematicsSample> kinematics;
};

// ---------------------------------------------------------------------------
// Frame container format:
//   magic "USKF", version u16, width u16, height u16,
//   pixel_spacing_micrometers u32, frame_count u32,
//   then per frame: timestamp_ms u64 + width*height bytes (row-major).
// All little-endian.
// ---------------------------------------------------------------------------

constexpr std::uint16_t kFrameFormatVersion = 1;

inline void write_frames(const std::string& path, const FrameSequence& frames) {
  if (frames.empty()) fail(ErrorCode::EmptyTrial, "no frames to write: " + path);
  const auto& f0 = frames.front();
  std::vector<std::uint8_t> buf;
  buf.reserve(16 + frames.size() * (8 + static_cast<std::size_t>(f0.width_px) * f0.height_px));
  buf.insert(buf.end(), {'U', 'S', 'K', 'F'});
  put_u16(buf, kFrameFormatVersion);
  put_u16(buf, static_cast<std::uint16_t>(f0.width_px));
  put_u16(buf, static_cast<std::uint16_t>(f0.height_px));
  put_u32(buf, static_cast<std::uint32_t>(std::llround(f0.pixel_spacing_mm * 1000.0)));
  put_u32(buf, static_cast<std::uint32_t>(frames.size()));
  for (const auto& f : frames) {
    if (f.width_px != f0.width_px || f.height_px != f0.height_px)
      fail(ErrorCode::DimensionMismatch, "frames of mixed geometry in " + path);
    if (f.intensities.size() != static_cast<std::size_t>(f.width_px) * f.height_px)
      fail(ErrorCode::TruncatedFrameData, "frame pixel count mismatch in " + path);
    put_u64(buf, static_cast<std::uint64_t>(f.timestamp_ms));
    buf.insert(buf.end(), f.intensities.begin(), f.intensities.end());
  }
  write_file_bytes(path, buf);
}

inline FrameSequence read_frames(const std::string& path) {
  auto data = read_file_bytes(path);
  ByteReader r(data.data(), data.size());
  if (r.remaining() < 4 || std::memcmp(r.bytes(4), "USKF", 4) != 0)
    fail(ErrorCode::MagicMismatch, path + ": bad magic, expected USKF");
  std::uint16_t version = r.u16();
  if (version != kFrameFormatVersion)
    fail(ErrorCode::FormatVersionMismatch,
         path + ": frame format version " + std::to_string(version));
  int width = r.u16();
  int height = r.u16();
  std::uint32_t spacing_um = r.u32();
  std::uint32_t count = r.u32();
  if (width <= 0 || height <= 0)
    fail(ErrorCode::MalformedRow, path + ": zero image dimensions");
  if (spacing_um == 0)
    fail(ErrorCode::MalformedRow, path + ": zero pixel spacing");
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  FrameSequence frames;
  frames.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (r.remaining() < 8 + pixels)
      fail(ErrorCode::TruncatedFrameData,
           path + ": declared " + std::to_string(count) + " frames, data ends at frame " +
               std::to_string(i));
    UltrasoundFrame f;
    f.timestamp_ms = static_cast<std::int64_t>(r.u64());
    f.width_px = width;
    f.height_px = height;
    f.pixel_spacing_mm = spacing_um / 1000.0;
    const std::uint8_t* px = r.bytes(pixels);
    f.intensities.assign(px, px + pixels);
    frames.push_back(std::move(f));
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Events / kinematics CSV formats
// ---------------------------------------------------------------------------

inline const char* event_kind_name(GaitEventKind k) {
  return k == GaitEventKind::HeelStrike ? "heel_strike" : "toe_off";
}

inline const char* transition_name(TransitionMark m) {
  switch (m) {
    case TransitionMark::None: return "none";
    case TransitionMark::WalkToStair: return "walk_to_stair";
    case TransitionMark::StairToWalk: return "stair_to_walk";
  }
  return "?";
}

inline void write_events(const std::string& path, const std::vector<GaitEvent>& events) {
  CsvWriter w(path);
  w.row({"timestamp_ms", "kind", "annotation"});
  for (const auto& e : events)
    w.row({std::to_string(e.timestamp_ms), event_kind_name(e.kind),
           transition_name(e.annotation)});
  w.close();
}

inline std::vector<GaitEvent> read_events(const std::string& path) {
  auto table = read_csv(path);
  int c_t = table.column("timestamp_ms");
  int c_k = table.column("kind");
  int c_a = table.column("annotation");
  if (c_t < 0 || c_k < 0 || c_a < 0)
    fail(ErrorCode::MalformedRow, path + ": expected header timestamp_ms,kind,annotation");
  std::vector<GaitEvent> events;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    std::string where = path + ":" + std::to_string(table.line_numbers[i]);
    GaitEvent e;
    e.timestamp_ms = parse_int(row[c_t], where);
    const std::string& kind = row[c_k];
    if (kind == "heel_strike") e.kind = GaitEventKind::HeelStrike;
    else if (kind == "toe_off") e.kind = GaitEventKind::ToeOff;
    else fail(ErrorCode::MalformedRow, where + ": unknown event kind '" + kind + "'");
    const std::string& ann = row[c_a];
    if (ann == "none") e.annotation = TransitionMark::None;
    else if (ann == "walk_to_stair") e.annotation = TransitionMark::WalkToStair;
    else if (ann == "stair_to_walk") e.annotation = TransitionMark::StairToWalk;
    else fail(ErrorCode::MalformedRow, where + ": unknown annotation '" + ann + "'");
    if (!events.empty() && e.timestamp_ms <= events.back().timestamp_ms)
      fail(ErrorCode::NonMonotonicTimestamps,
           where + ": event timestamps must be strictly increasing");
    events.push_back(e);
  }
  return events;
}

inline void write_kinematics(const std::string& path,
                             const std::vector<KinematicsSample>& samples) {
  CsvWriter w(path);
  w.row({"timestamp_ms", "knee_angle_deg", "knee_velocity_deg_s"});
  for (const auto& s : samples)
    w.row({std::to_string(s.timestamp_ms), format_double(s.knee_angle_deg, 12),
           format_double(s.knee_velocity_deg_s, 12)});
  w.close();
}

inline std::vector<KinematicsSample> read_kinematics(const std::string& path) {
  auto table = read_csv(path);
  int c_t = table.column("timestamp_ms");
  int c_a = table.column("knee_angle_deg");
  int c_v = table.column("knee_velocity_deg_s");
  if (c_t < 0 || c_a < 0 || c_v < 0)
    fail(ErrorCode::MalformedRow,
         path + ": expected header timestamp_ms,knee_angle_deg,knee_velocity_deg_s");
  std::vector<KinematicsSample> samples;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    std::string where = path + ":" + std::to_string(table.line_numbers[i]);
    KinematicsSample s;
    s.timestamp_ms = parse_int(row[c_t], where);
    s.knee_angle_deg = parse_double(row[c_a], where);
    s.knee_velocity_deg_s = parse_double(row[c_v], where);
    if (!samples.empty() && s.timestamp_ms <= samples.back().timestamp_ms)
      fail(ErrorCode::NonMonotonicTimestamps,
           where + ": kinematics timestamps must be strictly increasing");
    samples.push_back(s);
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Trial loading / writing
// ---------------------------------------------------------------------------

struct TrialMeta {
  std::string subject_id;
  Task task = Task::Level;
  int trial_index = 0;
};

inline TrialRecord load_trial(const std::string& frames_path,
                              const std::string& events_path,
                              const std::string& kinematics_path,
                              const TrialMeta& meta) {
  TrialRecord trial;
  trial.subject_id = meta.subject_id;
  trial.task = meta.task;
  trial.trial_index = meta.trial_index;
  trial.frames = read_frames(frames_path);
  if (trial.frames.empty()) fail(ErrorCode::EmptyTrial, frames_path + ": zero frames");
  std::sort(trial.frames.begin(), trial.frames.end(),
            [](const UltrasoundFrame& a, const UltrasoundFrame& b) {
              return a.timestamp_ms < b.timestamp_ms;
            });
  for (std::size_t i = 1; i < trial.frames.size(); ++i)
    if (trial.frames[i].timestamp_ms == trial.frames[i - 1].timestamp_ms)
      fail(ErrorCode::NonMonotonicTimestamps,
           frames_path + ": duplicate frame timestamp " +
               std::to_string(trial.frames[i].timestamp_ms));
  trial.events = read_events(events_path);
  trial.kinematics = read_kinematics(kinematics_path);
  if (trial.kinematics.empty())
    fail(ErrorCode::EmptyTrial, kinematics_path + ": zero kinematics samples");
  return trial;
}

inline void write_trial(const TrialRecord& trial, const std::string& frames_path,
                        const std::string& events_path,
                        const std::string& kinematics_path) {
  write_frames(frames_path, trial.frames);
  write_events(events_path, trial.events);
  write_kinematics(kinematics_path, trial.kinematics);
}

// ---------------------------------------------------------------------------
// Kinematics-to-frame synchronization
// ---------------------------------------------------------------------------

struct SyncSample {
  int frame_index = 0;
  std::int64_t timestamp_ms = 0;
  double knee_angle_deg = 0.0;
  double knee_velocity_deg_s = 0.0;
};

struct DroppedFrame {
  int frame_index = 0;
  std::string reason;
};

struct SyncResult {
  std::vector<SyncSample> samples;
  std::vector<DroppedFrame> dropped;
};

/// Max bracketing-gap for interpolation; one nominal frame period at 20 Hz.
constexpr std::int64_t kMaxInterpGapMs = 50;

inline SyncResult synchronize_kinematics(const TrialRecord& trial) {
  const auto& kin = trial.kinematics;
  if (trial.frames.empty() || kin.empty())
    fail(ErrorCode::EmptyTrial, "cannot synchronize an empty trial");
  const std::int64_t kin_lo = kin.front().timestamp_ms;
  const std::int64_t kin_hi = kin.back().timestamp_ms;
  const std::int64_t frm_lo = trial.frames.front().timestamp_ms;
  const std::int64_t frm_hi = trial.frames.back().timestamp_ms;
  if (frm_hi < kin_lo || frm_lo > kin_hi)
    fail(ErrorCode::NoOverlap, "frame span [" + std::to_string(frm_lo) + "," +
                                   std::to_string(frm_hi) +
                                   "] disjoint from kinematics span [" +
                                   std::to_string(kin_lo) + "," + std::to_string(kin_hi) + "]");

  SyncResult result;
  result.samples.reserve(trial.frames.size());
  std::size_t hi = 0;  // first kinematics index with timestamp >= frame time
  for (std::size_t i = 0; i < trial.frames.size(); ++i) {
    const std::int64_t t = trial.frames[i].timestamp_ms;
    if (t < kin_lo || t > kin_hi) {
      result.dropped.push_back({static_cast<int>(i), "outside kinematics span"});
      continue;
    }
    while (hi < kin.size() && kin[hi].timestamp_ms < t) ++hi;
    SyncSample s;
    s.frame_index = static_cast<int>(i);
    s.timestamp_ms = t;
    if (kin[hi].timestamp_ms == t) {
      s.knee_angle_deg = kin[hi].knee_angle_deg;
      s.knee_velocity_deg_s = kin[hi].knee_velocity_deg_s;
    } else {
      const auto& a = kin[hi - 1];
      const auto& b = kin[hi];
      if (b.timestamp_ms - a.timestamp_ms > kMaxInterpGapMs) {
        result.dropped.push_back(
            {static_cast<int>(i), "kinematics gap " +
                                      std::to_string(b.timestamp_ms - a.timestamp_ms) +
                                      " ms exceeds " + std::to_string(kMaxInterpGapMs) + " ms"});
        continue;
      }
      const double u = static_cast<double>(t - a.timestamp_ms) /
                       static_cast<double>(b.timestamp_ms - a.timestamp_ms);
      s.knee_angle_deg = a.knee_angle_deg + u * (b.knee_angle_deg - a.knee_angle_deg);
      s.knee_velocity_deg_s =
          a.knee_velocity_deg_s + u * (b.knee_velocity_deg_s - a.knee_velocity_deg_s);
    }
    result.samples.push_back(s);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Trial validation
// ---------------------------------------------------------------------------

struct ValidationReport {
  bool pass = true;
  std::vector<std::string> violations;

  void violation(const std::string& msg) {
    pass = false;
    violations.push_back(msg);
  }
};

inline ValidationReport validate_trial(const TrialRecord& trial) {
  ValidationReport report;
  if (trial.frames.empty()) {
    report.violation("trial has no frames");
    return report;
  }
  const auto& f0 = trial.frames.front();
  if (f0.pixel_spacing_mm <= 0.0) report.violation("pixel spacing must be positive");
  for (std::size_t i = 0; i < trial.frames.size(); ++i) {
    const auto& f = trial.frames[i];
    if (f.intensities.size() != static_cast<std::size_t>(f.width_px) * f.height_px) {
      report.violation("frame " + std::to_string(i) + " pixel count mismatch");
      break;
    }
    if (i > 0 && f.timestamp_ms <= trial.frames[i - 1].timestamp_ms) {
      report.violation("frame timestamps not strictly increasing at index " + std::to_string(i));
      break;
    }
  }
  for (std::size_t i = 1; i < trial.events.size(); ++i)
    if (trial.events[i].timestamp_ms <= trial.events[i - 1].timestamp_ms) {
      report.violation("event timestamps not strictly increasing");
      break;
    }
  for (std::size_t i = 1; i < trial.kinematics.size(); ++i)
    if (trial.kinematics[i].timestamp_ms <= trial.kinematics[i - 1].timestamp_ms) {
      report.violation("kinematics timestamps not strictly increasing");
      break;
    }

  int heel_strikes = 0;
  for (const auto& e : trial.events)
    if (e.kind == GaitEventKind::HeelStrike) ++heel_strikes;
  if (heel_strikes < 2)
    report.violation("insufficient gait events: need >= 2 heel-strikes, got " +
                     std::to_string(heel_strikes));

  if (trial.frames.size() >= 2) {
    const double span = static_cast<double>(trial.frames.back().timestamp_ms -
                                            trial.frames.front().timestamp_ms);
    const double mean_gap = span / static_cast<double>(trial.frames.size() - 1);
    if (mean_gap < 25.0 || mean_gap > 100.0)
      report.violation("frame rate out of range: mean inter-frame gap " +
                       format_double(mean_gap, 6) + " ms outside [25, 100]");
  }
  return report;
}

}  // namespace sonokin

#endif  // SONOKIN_FRAMES_HPP

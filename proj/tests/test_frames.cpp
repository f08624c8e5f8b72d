#include <catch2/catch_amalgamated.hpp>

#include "sonokin/frames.hpp"
#include "test_support.hpp"

using namespace sonokin;
using test_support::make_frame;
using test_support::random_frame;
using test_support::TempDir;
using test_support::throws_code;

namespace {

TrialRecord small_trial() {
  TrialRecord t;
  t.subject_id = "S1";
  t.task = Task::Level;
  t.trial_index = 0;
  for (int i = 0; i < 3; ++i) t.frames.push_back(make_frame(i * 50, 4, 4, 1.0, 100));
  t.events = {{0, GaitEventKind::HeelStrike, TransitionMark::None},
              {60, GaitEventKind::ToeOff, TransitionMark::None},
              {100, GaitEventKind::HeelStrike, TransitionMark::None}};
  for (int i = 0; i <= 10; ++i)
    t.kinematics.push_back({i * 10, static_cast<double>(i), 100.0});
  return t;
}

}  // namespace

TEST_CASE("trial round-trip is bit-identical") {
  TempDir dir("frames_roundtrip");
  Rng rng(99);
  TrialRecord t = small_trial();
  t.frames.clear();
  for (int i = 0; i < 5; ++i) t.frames.push_back(random_frame(i * 50 + 1, 6, 5, 0.5, rng));
  write_trial(t, dir.file("f.uskf"), dir.file("e.csv"), dir.file("k.csv"));
  TrialRecord back = load_trial(dir.file("f.uskf"), dir.file("e.csv"), dir.file("k.csv"),
                                {"S1", Task::Level, 0});
  REQUIRE(back.frames.size() == t.frames.size());
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    CHECK(back.frames[i].timestamp_ms == t.frames[i].timestamp_ms);
    CHECK(back.frames[i].pixel_spacing_mm == t.frames[i].pixel_spacing_mm);
    CHECK(back.frames[i].intensities == t.frames[i].intensities);
  }
  REQUIRE(back.events.size() == t.events.size());
  CHECK(back.events[1].kind == GaitEventKind::ToeOff);
  REQUIRE(back.kinematics.size() == t.kinematics.size());
  CHECK(back.kinematics[3].knee_angle_deg == t.kinematics[3].knee_angle_deg);
}

TEST_CASE("valid three-frame trial loads") {
  TempDir dir("frames_load");
  TrialRecord t = small_trial();
  write_trial(t, dir.file("f.uskf"), dir.file("e.csv"), dir.file("k.csv"));
  TrialRecord back = load_trial(dir.file("f.uskf"), dir.file("e.csv"), dir.file("k.csv"),
                                {"S1", Task::Level, 0});
  CHECK(back.frames.size() == 3);
}

TEST_CASE("truncated frame data is rejected") {
  TempDir dir("frames_trunc");
  TrialRecord t = small_trial();
  write_trial(t, dir.file("f.uskf"), dir.file("e.csv"), dir.file("k.csv"));
  auto bytes = read_file_bytes(dir.file("f.uskf"));
  // declare one more frame than the payload holds (count u32 lives at offset 14)
  bytes[14] = 4;
  write_file_bytes(dir.file("f.uskf"), bytes);
  CHECK(throws_code(ErrorCode::TruncatedFrameData, [&] { read_frames(dir.file("f.uskf")); }));
}

TEST_CASE("bad magic and bad version are rejected") {
  TempDir dir("frames_magic");
  TrialRecord t = small_trial();
  write_trial(t, dir.file("f.uskf"), dir.file("e.csv"), dir.file("k.csv"));
  auto bytes = read_file_bytes(dir.file("f.uskf"));
  auto corrupted = bytes;
  corrupted[0] = 'X';
  write_file_bytes(dir.file("bad_magic.uskf"), corrupted);
  CHECK(throws_code(ErrorCode::MagicMismatch,
                    [&] { read_frames(dir.file("bad_magic.uskf")); }));
  corrupted = bytes;
  corrupted[4] = 0xFF;
  write_file_bytes(dir.file("bad_version.uskf"), corrupted);
  CHECK(throws_code(ErrorCode::FormatVersionMismatch,
                    [&] { read_frames(dir.file("bad_version.uskf")); }));
}

TEST_CASE("non-monotonic event timestamps are rejected") {
  TempDir dir("frames_events");
  CsvWriter w(dir.file("e.csv"));
  w.row({"timestamp_ms", "kind", "annotation"});
  w.row({"100", "heel_strike", "none"});
  w.row({"90", "heel_strike", "none"});
  w.close();
  CHECK(throws_code(ErrorCode::NonMonotonicTimestamps, [&] { read_events(dir.file("e.csv")); }));
}

TEST_CASE("empty trial is rejected") {
  TempDir dir("frames_empty");
  TrialRecord t = small_trial();
  write_trial(t, dir.file("f.uskf"), dir.file("e.csv"), dir.file("k.csv"));
  // zero out the frame count and drop the payload (header is 18 bytes)
  auto bytes = read_file_bytes(dir.file("f.uskf"));
  bytes[14] = bytes[15] = bytes[16] = bytes[17] = 0;
  bytes.resize(18);
  write_file_bytes(dir.file("f.uskf"), bytes);
  CHECK(throws_code(ErrorCode::EmptyTrial, [&] {
    load_trial(dir.file("f.uskf"), dir.file("e.csv"), dir.file("k.csv"),
               {"S1", Task::Level, 0});
  }));
}

TEST_CASE("synchronization interpolates and drops over-gap frames") {
  TrialRecord t;
  t.subject_id = "S1";
  t.frames.push_back(make_frame(50, 2, 2, 1.0, 0));
  t.kinematics = {{0, 0.0, 0.0}, {100, 10.0, 20.0}};

  SECTION("midpoint") {
    // 100 ms bracket exceeds the 50 ms rule, so tighten the samples first
    t.kinematics = {{40, 4.0, 8.0}, {60, 6.0, 12.0}};
    auto sync = synchronize_kinematics(t);
    REQUIRE(sync.samples.size() == 1);
    CHECK(sync.samples[0].knee_angle_deg == Catch::Approx(5.0).margin(1e-12));
    CHECK(sync.samples[0].knee_velocity_deg_s == Catch::Approx(10.0).margin(1e-12));
  }

  SECTION("exact timestamp hit needs no bracket") {
    t.frames[0].timestamp_ms = 0;
    t.kinematics = {{0, 7.0, 1.0}, {200, 9.0, 2.0}};
    auto sync = synchronize_kinematics(t);
    REQUIRE(sync.samples.size() == 1);
    CHECK(sync.samples[0].knee_angle_deg == 7.0);
  }

  SECTION("gap larger than 50 ms drops the frame with a report") {
    t.frames[0].timestamp_ms = 100;
    t.kinematics = {{0, 0.0, 0.0}, {200, 10.0, 0.0}};
    auto sync = synchronize_kinematics(t);
    CHECK(sync.samples.empty());
    REQUIRE(sync.dropped.size() == 1);
    CHECK(sync.dropped[0].frame_index == 0);
  }

  SECTION("disjoint spans raise NoOverlap") {
    t.frames[0].timestamp_ms = 1000;
    t.kinematics = {{0, 0.0, 0.0}, {100, 1.0, 0.0}};
    CHECK(throws_code(ErrorCode::NoOverlap, [&] { synchronize_kinematics(t); }));
  }
}

TEST_CASE("synchronization is exact on affine signals") {
  TrialRecord t;
  t.subject_id = "S1";
  for (int i = 0; i < 40; ++i) t.frames.push_back(make_frame(13 + i * 50, 2, 2, 1.0, 0));
  const double a = 0.37, b = -4.2, c = -1.3, d = 9.0;
  for (int i = 0; i <= 210; ++i) {
    const std::int64_t ts = i * 10;
    t.kinematics.push_back({ts, a * static_cast<double>(ts) + b,
                            c * static_cast<double>(ts) + d});
  }
  auto sync = synchronize_kinematics(t);
  REQUIRE(sync.samples.size() == t.frames.size());
  for (const auto& s : sync.samples) {
    const double expect_angle = a * static_cast<double>(s.timestamp_ms) + b;
    const double expect_vel = c * static_cast<double>(s.timestamp_ms) + d;
    CHECK(s.knee_angle_deg ==
          Catch::Approx(expect_angle).epsilon(1e-9).margin(1e-9));
    CHECK(s.knee_velocity_deg_s ==
          Catch::Approx(expect_vel).epsilon(1e-9).margin(1e-9));
  }
}

TEST_CASE("retained frames always have both kinematics neighbors within 50 ms") {
  Rng rng(7);
  TrialRecord t;
  t.subject_id = "S1";
  for (int i = 0; i < 30; ++i) t.frames.push_back(make_frame(i * 50, 2, 2, 1.0, 0));
  // irregular kinematics with deliberate gaps
  std::int64_t ts = 0;
  while (ts < 1500) {
    t.kinematics.push_back({ts, rng.uniform(0, 90), rng.uniform(-300, 300)});
    ts += 5 + static_cast<std::int64_t>(rng.uniform() * 90.0);
  }
  auto sync = synchronize_kinematics(t);
  CHECK(sync.samples.size() + sync.dropped.size() == t.frames.size());
  CHECK(sync.samples.size() <= t.frames.size());
  for (const auto& s : sync.samples) {
    // locate the bracketing samples again
    std::int64_t lo = -100000, hi = 100000;
    for (const auto& k : t.kinematics) {
      if (k.timestamp_ms <= s.timestamp_ms) lo = std::max(lo, k.timestamp_ms - s.timestamp_ms);
      if (k.timestamp_ms >= s.timestamp_ms) hi = std::min(hi, k.timestamp_ms - s.timestamp_ms);
    }
    CHECK(-lo <= kMaxInterpGapMs);
    CHECK(hi <= kMaxInterpGapMs);
  }
}

TEST_CASE("trial validation") {
  TrialRecord t = small_trial();

  SECTION("well-formed trial passes") {
    auto report = validate_trial(t);
    CHECK(report.pass);
    CHECK(report.violations.empty());
  }

  SECTION("single heel-strike fails") {
    t.events = {{0, GaitEventKind::HeelStrike, TransitionMark::None}};
    auto report = validate_trial(t);
    REQUIRE_FALSE(report.pass);
    bool found = false;
    for (const auto& v : report.violations)
      if (v.find("insufficient gait events") != std::string::npos) found = true;
    CHECK(found);
  }

  SECTION("10 ms inter-frame gap fails the 20 Hz check") {
    t.frames.clear();
    for (int i = 0; i < 5; ++i) t.frames.push_back(make_frame(i * 10, 4, 4, 1.0, 100));
    auto report = validate_trial(t);
    REQUIRE_FALSE(report.pass);
    bool found = false;
    for (const auto& v : report.violations)
      if (v.find("frame rate out of range") != std::string::npos) found = true;
    CHECK(found);
  }
}

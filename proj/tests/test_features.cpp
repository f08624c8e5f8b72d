#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sonokin/features.hpp"
#include "test_support.hpp"

using namespace sonokin;
using test_support::make_frame;
using test_support::random_frame;
using test_support::throws_code;

TEST_CASE("uniform frame yields constant features") {
  FrameSequence frames{make_frame(0, 12, 12, 1.0, 100)};
  KernelGrid grid;
  FeatureMatrix fm = extract_intensity_features(frames, {}, &grid);
  REQUIRE(fm.samples() == 1);
  REQUIRE(fm.dims() == grid.n());
  for (Eigen::Index j = 0; j < fm.dims(); ++j) CHECK(fm.values(0, j) == 100.0);
}

TEST_CASE("6x6 frame at 1 mm spacing gives a 2x2 grid of 3 px kernels") {
  UltrasoundFrame f = make_frame(0, 6, 6, 1.0, 0);
  for (int i = 0; i < 36; ++i) f.intensities[static_cast<std::size_t>(i)] =
      static_cast<std::uint8_t>(i < 9 ? i : 50);
  // top-left 3x3 block holds pixels {0..8} laid out rows {0,1,2},{6,7,8}... place explicitly
  int v = 0;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      f.intensities[static_cast<std::size_t>(y) * 6 + x] = static_cast<std::uint8_t>(v++);
  KernelGrid grid;
  FeatureMatrix fm = extract_intensity_features({f}, {}, &grid);
  CHECK(grid.kernel_px == 3);
  CHECK(grid.rows == 2);
  CHECK(grid.cols == 2);
  CHECK(fm.dims() == 4);
  CHECK(fm.values(0, 0) == 4.0);  // mean of 0..8
}

TEST_CASE("5x5 frame with 3 px kernels discards partial edges") {
  KernelGrid grid;
  FeatureMatrix fm = extract_intensity_features({make_frame(0, 5, 5, 1.0, 9)}, {}, &grid);
  CHECK(grid.rows == 1);
  CHECK(grid.cols == 1);
  CHECK(fm.dims() == 1);
}

TEST_CASE("image smaller than one kernel is rejected") {
  CHECK(throws_code(ErrorCode::FrameTooSmall, [] {
    extract_intensity_features({make_frame(0, 2, 2, 1.0, 9)}, {});
  }));
}

TEST_CASE("kernel means match the brute-force pixel-block oracle exactly") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 7 + static_cast<int>(rng.next_u64() % 30);
    const int h = 7 + static_cast<int>(rng.next_u64() % 30);
    UltrasoundFrame f = random_frame(0, w, h, 0.75, rng);
    KernelGrid grid;
    FeatureMatrix fm = extract_intensity_features({f}, {}, &grid);
    for (int r = 0; r < grid.rows; ++r)
      for (int c = 0; c < grid.cols; ++c)
        REQUIRE(fm.values(0, r * grid.cols + c) ==
                test_oracles::brute_force_kernel_mean(f, grid.kernel_px, r, c));
  }
}

TEST_CASE("feature ordering is depth-major") {
  // single bright kernel at grid position (1, 2) in a 3x4 grid
  UltrasoundFrame f = make_frame(0, 12, 9, 1.0, 0);
  for (int y = 3; y < 6; ++y)
    for (int x = 6; x < 9; ++x) f.intensities[static_cast<std::size_t>(y) * 12 + x] = 200;
  KernelGrid grid;
  FeatureMatrix fm = extract_intensity_features({f}, {}, &grid);
  REQUIRE(grid.rows == 3);
  REQUIRE(grid.cols == 4);
  for (Eigen::Index j = 0; j < fm.dims(); ++j) {
    if (j == 1 * 4 + 2) CHECK(fm.values(0, j) == 200.0);
    else CHECK(fm.values(0, j) == 0.0);
  }
}

TEST_CASE("extraction is per-frame and stateless under permutation") {
  Rng rng(5);
  FrameSequence frames;
  for (int i = 0; i < 6; ++i) frames.push_back(random_frame(i * 50, 9, 9, 1.0, rng));
  FeatureMatrix forward = extract_intensity_features(frames, {});
  FrameSequence reversed(frames.rbegin(), frames.rend());
  FeatureMatrix backward = extract_intensity_features(reversed, {});
  for (Eigen::Index i = 0; i < forward.samples(); ++i)
    CHECK(forward.values.row(i) == backward.values.row(forward.samples() - 1 - i));
}

TEST_CASE("temporal features") {
  FeatureMatrix intensity;
  intensity.values.resize(3, 2);
  intensity.values << 10, 4, 12, 4, 16, 4;
  intensity.frame_indices = {0, 1, 2};

  SECTION("constant dimensions have zero derivative") {
    FeatureMatrix temporal = compute_temporal_features(intensity, {0, 50, 100});
    REQUIRE(temporal.samples() == 2);
    CHECK(temporal.values(0, 1) == 0.0);
    CHECK(temporal.values(1, 1) == 0.0);
  }

  SECTION("ramp of 2 units over 50 ms gives 40 per second") {
    FeatureMatrix temporal = compute_temporal_features(intensity, {0, 50, 100});
    CHECK(temporal.values(0, 0) == Catch::Approx(40.0));
    CHECK(temporal.values(1, 0) == Catch::Approx(80.0));
    CHECK(temporal.frame_indices == std::vector<int>{1, 2});
  }

  SECTION("single frame is rejected") {
    FeatureMatrix one;
    one.values.resize(1, 2);
    one.values << 1, 2;
    one.frame_indices = {0};
    CHECK(throws_code(ErrorCode::TooFewFrames,
                      [&] { compute_temporal_features(one, {0}); }));
  }

  SECTION("non-increasing timestamps are rejected") {
    CHECK(throws_code(ErrorCode::ZeroTimeDelta,
                      [&] { compute_temporal_features(intensity, {0, 50, 50}); }));
  }
}

TEST_CASE("time reversal negates and reverses temporal features") {
  Rng rng(11);
  FrameSequence frames;
  for (int i = 0; i < 8; ++i) frames.push_back(random_frame(i * 50, 6, 6, 1.0, rng));
  FeatureMatrix fwd_int = extract_intensity_features(frames, {});
  std::vector<std::int64_t> times;
  for (const auto& f : frames) times.push_back(f.timestamp_ms);
  FeatureMatrix fwd_tmp = compute_temporal_features(fwd_int, times);

  FrameSequence rev(frames.rbegin(), frames.rend());
  for (std::size_t i = 0; i < rev.size(); ++i) rev[i].timestamp_ms = static_cast<int>(i) * 50;
  FeatureMatrix rev_int = extract_intensity_features(rev, {});
  FeatureMatrix rev_tmp = compute_temporal_features(rev_int, times);

  REQUIRE(fwd_tmp.samples() == rev_tmp.samples());
  const Eigen::Index n = fwd_tmp.samples();
  for (Eigen::Index i = 0; i < n; ++i)
    CHECK((fwd_tmp.values.row(i) + rev_tmp.values.row(n - 1 - i)).cwiseAbs().maxCoeff() <
          1e-9);
}

TEST_CASE("assembling feature sets") {
  Rng rng(3);
  FrameSequence frames;
  for (int i = 0; i < 10; ++i) frames.push_back(random_frame(i * 50, 6, 6, 1.0, rng));
  FeatureMatrix intensity = extract_intensity_features(frames, {});
  std::vector<std::int64_t> times;
  for (const auto& f : frames) times.push_back(f.timestamp_ms);
  FeatureMatrix temporal = compute_temporal_features(intensity, times);

  SECTION("intensity-only passes rows through") {
    FeatureConfig config;
    config.include_temporal = false;
    FeatureMatrix out = assemble_feature_matrix(intensity, nullptr, config);
    CHECK(out.samples() == 10);
    CHECK(out.dims() == 4);
    CHECK(out.layout == ChannelLayout::IntensityOnly);
  }

  SECTION("with temporal drops the first frame and doubles dims") {
    FeatureConfig config;
    config.include_temporal = true;
    FeatureMatrix out = assemble_feature_matrix(intensity, &temporal, config);
    CHECK(out.samples() == 9);
    CHECK(out.dims() == 8);
    CHECK(out.layout == ChannelLayout::IntensityThenTemporal);
    CHECK(out.frame_indices.front() == 1);
    // intensity block first, temporal block second
    CHECK(out.values(0, 0) == intensity.values(1, 0));
    CHECK(out.values(0, 4) == temporal.values(0, 0));
  }

  SECTION("mismatched frame indices are rejected") {
    FeatureConfig config;
    config.include_temporal = true;
    FeatureMatrix bad = temporal;
    bad.frame_indices[2] = 99;
    CHECK(throws_code(ErrorCode::MisalignedRows,
                      [&] { assemble_feature_matrix(intensity, &bad, config); }));
  }
}

TEST_CASE("standardization") {
  SECTION("train column [1, 3] maps to [-1, 1] with population SD") {
    Eigen::MatrixXd train(2, 1);
    train << 1.0, 3.0;
    auto [scaler, transformed] = standardize(train, train);
    CHECK(scaler.mean(0) == 2.0);
    CHECK(scaler.sd(0) == 1.0);
    CHECK(transformed(0, 0) == -1.0);
    CHECK(transformed(1, 0) == 1.0);
  }

  SECTION("constant column floors the SD and maps to zero") {
    Eigen::MatrixXd train(3, 1);
    train << 5.0, 5.0, 5.0;
    auto [scaler, transformed] = standardize(train, train);
    CHECK(scaler.sd(0) == Standardization::kSdFloor);
    for (int i = 0; i < 3; ++i) CHECK(transformed(i, 0) == 0.0);
  }

  SECTION("a row equal to the train mean maps to zeros") {
    Eigen::MatrixXd train(4, 2);
    train << 1, 10, 3, 20, 5, 30, 7, 40;
    Eigen::MatrixXd probe(1, 2);
    probe << 4.0, 25.0;
    auto [scaler, transformed] = standardize(train, probe);
    CHECK(transformed(0, 0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(transformed(0, 1) == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("train statistics give mean 0 and SD 1 on the training rows") {
    Rng rng(17);
    Eigen::MatrixXd train(50, 4);
    for (Eigen::Index i = 0; i < train.rows(); ++i)
      for (Eigen::Index j = 0; j < train.cols(); ++j)
        train(i, j) = rng.uniform(-40.0, 200.0);
    auto [scaler, transformed] = standardize(train, train);
    for (Eigen::Index j = 0; j < train.cols(); ++j) {
      CHECK(std::abs(transformed.col(j).mean()) < 1e-9);
      const double var = transformed.col(j).squaredNorm() / transformed.rows();
      CHECK(std::abs(var - 1.0) < 1e-9);
    }
  }
}

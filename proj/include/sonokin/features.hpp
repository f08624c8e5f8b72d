#ifndef SONOKIN_FEATURES_HPP
#define SONOKIN_FEATURES_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sonokin/common.hpp"
#include "sonokin/csv.hpp"
#include "sonokin/frames.hpp"

namespace sonokin {

struct FeatureConfig {
  double kernel_size_mm = 3.0;
  bool include_temporal = false;
  bool standardize = true;
};

/// Non-overlapping square tiling anchored top-left; partial edge kernels discarded.
struct KernelGrid {
  int kernel_px = 0;
  int rows = 0;
  int cols = 0;
  int n() const { return rows * cols; }
};

inline KernelGrid make_kernel_grid(int width_px, int height_px, double pixel_spacing_mm,
                                   double kernel_size_mm) {
  if (kernel_size_mm <= 0.0) fail(ErrorCode::ConfigError, "kernel_size_mm must be positive");
  if (pixel_spacing_mm <= 0.0) fail(ErrorCode::ConfigError, "pixel spacing must be positive");
  KernelGrid grid;
  grid.kernel_px = std::max(1, static_cast<int>(std::lround(kernel_size_mm / pixel_spacing_mm)));
  grid.rows = height_px / grid.kernel_px;
  grid.cols = width_px / grid.kernel_px;
  if (grid.rows == 0 || grid.cols == 0)
    fail(ErrorCode::FrameTooSmall,
         "image " + std::to_string(width_px) + "x" + std::to_string(height_px) +
             " px smaller than one " + std::to_string(grid.kernel_px) + " px kernel");
  return grid;
}

enum class ChannelLayout { IntensityOnly, IntensityThenTemporal };

/// samples x dims matrix plus the frame each row came from.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<int> frame_indices;
  ChannelLayout layout = ChannelLayout::IntensityOnly;

  Eigen::Index samples() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

/// Mean intensity of each kernel, depth-major: kernel (r, c) -> flat index r*cols + c,
/// so superficial tissue comes first. Integer pixel sums keep the means exact.
inline FeatureMatrix extract_intensity_features(const FrameSequence& frames,
                                                const FeatureConfig& config,
                                                KernelGrid* grid_out = nullptr) {
  if (frames.empty()) fail(ErrorCode::EmptyInput, "no frames to extract features from");
  const auto& f0 = frames.front();
  for (const auto& f : frames)
    if (f.width_px != f0.width_px || f.height_px != f0.height_px ||
        f.pixel_spacing_mm != f0.pixel_spacing_mm)
      fail(ErrorCode::DimensionMismatch, "frames of mixed geometry");

  const KernelGrid grid =
      make_kernel_grid(f0.width_px, f0.height_px, f0.pixel_spacing_mm, config.kernel_size_mm);
  if (grid_out) *grid_out = grid;
  const int k = grid.kernel_px;
  const std::uint64_t area = static_cast<std::uint64_t>(k) * k;

  FeatureMatrix fm;
  fm.layout = ChannelLayout::IntensityOnly;
  fm.values.resize(static_cast<Eigen::Index>(frames.size()), grid.n());
  fm.frame_indices.resize(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    fm.frame_indices[i] = static_cast<int>(i);
    for (int r = 0; r < grid.rows; ++r) {
      for (int c = 0; c < grid.cols; ++c) {
        std::uint64_t sum = 0;
        for (int y = r * k; y < (r + 1) * k; ++y) {
          const std::uint8_t* row = f.intensities.data() + static_cast<std::size_t>(y) * f.width_px;
          for (int x = c * k; x < (c + 1) * k; ++x) sum += row[x];
        }
        fm.values(static_cast<Eigen::Index>(i), r * grid.cols + c) =
            static_cast<double>(sum) / static_cast<double>(area);
      }
    }
  }
  return fm;
}

/// Row t (t >= 1) holds (intensity[t] - intensity[t-1]) / dt_seconds, attributed to
/// the later frame so every sample uses only past information.
inline FeatureMatrix compute_temporal_features(const FeatureMatrix& intensity,
                                               const std::vector<std::int64_t>& timestamps_ms) {
  if (intensity.samples() < 2)
    fail(ErrorCode::TooFewFrames, "temporal features need at least 2 frames");
  if (static_cast<Eigen::Index>(timestamps_ms.size()) != intensity.samples())
    fail(ErrorCode::LengthMismatch, "one timestamp per intensity row required");

  FeatureMatrix out;
  out.layout = ChannelLayout::IntensityOnly;  // a bare derivative block
  out.values.resize(intensity.samples() - 1, intensity.dims());
  out.frame_indices.resize(static_cast<std::size_t>(intensity.samples()) - 1);
  for (Eigen::Index t = 1; t < intensity.samples(); ++t) {
    const std::int64_t dt_ms = timestamps_ms[t] - timestamps_ms[t - 1];
    if (dt_ms <= 0)
      fail(ErrorCode::ZeroTimeDelta,
           "non-increasing timestamps at frame " + std::to_string(t));
    const double dt_s = static_cast<double>(dt_ms) / 1000.0;
    out.values.row(t - 1) = (intensity.values.row(t) - intensity.values.row(t - 1)) / dt_s;
    out.frame_indices[static_cast<std::size_t>(t) - 1] =
        intensity.frame_indices[static_cast<std::size_t>(t)];
  }
  return out;
}

/// IntensityOnly: rows pass through. IntensityThenTemporal: per frame t >= 1 the row is
/// [intensity(t), temporal(t)]; the first frame is dropped so the two feature sets
/// compare over an aligned sample set.
inline FeatureMatrix assemble_feature_matrix(const FeatureMatrix& intensity,
                                             const FeatureMatrix* temporal,
                                             const FeatureConfig& config) {
  if (!config.include_temporal || temporal == nullptr) {
    FeatureMatrix out = intensity;
    out.layout = ChannelLayout::IntensityOnly;
    return out;
  }
  if (temporal->samples() != intensity.samples() - 1)
    fail(ErrorCode::MisalignedRows, "temporal rows must cover frames 1..N-1");
  for (Eigen::Index t = 0; t < temporal->samples(); ++t)
    if (temporal->frame_indices[static_cast<std::size_t>(t)] !=
        intensity.frame_indices[static_cast<std::size_t>(t) + 1])
      fail(ErrorCode::MisalignedRows,
           "temporal row " + std::to_string(t) + " maps to a different frame");

  FeatureMatrix out;
  out.layout = ChannelLayout::IntensityThenTemporal;
  out.values.resize(temporal->samples(), intensity.dims() + temporal->dims());
  out.values << intensity.values.bottomRows(temporal->samples()), temporal->values;
  out.frame_indices = temporal->frame_indices;
  return out;
}

/// Per-dimension z-score parameters, estimated on training rows only.
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // floored, safe to divide by

  static constexpr double kSdFloor = 1e-8;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const {
    return (rows.rowwise() - mean.transpose()).array().rowwise() /
           sd.transpose().array();
  }
};

inline Standardization fit_standardization(const Eigen::MatrixXd& train_rows) {
  if (train_rows.rows() == 0)
    fail(ErrorCode::EmptyInput, "standardization needs at least one training row");
  Standardization s;
  s.mean = train_rows.colwise().mean();
  Eigen::MatrixXd centered = train_rows.rowwise() - s.mean.transpose();
  // population SD
  s.sd = (centered.array().square().colwise().sum() /
          static_cast<double>(train_rows.rows()))
             .sqrt()
             .matrix()
             .transpose();
  for (Eigen::Index j = 0; j < s.sd.size(); ++j)
    if (s.sd(j) < Standardization::kSdFloor) s.sd(j) = Standardization::kSdFloor;
  return s;
}

inline std::pair<Standardization, Eigen::MatrixXd> standardize(
    const Eigen::MatrixXd& train_rows, const Eigen::MatrixXd& apply_rows) {
  Standardization s = fit_standardization(train_rows);
  return {s, s.apply(apply_rows)};
}

/// CSV export (header: frame_index,f0..f{dims-1}) for inspection and plot tooling.
inline void write_feature_csv(const std::string& path, const FeatureMatrix& fm) {
  CsvWriter w(path);
  std::vector<std::string> header{"frame_index"};
  for (Eigen::Index j = 0; j < fm.dims(); ++j) header.push_back("f" + std::to_string(j));
  w.row(header);
  for (Eigen::Index i = 0; i < fm.samples(); ++i) {
    std::vector<std::string> row{std::to_string(fm.frame_indices[static_cast<std::size_t>(i)])};
    for (Eigen::Index j = 0; j < fm.dims(); ++j)
      row.push_back(format_double(fm.values(i, j), 12));
    w.row(row);
  }
  w.close();
}

}  // namespace sonokin

#endif  // SONOKIN_FEATURES_HPP

#ifndef SONOKIN_TESTS_SUPPORT_HPP
#define SONOKIN_TESTS_SUPPORT_HPP

#include <filesystem>
#include <functional>
#include <string>

#include "sonokin/common.hpp"
#include "sonokin/frames.hpp"
#include "sonokin/rng.hpp"

namespace sonokin::test_support {

/// Run fn and return the ErrorCode it throws; fails the caller if it doesn't throw.
template <typename Fn>
bool throws_code(ErrorCode expected, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == expected;
  }
  return false;
}

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = (std::filesystem::temp_directory_path() /
             ("sonokin_test_" + tag + "_" + std::to_string(++counter)))
                .string();
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

inline UltrasoundFrame make_frame(std::int64_t t_ms, int width, int height, double spacing_mm,
                                  std::uint8_t fill) {
  UltrasoundFrame f;
  f.timestamp_ms = t_ms;
  f.width_px = width;
  f.height_px = height;
  f.pixel_spacing_mm = spacing_mm;
  f.intensities.assign(static_cast<std::size_t>(width) * height, fill);
  return f;
}

inline UltrasoundFrame random_frame(std::int64_t t_ms, int width, int height, double spacing_mm,
                                    Rng& rng) {
  UltrasoundFrame f = make_frame(t_ms, width, height, spacing_mm, 0);
  for (auto& px : f.intensities)
    px = static_cast<std::uint8_t>(rng.next_u64() & 0xFF);
  return f;
}

}  // namespace sonokin::test_support

#endif  // SONOKIN_TESTS_SUPPORT_HPP

#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "forge/image.hpp"
#include "forge/random.hpp"

namespace forge::test {

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("forge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path data_dir() { return FORGE_DATA_DIR; }

inline const ImageBuffer& test_image() {
  static const ImageBuffer img = read_image(data_dir() / "astronaut_256.png");
  return img;
}

/// Uniform noise image; handy when content does not matter.
inline ImageBuffer random_image(int w, int h, int c, std::uint64_t seed) {
  ImageBuffer img(w, h, c);
  Rng rng(seed);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

/// Smooth image with structure at several scales (aperiodic).
inline ImageBuffer smooth_image(int w, int h, std::uint64_t seed) {
  ImageBuffer img(w, h, 3);
  Rng rng(seed);
  double f[6];
  for (double& v : f) v = rng.uniform(0.02, 0.3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = 128 + 50 * std::sin(f[c] * x + f[c + 3] * y + c) + 40 * std::cos(0.37 * f[c] * x * y / 8.0);
        img.at(x, y, c) = to_u8(v);
      }
    }
  }
  return img;
}

}  // namespace forge::test

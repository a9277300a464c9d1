#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

/// Row-major, interleaved 8-bit image. channels is 1 (gray) or 3 (RGB).
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, std::uint8_t fill = 0);
  ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool same_shape(const ImageBuffer& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  std::uint8_t at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  bool operator==(const ImageBuffer&) const = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Row-major 0/1 mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool get(int x, int y) const noexcept { return bits_[idx(x, y)] != 0; }
  void set(int x, int y, bool v = true) noexcept { bits_[idx(x, y)] = v ? 1 : 0; }
  std::size_t count() const noexcept;
  bool matches(const ImageBuffer& img) const noexcept {
    return width_ == img.width() && height_ == img.height();
  }
  BinaryMask operator|(const BinaryMask& o) const;
  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t idx(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

double luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;
/// Per-pixel luma as doubles (gray images are passed through).
std::vector<double> luma_plane(const ImageBuffer& img);

/// Round half to even, then clamp to [0, 255].
std::uint8_t to_u8(double v) noexcept;

double psnr(const ImageBuffer& a, const ImageBuffer& b);

// Codecs. PPM covers P5 (gray) and P6 (RGB); PNG goes through libpng with
// fixed settings so equal images encode to equal bytes.
std::vector<std::uint8_t> encode_ppm(const ImageBuffer& img);
ImageBuffer decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
ImageBuffer decode_png(std::span<const std::uint8_t> bytes);

ImageBuffer read_image(const std::filesystem::path& path);
void write_image(const ImageBuffer& img, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Write via temp file + rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// Content-addressed image storage.
///
/// put() encodes to PPM, names the file by the SHA-256 of those bytes, and
/// returns a ref relative to the store root ("<subdir>/<hex>.ppm"). Refs that
/// are not produced by put() are treated as paths relative to the root.
/// Without a root the store keeps images in memory (tests, dry runs).
/// Thread-safe.
class ImageStore {
 public:
  ImageStore() = default;
  explicit ImageStore(std::filesystem::path root, std::string subdir = "images");

  std::string put(const ImageBuffer& img);
  /// Store under a caller-chosen ref (path); the extension picks the codec.
  void insert(const std::string& ref, const ImageBuffer& img);
  ImageBuffer get(const std::string& ref) const;
  bool in_memory() const noexcept { return !root_.has_value(); }
  std::optional<std::filesystem::path> resolve(const std::string& ref) const;

 private:
  std::optional<std::filesystem::path> root_;
  std::string subdir_ = "images";
  mutable std::mutex mu_;
  std::map<std::string, ImageBuffer> memory_;
};

}  // namespace forge

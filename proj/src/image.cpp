#include "forge/image.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <csetjmp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>
#include <cctype>

#include "forge/error.hpp"

namespace forge {

namespace fs = std::filesystem;

ImageBuffer::ImageBuffer(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 1 || height < 1) throw InvalidArgument("image dims must be positive");
  if (channels != 1 && channels != 3) throw InvalidArgument("image channels must be 1 or 3");
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 1 || height < 1) throw InvalidArgument("image dims must be positive");
  if (channels != 1 && channels != 3) throw InvalidArgument("image channels must be 1 or 3");
  if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
    throw InvalidArgument("image data length does not match width*height*channels");
  }
}

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw InvalidArgument("mask dims must be positive");
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0);
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::operator|(const BinaryMask& o) const {
  if (o.width_ != width_ || o.height_ != height_) throw InvalidArgument("mask dims differ");
  BinaryMask out = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] | o.bits_[i];
  return out;
}

double luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

std::vector<double> luma_plane(const ImageBuffer& img) {
  std::vector<double> out(img.pixel_count());
  const auto px = img.data();
  if (img.channels() == 1) {
    std::transform(px.begin(), px.end(), out.begin(), [](std::uint8_t v) { return double(v); });
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    }
  }
  return out;
}

std::uint8_t to_u8(double v) noexcept {
  if (!(v == v)) return 0;
  const double r = std::nearbyint(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw InvalidArgument("psnr: image shapes differ");
  double se = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = double(da[i]) - double(db[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(da.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// ---------------------------------------------------------------------------
// PPM

std::vector<std::uint8_t> encode_ppm(const ImageBuffer& img) {
  std::string header = (img.channels() == 3 ? "P6\n" : "P5\n") + std::to_string(img.width()) +
                       " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data().begin(), img.data().end());
  return out;
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(char(bytes[pos++]));
  return tok;
}

}  // namespace

ImageBuffer decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  int channels = 0;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw IoError("ppm: unsupported magic '" + magic + "'");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(bytes, pos));
    h = std::stoi(next_token(bytes, pos));
    maxval = std::stoi(next_token(bytes, pos));
  } catch (const std::exception&) {
    throw IoError("ppm: malformed header");
  }
  if (maxval != 255) throw IoError("ppm: only 8-bit maxval 255 is supported");
  ++pos;  // single whitespace after maxval
  const std::size_t need = std::size_t(w) * std::size_t(h) * std::size_t(channels);
  if (w < 1 || h < 1 || bytes.size() < pos + need) throw IoError("ppm: truncated data");
  return ImageBuffer(w, h, channels, std::vector<std::uint8_t>(bytes.begin() + pos,
                                                               bytes.begin() + pos + need));
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + n > cur->bytes.size()) png_error(png, "truncated png");
  std::memcpy(out, cur->bytes.data() + cur->pos, n);
  cur->pos += n;
}

void png_write_cb(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

void png_flush_cb(png_structp) {}

void png_warning_cb(png_structp, png_const_charp) {}

// libpng reports errors by longjmp. Everything owned by C++ lives in the
// callers' frames, outside the setjmp region, so nothing is skipped.
bool png_encode_rows(const ImageBuffer& img, std::vector<std::uint8_t>& out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, png_uint_32(img.width()), png_uint_32(img.height()), 8,
               img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_write_info(png, info);
  const std::size_t stride = std::size_t(img.width()) * std::size_t(img.channels());
  for (int y = 0; y < img.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(img.data().data() + std::size_t(y) * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct PngHeader {
  int width = 0;
  int height = 0;
  int channels = 0;
};

bool png_decode_rows(PngReadCursor& cursor, PngHeader& header, std::vector<std::uint8_t>& data,
                     std::vector<png_bytep>& rows) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &cursor, png_read_cb);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if ((color & PNG_COLOR_MASK_ALPHA) || png_get_valid(png, info, PNG_INFO_tRNS)) {
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  header.width = int(png_get_image_width(png, info));
  header.height = int(png_get_image_height(png, info));
  header.channels = int(png_get_channels(png, info));
  if (header.channels != 1 && header.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  const std::size_t stride = std::size_t(header.width) * std::size_t(header.channels);
  data.resize(stride * std::size_t(header.height));
  rows.resize(std::size_t(header.height));
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  std::vector<std::uint8_t> out;
  if (!png_encode_rows(img, out)) throw IoError("png: encode failed");
  return out;
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("png: bad signature");
  PngReadCursor cursor{bytes, 0};
  PngHeader header;
  std::vector<std::uint8_t> data;
  std::vector<png_bytep> rows;
  if (!png_decode_rows(cursor, header, data, rows)) throw IoError("png: decode failed");
  return ImageBuffer(header.width, header.height, header.channels, std::move(data));
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Unique per thread so concurrent writers of the same content do not collide.
  std::ostringstream suffix;
  suffix << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id());
  fs::path tmp = path;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

void write_file_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ImageBuffer read_image(const fs::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_ppm(bytes);
  throw IoError("unsupported image format: " + path.string());
}

void write_image(const ImageBuffer& img, const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") {
    write_file_atomic(path, encode_png(img));
  } else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
    write_file_atomic(path, encode_ppm(img));
  } else {
    throw IoError("unsupported image extension: " + path.string());
  }
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// ImageStore

ImageStore::ImageStore(fs::path root, std::string subdir) : root_(std::move(root)), subdir_(std::move(subdir)) {}

std::string ImageStore::put(const ImageBuffer& img) {
  const auto bytes = encode_ppm(img);
  const std::string ref = subdir_ + "/" + sha256_hex(bytes) + (img.channels() == 3 ? ".ppm" : ".pgm");
  if (!root_) {
    std::lock_guard lock(mu_);
    memory_.try_emplace(ref, img);
    return ref;
  }
  const fs::path path = *root_ / ref;
  if (!fs::exists(path)) write_file_atomic(path, bytes);
  return ref;
}

void ImageStore::insert(const std::string& ref, const ImageBuffer& img) {
  if (!root_) {
    std::lock_guard lock(mu_);
    memory_.insert_or_assign(ref, img);
    return;
  }
  write_image(img, *resolve(ref));
}

std::optional<fs::path> ImageStore::resolve(const std::string& ref) const {
  if (!root_) return std::nullopt;
  const fs::path p(ref);
  return p.is_absolute() ? p : *root_ / p;
}

ImageBuffer ImageStore::get(const std::string& ref) const {
  if (!root_) {
    std::lock_guard lock(mu_);
    const auto it = memory_.find(ref);
    if (it == memory_.end()) throw IoError("image ref not in store: " + ref);
    return it->second;
  }
  return read_image(*resolve(ref));
}

}  // namespace forge

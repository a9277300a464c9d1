#include "forge/jpeg_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "forge/error.hpp"

namespace forge {

namespace {

constexpr int kLumaBase[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr int kChromaBase[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct DctBasis {
  double c[8][8];  // c[u][x] = alpha(u) cos((2x + 1) u pi / 16)
  DctBasis() {
    for (int u = 0; u < 8; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) c[u][x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;
  double& at(int x, int y) { return v[std::size_t(y * w + x)]; }
  double at(int x, int y) const { return v[std::size_t(y * w + x)]; }
};

// Quantize one plane in place: pad by edge replication to whole blocks,
// forward DCT, quantize, dequantize, inverse DCT, crop.
void quantize_plane(Plane& p, const QuantTable& q) {
  const auto& B = basis();
  const int bw = (p.w + 7) / 8;
  const int bh = (p.h + 7) / 8;
  double block[8][8], tmp[8][8], coef[8][8];
  for (int by = 0; by < bh; ++by) {
    for (int bx = 0; bx < bw; ++bx) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          block[y][x] = p.at(std::min(bx * 8 + x, p.w - 1), std::min(by * 8 + y, p.h - 1)) - 128.0;
        }
      }
      for (int y = 0; y < 8; ++y) {
        for (int u = 0; u < 8; ++u) {
          double s = 0.0;
          for (int x = 0; x < 8; ++x) s += B.c[u][x] * block[y][x];
          tmp[y][u] = s;
        }
      }
      for (int v = 0; v < 8; ++v) {
        for (int u = 0; u < 8; ++u) {
          double s = 0.0;
          for (int y = 0; y < 8; ++y) s += B.c[v][y] * tmp[y][u];
          const double step = q[std::size_t(v * 8 + u)];
          coef[v][u] = std::nearbyint(s / step) * step;
        }
      }
      for (int v = 0; v < 8; ++v) {
        for (int x = 0; x < 8; ++x) {
          double s = 0.0;
          for (int u = 0; u < 8; ++u) s += B.c[u][x] * coef[v][u];
          tmp[v][x] = s;
        }
      }
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          const int px = bx * 8 + x, py = by * 8 + y;
          if (px >= p.w || py >= p.h) continue;
          double s = 0.0;
          for (int v = 0; v < 8; ++v) s += B.c[v][y] * tmp[v][x];
          p.at(px, py) = s + 128.0;
        }
      }
    }
  }
}

Plane downsample(const Plane& full) {
  Plane half{(full.w + 1) / 2, (full.h + 1) / 2, {}};
  half.v.resize(std::size_t(half.w * half.h));
  for (int y = 0; y < half.h; ++y) {
    for (int x = 0; x < half.w; ++x) {
      const int x0 = 2 * x, y0 = 2 * y;
      const int x1 = std::min(x0 + 1, full.w - 1), y1 = std::min(y0 + 1, full.h - 1);
      half.at(x, y) = 0.25 * (full.at(x0, y0) + full.at(x1, y0) + full.at(x0, y1) + full.at(x1, y1));
    }
  }
  return half;
}

// Triangle-filter upsampling: 3/4 nearest chroma sample, 1/4 the next one
// on the side of the output pixel, per axis.
double upsampled(const Plane& half, int x, int y) {
  const int cx = x / 2, cy = y / 2;
  const int nx = std::clamp(cx + ((x & 1) ? 1 : -1), 0, half.w - 1);
  const int ny = std::clamp(cy + ((y & 1) ? 1 : -1), 0, half.h - 1);
  return (9.0 * half.at(cx, cy) + 3.0 * half.at(nx, cy) + 3.0 * half.at(cx, ny) + half.at(nx, ny)) / 16.0;
}

}  // namespace

QuantTable quant_table(int quality, bool chroma) {
  if (quality < 1 || quality > 100) throw InvalidArgument("jpeg quality must be in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const int* base = chroma ? kChromaBase : kLumaBase;
  QuantTable t{};
  for (int i = 0; i < 64; ++i) t[std::size_t(i)] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return t;
}

ImageBuffer jpeg_simulate(const ImageBuffer& image, int quality) {
  const QuantTable ql = quant_table(quality, false);
  const int w = image.width(), h = image.height();
  const std::size_t n = image.pixel_count();
  const auto px = image.data();
  ImageBuffer out(w, h, image.channels());
  if (image.channels() == 1) {
    Plane y{w, h, std::vector<double>(px.begin(), px.end())};
    quantize_plane(y, ql);
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = to_u8(y.v[i]);
    return out;
  }
  const QuantTable qc = quant_table(quality, true);
  Plane Y{w, h, std::vector<double>(n)}, Cb{w, h, std::vector<double>(n)}, Cr{w, h, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double r = px[3 * i], g = px[3 * i + 1], b = px[3 * i + 2];
    Y.v[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    Cb.v[i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    Cr.v[i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
  }
  Plane cb = downsample(Cb), cr = downsample(Cr);
  quantize_plane(Y, ql);
  quantize_plane(cb, qc);
  quantize_plane(cr, qc);
  for (int yy = 0; yy < h; ++yy) {
    for (int xx = 0; xx < w; ++xx) {
      const double L = Y.at(xx, yy);
      const double u = upsampled(cb, xx, yy) - 128.0;
      const double v = upsampled(cr, xx, yy) - 128.0;
      out.at(xx, yy, 0) = to_u8(L + 1.402 * v);
      out.at(xx, yy, 1) = to_u8(L - 0.344136 * u - 0.714136 * v);
      out.at(xx, yy, 2) = to_u8(L + 1.772 * u);
    }
  }
  return out;
}

}  // namespace forge

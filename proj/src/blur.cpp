#include <algorithm>
#include <cmath>
#include <vector>

#include "forge/error.hpp"
#include "forge/filters.hpp"

namespace forge {

namespace {

// Half-sample symmetric reflection: ... c b a | a b c ...
int reflect(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// 1-D filter along x (axis 0) or y (axis 1) of a w*h plane.
std::vector<double> filter_axis(const std::vector<double>& in, int w, int h, int axis,
                                const std::vector<double>& kernel) {
  const int r = int(kernel.size() / 2);
  std::vector<double> out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int sx = axis == 0 ? reflect(x + k, w) : x;
        const int sy = axis == 1 ? reflect(y + k, h) : y;
        acc += kernel[std::size_t(k + r)] * in[std::size_t(sy * w + sx)];
      }
      out[std::size_t(y * w + x)] = acc;
    }
  }
  return out;
}

double neighbor_variation(const std::vector<double>& p, int w, int h, int axis, std::size_t i) {
  const std::size_t prev = axis == 0 ? i - 1 : i - std::size_t(w);
  (void)h;
  return std::abs(p[i] - p[prev]);
}

}  // namespace

double blur_effect(const ImageBuffer& image) {
  const int w = image.width();
  const int h = image.height();
  if (w < 8 || h < 8) throw InvalidArgument("blur_effect needs an image of at least 8x8");
  const auto plane = luma_plane(image);
  const std::vector<double> box(9, 1.0 / 9.0);
  double score = 0.0;
  for (int axis = 0; axis < 2; ++axis) {
    const auto blurred = filter_axis(plane, w, h, axis, box);
    double sum_sharp = 0.0;
    double sum_lost = 0.0;
    for (int y = axis == 1 ? 1 : 0; y < h; ++y) {
      for (int x = axis == 0 ? 1 : 0; x < w; ++x) {
        const auto i = std::size_t(y * w + x);
        const double d_in = neighbor_variation(plane, w, h, axis, i);
        const double d_blur = neighbor_variation(blurred, w, h, axis, i);
        sum_sharp += d_in;
        sum_lost += std::max(0.0, d_in - d_blur);
      }
    }
    // No variation along this axis: no evidence of blur.
    if (sum_sharp > 0.0) score = std::max(score, (sum_sharp - sum_lost) / sum_sharp);
  }
  return std::clamp(score, 0.0, 1.0);
}

ImageBuffer gaussian_blur(const ImageBuffer& image, double sigma) {
  if (!(sigma > 0.0)) return image;
  const int r = int(std::ceil(3.0 * sigma));
  std::vector<double> kernel(std::size_t(2 * r + 1));
  double total = 0.0;
  for (int k = -r; k <= r; ++k) {
    kernel[std::size_t(k + r)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[std::size_t(k + r)];
  }
  for (auto& v : kernel) v /= total;
  const int w = image.width();
  const int h = image.height();
  const int c = image.channels();
  ImageBuffer out(w, h, c);
  std::vector<double> plane(image.pixel_count());
  for (int k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = image.data()[i * std::size_t(c) + std::size_t(k)];
    const auto blurred = filter_axis(filter_axis(plane, w, h, 0, kernel), w, h, 1, kernel);
    for (std::size_t i = 0; i < plane.size(); ++i) out.data()[i * std::size_t(c) + std::size_t(k)] = to_u8(blurred[i]);
  }
  return out;
}

}  // namespace forge

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "forge/error.hpp"
#include "forge/filters.hpp"

namespace forge {

namespace {

// Snap coordinates that are integers up to rounding noise so that exact
// grid maps (identity, integer shifts) copy bytes instead of interpolating.
double snap(double v) {
  const double r = std::nearbyint(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

void sample_bilinear(const ImageBuffer& img, double sx, double sy, std::uint8_t* out) {
  const int c = img.channels();
  sx = snap(sx);
  sy = snap(sy);
  if (!(sx >= 0.0 && sy >= 0.0 && sx <= img.width() - 1 && sy <= img.height() - 1)) {
    std::fill(out, out + c, std::uint8_t{0});
    return;
  }
  const int x0 = int(std::floor(sx));
  const int y0 = int(std::floor(sy));
  const double fx = sx - x0;
  const double fy = sy - y0;
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  for (int k = 0; k < c; ++k) {
    if (fx == 0.0 && fy == 0.0) {
      out[k] = img.at(x0, y0, k);
      continue;
    }
    const double top = (1 - fx) * img.at(x0, y0, k) + fx * img.at(x1, y0, k);
    const double bot = (1 - fx) * img.at(x0, y1, k) + fx * img.at(x1, y1, k);
    out[k] = to_u8((1 - fy) * top + fy * bot);
  }
}

ImageBuffer resample(const ImageBuffer& src, const Homographyd& M, int w, int h) {
  if (w < 1 || h < 1) throw InvalidArgument("output dims must be positive");
  ImageBuffer out(w, h, src.channels());
  std::array<std::uint8_t, 3> px{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d q = M * Eigen::Vector3d(x, y, 1.0);
      if (!(std::abs(q.z()) > 1e-15)) {
        px.fill(0);
      } else {
        sample_bilinear(src, q.x() / q.z(), q.y() / q.z(), px.data());
      }
      for (int k = 0; k < src.channels(); ++k) out.at(x, y, k) = px[std::size_t(k)];
    }
  }
  return out;
}

}  // namespace

ImageBuffer align_pair(const ImageBuffer& target, const Homographyd& H, int out_width, int out_height) {
  if (!H.allFinite() || !is_invertible(H)) throw NumericalError("align_pair: homography is not invertible");
  return resample(target, H, out_width, out_height);
}

ImageBuffer warp_image(const ImageBuffer& image, const Homographyd& H, int out_width, int out_height) {
  if (!H.allFinite() || !is_invertible(H)) throw NumericalError("warp_image: homography is not invertible");
  return resample(image, H.inverse(), out_width, out_height);
}

namespace {

double max_corner_shift(const Homographyd& H, int width, int height) {
  const double xs[2] = {0.0, double(width - 1)};
  const double ys[2] = {0.0, double(height - 1)};
  double worst = 0.0;
  for (double x : xs) {
    for (double y : ys) {
      const Eigen::Vector2d p(x, y);
      const Eigen::Vector3d q = H * p.homogeneous();
      if (!(std::abs(q.z()) > 1e-15)) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, (q.hnormalized() - p).norm());
    }
  }
  return worst;
}

}  // namespace

bool is_near_identity(const Homographyd& H, int width, int height, double tol_px) {
  return max_corner_shift(H, width, height) <= tol_px;
}

Correspondences<double> ncc_correspondences(const ImageBuffer& source, const ImageBuffer& target,
                                            const NccOptions& opt) {
  if (opt.grid < 2 || opt.patch_radius < 1 || opt.search_radius < 0) {
    throw InvalidArgument("ncc options out of range");
  }
  Correspondences<double> out;
  const int w = std::min(source.width(), target.width());
  const int h = std::min(source.height(), target.height());
  const int margin = opt.patch_radius + opt.search_radius;
  if (w < 2 * margin + 2 || h < 2 * margin + 2) return out;
  const auto ls = luma_plane(source);
  const auto lt = luma_plane(target);
  const int sw = source.width();
  const int tw = target.width();
  const int r = opt.patch_radius;
  const int side = 2 * r + 1;
  const double npx = double(side * side);

  std::vector<double> patch(std::size_t(side * side));
  const int span = 2 * opt.search_radius + 1;
  std::vector<double> score(std::size_t(span * span));
  for (int gy = 0; gy < opt.grid; ++gy) {
    const int cy = margin + int(std::lround(double(gy) * (h - 1 - 2 * margin) / (opt.grid - 1)));
    for (int gx = 0; gx < opt.grid; ++gx) {
      const int cx = margin + int(std::lround(double(gx) * (w - 1 - 2 * margin) / (opt.grid - 1)));
      double mean = 0.0;
      for (int dy = -r, k = 0; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx, ++k) {
          patch[std::size_t(k)] = ls[std::size_t((cy + dy) * sw + cx + dx)];
          mean += patch[std::size_t(k)];
        }
      }
      mean /= npx;
      double var = 0.0;
      for (auto& v : patch) {
        v -= mean;
        var += v * v;
      }
      if (std::sqrt(var / npx) < opt.min_stddev) continue;

      int best = -1;
      for (int sy = -opt.search_radius, si = 0; sy <= opt.search_radius; ++sy) {
        for (int sx = -opt.search_radius; sx <= opt.search_radius; ++sx, ++si) {
          double tm = 0.0;
          for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) tm += lt[std::size_t((cy + sy + dy) * tw + cx + sx + dx)];
          }
          tm /= npx;
          double num = 0.0, tv = 0.0;
          for (int dy = -r, k = 0; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx, ++k) {
              const double t = lt[std::size_t((cy + sy + dy) * tw + cx + sx + dx)] - tm;
              num += patch[std::size_t(k)] * t;
              tv += t * t;
            }
          }
          score[std::size_t(si)] = tv > 0.0 ? num / std::sqrt(var * tv) : -1.0;
          if (best < 0 || score[std::size_t(si)] > score[std::size_t(best)]) best = si;
        }
      }
      if (score[std::size_t(best)] < opt.min_ncc) continue;
      const int bx = best % span;
      const int by = best / span;
      // Parabolic sub-pixel refinement along each axis.
      auto refine = [&](int i, int lo, int hi) {
        if (i <= 0 || i >= span - 1) return 0.0;
        const double a = score[std::size_t(lo)], b = score[std::size_t(best)], c = score[std::size_t(hi)];
        const double den = a - 2 * b + c;
        return den < 0.0 ? std::clamp(0.5 * (a - c) / den, -0.5, 0.5) : 0.0;
      };
      const double ox = refine(bx, best - 1, best + 1);
      const double oy = refine(by, best - span, best + span);
      out.push_back({Point2<double>(cx, cy),
                     Point2<double>(cx + bx - opt.search_radius + ox, cy + by - opt.search_radius + oy)});
    }
  }
  return out;
}

Correspondences<double> parse_match_file(const nlohmann::json& doc) {
  if (!doc.is_array()) throw InvalidArgument("match file must be a JSON list of point pairs");
  Correspondences<double> out;
  for (const auto& pair : doc) {
    if (!pair.is_array() || pair.size() != 2 || pair[0].size() != 2 || pair[1].size() != 2) {
      throw InvalidArgument("match entry must be [[x, y], [x', y']]");
    }
    out.push_back({Point2<double>(pair[0][0].get<double>(), pair[0][1].get<double>()),
                   Point2<double>(pair[1][0].get<double>(), pair[1][1].get<double>())});
  }
  return out;
}

Correspondences<double> read_match_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return parse_match_file(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

AlignmentOutcome align_to_source(const ImageBuffer& source, const ImageBuffer& target,
                                 const AlignmentOptions& opt, const Correspondences<double>* matches) {
  AlignmentOutcome out;
  const Correspondences<double> computed = matches ? Correspondences<double>{} : ncc_correspondences(source, target, opt.ncc);
  const Correspondences<double>& c = matches ? *matches : computed;
  out.correspondences = c.size();
  if (c.size() < 4) return out;
  try {
    const auto fit = ransac_homography<double>(c, opt.ransac);
    out.H = fit.H;
    out.inliers = fit.inlier_count;
  } catch (const NumericalError&) {
    return out;
  }
  out.max_corner_shift = max_corner_shift(out.H, source.width(), source.height());
  if (out.max_corner_shift <= opt.identity_tol_px) {
    out.action = AlignmentOutcome::Action::Unchanged;
  } else if (out.max_corner_shift <= opt.max_shift_px && is_invertible(out.H)) {
    out.action = AlignmentOutcome::Action::Aligned;
    out.aligned = align_pair(target, out.H, source.width(), source.height());
  }
  return out;
}

}  // namespace forge

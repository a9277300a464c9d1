#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "forge/error.hpp"
#include "forge/random.hpp"

namespace forge {

template <typename Scalar>
using Homography = Eigen::Matrix<Scalar, 3, 3>;
using Homographyd = Homography<double>;

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

/// One correspondence: `src` in the input image maps to `dst` in the output.
template <typename Scalar>
struct PointPair {
  Point2<Scalar> src;
  Point2<Scalar> dst;
};

template <typename Scalar>
using Correspondences = std::vector<PointPair<Scalar>>;

template <typename Scalar>
Point2<Scalar> apply_homography(const Homography<Scalar>& H, const Point2<Scalar>& p) {
  const Eigen::Matrix<Scalar, 3, 1> q = H * p.homogeneous();
  return q.hnormalized();
}

/// Scales H so that H(2,2) == 1. Throws when H(2,2) is ~0.
template <typename Scalar>
Homography<Scalar> normalize_homography(const Homography<Scalar>& H) {
  using std::abs;
  if (abs(H(2, 2)) < Scalar(1e-12) * H.cwiseAbs().maxCoeff()) {
    throw NumericalError("homography has H(2,2) ~ 0 and cannot be normalized");
  }
  return H / H(2, 2);
}

template <typename Scalar>
bool is_invertible(const Homography<Scalar>& H) {
  using std::abs;
  return abs(H.determinant()) > Scalar(1e-12);
}

namespace detail {

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
template <typename Scalar, typename Getter>
Eigen::Matrix<Scalar, 3, 3> hartley_normalizer(std::size_t n, Getter get) {
  Point2<Scalar> c = Point2<Scalar>::Zero();
  for (std::size_t i = 0; i < n; ++i) c += get(i);
  c /= Scalar(n);
  Scalar mean_dist(0);
  for (std::size_t i = 0; i < n; ++i) mean_dist += (get(i) - c).norm();
  mean_dist /= Scalar(n);
  if (!(mean_dist > Scalar(0))) throw NumericalError("degenerate correspondences: all points coincide");
  const Scalar s = std::sqrt(Scalar(2)) / mean_dist;
  Eigen::Matrix<Scalar, 3, 3> T;
  T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return T;
}

template <typename Scalar>
Scalar cross2(const Point2<Scalar>& a, const Point2<Scalar>& b, const Point2<Scalar>& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace detail

template <typename Scalar>
struct DltResult {
  Homography<Scalar> H;
  Scalar rmse;  // forward reprojection error over the inputs, pixels
};

template <typename Scalar>
Scalar reprojection_rmse(const Homography<Scalar>& H, std::span<const PointPair<Scalar>> c) {
  Scalar se(0);
  for (const auto& p : c) se += (apply_homography(H, p.src) - p.dst).squaredNorm();
  return std::sqrt(se / Scalar(c.size()));
}

/// Normalized DLT: Hartley-normalize both point sets, take the right singular
/// vector of the smallest singular value of the 2n x 9 system, denormalize,
/// scale H(2,2) to 1.
template <typename Scalar>
DltResult<Scalar> estimate_homography_dlt(std::span<const PointPair<Scalar>> c) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const std::size_t n = c.size();
  if (n < 4) throw InvalidArgument("homography needs at least 4 correspondences");
  for (const auto& p : c) {
    if (!p.src.allFinite() || !p.dst.allFinite()) throw NumericalError("non-finite correspondence");
  }
  const auto Ts = detail::hartley_normalizer<Scalar>(n, [&](std::size_t i) { return c[i].src; });
  const auto Td = detail::hartley_normalizer<Scalar>(n, [&](std::size_t i) { return c[i].dst; });

  Mat A(Eigen::Index(2 * n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2<Scalar> s = (Ts * c[i].src.homogeneous()).hnormalized();
    const Point2<Scalar> d = (Td * c[i].dst.homogeneous()).hnormalized();
    const Scalar x = s.x(), y = s.y(), u = d.x(), v = d.y();
    const auto r = Eigen::Index(2 * i);
    A.row(r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    A.row(r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A one-dimensional null space needs the 8th singular value clear of zero.
  if (sv.size() < 8 || !(sv(7) > Scalar(1e-10) * sv(0))) {
    throw NumericalError("degenerate correspondence configuration (rank-deficient DLT system)");
  }
  const Eigen::Matrix<Scalar, 9, 1> h = svd.matrixV().col(8);
  Homography<Scalar> Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Homography<Scalar> H = normalize_homography<Scalar>(Td.inverse() * Hn * Ts);
  if (!is_invertible(H)) throw NumericalError("estimated homography is singular");
  return {H, reprojection_rmse<Scalar>(H, c)};
}

template <typename Scalar>
DltResult<Scalar> estimate_homography_dlt(const Correspondences<Scalar>& c) {
  return estimate_homography_dlt<Scalar>(std::span<const PointPair<Scalar>>(c));
}

/// sqrt(d(Hx, x')^2 + d(H^-1 x', x)^2)
template <typename Scalar>
Scalar symmetric_transfer_error(const Homography<Scalar>& H, const Homography<Scalar>& Hinv,
                                const PointPair<Scalar>& p) {
  const Scalar fwd = (apply_homography(H, p.src) - p.dst).squaredNorm();
  const Scalar bwd = (apply_homography(Hinv, p.dst) - p.src).squaredNorm();
  return std::sqrt(fwd + bwd);
}

struct RansacOptions {
  int iterations = 2000;
  double inlier_tol = 1.5;  // pixels, symmetric transfer error
  std::uint64_t seed = 0;
  /// A model needs this much support (capped at the number of pairs). The
  /// four sample points always agree with their own model, so the default
  /// asks for at least one corroborating pair.
  std::size_t min_consensus = 5;
};

template <typename Scalar>
struct RansacResult {
  Homography<Scalar> H;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  int hypotheses = 0;  // non-degenerate samples evaluated
};

/// Seeded 4-point RANSAC. The reported consensus set is the largest one seen
/// over the sampled hypotheses; H is the DLT refit on it.
template <typename Scalar>
RansacResult<Scalar> ransac_homography(std::span<const PointPair<Scalar>> c, const RansacOptions& opt) {
  const std::size_t n = c.size();
  if (n < 4) throw InvalidArgument("ransac needs at least 4 correspondences");
  if (opt.iterations < 1) throw InvalidArgument("ransac iterations must be positive");
  const std::size_t need = std::max<std::size_t>(4, std::min(opt.min_consensus, n));
  const Scalar tol = Scalar(opt.inlier_tol);
  Rng rng(opt.seed);

  RansacResult<Scalar> best;
  best.inliers.assign(n, false);
  std::vector<bool> mask(n);
  for (int it = 0; it < opt.iterations; ++it) {
    std::array<std::size_t, 4> idx{};
    for (std::size_t k = 0; k < 4; ++k) {
      bool dup;
      do {
        idx[k] = std::size_t(rng.below(n));
        dup = std::find(idx.begin(), idx.begin() + std::ptrdiff_t(k), idx[k]) != idx.begin() + std::ptrdiff_t(k);
      } while (dup);
    }
    // Reject collinear triples and samples whose triangle orientations flip.
    static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    bool good = true;
    for (const auto& t : kTriples) {
      const Scalar a = detail::cross2<Scalar>(c[idx[t[0]]].src, c[idx[t[1]]].src, c[idx[t[2]]].src);
      const Scalar b = detail::cross2<Scalar>(c[idx[t[0]]].dst, c[idx[t[1]]].dst, c[idx[t[2]]].dst);
      if (std::abs(a) < Scalar(1e-9) || std::abs(b) < Scalar(1e-9) || (a > 0) != (b > 0)) {
        good = false;
        break;
      }
    }
    if (!good) continue;
    const std::array<PointPair<Scalar>, 4> sample{c[idx[0]], c[idx[1]], c[idx[2]], c[idx[3]]};
    Homography<Scalar> H;
    try {
      H = estimate_homography_dlt<Scalar>(std::span<const PointPair<Scalar>>(sample)).H;
    } catch (const NumericalError&) {
      continue;
    }
    ++best.hypotheses;
    const Homography<Scalar> Hinv = H.inverse();
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mask[i] = symmetric_transfer_error<Scalar>(H, Hinv, c[i]) < tol;
      count += mask[i];
    }
    if (count > best.inlier_count) {
      best.inlier_count = count;
      best.inliers = mask;
      best.H = H;
    }
  }
  if (best.inlier_count < need) throw NumericalError("no-model");
  std::vector<PointPair<Scalar>> consensus;
  for (std::size_t i = 0; i < n; ++i) {
    if (best.inliers[i]) consensus.push_back(c[i]);
  }
  try {
    best.H = estimate_homography_dlt<Scalar>(std::span<const PointPair<Scalar>>(consensus)).H;
  } catch (const NumericalError&) {
    // Keep the sample model when the consensus set itself is degenerate.
  }
  return best;
}

template <typename Scalar>
RansacResult<Scalar> ransac_homography(const Correspondences<Scalar>& c, const RansacOptions& opt) {
  return ransac_homography<Scalar>(std::span<const PointPair<Scalar>>(c), opt);
}

}  // namespace forge

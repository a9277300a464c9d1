#include <doctest.h>

#include "forge/error.hpp"
#include "forge/filters.hpp"
#include "support.hpp"

using namespace forge;

namespace {

// IoU by counting unit cells of integer boxes.
double raster_iou(int ax0, int ay0, int ax1, int ay1, int bx0, int by0, int bx1, int by1) {
  long inter = 0, uni = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const bool a = x >= ax0 && x < ax1 && y >= ay0 && y < ay1;
      const bool b = x >= bx0 && x < bx1 && y >= by0 && y < by1;
      inter += a && b;
      uni += a || b;
    }
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

Homographyd random_homography(Rng& rng) {
  const double a = rng.uniform(-0.3, 0.3), s = rng.uniform(0.8, 1.2);
  Homographyd H;
  H << s * std::cos(a), -s * std::sin(a) + rng.uniform(-0.1, 0.1), rng.uniform(-40, 40),
      s * std::sin(a), s * std::cos(a), rng.uniform(-40, 40),
      rng.uniform(-3e-4, 3e-4), rng.uniform(-3e-4, 3e-4), 1.0;
  return H;
}

TripletRecord scored(const std::string& id, double adherence, double aesthetic) {
  TripletRecord r;
  r.id = id;
  r.source_ref = "s";
  r.target_ref = "t";
  r.instruction = {"i", "x", InstructionOrigin::Synthetic, 0};
  r.scores = AssessorScore{adherence, aesthetic};
  return r;
}

}  // namespace

TEST_SUITE("filters") {

TEST_CASE("iou equals the rasterized counting oracle") {
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    int v[8];
    for (int k = 0; k < 8; k += 2) {
      const int p = int(rng.below(65)), q = int(rng.below(65));
      v[k] = std::min(p, q);
      v[k + 1] = std::max(p, q);
    }
    // v = {ax0, ax1, ay0, ay1, bx0, bx1, by0, by1}
    const BoundingBox a(v[0], v[2], v[1], v[3]), b(v[4], v[6], v[5], v[7]);
    CHECK(iou(a, b) == doctest::Approx(raster_iou(v[0], v[2], v[1], v[3], v[4], v[6], v[5], v[7])).epsilon(1e-12));
  }
  CHECK_THROWS_AS(BoundingBox(5, 0, 4, 1), InvalidArgument);
}

TEST_CASE("face gate keeps at exactly 0.9 and drops just below") {
  const std::vector<BoundingBox> src = {{0, 0, 10, 10}};
  const auto at = face_iou_filter(src, {{0, 0, 10, 9}});
  CHECK(at.keep);
  CHECK(at.metrics.at("face_iou") == 0.9);
  const auto below = face_iou_filter(src, {{0, 0, 10, 8.99}});
  CHECK(!below.keep);
  CHECK(below.reason == "face-iou");
  const auto none = face_iou_filter({}, src);
  CHECK(none.keep);
  CHECK(none.reason == "no-face");
  // The largest face on each side is compared.
  const auto largest = face_iou_filter({{0, 0, 2, 2}, {0, 0, 10, 10}}, {{0, 0, 10, 10}, {50, 50, 51, 51}});
  CHECK(largest.keep);
}

TEST_CASE("face sidecar accepts arrays and objects") {
  const auto doc = nlohmann::json::parse(
      R"({"a.png": [[1, 2, 3, 4]], "b.png": [{"x_min": 0, "y_min": 0, "x_max": 5, "y_max": 6}]})");
  const auto s = parse_face_sidecar(doc);
  CHECK(s.at("a.png")[0] == BoundingBox(1, 2, 3, 4));
  CHECK(s.at("b.png")[0].area() == 30.0);
  CHECK_THROWS(parse_face_sidecar(nlohmann::json::parse(R"({"a": [[1, 2, 3]]})")));
}

TEST_CASE("assessor threshold is inclusive and preserves order") {
  std::vector<TripletRecord> recs;
  Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    recs.push_back(scored(std::to_string(i), double(rng.below(51)) / 10.0, double(rng.below(51)) / 10.0));
  }
  const auto part = assessor_threshold_filter(recs, 3.5);
  std::vector<std::string> kept, oracle;
  for (const auto& r : part.kept) kept.push_back(r.id);
  for (const auto& r : recs) {
    if (r.scores->instruction_adherence >= 3.5) oracle.push_back(r.id);
  }
  CHECK(kept == oracle);
  CHECK(part.kept.size() + part.removed.size() == recs.size());
  for (const auto& rm : part.removed) CHECK(rm.reason == "adherence-below-threshold");

  const auto floor = assessor_threshold_filter({scored("x", 4.0, 1.0)}, 3.5, 2.0);
  REQUIRE(floor.removed.size() == 1);
  CHECK(floor.removed[0].reason == "aesthetic-below-floor");
  auto unscored = scored("u", 1, 1);
  unscored.scores.reset();
  CHECK_THROWS_AS(assessor_threshold_filter({unscored}, 3.5), InvalidArgument);
}

TEST_CASE("DLT recovers noiseless homographies; degenerate input throws") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    const auto H = random_homography(rng);
    Correspondences<double> c;
    for (int i = 0; i < 12; ++i) {
      const Point2<double> p(rng.uniform(0, 320), rng.uniform(0, 240));
      c.push_back({p, apply_homography(H, p)});
    }
    const auto fit = estimate_homography_dlt(c);
    CHECK(fit.rmse < 1e-6);
    CHECK((fit.H - normalize_homography(H)).norm() / H.norm() < 1e-8);
  }
  Correspondences<double> line;
  for (int i = 0; i < 6; ++i) line.push_back({Point2<double>(i, 2 * i), Point2<double>(i, 2 * i)});
  CHECK_THROWS_AS(estimate_homography_dlt(line), NumericalError);
  CHECK_THROWS_AS(estimate_homography_dlt(Correspondences<double>(line.begin(), line.begin() + 3)), InvalidArgument);
}

TEST_CASE("DLT works in single precision too") {
  Homography<float> H;
  H << 1.1f, 0.05f, 3.0f, -0.02f, 0.95f, -2.0f, 1e-4f, -2e-4f, 1.0f;
  Correspondences<float> c;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const Point2<float> p(float(i) * 50.0f, float(j) * 40.0f);
      c.push_back({p, apply_homography(H, p)});
    }
  }
  CHECK(estimate_homography_dlt(c).rmse < 1e-2f);
}

TEST_CASE("RANSAC rejects outliers and is seed-deterministic") {
  Rng rng(3);
  const auto H = random_homography(rng);
  Correspondences<double> c;
  std::vector<bool> truth;
  for (int i = 0; i < 100; ++i) {
    const Point2<double> p(rng.uniform(0, 640), rng.uniform(0, 480));
    const bool outlier = i % 10 < 4;
    c.push_back({p, outlier ? Point2<double>(rng.uniform(0, 640), rng.uniform(0, 480)) : apply_homography(H, p)});
    truth.push_back(!outlier);
  }
  RansacOptions opt;
  opt.seed = 5;
  const auto r = ransac_homography(c, opt);
  CHECK((r.H - normalize_homography(H)).norm() / normalize_homography(H).norm() < 1e-6);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (truth[i]) CHECK(r.inliers[i]);
  }
  const auto again = ransac_homography(c, opt);
  CHECK(again.inliers == r.inliers);
  CHECK(again.H == r.H);

  Correspondences<double> junk;
  for (int i = 0; i < 30; ++i) {
    junk.push_back({Point2<double>(rng.uniform(0, 1000), rng.uniform(0, 1000)),
                    Point2<double>(rng.uniform(0, 1000), rng.uniform(0, 1000))});
  }
  CHECK_THROWS_AS(ransac_homography(junk, opt), NumericalError);
}

TEST_CASE("warp then align restores the interior") {
  const auto img = test::smooth_image(96, 80, 2);
  Homographyd H;
  H << 1.0, 0.01, 1.5, -0.01, 1.0, -0.75, 0.0, 0.0, 1.0;
  const auto warped = warp_image(img, H, 96, 80);
  const auto back = align_pair(warped, H, 96, 80);
  double se = 0;
  int n = 0;
  for (int y = 4; y < 76; ++y) {
    for (int x = 4; x < 92; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double d = double(back.at(x, y, c)) - double(img.at(x, y, c));
        se += d * d;
        ++n;
      }
    }
  }
  const double p = se == 0 ? 99.0 : 10.0 * std::log10(255.0 * 255.0 * n / se);
  CHECK(p >= 40.0);
  // Identity copies bytes exactly.
  CHECK(align_pair(img, Homographyd::Identity(), 96, 80) == img);
}

TEST_CASE("alignment detects and corrects a small translation") {
  const auto src = test::smooth_image(80, 80, 6);
  Homographyd shift = Homographyd::Identity();
  shift(0, 2) = 2.0;
  shift(1, 2) = 1.0;
  const auto tgt = warp_image(src, shift, 80, 80);
  AlignmentOptions opt;
  const auto out = align_to_source(src, tgt, opt);
  REQUIRE(out.action == AlignmentOutcome::Action::Aligned);
  CHECK(out.H(0, 2) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(out.H(1, 2) == doctest::Approx(1.0).epsilon(0.05));

  const auto same = align_to_source(src, src, opt);
  CHECK(same.action == AlignmentOutcome::Action::Unchanged);
  CHECK(!same.aligned);

  const auto flat = ImageBuffer(80, 80, 3, 90);
  CHECK(align_to_source(flat, flat, opt).action == AlignmentOutcome::Action::NoModel);
}

TEST_CASE("match files parse point pairs") {
  const auto c = parse_match_file(nlohmann::json::parse("[[[1, 2], [3, 4]], [[5, 6], [7, 8]]]"));
  REQUIRE(c.size() == 2);
  CHECK(c[1].dst.x() == 7);
  CHECK_THROWS(parse_match_file(nlohmann::json::parse("[[1, 2]]")));
}

TEST_CASE("blur metric rises with blur and rejects tiny images") {
  const auto& img = test::test_image();
  double prev = -1;
  for (double s : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const double b = blur_effect(gaussian_blur(img, s));
    CHECK(b > prev);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
    prev = b;
  }
  CHECK(blur_effect(ImageBuffer(16, 16, 3, 40)) == 0.0);
  CHECK_THROWS_AS(blur_effect(ImageBuffer(7, 16, 1)), InvalidArgument);
}

TEST_CASE("gaussian blur preserves constants and copies at sigma 0") {
  const ImageBuffer flat(20, 10, 3, 77);
  CHECK(gaussian_blur(flat, 2.0) == flat);
  const auto img = test::random_image(20, 10, 1, 3);
  CHECK(gaussian_blur(img, 0.0) == img);
}

TEST_CASE("diverse frame selection is greedy farthest-point") {
  std::vector<EmbeddingVector> e;
  auto v = [](double a, double b) {
    EmbeddingVector x(2);
    x << a, b;
    return x;
  };
  e = {v(1, 0), v(0.99, 0.1), v(0, 2), v(-1, 0.05)};
  const auto pick = select_diverse_frames(e, 0.75);
  REQUIRE(pick.size() == 3);
  CHECK(pick[0] == 2);  // largest norm
  CHECK(pick[1] == 0);  // cosine distance 1 from (0, 2)
  CHECK(pick[2] == 3);  // (0.99, 0.1) is nearly parallel to (1, 0)
  CHECK(select_diverse_frames(e, 1.0).size() == 4);
  CHECK_THROWS(select_diverse_frames(e, 0.0));
}

TEST_CASE("filter report line shape") {
  FilterVerdict v;
  v.keep = false;
  v.reason = "face-iou";
  v.metrics["face_iou"] = 0.5;
  const auto j = filter_report_line("t1", v);
  CHECK(j.dump() == R"({"triplet_id":"t1","verdict":"discard","reason":"face-iou","metrics":{"face_iou":0.5}})");
}

}  // TEST_SUITE

// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "forge/augment.hpp"
#include "forge/dpo.hpp"
#include "forge/filters.hpp"
#include "forge/grounding.hpp"
#include "forge/homography.hpp"
#include "forge/jpeg_sim.hpp"
#include "forge/manifest.hpp"
#include "forge/pipeline.hpp"
#include "forge/preference.hpp"
#include "forge/random.hpp"
#include "forge/scheduler.hpp"
#include "forge/triplet_graph.hpp"
#include "support.hpp"

using namespace forge;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// --- 1 -----------------------------------------------------------------------

Outcome bootstrapping_counts() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(101);
  auto make = [](int n, std::uint64_t tag) {
    EditSet s;
    s.anchor_ref = "a" + std::to_string(tag) + ".png";
    for (int i = 0; i < n; ++i) {
      s.edits.push_back({{"i" + std::to_string(i), "edit " + std::to_string(i), InstructionOrigin::Synthetic, 0},
                         "y" + std::to_string(tag) + "_" + std::to_string(i) + ".png", ""});
    }
    return s;
  };
  for (int t = 0; t < 64; ++t) {
    const int n = int(rng.between(1, 64));
    const auto set = make(n, std::uint64_t(t));
    const auto inv = invert_triplets(set);
    const auto cmp = composite_transitions(set);
    o.require(inv.records.size() == std::size_t(n), "inverted != N at N=" + std::to_string(n));
    o.require(cmp.records.size() == std::size_t(n) * std::size_t(n - 1), "composite != N(N-1) at N=" + std::to_string(n));
  }
  const auto eight = composite_transitions(make(8, 999)).records.size();
  o.require(eight == 56, "N=8 gave " + std::to_string(eight));
  const double secs = seconds_since(t0);
  o.require(secs < 1.0, "runtime " + fmt(secs) + " s");
  o.note("64 random sets, N=8 -> " + std::to_string(eight) + ", " + fmt(secs, 3) + " s");
  return o;
}

// --- 2 -----------------------------------------------------------------------

Outcome softmax_grounding() {
  Outcome o;
  Rng rng(202);
  double worst_sum = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> s(std::size_t(rng.between(1, 40)));
    for (double& v : s) v = rng.uniform(-30, 30);
    const auto p = softmax_probabilities(s);
    double sum = 0;
    for (double v : p) sum += v;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  o.require(worst_sum <= 1e-9, "sum deviation " + fmt(worst_sum));

  const std::vector<double> s3 = {1.0, 0.5, 0.0};
  const auto p3 = softmax_probabilities(s3);
  long double z = 0;
  for (double v : s3) z += std::exp(static_cast<long double>(v));
  const double expected[3] = {0.5065, 0.3072, 0.1863};
  double worst_ref = 0, worst_oracle = 0;
  for (int i = 0; i < 3; ++i) {
    const long double oracle = std::exp(static_cast<long double>(s3[std::size_t(i)])) / z;
    worst_ref = std::max(worst_ref, std::abs(p3[std::size_t(i)] - expected[i]));
    worst_oracle = std::max(worst_oracle, double(std::abs(static_cast<long double>(p3[std::size_t(i)]) - oracle)));
  }
  o.require(worst_ref <= 1e-4, "reference deviation " + fmt(worst_ref));
  o.require(worst_oracle <= 1e-12, "oracle deviation " + fmt(worst_oracle));

  const std::vector<ScoredId> ids = {{"a", 1.0}, {"b", 0.5}, {"c", 0.0}};
  bool deterministic = true;
  std::size_t counts[3] = {0, 0, 0};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto c = softmax_sample(ids, std::uint64_t(i));
    if (i < 1000) deterministic &= softmax_sample(ids, std::uint64_t(i)).id == c.id;
    ++counts[c.index];
  }
  o.require(deterministic, "sampling not deterministic per seed");
  double worst_freq = 0;
  for (int i = 0; i < 3; ++i) worst_freq = std::max(worst_freq, std::abs(double(counts[i]) / draws - p3[std::size_t(i)]));
  o.require(worst_freq <= 0.01, "frequency deviation " + fmt(worst_freq));
  o.note("p=(" + fmt(p3[0]) + ", " + fmt(p3[1]) + ", " + fmt(p3[2]) + "), max freq dev " + fmt(worst_freq, 3));
  return o;
}

// --- 3 -----------------------------------------------------------------------

Outcome frequency_cap() {
  Outcome o;
  Rng rng(303);
  std::size_t worst = 0;
  for (int stream = 0; stream < 20; ++stream) {
    const std::size_t pool = 50 + rng.below(3000);
    std::vector<GroundingResult> sel(10000);
    for (std::size_t i = 0; i < sel.size(); ++i) {
      sel[i] = {"a" + std::to_string(i), "u" + std::to_string(rng.below(pool)), rng.uniform(0.7, 1.0), 0.5};
    }
    const auto out = enforce_frequency_cap(sel, 3);
    std::map<std::string, std::size_t> kept;
    for (const auto& k : out.kept) worst = std::max(worst, ++kept[k.chosen_user_id]);
    // Counting oracle: an entry survives iff fewer than 3 earlier entries share its user id.
    std::map<std::string, std::size_t> seen;
    std::size_t expect = 0;
    for (const auto& s : sel) expect += seen[s.chosen_user_id]++ < 3;
    o.require(out.kept.size() == expect, "stream " + std::to_string(stream) + " kept " + std::to_string(out.kept.size()) +
                                            " vs oracle " + std::to_string(expect));
    o.require(out.kept.size() + out.rejected.size() == sel.size(), "records lost");
  }
  o.require(worst <= 3, "max occurrences " + std::to_string(worst));
  o.note("20 streams x 10^4, max occurrences " + std::to_string(worst));
  return o;
}

// --- 4 -----------------------------------------------------------------------

Homographyd random_h(Rng& rng) {
  Homographyd H;
  H << rng.uniform(0.8, 1.2), rng.uniform(-0.2, 0.2), rng.uniform(-20, 20), rng.uniform(-0.2, 0.2),
      rng.uniform(0.8, 1.2), rng.uniform(-20, 20), rng.uniform(-4e-4, 4e-4), rng.uniform(-4e-4, 4e-4), 1.0;
  return H;
}

Outcome homography() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(404);
  double worst_rmse = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto H = random_h(rng);
    Correspondences<double> c;
    for (int i = 0; i < 20; ++i) {
      const Point2<double> p(rng.uniform(0, 512), rng.uniform(0, 512));
      c.push_back({p, apply_homography(H, p)});
    }
    const auto r = estimate_homography_dlt(c);
    worst_rmse = std::max(worst_rmse, reprojection_rmse<double>(r.H, c));
  }
  o.require(worst_rmse <= 1e-6, "DLT rmse " + fmt(worst_rmse));

  int good = 0;
  double worst_err = 0, worst_recall = 1;
  for (int f = 0; f < 100; ++f) {
    const auto H = random_h(rng);
    Correspondences<double> c;
    std::vector<bool> truth;
    for (int i = 0; i < 100; ++i) {
      const Point2<double> p(rng.uniform(0, 512), rng.uniform(0, 512));
      Point2<double> q = apply_homography(H, p);
      const bool outlier = i % 10 < 3;
      if (outlier) {
        const double ang = rng.uniform(0, 2 * M_PI), d = rng.uniform(20, 200);
        q += Point2<double>(d * std::cos(ang), d * std::sin(ang));
      }
      c.push_back({p, q});
      truth.push_back(!outlier);
    }
    RansacOptions opt;
    opt.seed = derive_seed(404, "ransac", std::uint64_t(f));
    const auto r = ransac_homography(c, opt);
    const Homographyd a = normalize_homography(r.H), b = normalize_homography(H);
    const double err = (a - b).norm() / b.norm();
    std::size_t hit = 0, total = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (!truth[i]) continue;
      ++total;
      hit += r.inliers[i];
    }
    const double recall = double(hit) / double(total);
    worst_err = std::max(worst_err, err);
    worst_recall = std::min(worst_recall, recall);
    good += err <= 1e-3 && recall >= 0.95;
  }
  o.require(good >= 95, std::to_string(good) + "/100 fixtures within tolerance");
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, "runtime " + fmt(secs) + " s");
  o.note("DLT rmse " + fmt(worst_rmse, 3) + ", RANSAC " + std::to_string(good) + "/100 (max rel err " + fmt(worst_err, 3) +
         ", min recall " + fmt(worst_recall, 3) + "), " + fmt(secs, 3) + " s");
  return o;
}

// --- 5 -----------------------------------------------------------------------

Outcome face_iou() {
  Outcome o;
  const BoundingBox a(0, 0, 10, 10);
  const bool keep_at = face_iou_filter({a}, {BoundingBox(0, 0, 10, 9)}, 0.9).keep;
  const bool keep_below = face_iou_filter({a}, {BoundingBox(0, 0, 10, 8.99)}, 0.9).keep;
  o.require(iou(a, BoundingBox(0, 0, 10, 9)) == 0.9, "IoU of 90/100 is not 0.9");
  o.require(keep_at, "IoU exactly 0.9 discarded");
  o.require(!keep_below, "IoU 0.899 kept");

  Rng rng(505);
  double worst = 0;
  for (int t = 0; t < 10000; ++t) {
    auto box = [&] {
      const int x0 = int(rng.below(64)), y0 = int(rng.below(64));
      const int x1 = x0 + int(rng.below(std::uint64_t(65 - x0))), y1 = y0 + int(rng.below(std::uint64_t(65 - y0)));
      return std::array<int, 4>{x0, y0, x1, y1};
    };
    const auto p = box(), q = box();
    std::size_t inter = 0, uni = 0;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const bool in_p = x >= p[0] && x < p[2] && y >= p[1] && y < p[3];
        const bool in_q = x >= q[0] && x < q[2] && y >= q[1] && y < q[3];
        inter += in_p && in_q;
        uni += in_p || in_q;
      }
    }
    const double oracle = uni == 0 ? 0.0 : double(inter) / double(uni);
    const double got = iou(BoundingBox(p[0], p[1], p[2], p[3]), BoundingBox(q[0], q[1], q[2], q[3]));
    worst = std::max(worst, std::abs(got - oracle));
  }
  o.require(worst <= 1e-12, "raster deviation " + fmt(worst));
  o.note("boundary keep/discard ok, 10^4 raster samples max dev " + fmt(worst, 3));
  return o;
}

// --- 6 -----------------------------------------------------------------------

Outcome assessor_partition() {
  Outcome o;
  Rng rng(606);
  std::vector<TripletRecord> recs;
  std::size_t at_boundary = 0;
  for (int i = 0; i < 5000; ++i) {
    TripletRecord r;
    r.id = "r" + std::to_string(i);
    r.source_ref = "s.png";
    r.target_ref = "t" + std::to_string(i) + ".png";
    r.instruction = {"i", "x", InstructionOrigin::Synthetic, 0};
    r.provenance = Provenance::Mined;
    const double a = double(rng.below(51)) / 10.0;
    at_boundary += a == 3.5;
    r.scores = AssessorScore{a, double(rng.below(51)) / 10.0};
    recs.push_back(r);
  }
  const auto part = assessor_threshold_filter(recs, 3.5);
  std::vector<std::string> kept_oracle, kept;
  for (const auto& r : recs) {
    if (r.scores->instruction_adherence >= 3.5) kept_oracle.push_back(r.id);
  }
  for (const auto& r : part.kept) kept.push_back(r.id);
  o.require(kept == kept_oracle, "partition differs from oracle");
  o.require(kept.size() + part.removed.size() == recs.size(), "records lost");
  bool boundary_kept = true;
  for (const auto& r : part.removed) boundary_kept &= r.record.scores->instruction_adherence != 3.5;
  o.require(boundary_kept, "3.5 removed");
  o.note(std::to_string(kept.size()) + " kept of 5000, " + std::to_string(at_boundary) + " at exactly 3.5");
  return o;
}

// --- 7 -----------------------------------------------------------------------

DpoSample<double> dpo_sample(Rng& rng, int n) {
  auto v = [&](double scale) {
    DpoVector<double> x(n);
    for (int i = 0; i < n; ++i) x(i) = scale * rng.normal();
    return x;
  };
  DpoSample<double> s;
  s.eps = v(1.0);
  s.eps_ref_w = s.eps + v(0.5);
  s.eps_theta_w = s.eps + v(0.5);
  s.eps_ref_l = s.eps + v(0.5);
  s.eps_theta_l = s.eps + v(0.5);
  s.beta = rng.uniform(0.05, 1.0);
  return s;
}

double dpo_oracle(const DpoSample<double>& s) {
  const double rw = (s.eps - s.eps_ref_w).squaredNorm() - (s.eps - s.eps_theta_w).squaredNorm();
  const double rl = (s.eps - s.eps_ref_l).squaredNorm() - (s.eps - s.eps_theta_l).squaredNorm();
  return std::log1p(std::exp(-s.beta * (rw - rl)));
}

Outcome dpo() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(707);
  double worst_tie = 0;
  for (int t = 0; t < 100; ++t) {
    auto s = dpo_sample(rng, 16);
    s.eps_ref_l = s.eps_ref_w;
    s.eps_theta_l = s.eps_theta_w;
    worst_tie = std::max(worst_tie, std::abs(dpo_loss(s).loss - std::log(2.0)));
  }
  o.require(worst_tie <= 1e-9, "tie loss deviation " + fmt(worst_tie));

  double worst_grad = 0;
  for (int t = 0; t < 100; ++t) {
    const auto s = dpo_sample(rng, 8);
    const auto r = dpo_loss(s);
    const double h = 1e-5;
    for (int side = 0; side < 2; ++side) {
      DpoVector<double> fd(8);
      for (int i = 0; i < 8; ++i) {
        auto p = s, m = s;
        (side ? p.eps_theta_l : p.eps_theta_w)(i) += h;
        (side ? m.eps_theta_l : m.eps_theta_w)(i) -= h;
        fd(i) = (dpo_oracle(p) - dpo_oracle(m)) / (2 * h);
      }
      const auto& g = side ? r.grad_theta_l : r.grad_theta_w;
      worst_grad = std::max(worst_grad, (fd - g).norm() / std::max(1e-300, g.norm()));
    }
  }
  o.require(worst_grad <= 1e-6, "gradient rel err " + fmt(worst_grad));

  bool finite = true;
  for (double target : {-1e4, -1e3, -50.0, 0.0, 50.0, 1e3, 1e4}) {
    DpoSample<double> s;
    s.eps = DpoVector<double>::Zero(1);
    s.eps_ref_w = DpoVector<double>::Zero(1);
    s.eps_ref_l = DpoVector<double>::Zero(1);
    s.eps_theta_l = DpoVector<double>::Zero(1);
    // delta_w = -||eps - theta_w||^2 = -x^2; pick x so that z = beta * delta_w hits -|target|.
    s.beta = 1.0;
    s.eps_theta_w = DpoVector<double>::Constant(1, std::sqrt(std::abs(target)));
    if (target > 0) std::swap(s.eps_theta_w, s.eps_theta_l);
    const auto r = dpo_loss(s);
    finite &= std::isfinite(r.loss) && std::abs(std::abs(r.z) - std::abs(target)) < 1e-6 * (1 + std::abs(target)) &&
              r.grad_theta_w.allFinite() && r.grad_theta_l.allFinite();
  }
  o.require(finite, "non-finite result at extreme z");
  const double secs = seconds_since(t0);
  o.require(secs < 5.0, "runtime " + fmt(secs) + " s");
  o.note("tie dev " + fmt(worst_tie, 3) + ", grad rel err " + fmt(worst_grad, 3) + ", " + fmt(secs, 3) + " s");
  return o;
}

// --- 8 -----------------------------------------------------------------------

Outcome dominance() {
  Outcome o;
  Rng rng(808);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<ScoredCandidate> cands;
    const int n = int(rng.between(0, 200));
    for (int i = 0; i < n; ++i) {
      cands.push_back({"c" + std::to_string(i), {double(rng.below(11)) / 2, double(rng.below(11)) / 2}, CandidateSource::OnPolicy});
    }
    std::set<std::pair<std::string, std::string>> got, oracle;
    for (const auto& p : strict_dominance_pairs("ctx", cands)) got.insert({p.winner_id, p.loser_id});
    for (const auto& a : cands) {
      for (const auto& b : cands) {
        if (a.scores.instruction_adherence > b.scores.instruction_adherence && a.scores.aesthetic > b.scores.aesthetic) {
          oracle.insert({a.triplet_id, b.triplet_id});
        }
      }
    }
    mismatches += got != oracle;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " sets differ from oracle");

  std::size_t tie_pairs = 0;
  for (int crit = 0; crit < 2; ++crit) {
    for (int t = 0; t < 50; ++t) {
      std::vector<ScoredCandidate> cands;
      for (int i = 0; i < 50; ++i) {
        const double free = double(rng.below(11)) / 2;
        cands.push_back({"c" + std::to_string(i), crit ? AssessorScore{3.0, free} : AssessorScore{free, 3.0},
                         CandidateSource::OnPolicy});
      }
      tie_pairs += strict_dominance_pairs("ctx", cands).size();
    }
  }
  o.require(tie_pairs == 0, std::to_string(tie_pairs) + " pairs under a single-criterion tie");

  bool sym_ok = true;
  for (int m = 1; m <= 10; ++m) {
    SymmetricMatrix mat;
    for (int i = 0; i < m; ++i) {
      mat.context_ids.push_back("c" + std::to_string(i));
      mat.generation_ids.push_back("y" + std::to_string(i));
    }
    mat.passes = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(m, m, false);
    for (int i = 0; i < m; ++i) mat.passes(i, i) = true;
    sym_ok &= symmetric_pairs(mat).pairs.size() == std::size_t(m * (m - 1));
  }
  o.require(sym_ok, "symmetric pair count != m(m-1)");
  o.note("1000 sets match oracle, 0 tie pairs, m(m-1) for m<=10");
  return o;
}

// --- 9 -----------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

ImageBuffer crop_96() {
  const auto& src = test::test_image();
  ImageBuffer out(96, 96, 3);
  for (int y = 0; y < 96; ++y) {
    for (int x = 0; x < 96; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = src.at(80 + x, 60 + y, c);
    }
  }
  return out;
}

Outcome augmentation_determinism() {
  Outcome o;
  std::vector<std::map<std::string, std::string>> snaps;
  for (int workers : {1, 8, 1}) {
    test::TempDir dir;
    write_fixture(dir.path());
    const nlohmann::json doc{
        {"global_seed", 3},
        {"stages", nlohmann::json::array({{{"name", "augment"},
                                           {"operation", "augment"},
                                           {"inputs", {"mined.jsonl"}},
                                           {"output", "out/augmented.jsonl"},
                                           {"parameters", {{"rate", 0.15}}}}})}};
    run_pipeline(parse_pipeline_config(doc, dir.path()), {false, workers, std::nullopt});
    snaps.push_back(snapshot(dir.path()));
  }
  o.require(snaps[0] == snaps[2], "two runs differ");
  o.require(snaps[0] == snaps[1], "workers 1 and 8 differ");

  const char* objects[] = {"cup", "car", "dog", "lamp", "tree"};
  const char* left_forms[] = {"move the {} to the left", "put the {} on the LEFT", "shift the {} left",
                              "place the {} at the left edge", "the {} should face left"};
  const char* text_forms[] = {"add text on the {}", "write TEXT under the {}", "put the text 'hi' on the {}",
                              "remove the text near the {}", "Text: {} for sale"};
  std::vector<std::string> prompts;
  for (const char* obj : objects) {
    for (const auto* forms : {left_forms, text_forms}) {
      for (int k = 0; k < 5; ++k) {
        std::string p = forms[k];
        p.replace(p.find("{}"), 2, obj);
        prompts.push_back(p);
      }
    }
  }
  ImageStore store;
  const auto img = crop_96();
  TripletRecord base;
  base.id = "base";
  base.source_ref = store.put(img);
  base.target_ref = store.put(gaussian_blur(img, 1.0));
  base.provenance = Provenance::Mined;
  const DirectionalBlocklist guard;
  std::size_t blocked = 0;
  for (const auto& p : prompts) {
    base.instruction = {"i", p, InstructionOrigin::Synthetic, 0};
    blocked += !conditional_mirror(base, guard, store).has_value();
  }
  o.require(blocked == prompts.size(), "mirror guard blocked " + std::to_string(blocked) + "/" + std::to_string(prompts.size()));

  std::size_t leaks = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto occ = occlude(img, seed);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        if (occ.mask.get(x, y)) continue;
        for (int c = 0; c < 3; ++c) leaks += occ.image.at(x, y, c) != img.at(x, y, c);
      }
    }
  }
  o.require(leaks == 0, std::to_string(leaks) + " pixel changes outside the mask");
  o.note(std::to_string(snaps[0].size()) + " files identical, guard " + std::to_string(blocked) + "/" +
         std::to_string(prompts.size()) + ", overlay leaks " + std::to_string(leaks) + " over 1000 seeds");
  return o;
}

// --- 10, 11 ------------------------------------------------------------------

Outcome compression() {
  Outcome o;
  const auto& img = test::test_image();
  std::vector<double> p;
  std::string list;
  for (int q : {10, 30, 50, 80, 100}) {
    p.push_back(psnr(img, jpeg_simulate(img, q)));
    list += (list.empty() ? "" : ", ") + std::string("q") + std::to_string(q) + "=" + fmt(p.back()) + " dB";
  }
  for (std::size_t i = 1; i < p.size(); ++i) o.require(p[i] > p[i - 1], "not strictly monotone");
  o.require(p.back() >= 45.0, "PSNR(q100) " + fmt(p.back()) + " dB < 45 dB");
  o.note(list);
  return o;
}

Outcome blur_monotone() {
  Outcome o;
  const auto& img = test::test_image();
  std::vector<double> b;
  std::string list;
  for (double s : {0.0, 1.0, 3.0, 6.0}) {
    b.push_back(blur_effect(gaussian_blur(img, s)));
    list += (list.empty() ? "" : ", ") + std::string("s") + fmt(s) + "=" + fmt(b.back());
  }
  for (std::size_t i = 1; i < b.size(); ++i) o.require(b[i] > b[i - 1], "not strictly increasing");
  o.note(list);
  return o;
}

// --- 12 ----------------------------------------------------------------------

Outcome scheduler() {
  Outcome o;
  std::size_t bad = 0;
  double lo = 1e9, hi = 0;
  for (std::uint64_t s = 0; s < 1000000; ++s) {
    const auto [w, h] = sample_resolution(s);
    const double ar = double(w) / h;
    lo = std::min(lo, ar);
    hi = std::max(hi, ar);
    bad += w < 860 || w > 2200 || h < 860 || h > 2200 || ar > 6.0 || ar < 1.0 / 6.0;
  }
  o.require(bad == 0, std::to_string(bad) + " resolutions out of bounds");

  Rng rng(1212);
  bool budget_ok = true, partition_ok = true;
  for (int t = 0; t < 50; ++t) {
    std::vector<PlanItem> items;
    const std::size_t n = rng.between(1, 400);
    for (std::size_t i = 0; i < n; ++i) {
      const auto [w, h] = sample_resolution(rng.next());
      items.push_back({"it" + std::to_string(i), w, h, rng.below(2) ? "t2i" : "edit"});
    }
    const std::uint64_t budget = 2200ull * 2200 * (1 + rng.below(8));
    const auto plan = plan_batches(items, budget, std::uint64_t(t));
    std::multiset<std::string> seen;
    for (const auto& b : plan.batches) {
      budget_ok &= std::uint64_t(b.width) * b.height * b.ids.size() <= budget;
      seen.insert(b.ids.begin(), b.ids.end());
    }
    std::multiset<std::string> want;
    for (const auto& it : items) want.insert(it.id);
    partition_ok &= seen == want;
  }
  o.require(budget_ok, "a batch exceeds the budget");
  o.require(partition_ok, "batches do not partition the items");

  std::vector<TaskItem> edit, t2i;
  for (int i = 0; i < 100; ++i) {
    edit.push_back({"e" + std::to_string(i), "p"});
    t2i.push_back({"t" + std::to_string(i), "p"});
  }
  std::size_t n_t2i = 0, n_edit = 0;
  for (const auto& m : mix_tasks(edit, t2i, kPretrainMix, 100, 12)) (m.kind == TaskKind::T2I ? n_t2i : n_edit) += 1;
  o.require(n_t2i == 68 && n_edit == 32, "mix " + std::to_string(n_t2i) + "/" + std::to_string(n_edit));
  o.note("10^6 draws, aspect [" + fmt(lo) + ", " + fmt(hi) + "], mix " + std::to_string(n_t2i) + "/" +
         std::to_string(n_edit));
  return o;
}

// --- 13 ----------------------------------------------------------------------

Outcome overall() {
  Outcome o;
  const std::map<std::string, double> scores = {{"add", 3.89},     {"adjust", 4.22},    {"extract", 2.90},
                                                {"replace", 4.34}, {"remove", 4.42},    {"background", 4.22},
                                                {"style", 4.40},   {"hybrid", 3.52},    {"action", 2.75}};
  const double s = overall_score(scores);
  o.require(std::abs(s - 3.85) <= 0.01, "overall " + fmt(s));
  o.note("overall " + fmt(s, 6));
  return o;
}

// --- 14 ----------------------------------------------------------------------

int run_forge(const fs::path& config, int workers) {
  const std::string cmd = std::string(FORGE_TOOL) + " run --config " + config.string() + " --workers " +
                          std::to_string(workers) + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end() {
  Outcome o;
  std::vector<std::map<std::string, std::string>> snaps;
  double slowest = 0;
  for (int workers : {1, 1, 4}) {
    test::TempDir dir;
    fs::copy(FORGE_FIXTURE_DIR, dir.path(), fs::copy_options::recursive);
    const auto t0 = Clock::now();
    const int rc = run_forge(dir / "pipeline.json", workers);
    slowest = std::max(slowest, seconds_since(t0));
    o.require(rc == 0, "forge run exited " + std::to_string(rc));
    snaps.push_back(snapshot(dir.path()));
  }
  o.require(snaps[0] == snaps[1], "two runs differ");
  o.require(snaps[0] == snaps[2], "workers 1 and 4 differ");
  o.require(slowest < 60.0, "runtime " + fmt(slowest) + " s");
  std::size_t pairs = 0, final_records = 0;
  for (const auto& [name, body] : snaps[0]) {
    const auto lines = std::size_t(std::count(body.begin(), body.end(), '\n'));
    if (name == "out/pairs.jsonl") pairs = lines;
    if (name == "out/final.jsonl") final_records = lines;
  }
  o.require(final_records > 0 && pairs > 0, "empty final outputs");
  o.note(std::to_string(snaps[0].size()) + " files identical, " + std::to_string(final_records) + " final records, " +
         std::to_string(pairs) + " pairs, slowest run " + fmt(slowest, 3) + " s");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"bootstrapping counts", bootstrapping_counts},
      {"softmax grounding", softmax_grounding},
      {"frequency cap", frequency_cap},
      {"homography DLT and RANSAC", homography},
      {"face IoU gate", face_iou},
      {"assessor threshold partition", assessor_partition},
      {"diffusion DPO loss and gradients", dpo},
      {"strict dominance and symmetric pairs", dominance},
      {"augmentation determinism, mirror guard, overlay locality", augmentation_determinism},
      {"JPEG compression PSNR", compression},
      {"blur score monotonicity", blur_monotone},
      {"resolution sampling, batching and task mix", scheduler},
      {"overall benchmark score", overall},
      {"end-to-end determinism", end_to_end},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - std::size_t(failures), criteria.size());
  return failures == 0 ? 0 : 1;
}

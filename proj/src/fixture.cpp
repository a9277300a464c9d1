// Synthetic end-to-end fixture: small textured anchors, tinted (and
// sometimes shifted) edit targets with inline grades, a user-instruction
// corpus, a face sidecar and a pipeline config that exercises every stage.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "forge/pipeline.hpp"
#include "forge/random.hpp"

namespace forge {

namespace fs = std::filesystem;

namespace {

using json = nlohmann::ordered_json;

constexpr int kSide = 64;
constexpr int kAnchors = 25;
constexpr int kEditsPerAnchor = 4;
constexpr int kCandidates = 2;

const std::vector<std::string>& instruction_pool() {
  static const std::vector<std::string> pool = {
      "make the colors warmer",        "make the whole picture cooler",  "add a reddish tint",
      "give the scene a green cast",   "make the image look bluer",      "tone down the red channel",
      "boost the yellow tones",        "make everything slightly purple", "warm up the highlights",
      "give it a teal look",           "make the photo look faded",      "add a magenta tint",
  };
  return pool;
}

// Sum of soft colored blobs over a low-frequency gradient; aperiodic, with
// enough local structure for patch matching.
ImageBuffer anchor_image(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> px(std::size_t(kSide) * kSide * 3);
  const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
  for (int y = 0; y < kSide; ++y) {
    for (int x = 0; x < kSide; ++x) {
      for (int c = 0; c < 3; ++c) px[(std::size_t(y) * kSide + x) * 3 + c] = 90.0 + 30.0 * (gx * x + gy * y) / kSide;
    }
  }
  for (int b = 0; b < 40; ++b) {
    const double cx = rng.uniform(0, kSide), cy = rng.uniform(0, kSide);
    const double r = rng.uniform(2.5, 8.0);
    double color[3];
    for (double& v : color) v = rng.uniform(-110.0, 110.0);
    for (int y = 0; y < kSide; ++y) {
      for (int x = 0; x < kSide; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double w = std::exp(-d2 / (2.0 * r * r));
        for (int c = 0; c < 3; ++c) px[(std::size_t(y) * kSide + x) * 3 + c] += w * color[c];
      }
    }
  }
  ImageBuffer img(kSide, kSide, 3);
  for (std::size_t i = 0; i < px.size(); ++i) img.data()[i] = to_u8(px[i]);
  return img;
}

// Per-channel gain, then an optional integer translation (edge-replicated).
ImageBuffer edited_image(const ImageBuffer& src, const double gain[3], int dx, int dy) {
  ImageBuffer out(src.width(), src.height(), 3);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      const int sx = std::clamp(x - dx, 0, src.width() - 1);
      const int sy = std::clamp(y - dy, 0, src.height() - 1);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = to_u8(src.at(sx, sy, c) * gain[c]);
    }
  }
  return out;
}

double grade(Rng& rng) { return std::nearbyint(rng.uniform(2.5, 5.0) * 10.0) / 10.0; }

void write_lines(const fs::path& path, const std::vector<json>& lines) {
  std::string text;
  for (const auto& j : lines) text += j.dump() + "\n";
  write_file_atomic(path, text);
}

}  // namespace

void write_fixture(const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir / "images");
  const auto& pool = instruction_pool();

  std::vector<TripletRecord> mined;
  json faces = json::object();
  for (int a = 0; a < kAnchors; ++a) {
    char name[32];
    std::snprintf(name, sizeof name, "images/anchor_%02d", a);
    const std::string anchor_ref = std::string(name) + ".png";
    const ImageBuffer anchor = anchor_image(derive_seed(seed, "anchor", std::uint64_t(a)));
    write_image(anchor, dir / anchor_ref);

    Rng rng(derive_seed(seed, "edits", std::uint64_t(a)));
    std::vector<std::size_t> picks(pool.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    rng.shuffle(picks);
    const bool has_face = a % 5 == 0;
    if (has_face) faces[anchor_ref] = json::array({json::array({20, 18, 40, 42})});

    for (int e = 0; e < kEditsPerAnchor; ++e) {
      const std::string& text = pool[picks[std::size_t(e)]];
      for (int k = 0; k < kCandidates; ++k) {
        double gain[3];
        for (double& g : gain) g = rng.uniform(0.8, 1.2);
        const bool shifted = rng.uniform() < 0.3;
        const ImageBuffer target = edited_image(anchor, gain, shifted ? 2 : 0, shifted ? 1 : 0);
        const std::string target_ref = std::string(name) + "_e" + std::to_string(e) + "_c" + std::to_string(k) + ".png";
        write_image(target, dir / target_ref);
        if (has_face) {
          // The first candidate of the first edit moves the face far enough to be dropped.
          const bool moved = e == 0 && k == 0;
          faces[target_ref] = moved ? json::array({json::array({26, 22, 46, 46})}) : faces[anchor_ref];
        }

        TripletRecord r;
        r.source_ref = anchor_ref;
        r.instruction = {derive_id("i", {text}), text, InstructionOrigin::Synthetic, 0};
        r.target_ref = target_ref;
        r.provenance = Provenance::Mined;
        const double adherence = grade(rng);
        r.scores = AssessorScore{adherence, grade(rng)};
        r.id = derive_id("m", {anchor_ref, text, target_ref});
        mined.push_back(std::move(r));
      }
    }
  }
  write_manifest(mined, dir / "mined.jsonl");
  write_file_atomic(dir / "faces.json", faces.dump(2) + "\n");

  // User corpus: two paraphrases per pool entry plus unrelated requests.
  std::vector<json> users;
  int n = 0;
  auto user = [&](const std::string& text) {
    char id[16];
    std::snprintf(id, sizeof id, "u%03d", n++);
    users.push_back({{"id", id}, {"text", text}});
  };
  for (const auto& t : pool) {
    user("please " + t);
    user("can you " + t + "?");
  }
  for (const char* t : {"remove the person on the left", "replace the sky with a sunset", "add a hat to the dog",
                        "turn the car red", "make it look like a watercolor painting", "delete the watermark"}) {
    user(t);
  }
  write_lines(dir / "user_instructions.jsonl", users);

  // Small DPO batch for the dpo-loss command.
  std::vector<json> dpo;
  Rng drng(derive_seed(seed, "dpo"));
  for (int s = 0; s < 4; ++s) {
    auto vec = [&] {
      std::vector<double> v(8);
      for (double& x : v) x = std::nearbyint(drng.normal() * 1000.0) / 1000.0;
      return v;
    };
    dpo.push_back({{"eps", vec()}, {"eps_ref_w", vec()}, {"eps_theta_w", vec()},
                   {"eps_ref_l", vec()}, {"eps_theta_l", vec()}, {"beta", 0.1}});
  }
  write_lines(dir / "dpo_samples.jsonl", dpo);

  json config;
  config["global_seed"] = seed;
  config["parallelism"] = 2;
  config["image_store"] = ".";
  config["stages"] = json::array({
      {{"name", "ground"},
       {"operation", "ground_instructions"},
       {"inputs", json::array({"mined.jsonl"})},
       {"output", "out/grounded.jsonl"},
       {"parameters", {{"user_corpus", "user_instructions.jsonl"}, {"topk", 2}, {"tau_sim", 0.7}, {"cap", 3}}}},
      {{"name", "bootstrap"},
       {"operation", "bootstrap"},
       {"inputs", json::array({"out/grounded.jsonl"})},
       {"output", "out/bootstrapped.jsonl"},
       {"parameters", json::object()}},
      {{"name", "filter"},
       {"operation", "filter_triplets"},
       {"inputs", json::array({"out/bootstrapped.jsonl"})},
       {"output", "out/filtered.jsonl"},
       {"parameters",
        {{"face_sidecar", "faces.json"}, {"assessor", "stub"}, {"assessor_threshold", 3.5}, {"align", true}, {"align_provenance", json::array({"mined"})}}}},
      {{"name", "augment"},
       {"operation", "augment"},
       {"inputs", json::array({"out/filtered.jsonl"})},
       {"output", "out/augmented.jsonl"},
       {"parameters", {{"rate", 0.08}, {"provenance", json::array({"mined"})}}}},
      {{"name", "validate"},
       {"operation", "validate"},
       {"inputs", json::array({"out/augmented.jsonl"})},
       {"output", "out/final.jsonl"},
       {"parameters", json::object()}},
      {{"name", "pairs"},
       {"operation", "strict_dominance_pairs"},
       {"inputs", json::array({"out/filtered.jsonl"})},
       {"output", "out/pairs.jsonl"},
       {"parameters", {{"min_gap", 0.0}}}},
  });
  write_file_atomic(dir / "pipeline.json", config.dump(2) + "\n");
}

}  // namespace forge

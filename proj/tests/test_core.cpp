#include <doctest.h>

#include <random>
#include <set>
#include <thread>

#include "forge/error.hpp"
#include "forge/manifest.hpp"
#include "support.hpp"

using namespace forge;

namespace {

TripletRecord sample_record(const std::string& id) {
  TripletRecord r;
  r.id = id;
  r.source_ref = "images/a.png";
  r.instruction = {"i-1", "make it brighter", InstructionOrigin::Synthetic, 2};
  r.target_ref = "images/b.png";
  r.provenance = Provenance::Mined;
  r.scores = AssessorScore{4.5, 3.0};
  r.lineage = {"p-1"};
  return r;
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("splitmix64 and mt19937_64 match published reference outputs") {
  // splitmix64 of state 0 (first output of the reference generator).
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  // The 10000th output of a default-seeded mt19937_64 is fixed by the standard.
  std::mt19937_64 ref;
  ref.discard(9999);
  CHECK(ref() == 9981545732273789042ULL);
  // Rng is that engine seeded through splitmix64.
  Rng rng(42);
  std::mt19937_64 oracle(splitmix64(42));
  for (int i = 0; i < 100; ++i) CHECK(rng.next() == oracle());
}

TEST_CASE("fnv1a64 reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("derive_seed is a pure function that separates tags and indices") {
  CHECK(derive_seed(1, "x") == derive_seed(1, "x"));
  CHECK(derive_seed(1, "x") != derive_seed(2, "x"));
  CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(9, "t", i));
  CHECK(seen.size() == 1000);
}

TEST_CASE("Rng distributions stay in range and have the right moments") {
  Rng rng(7);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
  double g = 0;
  for (int i = 0; i < n; ++i) g += rng.gamma(2.5);
  CHECK(g / n == doctest::Approx(2.5).epsilon(0.02));
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) {
    const auto v = rng.between(-2, 3);
    REQUIRE(v >= -2);
    REQUIRE(v <= 3);
    ++counts[std::size_t(v + 2)];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> a(50), b;
  for (int i = 0; i < 50; ++i) a[std::size_t(i)] = i;
  b = a;
  Rng(3).shuffle(a);
  Rng(3).shuffle(b);
  CHECK(a == b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[std::size_t(i)] == i);
}

TEST_CASE("to_u8 rounds half to even and clamps") {
  CHECK(to_u8(2.5) == 2);
  CHECK(to_u8(3.5) == 4);
  CHECK(to_u8(3.49) == 3);
  CHECK(to_u8(-7.0) == 0);
  CHECK(to_u8(255.6) == 255);
  CHECK(to_u8(1e9) == 255);
}

TEST_CASE("sha256 and derive_id against the FIPS 180-2 'abc' vector") {
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // Every part is NUL-terminated before hashing.
  CHECK(derive_id("x", {"abc"}) == "x-" + sha256_hex(std::string_view("abc\0", 4)).substr(0, 16));
  CHECK(derive_id("x", {"abc"}) != "x-ba7816bf8f01cfea");
  // Parts are delimited, so ("ab", "c") differs from ("a", "bc").
  CHECK(derive_id("x", {"ab", "c"}) != derive_id("x", {"a", "bc"}));
}

TEST_CASE("manifest round trip is lossless and byte-stable") {
  std::vector<TripletRecord> recs = {sample_record("a"), sample_record("b")};
  recs[1].scores.reset();
  recs[1].provenance = Provenance::Identity;
  recs[1].target_ref = recs[1].source_ref;
  const std::string text = serialize_manifest(recs);
  const auto back = parse_manifest(text);
  CHECK(back == recs);
  CHECK(serialize_manifest(back) == text);
  CHECK(text.find("\"id\":\"a\",\"source_ref\"") != std::string::npos);
}

TEST_CASE("manifest file write is atomic and readable") {
  test::TempDir dir;
  const std::vector<TripletRecord> recs = {sample_record("a")};
  write_manifest(recs, dir / "m.jsonl");
  CHECK(read_manifest(dir / "m.jsonl") == recs);
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    CHECK(e.path().filename() == "m.jsonl");  // no temp file left behind
  }
}

TEST_CASE("manifest errors carry line numbers and kinds") {
  const std::string good = serialize_record(sample_record("a"));
  try {
    parse_manifest(good + "\n{not json\n");
    FAIL("expected ManifestError");
  } catch (const ManifestError& e) {
    CHECK(e.line() == 2);
    CHECK(e.kind() == ManifestError::Kind::Syntax);
  }
  try {
    parse_manifest(good + "\n\n{\"id\":\"x\"}\n");
    FAIL("expected ManifestError");
  } catch (const ManifestError& e) {
    CHECK(e.line() == 3);
    CHECK(e.kind() == ManifestError::Kind::Schema);
  }
  CHECK(parse_manifest("").empty());
}

TEST_CASE("validate_triplet flags each violation kind") {
  auto kinds = [](const TripletRecord& r, const std::map<std::string, const TripletRecord*>* c = nullptr) {
    std::set<ViolationKind> k;
    for (const auto& v : validate_triplet(r, c)) k.insert(v.kind);
    return k;
  };
  CHECK(kinds(sample_record("a")).empty());

  auto loop = sample_record("a");
  loop.target_ref = loop.source_ref;
  CHECK(kinds(loop).count(ViolationKind::SelfLoop));
  loop.provenance = Provenance::Identity;
  CHECK(kinds(loop).empty());

  auto bad_scores = sample_record("a");
  bad_scores.scores = AssessorScore{5.5, 1.0};
  CHECK(kinds(bad_scores).count(ViolationKind::InvalidScores));

  auto self = sample_record("a");
  self.lineage = {"a"};
  CHECK(kinds(self).count(ViolationKind::LineageSelf));

  auto empty = sample_record("");
  empty.instruction.text = "  ";
  CHECK(kinds(empty).count(ViolationKind::EmptyId));
  CHECK(kinds(empty).count(ViolationKind::EmptyInstruction));

  // a -> b -> c -> a
  std::vector<TripletRecord> ring = {sample_record("a"), sample_record("b"), sample_record("c")};
  ring[0].lineage = {"b"};
  ring[1].lineage = {"c"};
  ring[2].lineage = {"a"};
  const auto corpus = index_by_id(ring);
  for (const auto& r : ring) CHECK(kinds(r, &corpus).count(ViolationKind::LineageCycle));
  ring[2].lineage = {};
  const auto dag = index_by_id(ring);
  for (const auto& r : ring) CHECK(kinds(r, &dag).empty());
}

TEST_CASE("PNG and PPM codecs round trip exactly") {
  for (int c : {1, 3}) {
    const auto img = test::random_image(37, 23, c, 11);
    CHECK(decode_png(encode_png(img)).data().size() == img.data().size());
    const auto png = decode_png(encode_png(img));
    const auto ppm = decode_ppm(encode_ppm(img));
    CHECK(std::equal(png.data().begin(), png.data().end(), img.data().begin()));
    CHECK(std::equal(ppm.data().begin(), ppm.data().end(), img.data().begin()));
  }
  CHECK_THROWS_AS(decode_png(std::vector<std::uint8_t>{1, 2, 3}), IoError);
}

TEST_CASE("psnr oracle values") {
  ImageBuffer a(8, 8, 3, 10), b(8, 8, 3, 11);
  CHECK(std::isinf(psnr(a, a)));
  // MSE = 1 -> 20 log10(255).
  CHECK(psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(a, ImageBuffer(8, 7, 3)), InvalidArgument);
}

TEST_CASE("ImageStore is content addressed and safe under concurrent puts") {
  test::TempDir dir;
  ImageStore store(dir.path(), "derived");
  const auto img = test::random_image(16, 16, 3, 1);
  const auto ref = store.put(img);
  CHECK(ref.rfind("derived/", 0) == 0);
  CHECK(ref == store.put(img));
  CHECK(store.get(ref) == img);

  std::vector<std::string> refs(8);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] { refs[std::size_t(t)] = store.put(test::random_image(16, 16, 3, 100 + std::uint64_t(t % 2))); });
  }
  for (auto& t : threads) t.join();
  for (int t = 0; t < 8; ++t) CHECK(store.get(refs[std::size_t(t)]) == test::random_image(16, 16, 3, 100 + std::uint64_t(t % 2)));

  ImageStore mem;
  CHECK(mem.in_memory());
  const auto mref = mem.put(img);
  CHECK(mem.get(mref) == img);
  CHECK_THROWS_AS(mem.get("nope"), IoError);
}

}  // TEST_SUITE

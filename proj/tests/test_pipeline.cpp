#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "forge/error.hpp"
#include "forge/manifest.hpp"
#include "forge/pipeline.hpp"
#include "forge/random.hpp"
#include "support.hpp"

using namespace forge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TripletRecord scored(int i, std::optional<AssessorScore> s) {
  TripletRecord r;
  r.id = "r" + std::to_string(i);
  r.source_ref = "s" + std::to_string(i) + ".png";
  r.target_ref = "t" + std::to_string(i) + ".png";
  r.instruction = {"i" + std::to_string(i), "edit " + std::to_string(i), InstructionOrigin::Synthetic, 0};
  r.provenance = Provenance::Mined;
  r.scores = s;
  return r;
}

json stage(const std::string& name, const std::string& op, std::vector<std::string> in, const std::string& out,
           json params = json::object()) {
  return {{"name", name}, {"operation", op}, {"inputs", in}, {"output", out}, {"parameters", params}};
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(FORGE_TOOL) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config validation rejects bad graphs before running") {
  test::TempDir dir;
  write_manifest(std::vector<TripletRecord>{scored(0, AssessorScore{4, 4})}, dir / "in.jsonl");
  auto parse = [&](json stages) {
    return parse_pipeline_config(json{{"stages", stages}, {"global_seed", 1}}, dir.path());
  };
  CHECK_NOTHROW(validate_config(parse(json::array({stage("a", "validate", {"in.jsonl"}, "a.jsonl")}))));
  CHECK_THROWS_AS(validate_config(parse(json::array({stage("a", "validate", {"in.jsonl"}, "a.jsonl"),
                                                     stage("a", "validate", {"a.jsonl"}, "b.jsonl")}))),
                  ConfigError);
  CHECK_THROWS_AS(validate_config(parse(json::array({stage("a", "sharpen", {"in.jsonl"}, "a.jsonl")}))), ConfigError);
  CHECK_THROWS_AS(validate_config(parse(json::array({stage("a", "validate", {"b.jsonl"}, "a.jsonl"),
                                                     stage("b", "validate", {"a.jsonl"}, "b.jsonl")}))),
                  ConfigError);
  CHECK_THROWS_AS(validate_config(parse(json::array({stage("a", "validate", {"missing.jsonl"}, "a.jsonl")}))),
                  ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config(json{{"stages", 3}}, dir.path()), ConfigError);
}

TEST_CASE("an empty stage list is a no-op") {
  test::TempDir dir;
  const auto cfg = parse_pipeline_config(json{{"stages", json::array()}}, dir.path());
  CHECK(run_pipeline(cfg).empty());
}

TEST_CASE("threshold stage counts equal a per-record replay") {
  test::TempDir dir;
  Rng rng(17);
  std::vector<TripletRecord> recs;
  std::size_t keep = 0, remove = 0, missing = 0;
  for (int i = 0; i < 300; ++i) {
    if (rng.below(10) == 0) {
      recs.push_back(scored(i, std::nullopt));
      ++missing;
      continue;
    }
    const double a = double(rng.below(11)) / 2.0;  // hits 3.5 exactly now and then
    recs.push_back(scored(i, AssessorScore{a, 3.0}));
    (a >= 3.5 ? keep : remove) += 1;
  }
  write_manifest(recs, dir / "in.jsonl");
  const auto cfg = parse_pipeline_config(
      json{{"stages", json::array({stage("f", "assessor_threshold_filter", {"in.jsonl"}, "out.jsonl",
                                         {{"assessor_threshold", 3.5}})})}},
      dir.path());
  const auto reports = run_pipeline(cfg);
  REQUIRE(reports.size() == 1);
  const auto& r = reports[0];
  CHECK(r.in == 300);
  CHECK(r.kept == keep);
  CHECK(r.removed == remove);
  CHECK(r.errored == missing);
  CHECK(r.in == r.kept + r.removed + r.errored);
  CHECK(r.reasons.at("missing-scores") == missing);
  const auto out = read_manifest(dir / "out.jsonl");
  CHECK(out.size() == keep);
  for (const auto& o : out) CHECK(o.scores->instruction_adherence >= 3.5);
  CHECK(fs::exists(dir / "out.jsonl.filter.jsonl"));
}

TEST_CASE("fixture runs are deterministic across runs and worker counts, and resume") {
  test::TempDir a, b;
  write_fixture(a.path());
  write_fixture(b.path());
  // A trimmed config keeps the unit suite quick; the full run is an acceptance check.
  auto trimmed = [](const fs::path& root) {
    auto doc = json::parse(slurp(root / "pipeline.json"));
    json stages = json::array();
    for (const auto& s : doc["stages"]) {
      if (s["name"] == "ground" || s["name"] == "bootstrap" || s["name"] == "validate") stages.push_back(s);
    }
    stages.back()["inputs"] = {"out/bootstrapped.jsonl"};
    doc["stages"] = stages;
    return parse_pipeline_config(doc, root);
  };
  const auto ra = run_pipeline(trimmed(a.path()), {false, 1, std::nullopt});
  const auto rb = run_pipeline(trimmed(b.path()), {false, 3, std::nullopt});
  REQUIRE(ra.size() == 3);
  for (const char* f : {"out/grounded.jsonl", "out/bootstrapped.jsonl", "out/final.jsonl"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(to_json(ra[i], false) == to_json(rb[i], false));
    CHECK(ra[i].in == ra[i].kept + ra[i].removed + ra[i].errored);
  }

  const auto again = run_pipeline(trimmed(a.path()), {true, 1, std::nullopt});
  for (const auto& r : again) CHECK(r.resumed);
  // A different seed changes the fingerprint, so nothing is skipped.
  const auto reseeded = run_pipeline(trimmed(a.path()), {true, 1, std::uint64_t{99}});
  CHECK(!reseeded[0].resumed);
}

TEST_CASE("a failing stage keeps earlier outputs and reports what completed") {
  test::TempDir dir;
  write_manifest(std::vector<TripletRecord>{scored(0, AssessorScore{4, 4})}, dir / "in.jsonl");
  const auto cfg = parse_pipeline_config(
      json{{"stages", json::array({stage("v", "validate", {"in.jsonl"}, "v.jsonl"),
                                   stage("f", "face_iou_filter", {"v.jsonl"}, "f.jsonl", {{"face_sidecar", "nope.json"}})})}},
      dir.path());
  try {
    run_pipeline(cfg);
    FAIL("expected StageFailure");
  } catch (const StageFailure& e) {
    CHECK(e.stage() == "f");
    REQUIRE(e.completed().size() == 1);
    CHECK(e.completed()[0].stage == "v");
  }
  CHECK(read_manifest(dir / "v.jsonl").size() == 1);
  CHECK(!fs::exists(dir / "f.jsonl"));
}

TEST_CASE("manifest stats") {
  std::vector<TripletRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(scored(i, AssessorScore{4.2, 1.0}));
  for (int i = 0; i < 10; ++i) {
    auto r = scored(100 + i, std::nullopt);
    r.provenance = Provenance::Inverted;
    r.instruction.origin = InstructionOrigin::Inverted;
    recs.push_back(r);
  }
  auto dup = recs[0];
  dup.id = "dup";
  recs.push_back(dup);
  recs.push_back(dup);
  const auto s = manifest_stats(recs);
  CHECK(s.total == 22);
  CHECK(s.by_provenance.at("mined") == 12);
  CHECK(s.by_provenance.at("inverted") == 10);
  CHECK(s.by_origin.at("inverted") == 10);
  CHECK(s.scored == 12);
  CHECK(s.adherence_histogram[8] == 12);  // [4.0, 4.5)
  CHECK(s.aesthetic_histogram[2] == 12);
  CHECK(s.duplicates.size() == 1);
  const auto empty = manifest_stats({});
  CHECK(empty.total == 0);
  CHECK(empty.duplicates.empty());
}

TEST_CASE("command-line exit codes") {
  test::TempDir dir;
  write_manifest(std::vector<TripletRecord>{scored(0, AssessorScore{4, 4})}, dir / "ok.jsonl");
  auto bad = scored(1, std::nullopt);
  bad.target_ref = bad.source_ref;
  bad.provenance = Provenance::Mined;
  write_manifest(std::vector<TripletRecord>{bad}, dir / "bad.jsonl");
  {
    std::ofstream(dir / "garbage.jsonl") << "{not json\n";
  }
  CHECK(run_tool("validate " + (dir / "ok.jsonl").string()) == 0);
  CHECK(run_tool("validate " + (dir / "bad.jsonl").string()) == 1);
  CHECK(run_tool("stats " + (dir / "garbage.jsonl").string()) == 1);
  CHECK(run_tool("stats " + (dir / "ok.jsonl").string()) == 0);

  const json failing{{"stages", json::array({stage("f", "face_iou_filter", {"ok.jsonl"}, "f.jsonl",
                                                   {{"face_sidecar", "nope.json"}})})}};
  std::ofstream(dir / "fail.json") << failing.dump();
  std::ofstream(dir / "cycle.json")
      << json{{"stages", json::array({stage("a", "validate", {"a.jsonl"}, "a.jsonl")})}}.dump();
  CHECK(run_tool("run --config " + (dir / "fail.json").string()) == 2);
  CHECK(run_tool("run --config " + (dir / "cycle.json").string()) == 1);
  CHECK(run_tool("run --config " + (dir / "absent.json").string()) == 1);
}

}  // TEST_SUITE

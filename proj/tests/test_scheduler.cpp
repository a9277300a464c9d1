#include <doctest.h>

#include <map>
#include <set>

#include "forge/error.hpp"
#include "forge/random.hpp"
#include "forge/scheduler.hpp"

using namespace forge;

TEST_SUITE("scheduler") {

TEST_CASE("sampled resolutions respect side, multiple and aspect bounds") {
  std::set<int> widths;
  for (std::uint64_t s = 0; s < 20000; ++s) {
    const auto [w, h] = sample_resolution(s);
    REQUIRE(w >= 860);
    REQUIRE(w <= 2200);
    REQUIRE(h >= 860);
    REQUIRE(h <= 2200);
    REQUIRE(w % 4 == 0);
    REQUIRE(h % 4 == 0);
    widths.insert(w);
  }
  CHECK(widths.size() > 300);  // spread over the range, not a handful of values
  CHECK(sample_resolution(5) == sample_resolution(5));

  // A range where the aspect bound binds.
  const ResolutionRange wide{100, 2000, 4, 2.0, 64};
  for (std::uint64_t s = 0; s < 5000; ++s) {
    const auto [w, h] = sample_resolution(s, wide);
    REQUIRE(double(w) / h <= 2.0);
    REQUIRE(double(w) / h >= 0.5);
  }
  CHECK_THROWS_AS(sample_resolution(1, ResolutionRange{10, 11, 4, 6.0, 8}), InvalidArgument);
}

TEST_CASE("batches are same-shape, within budget, and partition the input") {
  Rng rng(6);
  std::vector<PlanItem> items;
  const std::pair<int, int> shapes[] = {{64, 64}, {32, 128}, {100, 50}, {200, 200}};
  for (int i = 0; i < 500; ++i) {
    const auto& s = shapes[rng.below(4)];
    items.push_back({"it" + std::to_string(i), s.first, s.second, i % 3 ? "edit" : "t2i"});
  }
  const std::uint64_t budget = 200 * 200 * 2;  // the largest shape fits twice
  const auto plan = plan_batches(items, budget, 9);
  std::multiset<std::string> seen;
  std::map<std::string, const PlanItem*> by_id;
  for (const auto& it : items) by_id[it.id] = &it;
  for (const auto& b : plan.batches) {
    CHECK(std::uint64_t(b.width) * b.height * b.ids.size() <= budget);
    CHECK(!b.ids.empty());
    CHECK(b.ids.size() == b.tags.size());
    for (std::size_t k = 0; k < b.ids.size(); ++k) {
      const auto* it = by_id.at(b.ids[k]);
      CHECK(it->width == b.width);
      CHECK(it->height == b.height);
      CHECK(it->tag == b.tags[k]);
      seen.insert(b.ids[k]);
    }
  }
  CHECK(seen.size() == items.size());
  CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == items.size());
  // Full batches hold floor(budget / pixels) items.
  for (const auto& b : plan.batches) CHECK(b.ids.size() <= budget / (std::uint64_t(b.width) * b.height));

  const auto again = plan_batches(items, budget, 9);
  REQUIRE(again.batches.size() == plan.batches.size());
  for (std::size_t i = 0; i < plan.batches.size(); ++i) CHECK(again.batches[i].ids == plan.batches[i].ids);

  const std::vector<PlanItem> big = {{"huge", 4000, 4000, "edit"}};
  try {
    plan_batches(big, budget, 1);
    FAIL("expected an oversized-item error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("huge") != std::string::npos);
  }
  CHECK(plan_batches(std::vector<PlanItem>{}, budget, 1).batches.empty());
}

TEST_CASE("batch JSON shape") {
  const Batch b{64, 32, {"a", "b"}, {"edit", "t2i"}};
  CHECK(to_json(b).dump() == R"({"dims":[64,32],"ids":["a","b"],"tags":["edit","t2i"]})");
}

TEST_CASE("task mixing hits exact counts and applies the templates") {
  std::vector<TaskItem> edit, t2i;
  for (int i = 0; i < 100; ++i) {
    edit.push_back({"e" + std::to_string(i), "the sky is red"});
    t2i.push_back({"t" + std::to_string(i), "a red sky"});
  }
  const auto mixed = mix_tasks(edit, t2i, kPretrainMix, 100, 4);
  int n_t2i = 0;
  for (const auto& m : mixed) {
    if (m.kind == TaskKind::T2I) {
      ++n_t2i;
      CHECK(m.black_conditioning);
      CHECK(m.instruction == "generate the image by description: a red sky");
    } else {
      CHECK(!m.black_conditioning);
      CHECK(m.instruction == "what will this image be like if the sky is red");
    }
  }
  CHECK(n_t2i == 68);
  // Streams are consumed in order.
  CHECK(mixed.size() == 100);

  // The supervised row sums to 96 and is normalized: 34 / 96 of 1000.
  std::vector<TaskItem> e2(1000, {"e", "x"}), t2(1000, {"t", "y"});
  int sft_t2i = 0;
  for (const auto& m : mix_tasks(e2, t2, kSftMix, 1000, 1)) sft_t2i += m.kind == TaskKind::T2I;
  CHECK(sft_t2i == 354);
  CHECK_THROWS_AS(mix_tasks(std::vector<TaskItem>{}, t2i, kPretrainMix, 100, 1), InvalidArgument);
  CHECK_THROWS_AS((MixRatio{0, 0}.t2i_share()), InvalidArgument);
}

}  // TEST_SUITE

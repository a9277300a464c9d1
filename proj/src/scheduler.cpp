#include "forge/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "forge/error.hpp"
#include "forge/random.hpp"

namespace forge {

std::pair<int, int> sample_resolution(std::uint64_t seed, const ResolutionRange& r) {
  if (r.multiple < 1 || r.min_side < 1 || r.max_side < r.min_side || !(r.max_aspect >= 1.0)) {
    throw InvalidArgument("invalid resolution range");
  }
  const int lo = (r.min_side + r.multiple - 1) / r.multiple;
  const int hi = r.max_side / r.multiple;
  if (lo > hi) throw InvalidArgument("resolution range contains no multiple of " + std::to_string(r.multiple));
  Rng rng(derive_seed(seed, "resolution"));
  for (int attempt = 0; attempt <= r.max_retries; ++attempt) {
    const int w = int(rng.between(lo, hi)) * r.multiple;
    const int h = int(rng.between(lo, hi)) * r.multiple;
    const double aspect = double(w) / double(h);
    if (aspect >= 1.0 / r.max_aspect && aspect <= r.max_aspect) return {w, h};
  }
  throw InvalidArgument("no resolution within the aspect bound after " + std::to_string(r.max_retries) + " retries");
}

BatchPlan plan_batches(std::span<const PlanItem> items, std::uint64_t pixel_budget, std::uint64_t seed) {
  if (pixel_budget == 0) throw InvalidArgument("pixel budget must be positive");
  std::vector<std::pair<int, int>> order;
  std::map<std::pair<int, int>, std::vector<const PlanItem*>> buckets;
  for (const auto& it : items) {
    if (it.width < 1 || it.height < 1) throw InvalidArgument("item " + it.id + " has non-positive dims");
    const auto px = std::uint64_t(it.width) * std::uint64_t(it.height);
    if (px > pixel_budget) {
      throw InvalidArgument("item " + it.id + " (" + std::to_string(it.width) + "x" + std::to_string(it.height) +
                            ") exceeds the pixel budget of " + std::to_string(pixel_budget));
    }
    const std::pair dims{it.width, it.height};
    auto& b = buckets[dims];
    if (b.empty()) order.push_back(dims);
    b.push_back(&it);
  }
  BatchPlan plan;
  plan.pixel_budget = pixel_budget;
  for (const auto& dims : order) {
    const auto& members = buckets[dims];
    const auto size = std::size_t(pixel_budget / (std::uint64_t(dims.first) * std::uint64_t(dims.second)));
    for (std::size_t i = 0; i < members.size(); i += size) {
      Batch b{dims.first, dims.second, {}, {}};
      for (std::size_t k = i; k < std::min(members.size(), i + size); ++k) {
        b.ids.push_back(members[k]->id);
        b.tags.push_back(members[k]->tag);
      }
      plan.batches.push_back(std::move(b));
    }
  }
  Rng rng(derive_seed(seed, "plan_batches"));
  rng.shuffle(plan.batches);
  return plan;
}

nlohmann::ordered_json to_json(const Batch& b) {
  nlohmann::ordered_json j;
  j["dims"] = {b.width, b.height};
  j["ids"] = b.ids;
  j["tags"] = b.tags;
  return j;
}

double MixRatio::t2i_share() const {
  if (!(t2i_percent >= 0.0) || !(edit_percent >= 0.0) || !(t2i_percent + edit_percent > 0.0)) {
    throw InvalidArgument("mix ratio needs non-negative shares with a positive sum");
  }
  return t2i_percent / (t2i_percent + edit_percent);
}

namespace {

std::string fill_template(const char* tmpl, const std::string& prompt) {
  std::string s(tmpl);
  s.replace(s.find("{prompt}"), 8, prompt);
  return s;
}

}  // namespace

std::vector<MixedEntry> mix_tasks(std::span<const TaskItem> edit, std::span<const TaskItem> t2i, const MixRatio& ratio,
                                  std::size_t count, std::uint64_t seed) {
  const auto n_t2i = std::size_t(std::llround(double(count) * ratio.t2i_share()));
  const std::size_t n_edit = count - n_t2i;
  if (t2i.size() < n_t2i || edit.size() < n_edit) {
    throw InvalidArgument("mix_tasks streams too short: need " + std::to_string(n_t2i) + " t2i (have " +
                          std::to_string(t2i.size()) + ") and " + std::to_string(n_edit) + " edit (have " +
                          std::to_string(edit.size()) + ")");
  }
  std::vector<TaskKind> tags(n_t2i, TaskKind::T2I);
  tags.insert(tags.end(), n_edit, TaskKind::Edit);
  Rng rng(derive_seed(seed, "mix_tasks"));
  rng.shuffle(tags);

  std::vector<MixedEntry> out;
  out.reserve(count);
  std::size_t ti = 0, ei = 0;
  for (const auto kind : tags) {
    if (kind == TaskKind::T2I) {
      const auto& it = t2i[ti++];
      out.push_back({kind, it.id, fill_template(kT2iTemplate, it.prompt), true});
    } else {
      const auto& it = edit[ei++];
      out.push_back({kind, it.id, fill_template(kEditTemplate, it.prompt), false});
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const MixedEntry& e) {
  nlohmann::ordered_json j;
  j["task"] = e.kind == TaskKind::T2I ? "t2i" : "edit";
  j["id"] = e.id;
  j["instruction"] = e.instruction;
  j["black_conditioning"] = e.black_conditioning;
  return j;
}

}  // namespace forge

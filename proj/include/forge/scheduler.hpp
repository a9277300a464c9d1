#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace forge {

struct ResolutionRange {
  int min_side = 860;
  int max_side = 2200;
  int multiple = 4;
  double max_aspect = 6.0;  // w/h within [1/max_aspect, max_aspect]
  int max_retries = 64;
};

/// Uniform (w, h) on the multiples of `multiple` inside [min_side, max_side],
/// redrawn until the aspect ratio is in range. Throws when the range admits
/// no multiple or retries run out.
std::pair<int, int> sample_resolution(std::uint64_t seed, const ResolutionRange& range = {});

struct PlanItem {
  std::string id;
  int width = 0;
  int height = 0;
  std::string tag = "edit";
};

struct Batch {
  int width = 0;
  int height = 0;
  std::vector<std::string> ids;
  std::vector<std::string> tags;
};

struct BatchPlan {
  std::vector<Batch> batches;
  std::uint64_t pixel_budget = 0;
};

/// Exact-dims buckets (first-seen order), each cut into batches of
/// floor(budget / (w h)) items, then the batch order is shuffled by `seed`.
/// Throws InvalidArgument naming an item that does not fit alone.
BatchPlan plan_batches(std::span<const PlanItem> items, std::uint64_t pixel_budget, std::uint64_t seed);

nlohmann::ordered_json to_json(const Batch& b);

struct MixRatio {
  double t2i_percent = 0.0;
  double edit_percent = 100.0;

  /// T2I fraction of the normalized pair. Throws unless both are >= 0 with a positive sum.
  double t2i_share() const;
};

inline constexpr MixRatio kPretrainMix{68.0, 32.0};
inline constexpr MixRatio kSftMix{34.0, 62.0};  // sums to 96; shares are normalized

inline constexpr const char* kT2iTemplate = "generate the image by description: {prompt}";
inline constexpr const char* kEditTemplate = "what will this image be like if {prompt}";

struct TaskItem {
  std::string id;
  std::string prompt;
};

enum class TaskKind { T2I, Edit };

struct MixedEntry {
  TaskKind kind = TaskKind::Edit;
  std::string id;
  std::string instruction;  // prompt placed in the task template
  bool black_conditioning = false;  // T2I: the conditioning image is all black
};

/// llround(count * t2i_share) T2I entries (drawn in stream order) and the rest
/// edit entries, interleaved in a seeded order. Throws InvalidArgument with the
/// shortfall when a stream is too short.
std::vector<MixedEntry> mix_tasks(std::span<const TaskItem> edit, std::span<const TaskItem> t2i,
                                  const MixRatio& ratio, std::size_t count, std::uint64_t seed);

nlohmann::ordered_json to_json(const MixedEntry& e);

}  // namespace forge

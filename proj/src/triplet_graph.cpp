#include "forge/triplet_graph.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "forge/error.hpp"
#include "forge/random.hpp"

namespace forge {

std::string EditSet::base_id(std::size_t i) const {
  const auto& e = edits.at(i);
  if (!e.base_id.empty()) return e.base_id;
  return derive_id("t", {anchor_ref, e.instruction.text, e.target_ref});
}

std::vector<EditSet> EditSet::from_records(std::span<const TripletRecord> records) {
  std::vector<EditSet> out;
  std::map<std::string, std::size_t> slot;
  for (const auto& r : records) {
    auto [it, fresh] = slot.emplace(r.source_ref, out.size());
    if (fresh) out.push_back(EditSet{r.source_ref, {}});
    out[it->second].edits.push_back({r.instruction, r.target_ref, r.id});
  }
  return out;
}

void validate_edit_set(const EditSet& set) {
  if (set.edits.empty()) throw InvalidArgument("EditSet needs at least one edit");
  std::set<std::string> seen;
  for (const auto& e : set.edits) {
    if (e.target_ref == set.anchor_ref) throw InvalidArgument("EditSet target equals anchor: " + e.target_ref);
    if (!seen.insert(e.target_ref).second) throw InvalidArgument("EditSet has duplicate target " + e.target_ref);
  }
}

std::string default_inverter(std::string_view instruction) {
  return "undo the previous edit: " + std::string(instruction) + "; restore the original";
}

std::string default_composer(std::string_view undo, std::string_view then) {
  return "undo: " + std::string(undo) + "; then: " + std::string(then);
}

TripletRecord invert_triplet(const TripletRecord& base, const InstructionInverter& inverter) {
  std::string text = inverter(base.instruction.text);
  if (trim(text).empty()) throw HookError("inverter returned an empty instruction");
  TripletRecord r;
  r.id = derive_id("inv", {base.id});
  r.source_ref = base.target_ref;
  r.target_ref = base.source_ref;
  r.instruction = {derive_id("i", {text}), std::move(text), InstructionOrigin::Inverted, 0};
  r.provenance = Provenance::Inverted;
  r.lineage = {base.id};
  return r;
}

namespace {

TripletRecord base_record(const EditSet& set, std::size_t i) {
  TripletRecord r;
  r.id = set.base_id(i);
  r.source_ref = set.anchor_ref;
  r.instruction = set.edits[i].instruction;
  r.target_ref = set.edits[i].target_ref;
  r.provenance = Provenance::Mined;
  return r;
}

}  // namespace

BootstrapResult invert_triplets(const EditSet& set, const InstructionInverter& inverter) {
  BootstrapResult out;
  for (std::size_t i = 0; i < set.edits.size(); ++i) {
    try {
      out.records.push_back(invert_triplet(base_record(set, i), inverter));
    } catch (const std::exception& e) {
      out.skipped.push_back({i, e.what()});
    }
  }
  return out;
}

BootstrapResult composite_transitions(const EditSet& set, const InstructionComposer& composer) {
  BootstrapResult out;
  const std::size_t n = set.edits.size();
  if (n < 2) return out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      try {
        std::string text = composer(set.edits[i].instruction.text, set.edits[j].instruction.text);
        if (trim(text).empty()) throw HookError("composer returned an empty instruction");
        const std::string id_i = set.base_id(i);
        const std::string id_j = set.base_id(j);
        TripletRecord r;
        r.id = derive_id("cmp", {id_i, id_j});
        r.source_ref = set.edits[i].target_ref;
        r.target_ref = set.edits[j].target_ref;
        r.instruction = {derive_id("i", {text}), std::move(text), InstructionOrigin::Composite, 0};
        r.provenance = Provenance::Composite;
        r.lineage = {id_i, id_j};
        out.records.push_back(std::move(r));
      } catch (const std::exception& e) {
        out.skipped.push_back({i * n + j, e.what()});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

MiningOutcome mine_with_retries(const MiningPair& pair, const GeneratorHook& generator,
                                std::span<const CandidateValidator> validators, int max_attempts,
                                std::uint64_t global_seed) {
  if (max_attempts < 1) throw InvalidArgument("mine_with_retries: max_attempts must be >= 1");
  if (validators.empty()) throw InvalidArgument("mine_with_retries: at least one validator is required");
  if (!generator) throw InvalidArgument("mine_with_retries: no generator hook");
  MiningOutcome out;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    AttemptRecord rec;
    rec.attempt = attempt;
    rec.seed = derive_seed(global_seed, pair.pair_id, std::uint64_t(attempt));
    const GenerationRequest req{pair.source_ref, pair.instruction.text, attempt, rec.seed};
    GeneratedCandidate cand;
    try {
      cand = generator(req);
      rec.target_ref = cand.target_ref;
    } catch (const std::exception& e) {
      rec.failure = e.what();
      out.log.push_back(std::move(rec));
      continue;
    }
    bool all_pass = true;
    for (const auto& v : validators) {
      ValidatorVerdict verdict;
      try {
        verdict = v(req, cand);
      } catch (const std::exception& e) {
        verdict = {false, std::string("validator error: ") + e.what()};
      }
      rec.verdicts.push_back(verdict);
      if (!verdict.pass) {
        all_pass = false;
        break;
      }
    }
    rec.passed = all_pass;
    out.log.push_back(rec);
    if (all_pass) {
      TripletRecord t;
      t.id = derive_id("mined", {pair.pair_id});
      t.source_ref = pair.source_ref;
      t.instruction = pair.instruction;
      t.target_ref = cand.target_ref;
      t.provenance = Provenance::Mined;
      out.triplet = std::move(t);
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Localization instructions

void validate_annotation(const SegmentationAnnotation& ann) {
  if (ann.width < 1 || ann.height < 1) throw InvalidArgument("annotation image dims must be positive");
  for (const auto& inst : ann.instances) {
    const auto& b = inst.box;
    if (b.w < 0 || b.h < 0 || b.x < 0 || b.y < 0 || b.x + b.w > ann.width || b.y + b.h > ann.height) {
      throw InvalidArgument("box of '" + inst.category + "' leaves the image");
    }
    if (inst.mask.width() != ann.width || inst.mask.height() != ann.height) {
      throw InvalidArgument("mask of '" + inst.category + "' does not match image dims");
    }
  }
}

namespace {

std::string ordinal(std::size_t n) {
  static const char* kWords[] = {"", "first", "second", "third", "fourth", "fifth",
                                 "sixth", "seventh", "eighth", "ninth", "tenth"};
  if (n < std::size(kWords)) return kWords[n];
  return std::to_string(n) + "th";
}

std::string pluralize(const std::string& w) {
  if (w.empty()) return w;
  auto ends = [&](std::string_view s) { return w.size() >= s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0; };
  if (ends("s") || ends("x") || ends("ch") || ends("sh")) return w + "es";
  if (ends("y") && w.size() > 1 && std::string_view("aeiou").find(w[w.size() - 2]) == std::string_view::npos) {
    return w.substr(0, w.size() - 1) + "ies";
  }
  return w + "s";
}

// Rank-based qualifier along one axis. `low`/`high` are the two-instance
// words ("left"/"right"); superlatives are formed with "most".
std::string rank_qualifier(std::size_t rank, std::size_t n, const std::string& low,
                           const std::string& high) {
  if (n == 2) return rank == 0 ? low : high;
  if (rank == 0) return low + "most";
  if (rank == n - 1) return high + "most";
  if (n % 2 == 1 && rank == n / 2) return "middle";
  if (rank < n / 2) return ordinal(rank + 1) + " from the " + low;
  return ordinal(n - rank) + " from the " + high;
}

// Rank of `target` along an axis if every adjacent gap exceeds `band`.
std::optional<std::size_t> separated_rank(std::vector<std::pair<double, std::size_t>> keyed,
                                          std::size_t target, double band) {
  std::sort(keyed.begin(), keyed.end());
  for (std::size_t i = 1; i < keyed.size(); ++i) {
    if (keyed[i].first - keyed[i - 1].first <= band) return std::nullopt;
  }
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    if (keyed[i].second == target) return i;
  }
  return std::nullopt;
}

}  // namespace

std::string spatial_qualifier(const SegmentationAnnotation& ann, std::size_t index) {
  const auto& self = ann.instances.at(index);
  std::vector<std::size_t> group;
  for (std::size_t i = 0; i < ann.instances.size(); ++i) {
    if (ann.instances[i].category == self.category) group.push_back(i);
  }
  const std::size_t n = group.size();
  if (n <= 1) return "";
  const double band_x = 0.05 * ann.width;
  const double band_y = 0.05 * ann.height;

  std::vector<std::pair<double, std::size_t>> xs, ys;
  for (auto g : group) {
    xs.emplace_back(ann.instances[g].box.center_x(), g);
    ys.emplace_back(ann.instances[g].box.center_y(), g);
  }
  if (auto r = separated_rank(xs, index, band_x)) return rank_qualifier(*r, n, "left", "right");

  // Extreme along x even if the others are tied among themselves.
  const double cx = self.box.center_x();
  const double cy = self.box.center_y();
  bool leftmost = true, rightmost = true, topmost = true, bottommost = true;
  bool largest = true, smallest = true;
  for (auto g : group) {
    if (g == index) continue;
    const auto& o = ann.instances[g].box;
    leftmost &= cx < o.center_x() - band_x;
    rightmost &= cx > o.center_x() + band_x;
    topmost &= cy < o.center_y() - band_y;
    bottommost &= cy > o.center_y() + band_y;
    largest &= self.box.area() > o.area();
    smallest &= self.box.area() < o.area();
  }
  const std::string suffix = n == 2 ? "" : "most";
  if (leftmost) return "left" + suffix;
  if (rightmost) return "right" + suffix;
  if (auto r = separated_rank(ys, index, band_y)) return rank_qualifier(*r, n, "top", "bottom");
  if (topmost) return "top" + suffix;
  if (bottommost) return "bottom" + suffix;
  if (largest) return "largest";
  if (smallest) return "smallest";
  // Nothing separates it cleanly; order by raw center-x.
  std::sort(xs.begin(), xs.end());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].second == index) return rank_qualifier(i, n, "left", "right");
  }
  return "";
}

std::string generate_localization_instruction(const SegmentationAnnotation& ann,
                                              std::span<const std::size_t> selected,
                                              LocalizationMode mode) {
  if (selected.empty()) throw InvalidArgument("generate_localization_instruction: nothing selected");
  for (auto i : selected) {
    if (i >= ann.instances.size()) {
      throw InvalidArgument("instance index " + std::to_string(i) + " out of range (" +
                            std::to_string(ann.instances.size()) + " instances)");
    }
  }
  // Categories in order of first selection.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> picked;
  for (auto i : selected) {
    const auto& cat = ann.instances[i].category;
    auto& v = picked[cat];
    if (v.empty()) order.push_back(cat);
    if (std::find(v.begin(), v.end(), i) == v.end()) v.push_back(i);
  }
  std::vector<std::string> phrases;
  for (const auto& cat : order) {
    const auto total = std::size_t(std::count_if(ann.instances.begin(), ann.instances.end(),
                                                 [&](const AnnotatedInstance& a) { return a.category == cat; }));
    const auto& chosen = picked[cat];
    if (chosen.size() == total) {
      if (total == 1) phrases.push_back("the " + cat);
      else if (total == 2) phrases.push_back("both " + pluralize(cat));
      else phrases.push_back("all " + std::to_string(total) + " " + pluralize(cat));
      continue;
    }
    for (auto i : chosen) {
      const std::string q = spatial_qualifier(ann, i);
      phrases.push_back(q.empty() ? "the " + cat : "the " + q + " " + cat);
    }
  }
  std::string list;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (i > 0) list += (i + 1 == phrases.size()) ? " and " : ", ";
    list += phrases[i];
  }
  if (mode == LocalizationMode::KeepOnly) return "Preserve exclusively " + list + ".";
  return "Remove the background and everything except " + list + ".";
}

ImageBuffer background_removal_target(const ImageBuffer& image, std::span<const BinaryMask> masks,
                                      std::span<const std::uint8_t> fill) {
  std::vector<std::uint8_t> color(std::size_t(image.channels()), 255);
  if (!fill.empty()) {
    if (fill.size() != color.size()) throw InvalidArgument("fill color must have one value per channel");
    color.assign(fill.begin(), fill.end());
  }
  for (const auto& m : masks) {
    if (!m.matches(image)) throw InvalidArgument("background_removal_target: mask dims differ from image");
  }
  ImageBuffer out(image.width(), image.height(), image.channels());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const bool keep = std::any_of(masks.begin(), masks.end(), [&](const BinaryMask& m) { return m.get(x, y); });
      for (int c = 0; c < image.channels(); ++c) {
        out.at(x, y, c) = keep ? image.at(x, y, c) : color[std::size_t(c)];
      }
    }
  }
  return out;
}

ImageBuffer composite_masked(const ImageBuffer& original, const ImageBuffer& edited,
                             const BinaryMask& mask) {
  if (!original.same_shape(edited) || !mask.matches(original)) {
    throw InvalidArgument("composite_masked: original, edited and mask must share dims");
  }
  ImageBuffer out = original;
  for (int y = 0; y < original.height(); ++y) {
    for (int x = 0; x < original.width(); ++x) {
      if (!mask.get(x, y)) continue;
      for (int c = 0; c < original.channels(); ++c) out.at(x, y, c) = edited.at(x, y, c);
    }
  }
  return out;
}

}  // namespace forge

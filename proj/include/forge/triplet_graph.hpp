#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/image.hpp"
#include "forge/manifest.hpp"

namespace forge {

/// One anchor image x with its N edits (t_i, y_i).
struct EditSet {
  struct Edit {
    InstructionRecord instruction;
    std::string target_ref;
    std::string base_id;  // id of the base triplet (x, t_i, y_i); derived when empty
  };

  std::string anchor_ref;
  std::vector<Edit> edits;

  /// Base triplet id for edit i.
  std::string base_id(std::size_t i) const;
  /// Group mined records by source_ref (first-seen order).
  static std::vector<EditSet> from_records(std::span<const TripletRecord> records);
};

/// Checks N >= 1 and that all y_i are distinct and differ from the anchor.
void validate_edit_set(const EditSet& set);

using InstructionInverter = std::function<std::string(std::string_view instruction)>;
using InstructionComposer =
    std::function<std::string(std::string_view first, std::string_view second)>;

/// "undo the previous edit: {t}; restore the original"
std::string default_inverter(std::string_view instruction);
/// "undo: {t_i}; then: {t_j}"
std::string default_composer(std::string_view undo, std::string_view then);

struct SkippedEdit {
  std::size_t index;
  std::string reason;
};

struct BootstrapResult {
  std::vector<TripletRecord> records;
  std::vector<SkippedEdit> skipped;
};

/// (y, t^-1, x) for one record; lineage points at the input record.
TripletRecord invert_triplet(const TripletRecord& base, const InstructionInverter& inverter);

/// One inverted record per edit. A throwing inverter skips only that edit.
BootstrapResult invert_triplets(const EditSet& set, const InstructionInverter& inverter = default_inverter);

/// One (y_i, t_{i->j}, y_j) record for every ordered pair i != j. N < 2
/// yields nothing.
BootstrapResult composite_transitions(const EditSet& set,
                                      const InstructionComposer& composer = default_composer);

// Retry-based mining

struct GenerationRequest {
  std::string source_ref;
  std::string instruction;
  int attempt = 0;
  std::uint64_t seed = 0;
};

struct GeneratedCandidate {
  std::string target_ref;
};

struct ValidatorVerdict {
  bool pass = false;
  std::string reason;
};

using GeneratorHook = std::function<GeneratedCandidate(const GenerationRequest&)>;
using CandidateValidator =
    std::function<ValidatorVerdict(const GenerationRequest&, const GeneratedCandidate&)>;

struct AttemptRecord {
  int attempt = 0;
  std::uint64_t seed = 0;
  std::optional<std::string> target_ref;  // empty when generation failed
  std::vector<ValidatorVerdict> verdicts;   // in validator order, up to the first failure
  std::string failure;                      // transport error text, if any
  bool passed = false;
};

struct MiningOutcome {
  std::optional<TripletRecord> triplet;
  std::vector<AttemptRecord> log;
};

struct MiningPair {
  std::string pair_id;
  std::string source_ref;
  InstructionRecord instruction;
};

inline constexpr int kDefaultMaxAttempts = 5;

/// Calls the generator until a candidate passes every validator, at most
/// max_attempts times. Attempt seeds are derive_seed(global, pair_id, attempt).
/// A throwing generator counts as a failed attempt.
MiningOutcome mine_with_retries(const MiningPair& pair, const GeneratorHook& generator,
                                std::span<const CandidateValidator> validators,
                                int max_attempts = kDefaultMaxAttempts,
                                std::uint64_t global_seed = 0);

// Annotation-driven instructions and compositing

struct BoxXYWH {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  double center_x() const noexcept { return x + w / 2.0; }
  double center_y() const noexcept { return y + h / 2.0; }
  double area() const noexcept { return w * h; }
};

struct AnnotatedInstance {
  std::string category;
  BoxXYWH box;
  BinaryMask mask;
};

struct SegmentationAnnotation {
  std::string image_ref;
  int width = 0;
  int height = 0;
  std::vector<AnnotatedInstance> instances;
};

/// Throws InvalidArgument when a box leaves the image or a mask has the wrong dims.
void validate_annotation(const SegmentationAnnotation& ann);

enum class LocalizationMode { KeepOnly, RemoveBackground };

/// Spatial qualifier for instance `index` among same-category instances:
/// "" when unique, otherwise left/right, top/bottom, or an ordinal by box
/// center; centers within 5% of the image extent count as tied, and ties
/// fall back to "largest"/"smallest" by area.
std::string spatial_qualifier(const SegmentationAnnotation& ann, std::size_t index);

/// e.g. "Preserve exclusively the left zebra."
std::string generate_localization_instruction(const SegmentationAnnotation& ann,
                                              std::span<const std::size_t> selected,
                                              LocalizationMode mode);

/// Union of masks kept verbatim, everything else set to `fill`.
ImageBuffer background_removal_target(const ImageBuffer& image, std::span<const BinaryMask> masks,
                                      std::span<const std::uint8_t> fill = {});

/// edited where mask is set, original elsewhere.
ImageBuffer composite_masked(const ImageBuffer& original, const ImageBuffer& edited,
                             const BinaryMask& mask);

}  // namespace forge

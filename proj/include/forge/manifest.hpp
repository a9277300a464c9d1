#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace forge {

enum class InstructionOrigin { RealUser, Synthetic, Inverted, Composite, Template };
enum class Provenance { Mined, Inverted, Composite, Augmented, Identity, External };

std::string_view to_string(InstructionOrigin o) noexcept;
std::string_view to_string(Provenance p) noexcept;
std::optional<InstructionOrigin> parse_origin(std::string_view s) noexcept;
std::optional<Provenance> parse_provenance(std::string_view s) noexcept;

/// Assessor grades on the 0..5 scale.
struct AssessorScore {
  double instruction_adherence = 0.0;
  double aesthetic = 0.0;

  bool valid() const noexcept;
  bool operator==(const AssessorScore&) const = default;
};

struct InstructionRecord {
  std::string id;
  std::string text;
  InstructionOrigin origin = InstructionOrigin::Synthetic;
  std::uint64_t usage_count = 0;

  bool operator==(const InstructionRecord&) const = default;
};

/// (source image, instruction, target image). Images are referenced by path
/// or content hash, never embedded.
struct TripletRecord {
  std::string id;
  std::string source_ref;
  InstructionRecord instruction;
  std::string target_ref;
  Provenance provenance = Provenance::External;
  std::optional<AssessorScore> scores;
  std::vector<std::string> lineage;

  bool operator==(const TripletRecord&) const = default;
};

/// Stable id for a derived record: "<prefix>-" + 16 hex digits of
/// SHA-256 over the parts, each followed by a NUL byte.
std::string derive_id(std::string_view prefix, std::initializer_list<std::string_view> parts);

std::string trim(std::string_view s);

// Manifest (JSONL) I/O. Key order is fixed, so equal records give equal bytes.

nlohmann::ordered_json to_json(const TripletRecord& r);
/// Throws ManifestError(Schema) with the given line number on bad fields.
TripletRecord triplet_from_json(const nlohmann::json& j, std::size_t line = 0);
std::string serialize_record(const TripletRecord& r);
TripletRecord parse_record(std::string_view line_text, std::size_t line = 1);

std::vector<TripletRecord> read_manifest(const std::filesystem::path& path);
std::vector<TripletRecord> parse_manifest(std::string_view text);
std::string serialize_manifest(std::span<const TripletRecord> records);
void write_manifest(std::span<const TripletRecord> records, const std::filesystem::path& path);

// Validation

enum class ViolationKind {
  EmptyId,
  EmptyInstruction,
  EmptyRef,
  SelfLoop,        // source_ref == target_ref on a non-identity record
  InvalidScores,
  LineageSelf,     // record lists itself as a parent
  LineageCycle,
};

struct Violation {
  ViolationKind kind;
  std::string detail;
};

std::string_view to_string(ViolationKind k) noexcept;

/// Checks one record. With a corpus (id -> record) the lineage graph is walked
/// to find cycles through other records.
std::vector<Violation> validate_triplet(
    const TripletRecord& record,
    const std::map<std::string, const TripletRecord*>* corpus = nullptr);

std::map<std::string, const TripletRecord*> index_by_id(std::span<const TripletRecord> records);

}  // namespace forge

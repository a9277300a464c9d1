#include "forge/manifest.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "forge/error.hpp"
#include "forge/image.hpp"

namespace forge {

namespace {

constexpr std::array<std::pair<InstructionOrigin, std::string_view>, 5> kOrigins{{
    {InstructionOrigin::RealUser, "real-user"},
    {InstructionOrigin::Synthetic, "synthetic"},
    {InstructionOrigin::Inverted, "inverted"},
    {InstructionOrigin::Composite, "composite"},
    {InstructionOrigin::Template, "template"},
}};

constexpr std::array<std::pair<Provenance, std::string_view>, 6> kProvenances{{
    {Provenance::Mined, "mined"},
    {Provenance::Inverted, "inverted"},
    {Provenance::Composite, "composite"},
    {Provenance::Augmented, "augmented"},
    {Provenance::Identity, "identity"},
    {Provenance::External, "external"},
}};

}  // namespace

std::string_view to_string(InstructionOrigin o) noexcept {
  for (const auto& [k, v] : kOrigins) if (k == o) return v;
  return "synthetic";
}

std::string_view to_string(Provenance p) noexcept {
  for (const auto& [k, v] : kProvenances) if (k == p) return v;
  return "external";
}

std::optional<InstructionOrigin> parse_origin(std::string_view s) noexcept {
  for (const auto& [k, v] : kOrigins) if (v == s) return k;
  return std::nullopt;
}

std::optional<Provenance> parse_provenance(std::string_view s) noexcept {
  for (const auto& [k, v] : kProvenances) if (v == s) return k;
  return std::nullopt;
}

bool AssessorScore::valid() const noexcept {
  auto ok = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 5.0; };
  return ok(instruction_adherence) && ok(aesthetic);
}

std::string derive_id(std::string_view prefix, std::initializer_list<std::string_view> parts) {
  std::string joined;
  for (auto p : parts) {
    joined.append(p);
    joined.push_back('\0');
  }
  return std::string(prefix) + "-" + sha256_hex(joined).substr(0, 16);
}

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

// ---------------------------------------------------------------------------
// JSON mapping

nlohmann::ordered_json to_json(const TripletRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["source_ref"] = r.source_ref;
  nlohmann::ordered_json ins;
  ins["id"] = r.instruction.id;
  ins["text"] = r.instruction.text;
  ins["origin"] = std::string(to_string(r.instruction.origin));
  ins["usage_count"] = r.instruction.usage_count;
  j["instruction"] = std::move(ins);
  j["target_ref"] = r.target_ref;
  j["provenance"] = std::string(to_string(r.provenance));
  if (r.scores) {
    nlohmann::ordered_json sc;
    sc["instruction_adherence"] = r.scores->instruction_adherence;
    sc["aesthetic"] = r.scores->aesthetic;
    j["scores"] = std::move(sc);
  }
  j["lineage"] = r.lineage;
  return j;
}

namespace {

[[noreturn]] void schema_error(std::size_t line, const std::string& what) {
  throw ManifestError(ManifestError::Kind::Schema, line, what);
}

std::string required_string(const nlohmann::json& j, const char* key, std::size_t line,
                            const char* where = "") {
  const auto it = j.find(key);
  if (it == j.end()) schema_error(line, std::string("missing required field \"") + where + key + "\"");
  if (!it->is_string()) schema_error(line, std::string("field \"") + where + key + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace

TripletRecord triplet_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) schema_error(line, "record must be a JSON object");
  TripletRecord r;
  r.source_ref = required_string(j, "source_ref", line);
  r.target_ref = required_string(j, "target_ref", line);

  const auto ins = j.find("instruction");
  if (ins == j.end()) schema_error(line, "missing required field \"instruction\"");
  if (!ins->is_object()) schema_error(line, "field \"instruction\" must be an object");
  r.instruction.text = required_string(*ins, "text", line, "instruction.");
  if (const auto it = ins->find("id"); it != ins->end()) {
    if (!it->is_string()) schema_error(line, "field \"instruction.id\" must be a string");
    r.instruction.id = it->get<std::string>();
  } else {
    r.instruction.id = derive_id("i", {r.instruction.text});
  }
  if (const auto it = ins->find("origin"); it != ins->end()) {
    const auto o = it->is_string() ? parse_origin(it->get<std::string>()) : std::nullopt;
    if (!o) schema_error(line, "field \"instruction.origin\" has an unknown value");
    r.instruction.origin = *o;
  }
  if (const auto it = ins->find("usage_count"); it != ins->end()) {
    if (!it->is_number_unsigned()) schema_error(line, "field \"instruction.usage_count\" must be a non-negative integer");
    r.instruction.usage_count = it->get<std::uint64_t>();
  }

  if (const auto it = j.find("id"); it != j.end()) {
    if (!it->is_string()) schema_error(line, "field \"id\" must be a string");
    r.id = it->get<std::string>();
  } else {
    r.id = derive_id("t", {r.source_ref, r.instruction.text, r.target_ref});
  }
  if (const auto it = j.find("provenance"); it != j.end()) {
    const auto p = it->is_string() ? parse_provenance(it->get<std::string>()) : std::nullopt;
    if (!p) schema_error(line, "field \"provenance\" has an unknown value");
    r.provenance = *p;
  }
  if (const auto it = j.find("scores"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) schema_error(line, "field \"scores\" must be an object");
    const auto a = it->find("instruction_adherence");
    const auto e = it->find("aesthetic");
    if (a == it->end() || !a->is_number() || e == it->end() || !e->is_number()) {
      schema_error(line, "field \"scores\" needs numeric instruction_adherence and aesthetic");
    }
    r.scores = AssessorScore{a->get<double>(), e->get<double>()};
  }
  if (const auto it = j.find("lineage"); it != j.end()) {
    if (!it->is_array()) schema_error(line, "field \"lineage\" must be an array");
    for (const auto& p : *it) {
      if (!p.is_string()) schema_error(line, "field \"lineage\" must contain strings");
      r.lineage.push_back(p.get<std::string>());
    }
  }
  return r;
}

std::string serialize_record(const TripletRecord& r) {
  return to_json(r).dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
}

TripletRecord parse_record(std::string_view line_text, std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ManifestError(ManifestError::Kind::Syntax, line, std::string("malformed JSON: ") + e.what());
  }
  return triplet_from_json(j, line);
}

std::vector<TripletRecord> parse_manifest(std::string_view text) {
  std::vector<TripletRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const auto line = text.substr(pos, nl - pos);
    if (!trim(line).empty()) out.push_back(parse_record(line, line_no));
    pos = nl + 1;
  }
  return out;
}

std::vector<TripletRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest(ss.str());
  } catch (const ManifestError& e) {
    throw ManifestError(e.kind(), e.line(), path.string() + ": " + e.what());
  }
}

std::string serialize_manifest(std::span<const TripletRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += serialize_record(r);
    out += '\n';
  }
  return out;
}

void write_manifest(std::span<const TripletRecord> records, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_manifest(records));
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(ViolationKind k) noexcept {
  switch (k) {
    case ViolationKind::EmptyId: return "empty-id";
    case ViolationKind::EmptyInstruction: return "empty-instruction";
    case ViolationKind::EmptyRef: return "empty-ref";
    case ViolationKind::SelfLoop: return "self-loop";
    case ViolationKind::InvalidScores: return "invalid-scores";
    case ViolationKind::LineageSelf: return "lineage-self";
    case ViolationKind::LineageCycle: return "lineage-cycle";
  }
  return "unknown";
}

std::map<std::string, const TripletRecord*> index_by_id(std::span<const TripletRecord> records) {
  std::map<std::string, const TripletRecord*> out;
  for (const auto& r : records) out.emplace(r.id, &r);
  return out;
}

namespace {

// True if `start` is reachable from any parent of `start` (DFS over lineage).
bool reaches_itself(const TripletRecord& start,
                    const std::map<std::string, const TripletRecord*>& corpus) {
  std::set<std::string> seen;
  std::vector<std::string> stack(start.lineage.begin(), start.lineage.end());
  while (!stack.empty()) {
    const std::string id = std::move(stack.back());
    stack.pop_back();
    if (id == start.id) return true;
    if (!seen.insert(id).second) continue;
    const auto it = corpus.find(id);
    if (it == corpus.end()) continue;
    for (const auto& p : it->second->lineage) stack.push_back(p);
  }
  return false;
}

}  // namespace

std::vector<Violation> validate_triplet(const TripletRecord& r,
                                        const std::map<std::string, const TripletRecord*>* corpus) {
  std::vector<Violation> out;
  if (r.id.empty()) out.push_back({ViolationKind::EmptyId, "record id is empty"});
  if (trim(r.instruction.text).empty()) {
    out.push_back({ViolationKind::EmptyInstruction, "instruction text is empty after trim"});
  }
  if (r.source_ref.empty() || r.target_ref.empty()) {
    out.push_back({ViolationKind::EmptyRef, "source_ref and target_ref must be non-empty"});
  }
  if (r.provenance != Provenance::Identity && !r.source_ref.empty() && r.source_ref == r.target_ref) {
    out.push_back({ViolationKind::SelfLoop, "source_ref equals target_ref on a " +
                                                std::string(to_string(r.provenance)) + " record"});
  }
  if (r.scores && !r.scores->valid()) {
    out.push_back({ViolationKind::InvalidScores, "scores must be finite and within [0, 5]"});
  }
  const bool self_parent = std::find(r.lineage.begin(), r.lineage.end(), r.id) != r.lineage.end();
  if (self_parent) out.push_back({ViolationKind::LineageSelf, "record lists itself in lineage"});
  if (!self_parent && corpus && reaches_itself(r, *corpus)) {
    out.push_back({ViolationKind::LineageCycle, "lineage of " + r.id + " leads back to itself"});
  }
  return out;
}

}  // namespace forge

#include "forge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include "forge/random.hpp"

namespace forge {

namespace fs = std::filesystem;

const std::vector<std::string>& stage_operations() {
  static const std::vector<std::string> ops = {
      "ground_instructions", "bootstrap",        "invert_triplets",       "composite_transitions",
      "filter_triplets",     "face_iou_filter",  "assessor_threshold_filter", "align_pairs",
      "augment",             "strict_dominance_pairs", "validate"};
  return ops;
}

PipelineConfig parse_pipeline_config(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("pipeline config must be a JSON object");
  PipelineConfig c;
  c.base_dir = base_dir;
  try {
    c.global_seed = doc.value("global_seed", std::uint64_t{0});
    c.parallelism = doc.value("parallelism", 1);
    c.image_store = doc.value("image_store", std::string("."));
    if (!doc.contains("stages")) return c;
    if (!doc["stages"].is_array()) throw ConfigError("stages must be a list");
    for (const auto& s : doc["stages"]) {
      StageConfig st;
      st.name = s.at("name").get<std::string>();
      st.operation = s.at("operation").get<std::string>();
      if (s.contains("parameters")) st.parameters = s["parameters"];
      if (!st.parameters.is_object()) throw ConfigError("stage '" + st.name + "': parameters must be an object");
      if (s.contains("inputs")) {
        if (s["inputs"].is_string()) {
          st.inputs.push_back(s["inputs"].get<std::string>());
        } else {
          st.inputs = s["inputs"].get<std::vector<std::string>>();
        }
      }
      st.output = s.at("output").get<std::string>();
      c.stages.push_back(std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return parse_pipeline_config(doc, base);
}

void validate_config(const PipelineConfig& config) {
  if (config.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  const auto& ops = stage_operations();
  std::set<std::string> names;
  std::map<std::string, std::size_t> producer;  // normalized output path -> stage index
  auto norm = [&](const std::string& p) { return (config.base_dir / p).lexically_normal().string(); };
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const auto& s = config.stages[i];
    if (s.name.empty()) throw ConfigError("stage " + std::to_string(i) + " has no name");
    if (!names.insert(s.name).second) throw ConfigError("duplicate stage name '" + s.name + "'");
    if (std::find(ops.begin(), ops.end(), s.operation) == ops.end()) {
      throw ConfigError("stage '" + s.name + "': unknown operation '" + s.operation + "'");
    }
    if (s.output.empty()) throw ConfigError("stage '" + s.name + "' has no output");
    if (!producer.emplace(norm(s.output), i).second) {
      throw ConfigError("stage '" + s.name + "' writes '" + s.output + "', already written by another stage");
    }
  }
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const auto& s = config.stages[i];
    if (s.inputs.empty()) throw ConfigError("stage '" + s.name + "' has no inputs");
    for (const auto& in : s.inputs) {
      const auto it = producer.find(norm(in));
      if (it != producer.end()) {
        if (it->second >= i) {
          throw ConfigError("cycle: stage '" + s.name + "' reads '" + in + "', produced by stage '" +
                            config.stages[it->second].name + "' which does not run earlier");
        }
        continue;
      }
      if (!fs::is_regular_file(config.base_dir / in)) {
        throw ConfigError("stage '" + s.name + "': input '" + in + "' does not exist and no earlier stage produces it");
      }
    }
  }
}

nlohmann::ordered_json to_json(const StageReport& r, bool include_timing) {
  nlohmann::ordered_json j;
  j["stage"] = r.stage;
  j["operation"] = r.operation;
  j["in"] = r.in;
  j["kept"] = r.kept;
  j["removed"] = r.removed;
  j["errored"] = r.errored;
  j["produced"] = r.produced;
  nlohmann::ordered_json reasons = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.reasons) reasons[k] = v;
  j["reasons"] = std::move(reasons);
  if (include_timing) j["wall_seconds"] = r.wall_seconds;
  j["resumed"] = r.resumed;
  return j;
}

namespace {

StageReport report_from_json(const nlohmann::json& j) {
  StageReport r;
  r.stage = j.at("stage").get<std::string>();
  r.operation = j.at("operation").get<std::string>();
  r.in = j.at("in").get<std::size_t>();
  r.kept = j.at("kept").get<std::size_t>();
  r.removed = j.at("removed").get<std::size_t>();
  r.errored = j.at("errored").get<std::size_t>();
  r.produced = j.at("produced").get<std::size_t>();
  for (const auto& [k, v] : j.at("reasons").items()) r.reasons[k] = v.get<std::size_t>();
  return r;
}

std::string file_sha(const fs::path& p) { return sha256_hex(std::span<const std::uint8_t>(read_file(p))); }

// Everything a stage's output depends on: operation, parameters, stage seed,
// input bytes and any file a parameter names. The worker count is excluded
// because outputs do not depend on it.
std::string fingerprint(const StageConfig& s, const fs::path& base, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["operation"] = s.operation;
  j["parameters"] = s.parameters;
  j["seed"] = seed;
  j["output"] = s.output;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::array();
  for (const auto& in : s.inputs) inputs.push_back({in, file_sha(base / in)});
  j["inputs"] = std::move(inputs);
  nlohmann::ordered_json aux = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.parameters.items()) {
    if (v.is_string() && fs::is_regular_file(base / v.get<std::string>())) {
      aux[k] = file_sha(base / v.get<std::string>());
    }
  }
  j["aux"] = std::move(aux);
  return sha256_hex(j.dump());
}

constexpr const char* kStateFile = ".forge-state.json";

nlohmann::json load_state(const fs::path& base) {
  const fs::path p = base / kStateFile;
  if (!fs::exists(p)) return nlohmann::json::object();
  std::ifstream in(p);
  try {
    auto j = nlohmann::json::parse(in);
    return j.is_object() ? j : nlohmann::json::object();
  } catch (const nlohmann::json::exception&) {
    return nlohmann::json::object();  // a damaged state file only disables resume
  }
}

}  // namespace

std::vector<StageReport> run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  validate_config(config);
  const std::uint64_t global_seed = options.seed.value_or(config.global_seed);
  const int workers = std::max(1, options.workers.value_or(config.parallelism));
  ImageStore store(config.base_dir / config.image_store, "derived");
  nlohmann::json state = load_state(config.base_dir);

  std::vector<StageReport> reports;
  for (const auto& stage : config.stages) {
    const std::uint64_t seed = derive_seed(global_seed, stage.name);
    const fs::path out = config.base_dir / stage.output;
    const std::string fp = fingerprint(stage, config.base_dir, seed);
    if (options.resume && state.contains(stage.name) && fs::exists(out)) {
      const auto& rec = state[stage.name];
      if (rec.value("fingerprint", "") == fp && rec.value("output_sha256", "") == file_sha(out)) {
        StageReport r = report_from_json(rec.at("report"));
        r.resumed = true;
        reports.push_back(std::move(r));
        continue;
      }
    }
    const auto t0 = std::chrono::steady_clock::now();
    StageReport r;
    try {
      r = execute_stage(StageContext{stage, config.base_dir, store, seed, workers});
    } catch (const std::exception& e) {
      throw StageFailure(stage.name, e.what(), reports);
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state[stage.name] = {{"fingerprint", fp}, {"output_sha256", file_sha(out)}, {"report", to_json(r, false)}};
    write_file_atomic(config.base_dir / kStateFile, state.dump(2) + "\n");
    reports.push_back(std::move(r));
  }
  return reports;
}

ManifestStats manifest_stats(const std::vector<TripletRecord>& records) {
  ManifestStats s;
  s.total = records.size();
  s.adherence_histogram.assign(10, 0);
  s.aesthetic_histogram.assign(10, 0);
  auto bin = [](double v) { return std::min<std::size_t>(9, std::size_t(std::max(0.0, v) / 0.5)); };
  std::map<std::string, std::size_t> seen;
  for (const auto& r : records) {
    ++s.by_provenance[std::string(to_string(r.provenance))];
    ++s.by_origin[std::string(to_string(r.instruction.origin))];
    if (r.scores) {
      ++s.scored;
      ++s.adherence_histogram[bin(r.scores->instruction_adherence)];
      ++s.aesthetic_histogram[bin(r.scores->aesthetic)];
    }
    const std::string key = r.source_ref + " | " + r.instruction.text + " | " + r.target_ref;
    if (++seen[key] == 2) s.duplicates.push_back(key);
  }
  return s;
}

nlohmann::ordered_json to_json(const ManifestStats& s) {
  nlohmann::ordered_json j;
  j["total"] = s.total;
  nlohmann::ordered_json prov = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.by_provenance) prov[k] = v;
  j["by_provenance"] = std::move(prov);
  nlohmann::ordered_json orig = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.by_origin) orig[k] = v;
  j["by_origin"] = std::move(orig);
  j["scored"] = s.scored;
  j["adherence_histogram"] = s.adherence_histogram;
  j["aesthetic_histogram"] = s.aesthetic_histogram;
  j["duplicates"] = s.duplicates;
  return j;
}

}  // namespace forge

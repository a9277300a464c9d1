#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/error.hpp"
#include "forge/image.hpp"
#include "forge/manifest.hpp"

namespace forge {

struct StageConfig {
  std::string name;
  std::string operation;
  nlohmann::json parameters = nlohmann::json::object();
  std::vector<std::string> inputs;  // manifest paths, relative to the config directory
  std::string output;
};

struct PipelineConfig {
  std::vector<StageConfig> stages;
  std::uint64_t global_seed = 0;
  int parallelism = 1;
  std::filesystem::path base_dir = ".";  // relative paths resolve here
  std::string image_store = ".";         // store root, relative to base_dir
};

/// Config problem detected before anything runs (exit code 1).
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

PipelineConfig parse_pipeline_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Unique stage names, known operations, outputs distinct, and every input
/// either an existing file or the output of an earlier stage. An input
/// produced by the same or a later stage is reported as a cycle.
void validate_config(const PipelineConfig& config);

/// Operations a stage may name.
const std::vector<std::string>& stage_operations();

struct StageReport {
  std::string stage;
  std::string operation;
  std::size_t in = 0;
  std::size_t kept = 0;
  std::size_t removed = 0;
  std::size_t errored = 0;
  std::size_t produced = 0;  // records (or pairs) written, including derived ones
  double wall_seconds = 0.0;
  std::map<std::string, std::size_t> reasons;  // removal / error reasons
  bool resumed = false;                        // skipped by --resume
};

nlohmann::ordered_json to_json(const StageReport& r, bool include_timing = true);

struct RunOptions {
  bool resume = false;
  std::optional<int> workers;               // overrides config parallelism
  std::optional<std::uint64_t> seed;        // overrides config global_seed
};

/// A stage threw; outputs of earlier stages are intact (exit code 2).
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const std::string& what, std::vector<StageReport> completed)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)), completed_(std::move(completed)) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::vector<StageReport>& completed() const noexcept { return completed_; }

 private:
  std::string stage_;
  std::vector<StageReport> completed_;
};

std::vector<StageReport> run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

/// Context handed to a stage implementation.
struct StageContext {
  const StageConfig& stage;
  std::filesystem::path base_dir;
  ImageStore& store;
  std::uint64_t seed;  // derived from the global seed and the stage name
  int workers;

  std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
};

/// Executes one stage: reads its inputs, writes its output (atomically),
/// and returns its report. Exposed for tests.
StageReport execute_stage(const StageContext& ctx);

// Manifest statistics.

struct ManifestStats {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_provenance;
  std::map<std::string, std::size_t> by_origin;
  std::size_t scored = 0;
  std::vector<std::size_t> adherence_histogram;  // 10 bins of width 0.5 over [0, 5]
  std::vector<std::size_t> aesthetic_histogram;
  /// (source_ref, instruction text, target_ref) keys seen more than once, each listed once.
  std::vector<std::string> duplicates;
};

ManifestStats manifest_stats(const std::vector<TripletRecord>& records);
nlohmann::ordered_json to_json(const ManifestStats& s);

/// Writes the bundled end-to-end fixture (images, manifests, sidecars and a
/// pipeline config) into `dir`.
void write_fixture(const std::filesystem::path& dir, std::uint64_t seed = 7);

}  // namespace forge

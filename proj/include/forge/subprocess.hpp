#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/triplet_graph.hpp"

namespace forge {

/// Runs argv[0] (PATH lookup) with `request` as one JSON document on stdin and
/// parses stdout as JSON. Non-zero exit, signal, or unparsable output throws
/// HookError.
nlohmann::json run_json_subprocess(const std::vector<std::string>& argv,
                                   const nlohmann::json& request);

/// Generator hook over the subprocess contract.
/// Request: {source_ref, instruction, attempt, seed}. Response: {target_ref}.
GeneratorHook subprocess_generator(std::vector<std::string> argv);

/// Validator hook over the subprocess contract.
/// Request: {source_ref, instruction, attempt, seed, target_ref}.
/// Response: {pass: bool, reason?: string}.
CandidateValidator subprocess_validator(std::vector<std::string> argv);

}  // namespace forge

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "forge/dpo.hpp"
#include "forge/manifest.hpp"

namespace forge {

enum class CandidateSource { OnPolicy, Teacher };

struct ScoredCandidate {
  std::string triplet_id;
  AssessorScore scores;
  CandidateSource source = CandidateSource::OnPolicy;
};

enum class PairOrigin { SelfGenerated, Symmetric, Distilled };
std::string_view to_string(PairOrigin o) noexcept;
std::optional<PairOrigin> parse_pair_origin(std::string_view s) noexcept;

struct PreferencePair {
  std::string context_id;
  std::string winner_id;
  std::string loser_id;
  PairOrigin origin = PairOrigin::SelfGenerated;

  bool operator==(const PreferencePair&) const = default;
};

/// a beats b by more than `min_gap` on both criteria.
bool strictly_dominates(const AssessorScore& a, const AssessorScore& b, double min_gap = 0.0) noexcept;

/// Every ordered (w, l) within one context where w strictly dominates l.
/// Candidates are visited in id order, so the output order is stable.
/// Throws InvalidArgument on invalid scores.
std::vector<PreferencePair> strict_dominance_pairs(const std::string& context_id,
                                                   std::span<const ScoredCandidate> candidates,
                                                   double min_gap = 0.0);

/// m instructions c_i against their m generations y_j. passes(i, j) is the
/// assessor verdict "y_j satisfies c_i"; the diagonal is the ordinary filter.
struct SymmetricMatrix {
  std::vector<std::string> context_ids;     // c_i together with the shared source image
  std::vector<std::string> generation_ids;  // y_i, generated for c_i
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> passes;
};

struct SkippedContext {
  std::string context_id;
  std::string reason;
};

struct SymmetricResult {
  std::vector<PreferencePair> pairs;
  std::vector<SkippedContext> skipped;
};

/// For c_i with a passing diagonal: y_i beats every other surviving y_j that
/// does not itself satisfy c_i. Contexts whose own generation failed are skipped.
SymmetricResult symmetric_pairs(const SymmetricMatrix& m);

/// Teacher beats each student that does not strictly dominate it.
/// Throws InvalidArgument when a teacher candidate is not tagged as such.
std::vector<PreferencePair> distilled_pairs(const std::string& context_id,
                                            std::span<const ScoredCandidate> teacher,
                                            std::span<const ScoredCandidate> student);

nlohmann::ordered_json to_json(const PreferencePair& p);
PreferencePair pair_from_json(const nlohmann::json& j);
void write_pairs(std::span<const PreferencePair> pairs, const std::filesystem::path& path);
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);

/// JSONL: {eps, eps_ref_w, eps_theta_w, eps_ref_l, eps_theta_l, beta?}.
std::vector<DpoSample<double>> read_dpo_fixture(const std::filesystem::path& path);
DpoSample<double> dpo_sample_from_json(const nlohmann::json& j, double default_beta = kDefaultDpoBeta);

// Assessor quality metrics.
double mae(std::span<const double> predictions, std::span<const double> labels);
/// Average ranks for ties (1-based).
std::vector<double> fractional_ranks(std::span<const double> v);
/// Pearson correlation of fractional ranks. Throws for n < 2, length
/// mismatch, or a constant input (undefined correlation).
double spearman_rho(std::span<const double> predictions, std::span<const double> labels);
double overall_score(const std::map<std::string, double>& per_task);

}  // namespace forge

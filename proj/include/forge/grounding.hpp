#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "forge/manifest.hpp"

namespace forge {

using EmbeddingVector = Eigen::VectorXd;

inline constexpr int kDefaultEmbeddingDim = 256;

/// Deterministic stand-in embedder: lowercased character 3-grams of the
/// space-padded text, hashed into `dim` buckets, L2-normalized.
EmbeddingVector embed_text(std::string_view text, int dim = kDefaultEmbeddingDim);

/// Cosine similarity; 0 when either vector has zero norm.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) return Scalar(0);
  return a.dot(b) / (na * nb);
}

/// Exact (brute-force) cosine index. Append-only; immutable once queried.
class VectorIndex {
 public:
  VectorIndex() = default;
  explicit VectorIndex(int dim) : dim_(dim) {}

  /// Throws on duplicate id or dim mismatch.
  void add(std::string id, EmbeddingVector v);

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  int dim() const noexcept { return dim_; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const EmbeddingVector& vector(std::size_t i) const { return vectors_[i]; }
  std::optional<std::size_t> find(const std::string& id) const;

 private:
  int dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<EmbeddingVector> vectors_;
  std::map<std::string, std::size_t> by_id_;
};

struct ScoredId {
  std::string id;
  double score = 0.0;
  bool operator==(const ScoredId&) const = default;
};

/// Top-k by cosine similarity, descending; ties by ascending id.
std::vector<ScoredId> retrieve_topk(const VectorIndex& index, const EmbeddingVector& query,
                                    std::size_t k);

/// exp(s_i) / sum_j exp(s_j), evaluated with the max subtracted.
std::vector<double> softmax_probabilities(std::span<const double> scores);

struct SampledChoice {
  std::string id;
  double probability = 0.0;
  std::size_t index = 0;
};

/// Draws one id by inverse CDF over the softmax of the scores.
SampledChoice softmax_sample(std::span<const ScoredId> scored, std::uint64_t seed);

struct GroundingResult {
  std::string artificial_id;
  std::string chosen_user_id;
  double similarity = 0.0;
  double sampled_probability = 0.0;
  bool operator==(const GroundingResult&) const = default;
};

/// Keeps results with similarity >= tau_sim, order preserved.
std::vector<GroundingResult> apply_similarity_threshold(std::span<const GroundingResult> results,
                                                        double tau_sim);

struct CapRejection {
  GroundingResult result;
  std::string reason;
};

struct CapOutcome {
  std::vector<GroundingResult> kept;
  std::vector<CapRejection> rejected;
};

/// First-come-first-kept: a user instruction id is kept at most `cap` times.
CapOutcome enforce_frequency_cap(std::span<const GroundingResult> selections, std::size_t cap);

struct Clustering {
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;           // k x dim
  std::vector<double> objective;       // within-cluster SS after each iteration
  int iterations = 0;
  bool converged = false;
};

/// Lloyd's k-means with seeded k-means++ initialization. Points are rows.
/// An emptied cluster keeps its previous centroid.
Clustering cluster_instructions(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                                int max_iterations = 100);

double within_cluster_ss(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                         std::span<const int> assignment);

/// Greedy scan; drops exact-text repeats and anything with cosine >= tau_dup
/// to an already-kept record.
std::vector<InstructionRecord> dedup_instructions(std::span<const InstructionRecord> corpus,
                                                  double tau_dup,
                                                  int dim = kDefaultEmbeddingDim);

// Applicability validation

struct ImageDescriptor {
  std::vector<std::string> tags;
};

/// What a validator hook answers. `proposed_edit` is only consulted when
/// applicable is false.
struct ApplicabilityVerdict {
  bool applicable = false;
  std::optional<std::string> proposed_edit;
  std::string reason;
};

using ApplicabilityHook =
    std::function<ApplicabilityVerdict(std::string_view instruction, const ImageDescriptor&)>;

struct Applicable {
  bool operator==(const Applicable&) const = default;
};
struct MinimallyEdited {
  std::string text;
  bool operator==(const MinimallyEdited&) const = default;
};
struct Discarded {
  std::string reason;
  bool operator==(const Discarded&) const = default;
};
using ApplicabilityOutcome = std::variant<Applicable, MinimallyEdited, Discarded>;

inline constexpr double kMinTokenRetention = 0.6;

std::vector<std::string> tokenize_words(std::string_view text);
/// Fraction of the original's tokens (as a multiset) still present in `edited`.
double token_retention(std::string_view original, std::string_view edited);

/// Exceptions from the hook are rethrown as HookError. A proposed edit that
/// is empty, unchanged, or keeps < 60% of the tokens is discarded.
ApplicabilityOutcome validate_applicability(std::string_view instruction,
                                            const ImageDescriptor& descriptor,
                                            const ApplicabilityHook& validator);

/// Bundled stand-in validator. The referent is the last instruction token
/// found in `vocabulary`; applicable when it is among the tags, otherwise the
/// first vocabulary tag is substituted for it.
ApplicabilityHook keyword_applicability_hook(std::vector<std::string> vocabulary);

// Sidecar files

/// JSONL of {"id": ..., "vector": [...]}.
std::map<std::string, EmbeddingVector> read_embedding_sidecar(const std::filesystem::path& path);
void write_cluster_report(const Clustering& c, std::span<const std::string> ids,
                          const std::filesystem::path& path);

// Whole-corpus grounding

struct GroundingConfig {
  std::size_t topk = 20;
  double tau_sim = 0.70;
  std::size_t cap = 3;
  std::uint64_t seed = 0;
  int dim = kDefaultEmbeddingDim;
  bool redraw_on_cap = true;
};

struct GroundingRun {
  std::vector<GroundingResult> kept;                    // in input order
  std::vector<std::pair<std::string, std::string>> dropped;  // (artificial id, reason)
};

/// Grounds each artificial instruction against the user index: top-k,
/// softmax draw (seed derived from the artificial id), similarity threshold,
/// then the frequency cap. A capped draw is retried once with the best
/// remaining top-k candidate that clears the threshold and the cap.
GroundingRun ground_instructions(std::span<const InstructionRecord> artificial,
                                 const VectorIndex& user_index,
                                 const std::map<std::string, EmbeddingVector>& artificial_vectors,
                                 const GroundingConfig& config);

}  // namespace forge

#include "forge/grounding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "forge/error.hpp"
#include "forge/image.hpp"
#include "forge/random.hpp"

namespace forge {

namespace {

std::string normalize_for_embedding(std::string_view text) {
  std::string out;
  bool space = false;
  for (unsigned char c : trim(text)) {
    if (std::isspace(c)) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out.push_back(' ');
    space = false;
    out.push_back(c < 128 ? char(std::tolower(c)) : char(c));
  }
  return out;
}

}  // namespace

EmbeddingVector embed_text(std::string_view text, int dim) {
  if (dim < 1) throw InvalidArgument("embed_text: dim must be positive");
  const std::string norm = normalize_for_embedding(text);
  if (norm.empty()) throw InvalidArgument("embed_text: text is empty");
  const std::string padded = " " + norm + " ";
  EmbeddingVector v = EmbeddingVector::Zero(dim);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    const auto h = fnv1a64(std::string_view(padded).substr(i, 3));
    v[Eigen::Index(h % std::uint64_t(dim))] += 1.0;
  }
  v.normalize();
  return v;
}

// ---------------------------------------------------------------------------

void VectorIndex::add(std::string id, EmbeddingVector v) {
  if (dim_ == 0) dim_ = int(v.size());
  if (v.size() != dim_) throw InvalidArgument("VectorIndex: dim mismatch for id " + id);
  if (!v.allFinite()) throw InvalidArgument("VectorIndex: non-finite vector for id " + id);
  if (!by_id_.emplace(id, ids_.size()).second) throw InvalidArgument("VectorIndex: duplicate id " + id);
  ids_.push_back(std::move(id));
  vectors_.push_back(std::move(v));
}

std::optional<std::size_t> VectorIndex::find(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<ScoredId> retrieve_topk(const VectorIndex& index, const EmbeddingVector& query,
                                    std::size_t k) {
  if (index.empty()) throw InvalidArgument("retrieve_topk: index is empty");
  if (query.size() != index.dim()) throw InvalidArgument("retrieve_topk: query dim does not match index");
  if (k == 0) throw InvalidArgument("retrieve_topk: k must be positive");
  std::vector<ScoredId> all;
  all.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    all.push_back({index.id(i), cosine_similarity(index.vector(i), query)});
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(n), all.end(),
                    [](const ScoredId& a, const ScoredId& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.id < b.id;
                    });
  all.resize(n);
  return all;
}

std::vector<double> softmax_probabilities(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("softmax: empty score list");
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidArgument("softmax: non-finite score");
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(scores[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

SampledChoice softmax_sample(std::span<const ScoredId> scored, std::uint64_t seed) {
  std::vector<double> s(scored.size());
  std::transform(scored.begin(), scored.end(), s.begin(), [](const ScoredId& x) { return x.score; });
  const auto p = softmax_probabilities(s);
  Rng rng(seed);
  const double u = rng.uniform();
  double cdf = 0.0;
  std::size_t pick = p.size() - 1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cdf += p[i];
    if (u < cdf) {
      pick = i;
      break;
    }
  }
  return {scored[pick].id, p[pick], pick};
}

std::vector<GroundingResult> apply_similarity_threshold(std::span<const GroundingResult> results,
                                                        double tau_sim) {
  std::vector<GroundingResult> out;
  std::copy_if(results.begin(), results.end(), std::back_inserter(out),
               [tau_sim](const GroundingResult& r) { return r.similarity >= tau_sim; });
  return out;
}

CapOutcome enforce_frequency_cap(std::span<const GroundingResult> selections, std::size_t cap) {
  if (cap < 1) throw InvalidArgument("enforce_frequency_cap: cap must be >= 1");
  CapOutcome out;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : selections) {
    auto& c = counts[r.chosen_user_id];
    if (c < cap) {
      ++c;
      out.kept.push_back(r);
    } else {
      out.rejected.push_back({r, "cap"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& p, double* dist2) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - p).squaredNorm();
    if (d < bd) {
      bd = d;
      best = int(c);
    }
  }
  if (dist2) *dist2 = bd;
  return best;
}

Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(k, points.cols());
  std::vector<bool> chosen(std::size_t(n), false);
  auto first = Eigen::Index(rng.below(std::uint64_t(n)));
  centroids.row(0) = points.row(first);
  chosen[std::size_t(first)] = true;
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (points.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && target < acc) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Eigen::Index i = n - 1; i >= 0; --i) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    }
    if (pick < 0) {
      // Only duplicates left: take the lowest unchosen index.
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!chosen[std::size_t(i)]) {
          pick = i;
          break;
        }
      }
    }
    chosen[std::size_t(pick)] = true;
    centroids.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

double within_cluster_ss(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                         std::span<const int> assignment) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    total += (points.row(i) - centroids.row(assignment[std::size_t(i)])).squaredNorm();
  }
  return total;
}

Clustering cluster_instructions(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                                int max_iterations) {
  if (k < 1) throw InvalidArgument("cluster_instructions: k must be positive");
  if (points.rows() < k) {
    throw InvalidArgument("cluster_instructions: " + std::to_string(points.rows()) +
                          " points is fewer than k = " + std::to_string(k));
  }
  if (max_iterations < 1) throw InvalidArgument("cluster_instructions: max_iterations must be positive");
  Rng rng(seed);
  Clustering out;
  out.centroids = kmeanspp_init(points, k, rng);
  out.assignment.assign(std::size_t(points.rows()), -1);

  const auto assign = [&]() {
    bool changed = false;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const int c = nearest_centroid(out.centroids, points.row(i), nullptr);
      if (c != out.assignment[std::size_t(i)]) {
        out.assignment[std::size_t(i)] = c;
        changed = true;
      }
    }
    out.objective.push_back(within_cluster_ss(points, out.centroids, out.assignment));
    return changed;
  };

  for (int it = 0; it < max_iterations; ++it) {
    const bool changed = assign();
    out.iterations = it + 1;
    if (!changed) {
      out.converged = true;
      return out;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<int> counts(std::size_t(k), 0);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      sums.row(out.assignment[std::size_t(i)]) += points.row(i);
      ++counts[std::size_t(out.assignment[std::size_t(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[std::size_t(c)] > 0) out.centroids.row(c) = sums.row(c) / double(counts[std::size_t(c)]);
    }
  }
  // Iteration cap: leave every point on its nearest final centroid.
  out.converged = !assign();
  return out;
}

// ---------------------------------------------------------------------------

std::vector<InstructionRecord> dedup_instructions(std::span<const InstructionRecord> corpus,
                                                  double tau_dup, int dim) {
  std::vector<InstructionRecord> kept;
  std::vector<EmbeddingVector> kept_vecs;
  std::set<std::string> texts;
  for (const auto& rec : corpus) {
    if (texts.count(rec.text)) continue;
    const EmbeddingVector v = embed_text(rec.text, dim);
    const bool near_dup = std::any_of(kept_vecs.begin(), kept_vecs.end(), [&](const EmbeddingVector& k) {
      return cosine_similarity(k, v) >= tau_dup;
    });
    if (near_dup) continue;
    texts.insert(rec.text);
    kept.push_back(rec);
    kept_vecs.push_back(v);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Applicability

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 128 || c == '\'') {
      cur.push_back(c < 128 ? char(std::tolower(c)) : char(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double token_retention(std::string_view original, std::string_view edited) {
  const auto a = tokenize_words(original);
  if (a.empty()) return 0.0;
  std::map<std::string, int> pool;
  for (auto& t : tokenize_words(edited)) ++pool[t];
  std::size_t kept = 0;
  for (const auto& t : a) {
    auto it = pool.find(t);
    if (it != pool.end() && it->second > 0) {
      --it->second;
      ++kept;
    }
  }
  return double(kept) / double(a.size());
}

ApplicabilityOutcome validate_applicability(std::string_view instruction,
                                            const ImageDescriptor& descriptor,
                                            const ApplicabilityHook& validator) {
  if (!validator) throw InvalidArgument("validate_applicability: no validator hook");
  ApplicabilityVerdict v;
  try {
    v = validator(instruction, descriptor);
  } catch (const HookError&) {
    throw;
  } catch (const std::exception& e) {
    throw HookError(std::string("applicability hook failed: ") + e.what());
  }
  if (v.applicable) return Applicable{};
  if (!v.proposed_edit) return Discarded{v.reason.empty() ? "not applicable" : v.reason};
  const std::string edited = trim(*v.proposed_edit);
  if (edited.empty() || edited == trim(instruction)) return Discarded{"edit not minimal"};
  if (token_retention(instruction, edited) < kMinTokenRetention) return Discarded{"edit not minimal"};
  return MinimallyEdited{edited};
}

namespace {

// Replaces the last whole-word, case-insensitive occurrence of `word`.
std::string replace_last_word(std::string_view text, std::string_view word, std::string_view with) {
  std::string lower(text);
  for (auto& c : lower) c = char(std::tolower(static_cast<unsigned char>(c)));
  std::size_t pos = lower.rfind(word);
  while (pos != std::string::npos) {
    const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]));
    const std::size_t end = pos + word.size();
    const bool right_ok = end >= lower.size() || !std::isalnum(static_cast<unsigned char>(lower[end]));
    if (left_ok && right_ok) {
      return std::string(text.substr(0, pos)) + std::string(with) + std::string(text.substr(end));
    }
    if (pos == 0) break;
    pos = lower.rfind(word, pos - 1);
  }
  return std::string(text);
}

}  // namespace

ApplicabilityHook keyword_applicability_hook(std::vector<std::string> vocabulary) {
  for (auto& w : vocabulary) {
    for (auto& c : w) c = char(std::tolower(static_cast<unsigned char>(c)));
  }
  return [vocab = std::set<std::string>(vocabulary.begin(), vocabulary.end())](
             std::string_view instruction, const ImageDescriptor& d) -> ApplicabilityVerdict {
    std::set<std::string> tags;
    for (const auto& t : d.tags) {
      auto toks = tokenize_words(t);
      std::string joined;
      for (auto& x : toks) joined += (joined.empty() ? "" : " ") + x;
      tags.insert(joined);
    }
    const auto tokens = tokenize_words(instruction);
    std::optional<std::string> referent;
    for (const auto& t : tokens) {
      if (vocab.count(t)) referent = t;
    }
    if (referent && tags.count(*referent)) return {true, std::nullopt, ""};
    if (!referent) {
      // Nothing object-like to check against; fall back to any token overlap.
      for (const auto& t : tokens) {
        if (tags.count(t)) return {true, std::nullopt, ""};
      }
      return {false, std::nullopt, "no referent"};
    }
    for (const auto& t : d.tags) {
      auto toks = tokenize_words(t);
      if (toks.size() == 1 && vocab.count(toks[0]) && toks[0] != *referent) {
        return {false, replace_last_word(instruction, *referent, toks[0]), "substituted referent"};
      }
    }
    return {false, std::nullopt, "no referent"};
  };
}

// ---------------------------------------------------------------------------
// Sidecars

std::map<std::string, EmbeddingVector> read_embedding_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding sidecar " + path.string());
  std::map<std::string, EmbeddingVector> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ManifestError(ManifestError::Kind::Syntax, line_no, e.what());
    }
    if (!j.contains("id") || !j["id"].is_string() || !j.contains("vector") || !j["vector"].is_array()) {
      throw ManifestError(ManifestError::Kind::Schema, line_no, "embedding line needs id and vector");
    }
    const auto& arr = j["vector"];
    EmbeddingVector v(Eigen::Index(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v[Eigen::Index(i)] = arr[i].get<double>();
    out[j["id"].get<std::string>()] = std::move(v);
  }
  return out;
}

void write_cluster_report(const Clustering& c, std::span<const std::string> ids,
                          const std::filesystem::path& path) {
  std::string out;
  for (Eigen::Index k = 0; k < c.centroids.rows(); ++k) {
    nlohmann::ordered_json j;
    j["cluster_id"] = k;
    std::vector<std::string> members;
    for (std::size_t i = 0; i < c.assignment.size(); ++i) {
      if (c.assignment[i] == int(k)) members.push_back(ids[i]);
    }
    j["member_ids"] = members;
    std::vector<double> centroid;
    for (Eigen::Index d = 0; d < c.centroids.cols(); ++d) centroid.push_back(c.centroids(k, d));
    j["centroid"] = centroid;
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------

GroundingRun ground_instructions(std::span<const InstructionRecord> artificial,
                                 const VectorIndex& user_index,
                                 const std::map<std::string, EmbeddingVector>& artificial_vectors,
                                 const GroundingConfig& config) {
  if (config.cap < 1) throw InvalidArgument("ground_instructions: cap must be >= 1");
  GroundingRun run;
  std::map<std::string, std::size_t> counts;
  for (const auto& a : artificial) {
    const auto vit = artificial_vectors.find(a.id);
    const EmbeddingVector q = vit != artificial_vectors.end() ? vit->second : embed_text(a.text, config.dim);
    const auto top = retrieve_topk(user_index, q, config.topk);
    const auto draw = softmax_sample(top, derive_seed(config.seed, a.id));
    GroundingResult r{a.id, draw.id, top[draw.index].score, draw.probability};
    if (r.similarity < config.tau_sim) {
      run.dropped.emplace_back(a.id, "below-threshold");
      continue;
    }
    if (counts[r.chosen_user_id] >= config.cap) {
      if (!config.redraw_on_cap) {
        run.dropped.emplace_back(a.id, "cap");
        continue;
      }
      std::vector<double> scores(top.size());
      std::transform(top.begin(), top.end(), scores.begin(), [](const ScoredId& s) { return s.score; });
      const auto probs = softmax_probabilities(scores);
      bool placed = false;
      for (std::size_t i = 0; i < top.size(); ++i) {
        if (i == draw.index || top[i].score < config.tau_sim) continue;
        if (counts[top[i].id] >= config.cap) continue;
        r = {a.id, top[i].id, top[i].score, probs[i]};
        placed = true;
        break;
      }
      if (!placed) {
        run.dropped.emplace_back(a.id, "cap");
        continue;
      }
    }
    ++counts[r.chosen_user_id];
    run.kept.push_back(r);
  }
  return run;
}

}  // namespace forge

#include "forge/preference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "forge/error.hpp"
#include "forge/image.hpp"

namespace forge {

std::string_view to_string(PairOrigin o) noexcept {
  switch (o) {
    case PairOrigin::SelfGenerated: return "self-generated";
    case PairOrigin::Symmetric: return "symmetric";
    case PairOrigin::Distilled: return "distilled";
  }
  return "?";
}

std::optional<PairOrigin> parse_pair_origin(std::string_view s) noexcept {
  if (s == "self-generated") return PairOrigin::SelfGenerated;
  if (s == "symmetric") return PairOrigin::Symmetric;
  if (s == "distilled") return PairOrigin::Distilled;
  return std::nullopt;
}

bool strictly_dominates(const AssessorScore& a, const AssessorScore& b, double min_gap) noexcept {
  return a.instruction_adherence - b.instruction_adherence > min_gap && a.aesthetic - b.aesthetic > min_gap;
}

namespace {

std::vector<const ScoredCandidate*> by_id(std::span<const ScoredCandidate> c) {
  std::vector<const ScoredCandidate*> v;
  for (const auto& x : c) {
    if (!x.scores.valid()) throw InvalidArgument("candidate " + x.triplet_id + " has invalid scores");
    v.push_back(&x);
  }
  std::stable_sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->triplet_id < b->triplet_id; });
  return v;
}

}  // namespace

std::vector<PreferencePair> strict_dominance_pairs(const std::string& context_id,
                                                   std::span<const ScoredCandidate> candidates, double min_gap) {
  if (!(min_gap >= 0.0)) throw InvalidArgument("min_gap must be >= 0");
  for (const auto& c : candidates) {
    if (!c.scores.valid()) throw InvalidArgument("candidate " + c.triplet_id + " has scores outside [0, 5]");
  }
  std::vector<PreferencePair> out;
  if (candidates.size() < 2) return out;
  const auto sorted = by_id(candidates);
  for (const auto* w : sorted) {
    for (const auto* l : sorted) {
      if (w != l && strictly_dominates(w->scores, l->scores, min_gap)) {
        out.push_back({context_id, w->triplet_id, l->triplet_id, PairOrigin::SelfGenerated});
      }
    }
  }
  return out;
}

SymmetricResult symmetric_pairs(const SymmetricMatrix& m) {
  const auto n = Eigen::Index(m.context_ids.size());
  if (Eigen::Index(m.generation_ids.size()) != n || m.passes.rows() != n || m.passes.cols() != n) {
    throw InvalidArgument("symmetric matrix must be square and match the id lists");
  }
  SymmetricResult out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ctx = m.context_ids[std::size_t(i)];
    if (!m.passes(i, i)) {
      out.skipped.push_back({ctx, "generation failed its own instruction"});
      continue;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      // y_j must have survived filtering for its own c_j and must not
      // satisfy c_i, otherwise it is no negative for c_i.
      if (j == i || !m.passes(j, j) || m.passes(i, j)) continue;
      out.pairs.push_back({ctx, m.generation_ids[std::size_t(i)], m.generation_ids[std::size_t(j)],
                           PairOrigin::Symmetric});
    }
  }
  return out;
}

std::vector<PreferencePair> distilled_pairs(const std::string& context_id, std::span<const ScoredCandidate> teacher,
                                            std::span<const ScoredCandidate> student) {
  for (const auto& t : teacher) {
    if (t.source != CandidateSource::Teacher) {
      throw InvalidArgument("candidate " + t.triplet_id + " is not tagged as a teacher sample");
    }
  }
  std::vector<PreferencePair> out;
  const auto ts = by_id(teacher);
  const auto ss = by_id(student);
  for (const auto* t : ts) {
    for (const auto* s : ss) {
      if (!strictly_dominates(s->scores, t->scores)) {
        out.push_back({context_id, t->triplet_id, s->triplet_id, PairOrigin::Distilled});
      }
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const PreferencePair& p) {
  nlohmann::ordered_json j;
  j["context_id"] = p.context_id;
  j["winner_id"] = p.winner_id;
  j["loser_id"] = p.loser_id;
  j["origin"] = to_string(p.origin);
  return j;
}

PreferencePair pair_from_json(const nlohmann::json& j) {
  PreferencePair p;
  p.context_id = j.at("context_id").get<std::string>();
  p.winner_id = j.at("winner_id").get<std::string>();
  p.loser_id = j.at("loser_id").get<std::string>();
  const auto o = parse_pair_origin(j.at("origin").get<std::string>());
  if (!o) throw InvalidArgument("unknown pair origin");
  p.origin = *o;
  if (p.winner_id == p.loser_id) throw InvalidArgument("pair winner equals loser");
  return p;
}

void write_pairs(std::span<const PreferencePair> pairs, const std::filesystem::path& path) {
  std::string text;
  for (const auto& p : pairs) text += to_json(p).dump() + "\n";
  write_file_atomic(path, text);
}

namespace {

template <typename F>
void for_each_jsonl(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      f(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(path.string() + ": line " + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw InvalidArgument(path.string() + ": line " + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) { out.push_back(pair_from_json(j)); });
  return out;
}

DpoSample<double> dpo_sample_from_json(const nlohmann::json& j, double default_beta) {
  auto vec = [&](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return DpoVector<double>(Eigen::Map<const DpoVector<double>>(v.data(), Eigen::Index(v.size())));
  };
  DpoSample<double> s;
  s.eps = vec("eps");
  s.eps_ref_w = vec("eps_ref_w");
  s.eps_theta_w = vec("eps_theta_w");
  s.eps_ref_l = vec("eps_ref_l");
  s.eps_theta_l = vec("eps_theta_l");
  s.beta = j.value("beta", default_beta);
  s.validate();
  return s;
}

std::vector<DpoSample<double>> read_dpo_fixture(const std::filesystem::path& path) {
  std::vector<DpoSample<double>> out;
  for_each_jsonl(path, [&](const nlohmann::json& j) { out.push_back(dpo_sample_from_json(j)); });
  return out;
}

double mae(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size() || predictions.empty()) {
    throw InvalidArgument("mae needs equal, non-zero lengths");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) s += std::abs(predictions[i] - labels[i]);
  return s / double(predictions.size());
}

std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw InvalidArgument("spearman needs equal lengths");
  if (predictions.size() < 2) throw InvalidArgument("spearman needs at least 2 observations");
  const auto rp = fractional_ranks(predictions);
  const auto rl = fractional_ranks(labels);
  const Eigen::Map<const Eigen::VectorXd> a(rp.data(), Eigen::Index(rp.size()));
  const Eigen::Map<const Eigen::VectorXd> b(rl.data(), Eigen::Index(rl.size()));
  const Eigen::VectorXd da = a.array() - a.mean();
  const Eigen::VectorXd db = b.array() - b.mean();
  const double den = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (!(den > 0.0)) throw InvalidArgument("spearman is undefined for a constant input");
  return std::clamp(da.dot(db) / den, -1.0, 1.0);
}

double overall_score(const std::map<std::string, double>& per_task) {
  if (per_task.empty()) throw InvalidArgument("overall_score needs at least one task");
  double s = 0.0;
  for (const auto& [task, v] : per_task) s += v;
  return s / double(per_task.size());
}

}  // namespace forge

// Stage implementations behind run_pipeline. Each reads its input manifests,
// does per-record work (partitioned over workers where it is independent),
// and writes its output atomically.

#include <algorithm>
#include <fstream>
#include <set>

#include "forge/augment.hpp"
#include "forge/filters.hpp"
#include "forge/grounding.hpp"
#include "forge/parallel.hpp"
#include "forge/pipeline.hpp"
#include "forge/preference.hpp"
#include "forge/subprocess.hpp"
#include "forge/triplet_graph.hpp"

namespace forge {

namespace fs = std::filesystem;

namespace {

using json = nlohmann::json;

std::vector<TripletRecord> load_inputs(const StageContext& ctx) {
  std::vector<TripletRecord> all;
  for (const auto& in : ctx.stage.inputs) {
    auto part = read_manifest(ctx.resolve(in));
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

const json& params(const StageContext& ctx) { return ctx.stage.parameters; }

template <class T>
T param(const StageContext& ctx, const char* key, T fallback) {
  const auto& p = params(ctx);
  if (!p.contains(key)) return fallback;
  try {
    return p[key].get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("stage '" + ctx.stage.name + "': parameter '" + key + "' has the wrong type");
  }
}

std::optional<fs::path> path_param(const StageContext& ctx, const char* key) {
  const auto& p = params(ctx);
  if (!p.contains(key)) return std::nullopt;
  return ctx.resolve(p[key].get<std::string>());
}

void write_output(const StageContext& ctx, const std::vector<TripletRecord>& records) {
  write_manifest(records, ctx.resolve(ctx.stage.output));
}

std::vector<std::string> ids_of(const std::vector<TripletRecord>& records) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);
  return ids;
}

StageReport base_report(const StageContext& ctx, std::size_t in) {
  StageReport r;
  r.stage = ctx.stage.name;
  r.operation = ctx.stage.operation;
  r.in = in;
  return r;
}

// --- grounding -------------------------------------------------------------------

std::vector<InstructionRecord> read_instruction_corpus(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<InstructionRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      InstructionRecord r;
      r.text = j.at("text").get<std::string>();
      r.id = j.contains("id") ? j["id"].get<std::string>() : derive_id("i", {r.text});
      r.origin = InstructionOrigin::RealUser;
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw InvalidArgument(path.string() + ": line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

StageReport stage_ground(const StageContext& ctx) {
  auto records = load_inputs(ctx);
  StageReport rep = base_report(ctx, records.size());
  const auto corpus_path = path_param(ctx, "user_corpus");
  if (!corpus_path) throw InvalidArgument("ground_instructions needs parameter 'user_corpus'");
  GroundingConfig cfg;
  cfg.topk = param<std::size_t>(ctx, "topk", cfg.topk);
  cfg.tau_sim = param<double>(ctx, "tau_sim", cfg.tau_sim);
  cfg.cap = param<std::size_t>(ctx, "cap", cfg.cap);
  cfg.dim = param<int>(ctx, "dim", cfg.dim);
  cfg.seed = ctx.seed;
  const std::string on_drop = param<std::string>(ctx, "on_drop", "keep-synthetic");
  if (on_drop != "keep-synthetic" && on_drop != "remove") {
    throw InvalidArgument("on_drop must be 'keep-synthetic' or 'remove'");
  }

  const auto users = read_instruction_corpus(*corpus_path);
  VectorIndex index(cfg.dim);
  std::map<std::string, const InstructionRecord*> user_by_id;
  for (const auto& u : users) {
    index.add(u.id, embed_text(u.text, cfg.dim));
    user_by_id[u.id] = &u;
  }

  // One grounding per distinct artificial instruction; records sharing an
  // instruction share its grounding.
  std::vector<InstructionRecord> artificial;
  std::map<std::string, EmbeddingVector> vectors;
  for (const auto& r : records) {
    if (r.instruction.origin == InstructionOrigin::RealUser) continue;
    if (vectors.count(r.instruction.id)) continue;
    artificial.push_back(r.instruction);
    vectors[r.instruction.id] = embed_text(r.instruction.text, cfg.dim);
  }
  const GroundingRun run = ground_instructions(artificial, index, vectors, cfg);
  std::map<std::string, const GroundingResult*> chosen;
  std::map<std::string, std::size_t> uses;
  for (const auto& g : run.kept) {
    chosen[g.artificial_id] = &g;
    ++uses[g.chosen_user_id];
  }
  std::map<std::string, std::string> dropped(run.dropped.begin(), run.dropped.end());

  // Optional applicability check against per-image descriptors.
  std::map<std::string, ImageDescriptor> descriptors;
  if (const auto dp = path_param(ctx, "descriptors")) {
    std::ifstream in(*dp);
    if (!in) throw IoError("cannot open " + dp->string());
    for (const auto& [ref, tags] : json::parse(in).items()) descriptors[ref].tags = tags.get<std::vector<std::string>>();
  }
  const ApplicabilityHook hook =
      keyword_applicability_hook(param<std::vector<std::string>>(ctx, "vocabulary", std::vector<std::string>{}));

  std::vector<TripletRecord> out;
  for (auto& r : records) {
    if (r.instruction.origin == InstructionOrigin::RealUser) {
      out.push_back(std::move(r));
      continue;
    }
    std::string reason;
    const auto it = chosen.find(r.instruction.id);
    if (it == chosen.end()) {
      reason = dropped.count(r.instruction.id) ? dropped[r.instruction.id] : "not-grounded";
    } else {
      const auto& user = *user_by_id.at(it->second->chosen_user_id);
      InstructionRecord grounded{user.id, user.text, InstructionOrigin::RealUser, uses[user.id]};
      const auto d = descriptors.find(r.source_ref);
      if (d != descriptors.end()) {
        const auto verdict = validate_applicability(user.text, d->second, hook);
        if (const auto* e = std::get_if<MinimallyEdited>(&verdict)) {
          grounded = {derive_id("i", {e->text}), e->text, InstructionOrigin::RealUser, 1};
        } else if (const auto* x = std::get_if<Discarded>(&verdict)) {
          reason = "not-applicable: " + x->reason;
        }
      }
      if (reason.empty()) {
        r.instruction = std::move(grounded);
        out.push_back(std::move(r));
        continue;
      }
    }
    if (on_drop == "remove") {
      ++rep.removed;
      ++rep.reasons[reason];
    } else {
      ++rep.reasons["kept-synthetic: " + reason];
      out.push_back(std::move(r));
    }
  }
  rep.kept = out.size();
  rep.produced = out.size();
  write_output(ctx, out);
  return rep;
}

// --- bootstrapping ------------------------------------------------------------------

StageReport stage_bootstrap(const StageContext& ctx, bool invert, bool composite) {
  const auto records = load_inputs(ctx);
  StageReport rep = base_report(ctx, records.size());
  std::vector<TripletRecord> out = records;
  rep.kept = records.size();
  for (const auto& set : EditSet::from_records(records)) {
    try {
      validate_edit_set(set);
    } catch (const InvalidArgument&) {
      // The set's records still pass through; only derivation is skipped.
      rep.reasons["invalid-edit-set"] += set.edits.size();
      continue;
    }
    auto take = [&](BootstrapResult res) {
      for (const auto& s : res.skipped) ++rep.reasons["hook-failed: " + s.reason];
      out.insert(out.end(), std::make_move_iterator(res.records.begin()), std::make_move_iterator(res.records.end()));
    };
    if (invert) take(invert_triplets(set));
    if (composite) take(composite_transitions(set));
  }
  rep.produced = out.size();
  write_output(ctx, out);
  return rep;
}

// --- filtering ------------------------------------------------------------------------

/// Deterministic stand-in for the assessor model: grades in [2, 5] drawn
/// from a hash of the triplet content, at 0.1 resolution.
AssessorScore hash_assessor(const TripletRecord& r) {
  const auto h = sha256_hex(r.source_ref + '\0' + r.instruction.text + '\0' + r.target_ref);
  Rng rng(fnv1a64(h));
  auto grade = [&] { return std::nearbyint((2.0 + 3.0 * rng.uniform()) * 10.0) / 10.0; };
  const double a = grade();
  return {a, grade()};
}

struct FilterChecks {
  bool face = false;
  bool assessor = false;
  bool align = false;
};

struct RecordOutcome {
  enum class Kind { Keep, Remove, Error } kind = Kind::Keep;
  TripletRecord record;
  FilterVerdict verdict;
};

StageReport stage_filter(const StageContext& ctx, FilterChecks checks) {
  const auto records = load_inputs(ctx);
  StageReport rep = base_report(ctx, records.size());

  FaceSidecar faces;
  if (const auto p = path_param(ctx, "face_sidecar")) {
    faces = read_face_sidecar(*p);
  } else if (checks.face && ctx.stage.operation == "face_iou_filter") {
    throw InvalidArgument("face_iou_filter needs parameter 'face_sidecar'");
  } else {
    checks.face = false;
  }
  const double face_threshold = param<double>(ctx, "face_iou_threshold", kFaceIouThreshold);
  const double tau = param<double>(ctx, "assessor_threshold", kAssessorThreshold);
  std::optional<double> floor;
  if (params(ctx).contains("aesthetic_floor")) floor = param<double>(ctx, "aesthetic_floor", 0.0);
  std::map<std::string, AssessorScore> score_sidecar;
  if (const auto p = path_param(ctx, "scores_sidecar")) {
    std::ifstream in(*p);
    if (!in) throw IoError("cannot open " + p->string());
    for (const auto& [id, s] : json::parse(in).items()) {
      score_sidecar[id] = {s.at("instruction_adherence").get<double>(), s.at("aesthetic").get<double>()};
    }
  }
  std::function<AssessorScore(const TripletRecord&)> assessor;
  const json mode = params(ctx).value("assessor", json("none"));
  if (mode == "stub") {
    assessor = hash_assessor;
  } else if (mode.is_object() && mode.contains("command")) {
    const auto argv = mode["command"].get<std::vector<std::string>>();
    assessor = [argv](const TripletRecord& r) {
      const auto resp = run_json_subprocess(argv, {{"triplet_id", r.id},
                                                   {"source_ref", r.source_ref},
                                                   {"instruction", r.instruction.text},
                                                   {"target_ref", r.target_ref}});
      return AssessorScore{resp.at("instruction_adherence").get<double>(), resp.at("aesthetic").get<double>()};
    };
  } else if (mode != "none") {
    throw InvalidArgument("assessor must be \"none\", \"stub\" or {\"command\": [...]}");
  }

  AlignmentOptions align_opt;
  align_opt.ransac.iterations = param<int>(ctx, "ransac_iters", align_opt.ransac.iterations);
  align_opt.ransac.inlier_tol = param<double>(ctx, "inlier_tol", align_opt.ransac.inlier_tol);
  align_opt.identity_tol_px = param<double>(ctx, "identity_tol_px", align_opt.identity_tol_px);
  align_opt.max_shift_px = param<double>(ctx, "max_shift_px", align_opt.max_shift_px);
  std::set<std::string> align_prov;
  for (const auto& p : param<std::vector<std::string>>(ctx, "align_provenance", {})) align_prov.insert(p);

  std::vector<RecordOutcome> outcomes(records.size());
  parallel_for_keys(ids_of(records), ctx.workers, [&](std::size_t i) {
    RecordOutcome& o = outcomes[i];
    o.record = records[i];
    auto& v = o.verdict;
    try {
      if (checks.face) {
        auto find = [&](const std::string& ref) {
          const auto it = faces.find(ref);
          return it == faces.end() ? std::vector<BoundingBox>{} : it->second;
        };
        v = face_iou_filter(find(o.record.source_ref), find(o.record.target_ref), face_threshold);
        if (!v.keep) {
          o.kind = RecordOutcome::Kind::Remove;
          return;
        }
      }
      if (checks.assessor) {
        if (!o.record.scores) {
          const auto it = score_sidecar.find(o.record.id);
          if (it != score_sidecar.end()) {
            o.record.scores = it->second;
          } else if (assessor) {
            o.record.scores = assessor(o.record);
          } else {
            o.kind = RecordOutcome::Kind::Error;
            v.reason = "missing-scores";
            return;
          }
        }
        if (!o.record.scores->valid()) {
          o.kind = RecordOutcome::Kind::Error;
          v.reason = "invalid-scores";
          return;
        }
        v.metrics["instruction_adherence"] = o.record.scores->instruction_adherence;
        v.metrics["aesthetic"] = o.record.scores->aesthetic;
        const auto part = assessor_threshold_filter({o.record}, tau, floor);
        if (!part.removed.empty()) {
          o.kind = RecordOutcome::Kind::Remove;
          v.keep = false;
          v.reason = part.removed.front().reason;
          return;
        }
      }
      const bool eligible = align_prov.empty() || align_prov.count(std::string(to_string(o.record.provenance)));
      if (checks.align && eligible && o.record.source_ref != o.record.target_ref) {
        const ImageBuffer src = ctx.store.get(o.record.source_ref);
        const ImageBuffer tgt = ctx.store.get(o.record.target_ref);
        if (src.width() == tgt.width() && src.height() == tgt.height()) {
          AlignmentOptions opt = align_opt;
          opt.ransac.seed = derive_seed(ctx.seed, o.record.id);
          const auto a = align_to_source(src, tgt, opt);
          v.metrics["correspondences"] = double(a.correspondences);
          v.metrics["inliers"] = double(a.inliers);
          v.metrics["corner_shift"] = a.max_corner_shift;
          v.metrics["aligned"] = a.action == AlignmentOutcome::Action::Aligned ? 1.0 : 0.0;
          if (a.aligned) o.record.target_ref = ctx.store.put(*a.aligned);
        }
      }
    } catch (const std::exception& e) {
      o.kind = RecordOutcome::Kind::Error;
      v.keep = false;
      v.reason = std::string("error: ") + e.what();
    }
  });

  std::vector<TripletRecord> out;
  std::string report_lines;
  for (auto& o : outcomes) {
    auto line = filter_report_line(o.record.id, o.verdict);
    switch (o.kind) {
      case RecordOutcome::Kind::Keep:
        out.push_back(std::move(o.record));
        ++rep.kept;
        break;
      case RecordOutcome::Kind::Remove:
        ++rep.removed;
        ++rep.reasons[o.verdict.reason];
        break;
      case RecordOutcome::Kind::Error:
        line["verdict"] = "error";
        ++rep.errored;
        ++rep.reasons[o.verdict.reason];
        break;
    }
    report_lines += line.dump() + "\n";
  }
  rep.produced = out.size();
  write_file_atomic(ctx.resolve(ctx.stage.output + ".filter.jsonl"), report_lines);
  write_output(ctx, out);
  return rep;
}

// --- augmentation -----------------------------------------------------------------------

StageReport stage_augment(const StageContext& ctx) {
  const auto records = load_inputs(ctx);
  StageReport rep = base_report(ctx, records.size());
  rep.kept = records.size();

  std::optional<TemplateBank> custom_bank;
  if (const auto p = path_param(ctx, "templates")) custom_bank = TemplateBank::load(*p);
  const TemplateBank& bank = custom_bank ? *custom_bank : TemplateBank::builtin();
  const DirectionalBlocklist blocklist =
      params(ctx).contains("blocklist") ? DirectionalBlocklist(param<std::vector<std::string>>(ctx, "blocklist", {}))
                                        : DirectionalBlocklist();

  struct Job {
    std::size_t record;
    AugmentationSpec spec;
    bool both_directions;
  };
  std::vector<Job> jobs;
  if (const auto plan = path_param(ctx, "plan")) {
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < records.size(); ++i) by_id.emplace(records[i].id, i);
    std::ifstream in(*plan);
    if (!in) throw IoError("cannot open " + plan->string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (trim(line).empty()) continue;
      const auto j = json::parse(line);
      const auto id = j.at("triplet_id").get<std::string>();
      const auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw InvalidArgument(plan->string() + ": line " + std::to_string(n) + ": unknown triplet_id " + id);
      }
      jobs.push_back({it->second, spec_from_json(j), false});
    }
  } else {
    const double rate = param<double>(ctx, "rate", 0.1);
    if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidArgument("augment rate must be in [0, 1]");
    std::vector<AugmentOp> ops;
    for (const auto& name : param<std::vector<std::string>>(ctx, "ops", {"blur", "noise", "film_gray", "identity", "mirror", "overlay"})) {
      const auto op = parse_augment_op(name);
      if (!op) throw InvalidArgument("unknown augmentation op '" + name + "'");
      ops.push_back(*op);
    }
    std::set<std::string> prov;
    for (const auto& p : param<std::vector<std::string>>(ctx, "provenance", {"mined", "external"})) prov.insert(p);
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!prov.count(std::string(to_string(records[i].provenance)))) continue;
      for (const auto op : ops) {
        const std::uint64_t s = derive_seed(ctx.seed, records[i].id + ":" + std::string(to_string(op)));
        if (Rng(s).uniform() >= rate) continue;
        jobs.push_back({i, sample_spec(op, derive_seed(s, "spec")), is_pair_op(op)});
      }
    }
  }

  std::vector<std::string> keys;
  for (std::size_t k = 0; k < jobs.size(); ++k) keys.push_back(records[jobs[k].record].id + "#" + std::to_string(k));
  std::vector<std::vector<TripletRecord>> produced(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for_keys(keys, ctx.workers, [&](std::size_t k) {
    const auto& job = jobs[k];
    const auto& rec = records[job.record];
    try {
      if (job.both_directions) {
        auto pair = make_bidirectional_pair(ctx.store.get(rec.source_ref), job.spec, ctx.store, bank, {rec.id});
        produced[k] = {std::move(pair.forward), std::move(pair.reverse)};
      } else {
        produced[k] = apply_augmentation(rec, job.spec, ctx.store, bank, blocklist);
      }
    } catch (const std::exception& e) {
      errors[k] = std::string(to_string(job.spec.op)) + ": " + e.what();
    }
  });

  std::vector<TripletRecord> out = records;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (!errors[k].empty()) {
      // Inputs always pass through, so a failed augmentation is a reason, not an errored record.
      ++rep.reasons["error: " + errors[k]];
      continue;
    }
    if (produced[k].empty()) ++rep.reasons[std::string(to_string(jobs[k].spec.op)) + ": declined"];
    out.insert(out.end(), produced[k].begin(), produced[k].end());
  }
  rep.produced = out.size();
  write_output(ctx, out);
  return rep;
}

// --- preference pairs --------------------------------------------------------------------------

StageReport stage_pairs(const StageContext& ctx) {
  const auto records = load_inputs(ctx);
  StageReport rep = base_report(ctx, records.size());
  const double min_gap = param<double>(ctx, "min_gap", 0.0);
  std::vector<std::string> order;
  std::map<std::string, std::vector<ScoredCandidate>> contexts;
  for (const auto& r : records) {
    if (!r.scores) {
      ++rep.removed;
      ++rep.reasons["unscored"];
      continue;
    }
    ++rep.kept;
    const auto ctx_id = derive_id("ctx", {r.source_ref, r.instruction.text});
    auto& c = contexts[ctx_id];
    if (c.empty()) order.push_back(ctx_id);
    c.push_back({r.id, *r.scores, CandidateSource::OnPolicy});
  }
  std::vector<PreferencePair> pairs;
  for (const auto& id : order) {
    auto p = strict_dominance_pairs(id, contexts[id], min_gap);
    pairs.insert(pairs.end(), p.begin(), p.end());
  }
  rep.produced = pairs.size();
  write_pairs(pairs, ctx.resolve(ctx.stage.output));
  return rep;
}

// --- validation --------------------------------------------------------------------------------

StageReport stage_validate(const StageContext& ctx) {
  const auto records = load_inputs(ctx);
  StageReport rep = base_report(ctx, records.size());
  const auto corpus = index_by_id(records);
  std::set<std::string> seen;
  std::vector<TripletRecord> out;
  for (const auto& r : records) {
    std::string reason;
    if (!seen.insert(r.id).second) {
      reason = "duplicate-id";
    } else if (const auto v = validate_triplet(r, &corpus); !v.empty()) {
      reason = std::string(to_string(v.front().kind));
    }
    if (reason.empty()) {
      out.push_back(r);
    } else {
      ++rep.removed;
      ++rep.reasons[reason];
    }
  }
  rep.kept = out.size();
  rep.produced = out.size();
  write_output(ctx, out);
  return rep;
}

}  // namespace

StageReport execute_stage(const StageContext& ctx) {
  const auto& op = ctx.stage.operation;
  if (op == "ground_instructions") return stage_ground(ctx);
  if (op == "bootstrap") return stage_bootstrap(ctx, true, true);
  if (op == "invert_triplets") return stage_bootstrap(ctx, true, false);
  if (op == "composite_transitions") return stage_bootstrap(ctx, false, true);
  if (op == "filter_triplets") return stage_filter(ctx, {true, true, param<bool>(ctx, "align", false)});
  if (op == "face_iou_filter") return stage_filter(ctx, {true, false, false});
  if (op == "assessor_threshold_filter") return stage_filter(ctx, {false, true, false});
  if (op == "align_pairs") return stage_filter(ctx, {false, false, true});
  if (op == "augment") return stage_augment(ctx);
  if (op == "strict_dominance_pairs") return stage_pairs(ctx);
  if (op == "validate") return stage_validate(ctx);
  throw InvalidArgument("unknown stage operation '" + op + "'");
}

}  // namespace forge

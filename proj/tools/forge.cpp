// forge: command-line front end for the curation pipeline.
//
// Exit codes: 0 success, 1 validation failure (bad config, bad manifest,
// invalid records, bad arguments), 2 stage failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "forge/dpo.hpp"
#include "forge/filters.hpp"
#include "forge/grounding.hpp"
#include "forge/pipeline.hpp"
#include "forge/preference.hpp"
#include "forge/random.hpp"
#include "forge/scheduler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kStageFailure = 2;

void print_reports(const std::vector<forge::StageReport>& reports) {
  for (const auto& r : reports) std::cout << forge::to_json(r).dump() << "\n";
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("FORGE_SEED");
  if (!s || !*s) return std::nullopt;
  char* end = nullptr;
  const auto v = std::strtoull(s, &end, 10);
  if (*end != '\0') throw forge::InvalidArgument(std::string("FORGE_SEED is not an unsigned integer: ") + s);
  return v;
}

// Ad-hoc single-stage commands run in the working directory, with derived
// images written under <store>/derived.
forge::StageReport run_single_stage(const std::string& operation, const std::string& input, const std::string& output,
                                    json parameters, std::uint64_t seed, int workers, const std::string& store_root) {
  forge::StageConfig stage;
  stage.name = operation;
  stage.operation = operation;
  stage.parameters = std::move(parameters);
  stage.inputs = {input};
  stage.output = output;
  forge::ImageStore store(fs::path(store_root), "derived");
  const forge::StageContext ctx{stage, fs::current_path(), store, seed, workers};
  try {
    return forge::execute_stage(ctx);
  } catch (const forge::InvalidArgument&) {
    throw;
  } catch (const forge::ManifestError&) {
    throw;
  } catch (const std::exception& e) {
    throw forge::StageFailure(operation, e.what(), {});
  }
}

std::vector<forge::InstructionRecord> read_corpus(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw forge::IoError("cannot open " + path.string());
  std::vector<forge::InstructionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (forge::trim(line).empty()) continue;
    const auto j = json::parse(line);
    forge::InstructionRecord r;
    r.text = j.at("text").get<std::string>();
    r.id = j.contains("id") ? j["id"].get<std::string>() : forge::derive_id("i", {r.text});
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge - instruction-editing corpus curation"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run a pipeline config");
  std::string config_path;
  bool resume = false;
  std::optional<int> workers;
  run->add_option("--config", config_path, "Pipeline JSON")->required();
  run->add_flag("--resume", resume, "Skip stages whose fingerprints match");
  run->add_option("--workers", workers, "Worker count (overrides config)")->check(CLI::PositiveNumber);

  // stats / validate
  auto* stats = app.add_subcommand("stats", "Summarize a manifest");
  std::string manifest;
  stats->add_option("manifest", manifest)->required();
  auto* validate = app.add_subcommand("validate", "Check every record of a manifest");
  validate->add_option("manifest", manifest)->required();

  // fixture
  auto* fixture = app.add_subcommand("fixture", "Write the synthetic end-to-end fixture");
  std::string fixture_dir;
  std::uint64_t seed = 7;
  fixture->add_option("dir", fixture_dir)->required();
  fixture->add_option("--seed", seed);

  // Shared options of the single-stage commands.
  std::string input, output, store_root = ".";
  int stage_workers = 1;
  auto stage_io = [&](CLI::App* sub) {
    sub->add_option("--input", input, "Input manifest")->required();
    sub->add_option("--output", output, "Output path")->required();
    sub->add_option("--seed", seed);
    sub->add_option("--workers", stage_workers)->check(CLI::PositiveNumber);
    sub->add_option("--store", store_root, "Image store root");
  };

  auto* ground = app.add_subcommand("ground", "Ground synthetic instructions in a user corpus");
  stage_io(ground);
  std::string users;
  std::size_t topk = 20, cap = 3;
  double tau_sim = 0.70;
  ground->add_option("--users", users, "User instruction JSONL {id, text}")->required();
  ground->add_option("--topk", topk);
  ground->add_option("--tau-sim", tau_sim);
  ground->add_option("--cap", cap);

  auto* cluster = app.add_subcommand("cluster", "k-means over instruction embeddings");
  std::string embeddings;
  int clusters = 8;
  cluster->add_option("--input", input, "Instruction JSONL {id, text}");
  cluster->add_option("--embeddings", embeddings, "Embedding sidecar JSONL {id, vector}");
  cluster->add_option("--output", output, "Cluster report JSONL")->required();
  cluster->add_option("--clusters", clusters)->check(CLI::PositiveNumber);
  cluster->add_option("--seed", seed);

  auto* filter = app.add_subcommand("filter", "Face-IoU gate, assessor threshold, alignment");
  stage_io(filter);
  std::string face_sidecar, scores_sidecar, assessor = "none";
  double face_iou = forge::kFaceIouThreshold, assessor_threshold = forge::kAssessorThreshold, inlier_tol = 1.5;
  int ransac_iters = 2000;
  bool align = false;
  filter->add_option("--faces", face_sidecar, "Face sidecar JSON");
  filter->add_option("--scores", scores_sidecar, "Score sidecar JSON {id: {instruction_adherence, aesthetic}}");
  filter->add_option("--assessor", assessor, "none | stub");
  filter->add_option("--face-iou-threshold", face_iou);
  filter->add_option("--assessor-threshold", assessor_threshold);
  filter->add_option("--ransac-iters", ransac_iters)->check(CLI::PositiveNumber);
  filter->add_option("--inlier-tol", inlier_tol);
  filter->add_flag("--align", align, "Align targets to sources");

  auto* augment = app.add_subcommand("augment", "Deterministic augmentations");
  stage_io(augment);
  std::vector<std::string> ops;
  std::string plan_file;
  double rate = 0.1;
  augment->add_option("--ops", ops, "Ops to sample")->delimiter(',');
  augment->add_option("--plan", plan_file, "Explicit plan JSONL");
  augment->add_option("--rate", rate);

  auto* plan = app.add_subcommand("plan", "Mix tasks and pack them into pixel-budget batches");
  std::string items_path;
  std::uint64_t pixel_budget = 0;
  double t2i_percent = forge::kPretrainMix.t2i_percent, edit_percent = forge::kPretrainMix.edit_percent;
  std::optional<std::size_t> count;
  plan->add_option("--items", items_path, "JSONL {id, prompt, task: edit|t2i, width?, height?}")->required();
  plan->add_option("--output", output, "Batch plan JSONL")->required();
  plan->add_option("--pixel-budget", pixel_budget)->required();
  plan->add_option("--t2i-percent", t2i_percent);
  plan->add_option("--edit-percent", edit_percent);
  plan->add_option("--count", count, "Mix this many tasks first");
  plan->add_option("--seed", seed);

  auto* pair = app.add_subcommand("pair", "Strict-dominance preference pairs");
  stage_io(pair);
  double min_gap = 0.0;
  pair->add_option("--min-gap", min_gap);

  auto* dpo = app.add_subcommand("dpo-loss", "Diffusion-DPO loss over a sample file");
  dpo->add_option("--input", input, "JSONL {eps, eps_ref_w, eps_theta_w, eps_ref_l, eps_theta_l, beta?}")->required();

  auto* metrics = app.add_subcommand("metrics", "Assessor metrics and overall score");
  std::string predictions, labels, task_scores;
  metrics->add_option("--predictions", predictions, "Comma-separated");
  metrics->add_option("--labels", labels, "Comma-separated");
  metrics->add_option("--task-scores", task_scores, "Comma-separated per-task scores");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto config = forge::load_pipeline_config(config_path);
      forge::RunOptions opt;
      opt.resume = resume;
      opt.workers = workers;
      opt.seed = env_seed();
      try {
        print_reports(forge::run_pipeline(config, opt));
      } catch (const forge::StageFailure& e) {
        print_reports(e.completed());
        std::cerr << "forge: " << e.what() << "\n";
        return kStageFailure;
      }
    } else if (*stats) {
      std::cout << forge::to_json(forge::manifest_stats(forge::read_manifest(manifest))).dump(2) << "\n";
    } else if (*validate) {
      const auto records = forge::read_manifest(manifest);
      const auto corpus = forge::index_by_id(records);
      std::size_t bad = 0;
      for (std::size_t i = 0; i < records.size(); ++i) {
        for (const auto& v : forge::validate_triplet(records[i], &corpus)) {
          ++bad;
          std::cout << "line " << i + 1 << ": " << records[i].id << ": " << forge::to_string(v.kind)
                    << (v.detail.empty() ? "" : " (" + v.detail + ")") << "\n";
        }
      }
      std::cout << records.size() << " records, " << bad << " violations\n";
      if (bad) return kValidation;
    } else if (*fixture) {
      forge::write_fixture(fixture_dir, seed);
    } else if (*ground) {
      const json p = {{"user_corpus", users}, {"topk", topk}, {"tau_sim", tau_sim}, {"cap", cap}};
      print_reports({run_single_stage("ground_instructions", input, output, p, seed, stage_workers, store_root)});
    } else if (*cluster) {
      std::vector<std::string> ids;
      std::vector<forge::EmbeddingVector> vecs;
      if (!embeddings.empty()) {
        for (auto& [id, v] : forge::read_embedding_sidecar(embeddings)) {
          ids.push_back(id);
          vecs.push_back(std::move(v));
        }
      } else if (!input.empty()) {
        for (const auto& r : read_corpus(input)) {
          ids.push_back(r.id);
          vecs.push_back(forge::embed_text(r.text));
        }
      } else {
        throw forge::InvalidArgument("cluster needs --input or --embeddings");
      }
      if (vecs.empty()) throw forge::InvalidArgument("nothing to cluster");
      Eigen::MatrixXd points(Eigen::Index(vecs.size()), vecs.front().size());
      for (std::size_t i = 0; i < vecs.size(); ++i) {
        if (vecs[i].size() != points.cols()) throw forge::InvalidArgument("embedding dims differ");
        points.row(Eigen::Index(i)) = vecs[i].transpose();
      }
      const auto c = forge::cluster_instructions(points, clusters, seed);
      forge::write_cluster_report(c, ids, output);
      std::cout << ordered_json{{"points", ids.size()}, {"clusters", clusters}, {"iterations", c.iterations},
                                {"converged", c.converged}, {"objective", c.objective.empty() ? 0.0 : c.objective.back()}}
                       .dump()
                << "\n";
    } else if (*filter) {
      json p = {{"face_iou_threshold", face_iou},  {"assessor_threshold", assessor_threshold},
                {"ransac_iters", ransac_iters},    {"inlier_tol", inlier_tol},
                {"align", align},                  {"assessor", assessor}};
      if (!face_sidecar.empty()) p["face_sidecar"] = face_sidecar;
      if (!scores_sidecar.empty()) p["scores_sidecar"] = scores_sidecar;
      print_reports({run_single_stage("filter_triplets", input, output, p, seed, stage_workers, store_root)});
    } else if (*augment) {
      json p = {{"rate", rate}};
      if (!ops.empty()) p["ops"] = ops;
      if (!plan_file.empty()) p["plan"] = plan_file;
      print_reports({run_single_stage("augment", input, output, p, seed, stage_workers, store_root)});
    } else if (*plan) {
      std::ifstream in(items_path);
      if (!in) throw forge::IoError("cannot open " + items_path);
      std::vector<forge::TaskItem> edit_items, t2i_items;
      std::map<std::string, std::pair<int, int>> dims;
      std::string line;
      while (std::getline(in, line)) {
        if (forge::trim(line).empty()) continue;
        const auto j = json::parse(line);
        forge::TaskItem item{j.at("id").get<std::string>(), j.value("prompt", std::string())};
        if (j.contains("width")) dims[item.id] = {j["width"].get<int>(), j.at("height").get<int>()};
        (j.value("task", std::string("edit")) == "t2i" ? t2i_items : edit_items).push_back(std::move(item));
      }
      std::vector<forge::PlanItem> plan_items;
      auto add = [&](const std::string& id, const char* tag) {
        const auto it = dims.find(id);
        const auto wh = it != dims.end() ? it->second : forge::sample_resolution(forge::derive_seed(seed, id));
        plan_items.push_back({id, wh.first, wh.second, tag});
      };
      if (count) {
        const forge::MixRatio ratio{t2i_percent, edit_percent};
        for (const auto& e : forge::mix_tasks(edit_items, t2i_items, ratio, *count, seed)) {
          add(e.id, e.kind == forge::TaskKind::T2I ? "t2i" : "edit");
        }
      } else {
        for (const auto& e : edit_items) add(e.id, "edit");
        for (const auto& t : t2i_items) add(t.id, "t2i");
      }
      const auto bp = forge::plan_batches(plan_items, pixel_budget, seed);
      std::string text;
      for (const auto& b : bp.batches) text += forge::to_json(b).dump() + "\n";
      forge::write_file_atomic(output, text);
      std::cout << ordered_json{{"items", plan_items.size()}, {"batches", bp.batches.size()}}.dump() << "\n";
    } else if (*pair) {
      print_reports({run_single_stage("strict_dominance_pairs", input, output, {{"min_gap", min_gap}}, seed,
                                      stage_workers, store_root)});
    } else if (*dpo) {
      const auto samples = forge::read_dpo_fixture(input);
      const auto r = forge::dpo_batch_loss(samples);
      std::cout << ordered_json{{"samples", samples.size()}, {"mean_loss", r.mean_loss}, {"losses", r.losses}}.dump()
                << "\n";
    } else if (*metrics) {
      ordered_json out = ordered_json::object();
      if (!predictions.empty() || !labels.empty()) {
        const auto p = parse_list(predictions), l = parse_list(labels);
        out["mae"] = forge::mae(p, l);
        out["spearman"] = forge::spearman_rho(p, l);
      }
      if (!task_scores.empty()) {
        std::map<std::string, double> per_task;
        const auto s = parse_list(task_scores);
        for (std::size_t i = 0; i < s.size(); ++i) per_task["task" + std::to_string(i)] = s[i];
        out["overall"] = forge::overall_score(per_task);
      }
      std::cout << out.dump() << "\n";
    }
  } catch (const forge::StageFailure& e) {
    std::cerr << "forge: " << e.what() << "\n";
    return kStageFailure;
  } catch (const forge::Error& e) {
    std::cerr << "forge: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "forge: " << e.what() << "\n";
    return kValidation;
  }
  return kOk;
}

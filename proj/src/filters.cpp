#include "forge/filters.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "forge/error.hpp"

namespace forge {

BoundingBox::BoundingBox(double x0, double y0, double x1, double y1)
    : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
  if (!std::isfinite(x0) || !std::isfinite(y0) || !std::isfinite(x1) || !std::isfinite(y1)) {
    throw InvalidArgument("bounding box has non-finite coordinates");
  }
  if (x0 > x1 || y0 > y1) throw InvalidArgument("bounding box needs min <= max on both axes");
}

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

const BoundingBox& largest(const std::vector<BoundingBox>& boxes) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < boxes.size(); ++i) {
    if (boxes[i].area() > boxes[best].area()) best = i;
  }
  return boxes[best];
}

BoundingBox box_from_json(const nlohmann::json& j) {
  if (j.is_array()) {
    if (j.size() != 4) throw InvalidArgument("face box needs 4 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  }
  if (j.is_object()) {
    return {j.at("x_min").get<double>(), j.at("y_min").get<double>(), j.at("x_max").get<double>(),
            j.at("y_max").get<double>()};
  }
  throw InvalidArgument("face box must be an array or object");
}

}  // namespace

FilterVerdict face_iou_filter(const std::vector<BoundingBox>& faces_src,
                              const std::vector<BoundingBox>& faces_tgt, double threshold) {
  FilterVerdict v;
  if (faces_src.empty() || faces_tgt.empty()) {
    v.keep = true;
    v.reason = "no-face";
    return v;
  }
  const double value = iou(largest(faces_src), largest(faces_tgt));
  v.metrics["face_iou"] = value;
  v.keep = value >= threshold;
  if (!v.keep) v.reason = "face-iou";
  return v;
}

FaceSidecar parse_face_sidecar(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InvalidArgument("face sidecar must be a JSON object keyed by image ref");
  FaceSidecar out;
  for (const auto& [ref, boxes] : doc.items()) {
    if (!boxes.is_array()) throw InvalidArgument("face sidecar entry '" + ref + "' must be a list");
    auto& list = out[ref];
    for (const auto& b : boxes) list.push_back(box_from_json(b));
  }
  return out;
}

FaceSidecar read_face_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return parse_face_sidecar(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

std::vector<std::size_t> select_diverse_frames(const std::vector<EmbeddingVector>& embeddings,
                                               double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("fraction must be in (0, 1]");
  const std::size_t n = embeddings.size();
  if (n == 0) return {};
  const auto want = std::min(n, std::size_t(std::ceil(fraction * double(n) - 1e-9)));

  std::size_t seed = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (embeddings[i].norm() > embeddings[seed].norm()) seed = i;
  }
  std::vector<std::size_t> picked{seed};
  std::vector<bool> used(n, false);
  used[seed] = true;
  // Distance of every frame to its nearest picked frame.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  auto absorb = [&](std::size_t p) {
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], 1.0 - cosine_similarity(embeddings[i], embeddings[p]));
    }
  };
  absorb(seed);
  while (picked.size() < want) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!used[i] && (best == n || nearest[i] > nearest[best])) best = i;
    }
    picked.push_back(best);
    used[best] = true;
    absorb(best);
  }
  return picked;
}

FilterPartition assessor_threshold_filter(const std::vector<TripletRecord>& records, double tau,
                                          std::optional<double> aesthetic_floor) {
  FilterPartition out;
  for (const auto& r : records) {
    if (!r.scores) throw InvalidArgument("record " + r.id + " has no assessor scores");
    if (r.scores->instruction_adherence < tau) {
      out.removed.push_back({r, "adherence-below-threshold"});
    } else if (aesthetic_floor && r.scores->aesthetic < *aesthetic_floor) {
      out.removed.push_back({r, "aesthetic-below-floor"});
    } else {
      out.kept.push_back(r);
    }
  }
  return out;
}

nlohmann::ordered_json filter_report_line(const std::string& triplet_id, const FilterVerdict& v) {
  nlohmann::ordered_json j;
  j["triplet_id"] = triplet_id;
  j["verdict"] = v.keep ? "keep" : "discard";
  j["reason"] = v.reason;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& [k, x] : v.metrics) m[k] = x;
  j["metrics"] = std::move(m);
  return j;
}

}  // namespace forge

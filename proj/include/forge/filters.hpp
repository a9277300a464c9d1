#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "forge/grounding.hpp"
#include "forge/homography.hpp"
#include "forge/image.hpp"
#include "forge/manifest.hpp"

namespace forge {

struct BoundingBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  BoundingBox() = default;
  /// Throws InvalidArgument unless min <= max on both axes and all finite.
  BoundingBox(double x_min, double y_min, double x_max, double y_max);

  double area() const noexcept { return (x_max - x_min) * (y_max - y_min); }
  bool operator==(const BoundingBox&) const = default;
};

/// Intersection over union; 0 when the union has zero area.
double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

struct FilterVerdict {
  bool keep = true;
  std::string reason;  // empty when kept without remark
  std::map<std::string, double> metrics;
};

inline constexpr double kFaceIouThreshold = 0.9;

/// Largest source face against largest target face. Either list empty keeps
/// the pair with reason "no-face".
FilterVerdict face_iou_filter(const std::vector<BoundingBox>& faces_src,
                              const std::vector<BoundingBox>& faces_tgt,
                              double threshold = kFaceIouThreshold);

/// {image_ref: [[x_min, y_min, x_max, y_max], ...]} (objects with the named
/// fields are accepted too).
using FaceSidecar = std::map<std::string, std::vector<BoundingBox>>;
FaceSidecar parse_face_sidecar(const nlohmann::json& doc);
FaceSidecar read_face_sidecar(const std::filesystem::path& path);

// --- alignment -------------------------------------------------------------

/// Output pixel p samples `target` at H*p (bilinear, pixel centers on the
/// integer grid); samples outside the target are black. H maps input-image
/// coordinates to target coordinates, so this undoes warp_image(x, H).
ImageBuffer align_pair(const ImageBuffer& target, const Homographyd& H, int out_width, int out_height);

/// Forward warp: output q samples `image` at H^-1 q.
ImageBuffer warp_image(const ImageBuffer& image, const Homographyd& H, int out_width, int out_height);

/// Max displacement of the four image corners under H is <= tol_px.
bool is_near_identity(const Homographyd& H, int width, int height, double tol_px);

struct NccOptions {
  int grid = 16;          // grid x grid patch centers
  int patch_radius = 3;   // patch is (2r+1)^2
  int search_radius = 4;  // integer displacements searched per axis
  double min_ncc = 0.8;
  double min_stddev = 2.0;  // skip flat patches (luma units)
};

/// Correspondences from normalized cross-correlation patch matching on a
/// regular grid of the source image.
Correspondences<double> ncc_correspondences(const ImageBuffer& source, const ImageBuffer& target,
                                            const NccOptions& opt = {});

/// JSON list of point pairs: [[[x, y], [x', y']], ...].
Correspondences<double> parse_match_file(const nlohmann::json& doc);
Correspondences<double> read_match_file(const std::filesystem::path& path);

struct AlignmentOptions {
  RansacOptions ransac;
  NccOptions ncc;
  double identity_tol_px = 0.5;  // below this the pair is left untouched
  double max_shift_px = 16.0;    // larger corrections are treated as a failed match
};

struct AlignmentOutcome {
  enum class Action { Unchanged, Aligned, NoModel } action = Action::NoModel;
  Homographyd H = Homographyd::Identity();
  std::size_t correspondences = 0;
  std::size_t inliers = 0;
  double max_corner_shift = 0.0;
  std::optional<ImageBuffer> aligned;  // set when action == Aligned
};

/// Estimate source->target homography and, when it is a real but small
/// correction, resample the target onto the source grid.
AlignmentOutcome align_to_source(const ImageBuffer& source, const ImageBuffer& target,
                                 const AlignmentOptions& opt,
                                 const Correspondences<double>* matches = nullptr);

// --- quality -----------------------------------------------------------------

/// No-reference blur score in [0, 1]; higher is blurrier. A constant image
/// scores 0. Throws when either dimension is below 8.
double blur_effect(const ImageBuffer& image);

/// Separable Gaussian blur (radius ceil(3 sigma), reflected borders).
/// sigma <= 0 returns a copy.
ImageBuffer gaussian_blur(const ImageBuffer& image, double sigma);

/// Greedy farthest-point selection under cosine distance, seeded with the
/// largest-norm vector. Returns ceil(fraction * n) indices in pick order.
std::vector<std::size_t> select_diverse_frames(const std::vector<EmbeddingVector>& embeddings,
                                               double fraction);

inline constexpr double kAssessorThreshold = 3.5;

struct RemovedRecord {
  TripletRecord record;
  std::string reason;
};

struct FilterPartition {
  std::vector<TripletRecord> kept;
  std::vector<RemovedRecord> removed;
};

/// Keeps instruction_adherence >= tau (and aesthetic >= aesthetic_floor when
/// given). Throws InvalidArgument naming the record when scores are missing.
FilterPartition assessor_threshold_filter(const std::vector<TripletRecord>& records, double tau,
                                          std::optional<double> aesthetic_floor = std::nullopt);

/// One line of a filter report.
nlohmann::ordered_json filter_report_line(const std::string& triplet_id, const FilterVerdict& v);

}  // namespace forge

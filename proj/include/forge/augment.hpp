#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/image.hpp"
#include "forge/manifest.hpp"

namespace forge {

enum class AugmentOp {
  Blur,
  Noise,
  Sepia,
  FilmGray,
  Brightness,
  Contrast,
  Saturation,
  Identity,
  Mirror,
  Overlay,
  TextOverlay,
  JpegSync,
};
enum class Direction { Forward, Reverse };

std::string_view to_string(AugmentOp op) noexcept;
std::optional<AugmentOp> parse_augment_op(std::string_view s) noexcept;
std::string_view to_string(Direction d) noexcept;
std::optional<Direction> parse_direction(std::string_view s) noexcept;

/// Ops that produce a (clean -> degraded, degraded -> clean) pair.
bool is_pair_op(AugmentOp op) noexcept;

/// Magnitude meaning per op:
///   blur        Gaussian sigma in pixels, [0.3, 10]
///   noise       Gaussian sigma as a fraction of full scale, [1/255, 0.25]
///   sepia       blend strength, [0, 1]
///   brightness, contrast  factor, [0.25, 4]
///   saturation  factor, [0, 4]
///   jpeg_sync   quality, integer in [1, 100]
///   film_gray, identity, mirror, overlay, text_overlay  ignored (seed drives everything)
struct AugmentationSpec {
  AugmentOp op = AugmentOp::Identity;
  Direction direction = Direction::Forward;
  double magnitude = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const AugmentationSpec&) const = default;
};

/// Throws InvalidArgument when the magnitude is outside the op's range.
void validate_spec(const AugmentationSpec& spec);

nlohmann::ordered_json to_json(const AugmentationSpec& spec);
AugmentationSpec spec_from_json(const nlohmann::json& j);

/// Draws a magnitude for `op` from its default sampling range.
AugmentationSpec sample_spec(AugmentOp op, std::uint64_t seed);

/// Instruction templates keyed by op ("blur", "brightness_increase",
/// "identity", "overlay", "text_overlay", ...).
class TemplateBank {
 public:
  /// Throws InvalidArgument on a malformed document.
  explicit TemplateBank(const nlohmann::json& doc);

  /// The bank compiled in from data/templates.json.
  static const TemplateBank& builtin();
  static TemplateBank load(const std::filesystem::path& path);

  const std::vector<std::string>& forward(const std::string& key) const;
  const std::vector<std::string>& reverse(const std::string& key) const;
  int version() const noexcept { return version_; }

 private:
  int version_ = 0;
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> banks_;
};

class DirectionalBlocklist {
 public:
  DirectionalBlocklist();  // left right east west text read writing clockwise counterclockwise
  /// Throws when empty or when a term is not a lowercase single token.
  explicit DirectionalBlocklist(std::vector<std::string> terms);

  const std::vector<std::string>& terms() const noexcept { return terms_; }
  /// Whole-word, case-insensitive.
  bool blocks(std::string_view instruction) const;

 private:
  std::vector<std::string> terms_;
};

// --- pixel operations (pure) -------------------------------------------------

enum class ScalarKind { Brightness, Contrast, Saturation };

/// brightness: p * f; contrast: (p - 128) * f + 128; saturation: luma + f * (p - luma).
/// Factor range [0.25, 4] ([0, 4] for saturation).
ImageBuffer scalar_adjust(const ImageBuffer& image, ScalarKind kind, double factor);

ImageBuffer add_gaussian_noise(const ImageBuffer& image, double sigma, std::uint64_t seed);
ImageBuffer sepia(const ImageBuffer& image, double strength);
/// Randomized channel mix, sigmoid tone curve and grain; 3-channel output
/// with R = G = B. RGB input only.
ImageBuffer film_grayscale(const ImageBuffer& image, std::uint64_t seed);
ImageBuffer mirror_horizontal(const ImageBuffer& image);

/// Degraded image for a pair op (the forward target).
ImageBuffer apply_degradation(const ImageBuffer& image, const AugmentationSpec& spec);

// --- triplet-producing operations ----------------------------------------------

struct BidirectionalPair {
  TripletRecord forward;
  TripletRecord reverse;
};

/// Images are written to `store`; the reverse source ref is the forward
/// target ref. Throws for non-pair ops or when the op leaves the image unchanged.
BidirectionalPair make_bidirectional_pair(const ImageBuffer& image, const AugmentationSpec& spec,
                                          ImageStore& store, const TemplateBank& bank = TemplateBank::builtin(),
                                          std::vector<std::string> lineage = {});

TripletRecord identity_triplet(const ImageBuffer& image, std::uint64_t seed, ImageStore& store,
                               const TemplateBank& bank = TemplateBank::builtin(),
                               std::vector<std::string> lineage = {});

/// Flips both images unless the instruction names a blocked term.
std::optional<TripletRecord> conditional_mirror(const TripletRecord& triplet,
                                                const DirectionalBlocklist& blocklist, ImageStore& store);

enum class OverlayKind { Rectangle, Ellipse, Text };

struct OverlayResult {
  TripletRecord triplet;  // occluded -> clean
  BinaryMask mask;        // occluded pixels
  OverlayKind kind = OverlayKind::Rectangle;
  std::string text;       // rendered string for Text
};

inline constexpr double kOverlayMinCoverage = 0.02;
inline constexpr double kOverlayMaxCoverage = 0.20;

/// Occluder pixels only (no triplet); `only` restricts the primitive kind.
struct Occlusion {
  ImageBuffer image;
  BinaryMask mask;
  OverlayKind kind = OverlayKind::Rectangle;
  std::string text;
};
Occlusion occlude(const ImageBuffer& image, std::uint64_t seed, std::optional<OverlayKind> only = std::nullopt);

OverlayResult overlay_primitive(const ImageBuffer& image, std::uint64_t seed, ImageStore& store,
                                std::optional<OverlayKind> only = std::nullopt,
                                const TemplateBank& bank = TemplateBank::builtin(),
                                std::vector<std::string> lineage = {});

/// Both images through the same DCT quantization at `quality`.
std::pair<ImageBuffer, ImageBuffer> jpeg_sync(const ImageBuffer& source, const ImageBuffer& target, int quality);

/// Dispatches one spec against a triplet. Pair ops, identity and overlays
/// work on the triplet's source image; mirror and jpeg_sync transform the
/// whole triplet. Pair ops yield the record selected by spec.direction.
/// Returns nothing when the op declines (blocked mirror).
std::vector<TripletRecord> apply_augmentation(const TripletRecord& triplet, const AugmentationSpec& spec,
                                              ImageStore& store, const TemplateBank& bank = TemplateBank::builtin(),
                                              const DirectionalBlocklist& blocklist = DirectionalBlocklist());

}  // namespace forge

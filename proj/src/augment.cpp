#include "forge/augment.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>

#include "forge/bitmap_font.hpp"
#include "forge/error.hpp"
#include "forge/filters.hpp"
#include "forge/jpeg_sim.hpp"
#include "forge/random.hpp"

namespace forge {

namespace detail {
extern const std::string_view kTemplateBankJson;
}

namespace {

constexpr std::array<std::pair<AugmentOp, std::string_view>, 12> kOpNames = {{
    {AugmentOp::Blur, "blur"},
    {AugmentOp::Noise, "noise"},
    {AugmentOp::Sepia, "sepia"},
    {AugmentOp::FilmGray, "film_gray"},
    {AugmentOp::Brightness, "brightness"},
    {AugmentOp::Contrast, "contrast"},
    {AugmentOp::Saturation, "saturation"},
    {AugmentOp::Identity, "identity"},
    {AugmentOp::Mirror, "mirror"},
    {AugmentOp::Overlay, "overlay"},
    {AugmentOp::TextOverlay, "text_overlay"},
    {AugmentOp::JpegSync, "jpeg_sync"},
}};

constexpr std::array<std::string_view, 12> kOverlayWords = {
    "SALE", "OPEN", "HELLO", "CAFE", "NEWS", "STOP", "2024", "HOTEL", "SUMMER", "BAKERY", "EXIT", "PARK"};

InstructionRecord template_instruction(std::string text) {
  InstructionRecord r;
  r.id = derive_id("i", {text});
  r.text = std::move(text);
  r.origin = InstructionOrigin::Template;
  return r;
}

const std::string& pick(const std::vector<std::string>& bank, Rng& rng) {
  return bank[std::size_t(rng.below(bank.size()))];
}

std::string bank_key(const AugmentationSpec& spec) {
  std::string key(to_string(spec.op));
  if (spec.op == AugmentOp::Brightness || spec.op == AugmentOp::Contrast || spec.op == AugmentOp::Saturation) {
    key += spec.magnitude > 1.0 ? "_increase" : "_decrease";
  }
  return key;
}

void require_rgb(const ImageBuffer& image, const char* what) {
  if (image.channels() != 3) throw InvalidArgument(std::string(what) + " needs an RGB image");
}

// Transforms applied to an identity triplet keep source == target, so they
// stay identity records.
Provenance derived_provenance(const TripletRecord& base) {
  return base.provenance == Provenance::Identity ? Provenance::Identity : Provenance::Augmented;
}

std::vector<std::string> words_lower(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      cur.push_back(char(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::string_view to_string(AugmentOp op) noexcept {
  for (const auto& [o, name] : kOpNames) {
    if (o == op) return name;
  }
  return "?";
}

std::optional<AugmentOp> parse_augment_op(std::string_view s) noexcept {
  for (const auto& [o, name] : kOpNames) {
    if (name == s) return o;
  }
  return std::nullopt;
}

std::string_view to_string(Direction d) noexcept { return d == Direction::Forward ? "forward" : "reverse"; }

std::optional<Direction> parse_direction(std::string_view s) noexcept {
  if (s == "forward") return Direction::Forward;
  if (s == "reverse") return Direction::Reverse;
  return std::nullopt;
}

bool is_pair_op(AugmentOp op) noexcept {
  switch (op) {
    case AugmentOp::Blur:
    case AugmentOp::Noise:
    case AugmentOp::Sepia:
    case AugmentOp::FilmGray:
    case AugmentOp::Brightness:
    case AugmentOp::Contrast:
    case AugmentOp::Saturation:
      return true;
    default:
      return false;
  }
}

void validate_spec(const AugmentationSpec& spec) {
  const double m = spec.magnitude;
  auto need = [&](bool ok, const char* range) {
    if (!ok || !std::isfinite(m)) {
      throw InvalidArgument(std::string(to_string(spec.op)) + " magnitude " + std::to_string(m) +
                            " outside " + range);
    }
  };
  switch (spec.op) {
    case AugmentOp::Blur: need(m >= 0.3 && m <= 10.0, "[0.3, 10]"); break;
    case AugmentOp::Noise: need(m >= 1.0 / 255.0 && m <= 0.25, "[1/255, 0.25]"); break;
    case AugmentOp::Sepia: need(m >= 0.0 && m <= 1.0, "[0, 1]"); break;
    case AugmentOp::Brightness:
    case AugmentOp::Contrast: need(m >= 0.25 && m <= 4.0, "[0.25, 4]"); break;
    case AugmentOp::Saturation: need(m >= 0.0 && m <= 4.0, "[0, 4]"); break;
    case AugmentOp::JpegSync: need(m >= 1.0 && m <= 100.0 && m == std::floor(m), "integers [1, 100]"); break;
    default: break;
  }
}

nlohmann::ordered_json to_json(const AugmentationSpec& spec) {
  nlohmann::ordered_json j;
  j["op"] = to_string(spec.op);
  j["direction"] = to_string(spec.direction);
  j["magnitude"] = spec.magnitude;
  j["seed"] = spec.seed;
  return j;
}

AugmentationSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("augmentation spec must be an object");
  AugmentationSpec s;
  const auto op = parse_augment_op(j.at("op").get<std::string>());
  if (!op) throw InvalidArgument("unknown augmentation op '" + j.at("op").get<std::string>() + "'");
  s.op = *op;
  if (j.contains("direction")) {
    const auto d = parse_direction(j["direction"].get<std::string>());
    if (!d) throw InvalidArgument("direction must be forward or reverse");
    s.direction = *d;
  }
  s.magnitude = j.value("magnitude", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  validate_spec(s);
  return s;
}

AugmentationSpec sample_spec(AugmentOp op, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "magnitude"));
  AugmentationSpec s{op, Direction::Forward, 0.0, seed};
  const bool up = rng.uniform() < 0.5;
  switch (op) {
    case AugmentOp::Blur: s.magnitude = rng.uniform(1.0, 4.0); break;
    case AugmentOp::Noise: s.magnitude = rng.uniform(4.0, 20.0) / 255.0; break;
    case AugmentOp::Sepia: s.magnitude = rng.uniform(0.6, 1.0); break;
    case AugmentOp::Brightness:
    case AugmentOp::Contrast: s.magnitude = up ? rng.uniform(1.2, 1.8) : rng.uniform(0.5, 0.85); break;
    case AugmentOp::Saturation: s.magnitude = up ? rng.uniform(1.3, 2.0) : rng.uniform(0.0, 0.6); break;
    case AugmentOp::JpegSync: s.magnitude = double(rng.between(10, 60)); break;
    default: break;
  }
  return s;
}

// --- templates -------------------------------------------------------------------

TemplateBank::TemplateBank(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InvalidArgument("template bank must be a JSON object");
  version_ = doc.value("version", 0);
  for (const auto& [key, entry] : doc.items()) {
    if (key == "version") continue;
    if (!entry.is_object()) throw InvalidArgument("template bank entry '" + key + "' must be an object");
    auto list = [&](const char* dir) {
      std::vector<std::string> out;
      if (!entry.contains(dir)) return out;
      for (const auto& t : entry[dir]) {
        if (!t.is_string() || trim(t.get<std::string>()).empty()) {
          throw InvalidArgument("template bank entry '" + key + "' has a non-string or empty template");
        }
        out.push_back(t.get<std::string>());
      }
      return out;
    };
    banks_[key] = {list("forward"), list("reverse")};
  }
}

const TemplateBank& TemplateBank::builtin() {
  static const TemplateBank bank(nlohmann::json::parse(detail::kTemplateBankJson));
  return bank;
}

TemplateBank TemplateBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return TemplateBank(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

const std::vector<std::string>& TemplateBank::forward(const std::string& key) const {
  const auto it = banks_.find(key);
  if (it == banks_.end() || it->second.first.empty()) {
    throw InvalidArgument("template bank has no forward templates for '" + key + "'");
  }
  return it->second.first;
}

const std::vector<std::string>& TemplateBank::reverse(const std::string& key) const {
  const auto it = banks_.find(key);
  if (it == banks_.end() || it->second.second.empty()) {
    throw InvalidArgument("template bank has no reverse templates for '" + key + "'");
  }
  return it->second.second;
}

DirectionalBlocklist::DirectionalBlocklist()
    : terms_{"left", "right", "east", "west", "text", "read", "writing", "clockwise", "counterclockwise"} {}

DirectionalBlocklist::DirectionalBlocklist(std::vector<std::string> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw InvalidArgument("blocklist must not be empty");
  for (const auto& t : terms_) {
    const auto w = words_lower(t);
    if (w.size() != 1 || w[0] != t) throw InvalidArgument("blocklist term '" + t + "' must be one lowercase token");
  }
}

bool DirectionalBlocklist::blocks(std::string_view instruction) const {
  for (const auto& w : words_lower(instruction)) {
    if (std::find(terms_.begin(), terms_.end(), w) != terms_.end()) return true;
  }
  return false;
}

// --- pixel ops ---------------------------------------------------------------------

ImageBuffer scalar_adjust(const ImageBuffer& image, ScalarKind kind, double factor) {
  const double lo = kind == ScalarKind::Saturation ? 0.0 : 0.25;
  if (!(factor >= lo && factor <= 4.0)) {
    throw InvalidArgument("scalar_adjust factor " + std::to_string(factor) + " out of range");
  }
  ImageBuffer out = image;
  if (factor == 1.0) return out;
  const auto src = image.data();
  auto dst = out.data();
  switch (kind) {
    case ScalarKind::Brightness:
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = to_u8(src[i] * factor);
      break;
    case ScalarKind::Contrast:
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = to_u8((src[i] - 128.0) * factor + 128.0);
      break;
    case ScalarKind::Saturation: {
      if (image.channels() != 3) break;  // gray is its own luma
      for (std::size_t p = 0; p < image.pixel_count(); ++p) {
        const double y = luma(src[3 * p], src[3 * p + 1], src[3 * p + 2]);
        for (std::size_t k = 0; k < 3; ++k) dst[3 * p + k] = to_u8(y + factor * (src[3 * p + k] - y));
      }
      break;
    }
  }
  return out;
}

ImageBuffer add_gaussian_noise(const ImageBuffer& image, double sigma, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "noise"));
  ImageBuffer out = image;
  const double s = sigma * 255.0;
  for (auto& v : out.data()) v = to_u8(v + s * rng.normal());
  return out;
}

ImageBuffer sepia(const ImageBuffer& image, double strength) {
  require_rgb(image, "sepia");
  static constexpr double M[3][3] = {{0.393, 0.769, 0.189}, {0.349, 0.686, 0.168}, {0.272, 0.534, 0.131}};
  ImageBuffer out = image;
  const auto src = image.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    const double r = src[3 * p], g = src[3 * p + 1], b = src[3 * p + 2];
    for (std::size_t k = 0; k < 3; ++k) {
      const double toned = M[k][0] * r + M[k][1] * g + M[k][2] * b;
      dst[3 * p + k] = to_u8((1.0 - strength) * src[3 * p + k] + strength * toned);
    }
  }
  return out;
}

ImageBuffer film_grayscale(const ImageBuffer& image, std::uint64_t seed) {
  require_rgb(image, "film_grayscale");
  Rng rng(derive_seed(seed, "film_gray"));
  static constexpr double base[3] = {0.30, 0.55, 0.15};
  constexpr double kConcentration = 100.0;
  double w[3], total = 0.0;
  for (int k = 0; k < 3; ++k) {
    w[k] = rng.gamma(kConcentration * base[k]);
    total += w[k];
  }
  double renorm = 0.0;
  for (int k = 0; k < 3; ++k) {
    w[k] = std::clamp(w[k] / total, base[k] - 0.1, base[k] + 0.1);
    renorm += w[k];
  }
  for (double& x : w) x /= renorm;
  const double gain = rng.uniform(4.0, 10.0);
  const double mid = rng.uniform(0.4, 0.6);
  const double grain = rng.uniform(1.0, 4.0);
  // Sigmoid pinned to map 0 -> 0 and 1 -> 1.
  auto sig = [&](double x) { return 1.0 / (1.0 + std::exp(-gain * (x - mid))); };
  const double s0 = sig(0.0), s1 = sig(1.0);

  ImageBuffer out(image.width(), image.height(), 3);
  const auto src = image.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    const double y = (w[0] * src[3 * p] + w[1] * src[3 * p + 1] + w[2] * src[3 * p + 2]) / 255.0;
    const double toned = (sig(y) - s0) / (s1 - s0);
    const std::uint8_t v = to_u8(255.0 * toned + grain * rng.normal());
    dst[3 * p] = dst[3 * p + 1] = dst[3 * p + 2] = v;
  }
  return out;
}

ImageBuffer mirror_horizontal(const ImageBuffer& image) {
  ImageBuffer out(image.width(), image.height(), image.channels());
  const int w = image.width();
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < image.channels(); ++k) out.at(w - 1 - x, y, k) = image.at(x, y, k);
    }
  }
  return out;
}

ImageBuffer apply_degradation(const ImageBuffer& image, const AugmentationSpec& spec) {
  validate_spec(spec);
  switch (spec.op) {
    case AugmentOp::Blur: return gaussian_blur(image, spec.magnitude);
    case AugmentOp::Noise: return add_gaussian_noise(image, spec.magnitude, spec.seed);
    case AugmentOp::Sepia: return sepia(image, spec.magnitude);
    case AugmentOp::FilmGray: return film_grayscale(image, spec.seed);
    case AugmentOp::Brightness: return scalar_adjust(image, ScalarKind::Brightness, spec.magnitude);
    case AugmentOp::Contrast: return scalar_adjust(image, ScalarKind::Contrast, spec.magnitude);
    case AugmentOp::Saturation: return scalar_adjust(image, ScalarKind::Saturation, spec.magnitude);
    default:
      throw InvalidArgument(std::string(to_string(spec.op)) + " is not a bidirectional pair op");
  }
}

// --- triplets ------------------------------------------------------------------------

BidirectionalPair make_bidirectional_pair(const ImageBuffer& image, const AugmentationSpec& spec, ImageStore& store,
                                          const TemplateBank& bank, std::vector<std::string> lineage) {
  if (!is_pair_op(spec.op)) {
    throw InvalidArgument(std::string(to_string(spec.op)) + " is not a bidirectional pair op");
  }
  const ImageBuffer degraded = apply_degradation(image, spec);
  if (degraded == image) throw InvalidArgument(std::string(to_string(spec.op)) + " left the image unchanged");
  const std::string clean_ref = store.put(image);
  const std::string degraded_ref = store.put(degraded);

  const std::string key = bank_key(spec);
  Rng rng(derive_seed(spec.seed, "template"));
  const std::string fwd_text = pick(bank.forward(key), rng);
  const std::string rev_text = pick(bank.reverse(key), rng);
  const std::string op(to_string(spec.op));

  BidirectionalPair pair;
  auto& f = pair.forward;
  f.id = derive_id("aug", {op, "forward", clean_ref, degraded_ref, fwd_text});
  f.source_ref = clean_ref;
  f.instruction = template_instruction(fwd_text);
  f.target_ref = degraded_ref;
  f.provenance = Provenance::Augmented;
  f.lineage = lineage;

  auto& r = pair.reverse;
  r.id = derive_id("aug", {op, "reverse", degraded_ref, clean_ref, rev_text});
  r.source_ref = degraded_ref;
  r.instruction = template_instruction(rev_text);
  r.target_ref = clean_ref;
  r.provenance = Provenance::Augmented;
  r.lineage = std::move(lineage);
  return pair;
}

TripletRecord identity_triplet(const ImageBuffer& image, std::uint64_t seed, ImageStore& store,
                               const TemplateBank& bank, std::vector<std::string> lineage) {
  Rng rng(derive_seed(seed, "identity"));
  const std::string text = pick(bank.forward("identity"), rng);
  const std::string ref = store.put(image);
  TripletRecord t;
  t.id = derive_id("idn", {ref, text});
  t.source_ref = ref;
  t.instruction = template_instruction(text);
  t.target_ref = ref;
  t.provenance = Provenance::Identity;
  t.lineage = std::move(lineage);
  return t;
}

std::optional<TripletRecord> conditional_mirror(const TripletRecord& triplet, const DirectionalBlocklist& blocklist,
                                                ImageStore& store) {
  if (blocklist.blocks(triplet.instruction.text)) return std::nullopt;
  TripletRecord t = triplet;
  t.id = derive_id("mir", {triplet.id});
  t.source_ref = store.put(mirror_horizontal(store.get(triplet.source_ref)));
  t.target_ref = triplet.source_ref == triplet.target_ref
                     ? t.source_ref
                     : store.put(mirror_horizontal(store.get(triplet.target_ref)));
  t.provenance = derived_provenance(triplet);
  t.lineage = {triplet.id};
  return t;
}

namespace {

bool coverage_ok(const BinaryMask& m) {
  const double f = double(m.count()) / (double(m.width()) * double(m.height()));
  return f >= kOverlayMinCoverage && f <= kOverlayMaxCoverage;
}

void fill_rect(BinaryMask& m, int x0, int y0, int rw, int rh) {
  for (int y = y0; y < y0 + rh; ++y) {
    for (int x = x0; x < x0 + rw; ++x) m.set(x, y);
  }
}

// Box of roughly `area` pixels with a random aspect ratio in [1/2, 2].
std::pair<int, int> box_dims(Rng& rng, double area, int w, int h) {
  const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  const int rw = std::clamp(int(std::lround(std::sqrt(area * aspect))), 1, w);
  const int rh = std::clamp(int(std::lround(area / rw)), 1, h);
  return {rw, rh};
}

}  // namespace

Occlusion occlude(const ImageBuffer& image, std::uint64_t seed, std::optional<OverlayKind> only) {
  const int w = image.width(), h = image.height();
  if (std::min(w, h) < 64) throw InvalidArgument("overlay needs an image of at least 64x64");
  Rng rng(derive_seed(seed, "overlay"));
  Occlusion occ{image, BinaryMask(w, h), only ? *only : OverlayKind(rng.below(3)), {}};
  const double pixels = double(w) * double(h);

  bool placed = false;
  for (int attempt = 0; attempt < 8 && !placed; ++attempt) {
    BinaryMask m(w, h);
    const double f = rng.uniform(0.03, 0.18);
    std::string word;
    if (occ.kind == OverlayKind::Rectangle) {
      const auto [rw, rh] = box_dims(rng, f * pixels, w, h);
      fill_rect(m, int(rng.below(std::uint64_t(w - rw + 1))), int(rng.below(std::uint64_t(h - rh + 1))), rw, rh);
    } else if (occ.kind == OverlayKind::Ellipse) {
      const auto [rw, rh] = box_dims(rng, f * pixels * 4.0 / std::numbers::pi, w, h);
      const int x0 = int(rng.below(std::uint64_t(w - rw + 1)));
      const int y0 = int(rng.below(std::uint64_t(h - rh + 1)));
      const double cx = x0 + rw / 2.0, cy = y0 + rh / 2.0;
      for (int y = y0; y < y0 + rh; ++y) {
        for (int x = x0; x < x0 + rw; ++x) {
          const double dx = (x + 0.5 - cx) / (rw / 2.0), dy = (y + 0.5 - cy) / (rh / 2.0);
          if (dx * dx + dy * dy <= 1.0) m.set(x, y);
        }
      }
    } else {
      word = std::string(kOverlayWords[std::size_t(rng.below(kOverlayWords.size()))]);
      int scale = std::max(1, int(std::lround(std::sqrt(f * pixels / text_ink(word)))));
      while (scale > 1 && (text_width(word, scale) > w || text_height(scale) > h)) --scale;
      if (text_width(word, scale) > w || text_height(scale) > h) continue;
      const int x0 = int(rng.below(std::uint64_t(w - text_width(word, scale) + 1)));
      const int y0 = int(rng.below(std::uint64_t(h - text_height(scale) + 1)));
      render_text(m, word, scale, x0, y0);
    }
    if (coverage_ok(m)) {
      occ.mask = std::move(m);
      occ.text = std::move(word);
      placed = true;
    }
  }
  if (!placed) {
    // Deterministic fallback: a centered rectangle covering ~10%.
    occ.kind = OverlayKind::Rectangle;
    occ.text.clear();
    const int rw = std::max(1, int(std::lround(std::sqrt(0.1 * pixels))));
    const int rh = std::max(1, int(std::lround(0.1 * pixels / rw)));
    occ.mask = BinaryMask(w, h);
    fill_rect(occ.mask, (w - rw) / 2, (h - rh) / 2, rw, rh);
  }

  std::array<std::uint8_t, 3> color{};
  for (auto& c : color) c = std::uint8_t(rng.below(256));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!occ.mask.get(x, y)) continue;
      for (int k = 0; k < image.channels(); ++k) occ.image.at(x, y, k) = color[std::size_t(k)];
    }
  }
  return occ;
}

OverlayResult overlay_primitive(const ImageBuffer& image, std::uint64_t seed, ImageStore& store,
                                std::optional<OverlayKind> only, const TemplateBank& bank,
                                std::vector<std::string> lineage) {
  Occlusion occ = occlude(image, seed, only);
  Rng rng(derive_seed(seed, "overlay-template"));
  std::string text;
  if (occ.kind == OverlayKind::Text) {
    text = pick(bank.forward("text_overlay"), rng);
    const auto at = text.find("{text}");
    if (at != std::string::npos) text.replace(at, 6, occ.text);
  } else {
    text = pick(bank.forward("overlay"), rng);
  }
  OverlayResult res;
  res.kind = occ.kind;
  res.text = occ.text;
  auto& t = res.triplet;
  t.source_ref = store.put(occ.image);
  t.target_ref = store.put(image);
  t.id = derive_id("ovl", {t.source_ref, t.target_ref, text});
  t.instruction = template_instruction(std::move(text));
  t.provenance = Provenance::Augmented;
  t.lineage = std::move(lineage);
  res.mask = std::move(occ.mask);
  return res;
}

std::pair<ImageBuffer, ImageBuffer> jpeg_sync(const ImageBuffer& source, const ImageBuffer& target, int quality) {
  if (source.width() != target.width() || source.height() != target.height()) {
    throw InvalidArgument("jpeg_sync needs images of equal dimensions");
  }
  return {jpeg_simulate(source, quality), jpeg_simulate(target, quality)};
}

std::vector<TripletRecord> apply_augmentation(const TripletRecord& triplet, const AugmentationSpec& spec,
                                              ImageStore& store, const TemplateBank& bank,
                                              const DirectionalBlocklist& blocklist) {
  validate_spec(spec);
  if (is_pair_op(spec.op)) {
    auto pair = make_bidirectional_pair(store.get(triplet.source_ref), spec, store, bank, {triplet.id});
    return {spec.direction == Direction::Forward ? std::move(pair.forward) : std::move(pair.reverse)};
  }
  switch (spec.op) {
    case AugmentOp::Identity:
      return {identity_triplet(store.get(triplet.source_ref), spec.seed, store, bank, {triplet.id})};
    case AugmentOp::Mirror: {
      auto m = conditional_mirror(triplet, blocklist, store);
      if (!m) return {};
      return {std::move(*m)};
    }
    case AugmentOp::Overlay:
    case AugmentOp::TextOverlay: {
      const auto only = spec.op == AugmentOp::TextOverlay ? std::optional(OverlayKind::Text) : std::nullopt;
      return {overlay_primitive(store.get(triplet.source_ref), spec.seed, store, only, bank, {triplet.id}).triplet};
    }
    case AugmentOp::JpegSync: {
      const int q = int(spec.magnitude);
      auto [s, t] = jpeg_sync(store.get(triplet.source_ref), store.get(triplet.target_ref), q);
      TripletRecord out = triplet;
      out.id = derive_id("jpg", {triplet.id, std::to_string(q)});
      out.source_ref = store.put(s);
      out.target_ref = store.put(t);
      out.provenance = derived_provenance(triplet);
      out.scores.reset();
      out.lineage = {triplet.id};
      return {out};
    }
    default:
      throw InvalidArgument("unhandled augmentation op");
  }
}

}  // namespace forge

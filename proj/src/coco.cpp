#include "forge/coco.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "forge/error.hpp"

namespace forge {

namespace {

std::vector<long> rle_counts_from_string(const std::string& s) {
  std::vector<long> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw InvalidArgument("coco rle: truncated counts string");
      const long c = long(s[p]) - 48;
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1L << (5 * k);
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    counts.push_back(x);
  }
  return counts;
}

}  // namespace

BinaryMask decode_coco_rle(const nlohmann::json& seg, int width, int height) {
  if (!seg.is_object() || !seg.contains("counts")) throw InvalidArgument("coco rle: missing counts");
  if (seg.contains("size")) {
    const auto& sz = seg["size"];
    if (!sz.is_array() || sz.size() != 2 || sz[0].get<int>() != height || sz[1].get<int>() != width) {
      throw InvalidArgument("coco rle: size does not match image dims");
    }
  }
  std::vector<long> counts;
  if (seg["counts"].is_string()) {
    counts = rle_counts_from_string(seg["counts"].get<std::string>());
  } else {
    counts = seg["counts"].get<std::vector<long>>();
  }
  BinaryMask m(width, height);
  const long total = long(width) * long(height);
  long pos = 0;
  bool value = false;
  for (long run : counts) {
    if (run < 0 || pos + run > total) throw InvalidArgument("coco rle: runs exceed mask size");
    if (value) {
      for (long i = pos; i < pos + run; ++i) m.set(int(i / height), int(i % height));
    }
    pos += run;
    value = !value;
  }
  return m;
}

BinaryMask rasterize_polygons(const std::vector<std::vector<double>>& polygons, int width, int height) {
  BinaryMask m(width, height);
  for (const auto& poly : polygons) {
    if (poly.size() < 6 || poly.size() % 2 != 0) continue;
    const std::size_t n = poly.size() / 2;
    double min_x = poly[0], max_x = poly[0], min_y = poly[1], max_y = poly[1];
    for (std::size_t i = 0; i < n; ++i) {
      min_x = std::min(min_x, poly[2 * i]);
      max_x = std::max(max_x, poly[2 * i]);
      min_y = std::min(min_y, poly[2 * i + 1]);
      max_y = std::max(max_y, poly[2 * i + 1]);
    }
    const int x0 = std::max(0, int(std::floor(min_x)));
    const int x1 = std::min(width - 1, int(std::ceil(max_x)));
    const int y0 = std::max(0, int(std::floor(min_y)));
    const int y1 = std::min(height - 1, int(std::ceil(max_y)));
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        bool inside = false;
        for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
          const double xi = poly[2 * i], yi = poly[2 * i + 1];
          const double xj = poly[2 * j], yj = poly[2 * j + 1];
          if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
        }
        // Polygons of one instance are unioned.
        if (inside) m.set(x, y);
      }
    }
  }
  return m;
}

std::vector<SegmentationAnnotation> parse_coco(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("images") || !doc.contains("annotations")) {
    throw InvalidArgument("coco: document needs images and annotations");
  }
  std::map<long, std::string> categories;
  if (doc.contains("categories")) {
    for (const auto& c : doc["categories"]) categories[c.at("id").get<long>()] = c.at("name").get<std::string>();
  }
  std::vector<SegmentationAnnotation> out;
  std::map<long, std::size_t> slot;
  for (const auto& img : doc["images"]) {
    SegmentationAnnotation a;
    a.image_ref = img.at("file_name").get<std::string>();
    a.width = img.at("width").get<int>();
    a.height = img.at("height").get<int>();
    slot[img.at("id").get<long>()] = out.size();
    out.push_back(std::move(a));
  }
  for (const auto& ann : doc["annotations"]) {
    const auto it = slot.find(ann.at("image_id").get<long>());
    if (it == slot.end()) throw InvalidArgument("coco: annotation refers to an unknown image");
    auto& target = out[it->second];
    AnnotatedInstance inst;
    const long cat = ann.at("category_id").get<long>();
    const auto cit = categories.find(cat);
    inst.category = cit != categories.end() ? cit->second : std::to_string(cat);
    const auto& bb = ann.at("bbox");
    inst.box = {bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(), bb.at(3).get<double>()};
    const auto seg = ann.find("segmentation");
    if (seg == ann.end()) {
      inst.mask = BinaryMask(target.width, target.height);
    } else if (seg->is_array()) {
      inst.mask = rasterize_polygons(seg->get<std::vector<std::vector<double>>>(), target.width, target.height);
    } else {
      inst.mask = decode_coco_rle(*seg, target.width, target.height);
    }
    target.instances.push_back(std::move(inst));
  }
  return out;
}

std::vector<SegmentationAnnotation> read_coco(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return parse_coco(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

}  // namespace forge

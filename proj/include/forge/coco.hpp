#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/image.hpp"
#include "forge/triplet_graph.hpp"

namespace forge {

/// COCO run-length encoding: column-major runs starting with zeros.
/// `counts` is either the uncompressed integer list or the compressed string form.
BinaryMask decode_coco_rle(const nlohmann::json& segmentation, int width, int height);

/// Even-odd fill of polygons given as flat [x0, y0, x1, y1, ...] lists,
/// sampled at pixel centers.
BinaryMask rasterize_polygons(const std::vector<std::vector<double>>& polygons, int width, int height);

/// One SegmentationAnnotation per image, images in file order, instances in
/// annotation order. image_ref is the image's file_name.
std::vector<SegmentationAnnotation> parse_coco(const nlohmann::json& doc);
std::vector<SegmentationAnnotation> read_coco(const std::filesystem::path& path);

}  // namespace forge

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "verbdiff/attention_geometry.hpp"
#include "verbdiff/common.hpp"

namespace verbdiff {

// Tensor file: "VDTN" magic, u32 version, u32 channels, u32 height, u32 width,
// then little-endian float64 values in Image storage order.
void write_tensor(const std::filesystem::path& path, const Image& image);
Image read_tensor(const std::filesystem::path& path);

struct Rgb {
  unsigned char r = 0, g = 0, b = 0;
};

/// 8-bit RGB raster used for previews and overlays.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;  // row-major
};

/// First three channels, min-max scaled over the whole image (grey for one channel).
RgbImage preview(const Image& image, int scale = 1);
void draw_box(RgbImage& canvas, const BoundingBox& box, Rgb color, int thickness = 1);
void draw_marker(RgbImage& canvas, double x_norm, double y_norm, Rgb color);
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// {image_id, c_h, c_r, c_o, c_rel, half_extent, clipped_box}; c_* are [x, y].
nlohmann::json region_sidecar(const std::string& image_id, const Centroid& human,
                              const Centroid& verb, const Centroid& object,
                              const InteractionRegion& region);

/// Overlay PNG plus JSON sidecar for one region. Returns the two paths written.
std::vector<std::filesystem::path> emit_region_debug(const std::filesystem::path& dir,
                                                     const std::string& image_id,
                                                     const RgbImage& background,
                                                     const nlohmann::json& sidecar,
                                                     const InteractionRegion& region);

}  // namespace verbdiff

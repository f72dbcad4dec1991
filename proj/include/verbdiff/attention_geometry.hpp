#pragma once

#include <map>
#include <string>
#include <vector>

#include "verbdiff/common.hpp"

namespace verbdiff {

/// Axis-aligned box in normalized image coordinates.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool valid() const;
  double area() const { return (x_max - x_min) * (y_max - y_min); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  bool operator==(const BoundingBox&) const = default;
};

/// A point on a grid: x along the width axis, y along the height axis.
struct Centroid {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Centroid&) const = default;
};

/// Square region around an interaction center.
///
/// `center` and `half_extent` live in the frame the region was computed in:
/// attention-map pixels for generated images, normalized image coordinates
/// for ground-truth boxes. `clipped_box` is always normalized.
struct InteractionRegion {
  Centroid center;
  double half_extent = 0.0;
  BoundingBox clipped_box;
};

enum class Role { human, verb, object };
std::string to_string(Role role);

/// Per-token cross-attention maps captured from a denoiser run.
struct AttentionStack {
  int height = 0;
  int width = 0;
  std::map<int, Grid> token_maps;
  std::map<Role, std::vector<int>> token_spans;

  /// Throws DataError when a map is negative, mis-sized, or a span is empty or dangling.
  void validate() const;
};

/// Mean over the role's token maps.
Grid aggregate_token_map(const AttentionStack& stack, Role role);

/// Attention-weighted first moment (x = column, y = row), zero-indexed.
/// Throws DegenerateError for an all-zero map.
Centroid centroid(const Grid& map);

/// Componentwise mean of the three role centroids.
Centroid interaction_center(const Centroid& human, const Centroid& verb, const Centroid& object);

struct RegionOptions {
  double exponent = 1.0;     // 1 or 2
  double min_extent = 0.05;  // normalized units
};

/// Square of half-side max(|c_h - c_o|^exponent, min_extent * max(H, W)) around
/// `center`, clipped to [0, W-1] x [0, H-1] and normalized by (W-1, H-1).
InteractionRegion interaction_region(const Centroid& center, const Centroid& human,
                                     const Centroid& object, int height, int width,
                                     const RegionOptions& options = {});

/// Centroid path of the IR module: role maps -> centroids -> region.
struct RegionExtraction {
  Centroid human;
  Centroid verb;
  Centroid object;
  Centroid center;
  InteractionRegion region;
};
RegionExtraction extract_region(const AttentionStack& stack, const RegionOptions& options = {});

/// Pixel-center rasterization of a normalized box: pixel (r, c) is inside iff
/// ((c + 0.5) / W, (r + 0.5) / H) lies in the closed box.
Grid rasterize_box(const BoundingBox& box, int height, int width);

/// Zeroes every pixel outside the region's clipped box; shape is preserved.
Image crop_region(const Image& image, const InteractionRegion& region);

/// Multiplies every channel by a binary grid of the image's spatial size.
Image apply_mask(const Image& image, const Grid& mask);

}  // namespace verbdiff

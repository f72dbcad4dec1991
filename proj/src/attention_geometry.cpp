#include "verbdiff/attention_geometry.hpp"

#include <algorithm>
#include <cmath>

namespace verbdiff {

bool BoundingBox::valid() const {
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  return in_unit(x_min) && in_unit(y_min) && in_unit(x_max) && in_unit(y_max) &&
         x_min < x_max && y_min < y_max;
}

std::string to_string(Role role) {
  switch (role) {
    case Role::human: return "human";
    case Role::verb: return "verb";
    case Role::object: return "object";
  }
  return "unknown";
}

void AttentionStack::validate() const {
  for (const auto& [index, map] : token_maps) {
    if (map.height() != height || map.width() != width)
      throw DataError("attention map for token " + std::to_string(index) + " has wrong size");
    for (double v : map.values())
      if (!(v >= 0.0)) throw DataError("attention map for token " + std::to_string(index) +
                                       " has a negative or NaN value");
  }
  for (Role role : {Role::human, Role::verb, Role::object}) {
    auto it = token_spans.find(role);
    if (it == token_spans.end() || it->second.empty())
      throw DataError("attention stack has no tokens for role " + to_string(role));
    for (int index : it->second)
      if (!token_maps.contains(index))
        throw DataError("role " + to_string(role) + " references missing token " +
                        std::to_string(index));
  }
}

Grid aggregate_token_map(const AttentionStack& stack, Role role) {
  auto it = stack.token_spans.find(role);
  if (it == stack.token_spans.end() || it->second.empty())
    throw DataError("empty token span for role " + to_string(role));
  Grid out(stack.height, stack.width);
  for (int index : it->second) {
    auto map = stack.token_maps.find(index);
    if (map == stack.token_maps.end())
      throw DataError("missing attention map for token " + std::to_string(index));
    auto src = map->second.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double n = static_cast<double>(it->second.size());
  for (double& v : out.values()) v /= n;
  return out;
}

Centroid centroid(const Grid& map) {
  double total = 0.0;
  double moment_x = 0.0;
  double moment_y = 0.0;
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      const double a = map(r, c);
      total += a;
      moment_x += c * a;
      moment_y += r * a;
    }
  }
  if (!(total > 0.0)) throw DegenerateError("centroid of an all-zero attention map");
  return {moment_x / total, moment_y / total};
}

Centroid interaction_center(const Centroid& human, const Centroid& verb, const Centroid& object) {
  return {(human.x + verb.x + object.x) / 3.0, (human.y + verb.y + object.y) / 3.0};
}

InteractionRegion interaction_region(const Centroid& center, const Centroid& human,
                                     const Centroid& object, int height, int width,
                                     const RegionOptions& options) {
  if (options.exponent != 1.0 && options.exponent != 2.0)
    throw ConfigError("region exponent must be 1 or 2");
  if (!(options.min_extent > 0.0)) throw ConfigError("min_extent must be positive");
  if (height < 2 || width < 2) throw ConfigError("region grid must be at least 2x2");

  const double distance = std::hypot(human.x - object.x, human.y - object.y);
  const double floor = options.min_extent * std::max(height, width);
  const double half = std::max(std::pow(distance, options.exponent), floor);

  const double x_hi = width - 1.0;
  const double y_hi = height - 1.0;
  InteractionRegion region;
  region.center = center;
  region.half_extent = half;
  region.clipped_box.x_min = std::clamp(center.x - half, 0.0, x_hi) / x_hi;
  region.clipped_box.x_max = std::clamp(center.x + half, 0.0, x_hi) / x_hi;
  region.clipped_box.y_min = std::clamp(center.y - half, 0.0, y_hi) / y_hi;
  region.clipped_box.y_max = std::clamp(center.y + half, 0.0, y_hi) / y_hi;
  return region;
}

RegionExtraction extract_region(const AttentionStack& stack, const RegionOptions& options) {
  RegionExtraction out;
  out.human = centroid(aggregate_token_map(stack, Role::human));
  out.verb = centroid(aggregate_token_map(stack, Role::verb));
  out.object = centroid(aggregate_token_map(stack, Role::object));
  out.center = interaction_center(out.human, out.verb, out.object);
  out.region = interaction_region(out.center, out.human, out.object, stack.height, stack.width,
                                  options);
  return out;
}

Grid rasterize_box(const BoundingBox& box, int height, int width) {
  Grid out(height, width);
  for (int r = 0; r < height; ++r) {
    const double y = (r + 0.5) / height;
    for (int c = 0; c < width; ++c) {
      const double x = (c + 0.5) / width;
      if (box.contains(x, y)) out(r, c) = 1.0;
    }
  }
  return out;
}

Image apply_mask(const Image& image, const Grid& mask) {
  if (mask.height() != image.height() || mask.width() != image.width())
    throw DataError("mask resolution does not match image");
  Image out = image;
  for (int r = 0; r < image.height(); ++r)
    for (int c = 0; c < image.width(); ++c)
      if (mask(r, c) == 0.0)
        for (int ch = 0; ch < image.channels(); ++ch) out.at(ch, r, c) = 0.0;
  return out;
}

Image crop_region(const Image& image, const InteractionRegion& region) {
  return apply_mask(image, rasterize_box(region.clipped_box, image.height(), image.width()));
}

}  // namespace verbdiff

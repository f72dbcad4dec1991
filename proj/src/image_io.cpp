#include "verbdiff/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <nlohmann/json.hpp>

namespace verbdiff {

static_assert(std::endian::native == std::endian::little, "tensor files assume little-endian hosts");

namespace {

constexpr char kTensorMagic[4] = {'V', 'D', 'T', 'N'};
constexpr std::uint32_t kTensorVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("truncated tensor file " + path.string());
  return v;
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kTensorMagic, 4);
  put(out, kTensorVersion);
  put(out, static_cast<std::uint32_t>(image.channels()));
  put(out, static_cast<std::uint32_t>(image.height()));
  put(out, static_cast<std::uint32_t>(image.width()));
  const auto values = image.values();
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw DataError("failed writing " + path.string());
}

Image read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("tensor file not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0)
    throw DataError(path.string() + " is not a tensor file");
  if (get<std::uint32_t>(in, path) != kTensorVersion) throw DataError("unsupported tensor version in " + path.string());
  const auto c = get<std::uint32_t>(in, path);
  const auto h = get<std::uint32_t>(in, path);
  const auto w = get<std::uint32_t>(in, path);
  if (c == 0 || h == 0 || w == 0 || c > 64 || h > 8192 || w > 8192)
    throw DataError("implausible tensor shape in " + path.string());
  Image image(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  auto values = image.values();
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes())))
    throw DataError("truncated tensor file " + path.string());
  return image;
}

RgbImage preview(const Image& image, int scale) {
  RgbImage out;
  out.width = image.width() * scale;
  out.height = image.height() * scale;
  out.pixels.resize(static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height));
  const int shown = std::min(image.channels(), 3);
  double lo = 0.0, hi = 0.0;
  if (image.size() > 0) {
    const auto [mn, mx] = std::minmax_element(image.values().begin(), image.values().end());
    lo = *mn;
    hi = *mx;
  }
  const double range = hi > lo ? hi - lo : 1.0;
  auto to_byte = [&](double v) {
    return static_cast<unsigned char>(std::clamp((v - lo) / range * 255.0 + 0.5, 0.0, 255.0));
  };
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const int sy = y / scale, sx = x / scale;
      Rgb px;
      px.r = to_byte(image.at(0, sy, sx));
      px.g = shown > 1 ? to_byte(image.at(1, sy, sx)) : px.r;
      px.b = shown > 2 ? to_byte(image.at(2, sy, sx)) : px.r;
      out.pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(out.width) + static_cast<std::size_t>(x)] = px;
    }
  return out;
}

void draw_box(RgbImage& canvas, const BoundingBox& box, Rgb color, int thickness) {
  if (canvas.width == 0 || canvas.height == 0) return;
  auto px = [&](double v, int n) { return std::clamp(static_cast<int>(v * (n - 1) + 0.5), 0, n - 1); };
  const int x0 = px(box.x_min, canvas.width), x1 = px(box.x_max, canvas.width);
  const int y0 = px(box.y_min, canvas.height), y1 = px(box.y_max, canvas.height);
  auto set = [&](int x, int y) {
    if (x >= 0 && y >= 0 && x < canvas.width && y < canvas.height)
      canvas.pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(canvas.width) + static_cast<std::size_t>(x)] = color;
  };
  for (int t = 0; t < thickness; ++t) {
    for (int x = x0; x <= x1; ++x) {
      set(x, y0 + t);
      set(x, y1 - t);
    }
    for (int y = y0; y <= y1; ++y) {
      set(x0 + t, y);
      set(x1 - t, y);
    }
  }
}

void draw_marker(RgbImage& canvas, double x_norm, double y_norm, Rgb color) {
  const int cx = static_cast<int>(x_norm * (canvas.width - 1) + 0.5);
  const int cy = static_cast<int>(y_norm * (canvas.height - 1) + 0.5);
  for (int d = -2; d <= 2; ++d) {
    for (auto [x, y] : {std::pair{cx + d, cy}, std::pair{cx, cy + d}}) {
      if (x >= 0 && y >= 0 && x < canvas.width && y < canvas.height)
        canvas.pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(canvas.width) + static_cast<std::size_t>(x)] = color;
    }
  }
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Rgb& p = image.pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(image.width) + static_cast<std::size_t>(x)];
      row[static_cast<std::size_t>(x) * 3 + 0] = p.r;
      row[static_cast<std::size_t>(x) * 3 + 1] = p.g;
      row[static_cast<std::size_t>(x) * 3 + 2] = p.b;
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

nlohmann::json region_sidecar(const std::string& image_id, const Centroid& human,
                              const Centroid& verb, const Centroid& object,
                              const InteractionRegion& region) {
  auto pt = [](const Centroid& c) { return nlohmann::json::array({c.x, c.y}); };
  const auto& b = region.clipped_box;
  return {{"image_id", image_id},
          {"c_h", pt(human)},
          {"c_r", pt(verb)},
          {"c_o", pt(object)},
          {"c_rel", pt(region.center)},
          {"half_extent", region.half_extent},
          {"clipped_box", {b.x_min, b.y_min, b.x_max, b.y_max}}};
}

std::vector<std::filesystem::path> emit_region_debug(const std::filesystem::path& dir,
                                                     const std::string& image_id,
                                                     const RgbImage& background,
                                                     const nlohmann::json& sidecar,
                                                     const InteractionRegion& region) {
  std::filesystem::create_directories(dir);
  RgbImage overlay = background;
  draw_box(overlay, region.clipped_box, {255, 40, 40}, 2);
  const auto png_path = dir / (image_id + "_region.png");
  const auto json_path = dir / (image_id + "_region.json");
  write_png(png_path, overlay);
  std::ofstream out(json_path);
  if (!out) throw DataError("cannot write " + json_path.string());
  out << sidecar.dump(2) << '\n';
  return {png_path, json_path};
}

}  // namespace verbdiff

#include "verbdiff/common.hpp"

#include <cstring>
#include <numeric>

namespace verbdiff {

Grid::Grid(int height, int width, double fill)
    : height_(height), width_(width),
      values_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
  if (height < 0 || width < 0) throw std::invalid_argument("negative grid size");
}

double Grid::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

Image::Image(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width),
      values_(static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
                  static_cast<std::size_t>(width),
              fill) {
  if (channels < 0 || height < 0 || width < 0) throw std::invalid_argument("negative image size");
}

Eigen::Map<const Matrix> Image::as_matrix() const {
  return {values_.data(), channels_, height_ * width_};
}

Eigen::Map<Matrix> Image::as_matrix() { return {values_.data(), channels_, height_ * width_}; }

Image image_from_matrix(const Matrix& m, int height, int width) {
  if (m.cols() != static_cast<Eigen::Index>(height) * width)
    throw std::invalid_argument("matrix column count does not match image size");
  Image out(static_cast<int>(m.rows()), height, width);
  out.as_matrix() = m;
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t seed) {
  std::string_view raw(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  return fnv1a64(raw, seed);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view subsystem) {
  return splitmix64(fnv1a64(subsystem) ^ splitmix64(seed));
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace verbdiff

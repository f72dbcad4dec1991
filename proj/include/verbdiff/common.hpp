#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace verbdiff {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error families. The CLI maps each onto a stable exit code.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LookupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Row-major H x W grid of doubles.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(int row, int col) { return values_[index(row, col)]; }
  double operator()(int row, int col) const { return values_[index(row, col)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double sum() const;
  bool operator==(const Grid&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

/// Channel-major C x H x W pixel (or latent) grid.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }

  double& at(int c, int row, int col) { return values_[index(c, row, col)]; }
  double at(int c, int row, int col) const { return values_[index(c, row, col)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  /// C x (H*W) view; column p is pixel p in row-major order.
  Eigen::Map<const Matrix> as_matrix() const;
  Eigen::Map<Matrix> as_matrix();

  bool same_shape(const Image& other) const {
    return channels_ == other.channels_ && height_ == other.height_ &&
           width_ == other.width_;
  }
  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int c, int row, int col) const {
    return static_cast<std::size_t>(c) +
           static_cast<std::size_t>(channels_) *
               (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(col));
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  // Interleaved storage (channel fastest) so that as_matrix() is C x P.
  std::vector<double> values_;
};

Image image_from_matrix(const Matrix& m, int height, int width);

// Stable hashing used for seeds, caches and checkpoints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent subsystem seed from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view subsystem);

std::string hex64(std::uint64_t v);

}  // namespace verbdiff

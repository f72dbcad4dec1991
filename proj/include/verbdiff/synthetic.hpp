#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "verbdiff/common.hpp"
#include "verbdiff/hoi_data.hpp"

namespace verbdiff {

/// Supplies the pixels for an annotated image.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual Image load(const AnnotationRecord& record) const = 0;
};

/// Renders a deterministic 4-channel picture from the annotation itself: a human
/// silhouette, an object-coded patch, and a verb-coded texture around the
/// interaction midpoint.
class SyntheticImageSource final : public ImageSource {
 public:
  explicit SyntheticImageSource(int size = 32) : size_(size) {}
  Image load(const AnnotationRecord& record) const override;

 private:
  int size_;
};

/// Reads `<dir>/<image_id>.vdt` tensor files.
class DirectoryImageSource final : public ImageSource {
 public:
  explicit DirectoryImageSource(std::filesystem::path dir) : dir_(std::move(dir)) {}
  Image load(const AnnotationRecord& record) const override;

 private:
  std::filesystem::path dir_;
};

Image render_synthetic_image(const AnnotationRecord& record, int size);

/// Object offset from the human box that a verb implies in synthetic scenes.
struct SceneLayout {
  double dx = 0.0;
  double dy = 0.0;
};
SceneLayout synthetic_layout(const std::string& verb);

/// One-pair scene: jittered human box, object placed by the verb's layout.
AnnotationRecord synthetic_scene(const std::string& image_id, const HOITriplet& triplet,
                                 std::mt19937_64& rng);

/// Random single-pair scenes over a fixed verb and object vocabulary (a caption corpus
/// for fitting the toy joint encoder).
std::vector<AnnotationRecord> synthetic_caption_corpus(int count, std::uint64_t seed);

/// Eight (person, verb, object) classes over three objects with uneven counts
/// (50 images, one synthetic_scene each):
///   backpack: wearing 12, holding 6, carrying 4
///   bicycle:  riding 10, repairing 5, washing 3
///   horse:    riding 8, feeding 2
std::vector<AnnotationRecord> synthetic_training_fixture(std::uint64_t seed = 7);

}  // namespace verbdiff

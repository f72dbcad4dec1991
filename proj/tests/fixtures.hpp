#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "verbdiff/eval_harness.hpp"
#include "verbdiff/hoi_data.hpp"

namespace verbdiff::testing {

/// Box with corners on the 1/16 grid: [x0, y0, x1, y1] / 16.
BoundingBox grid_box(int x0, int y0, int x1, int y1);

/// 50 annotated images, boxes on the 1/16 grid.
///
///   bicycle:  riding 11 (img_00 carries two riding pairs, img_15 also washing),
///             repairing 5, washing 3
///   horse:    riding 6, feeding 6 (tie)
///   backpack: wearing 8, carrying 5 (img_30, img_31 carry both)
///   umbrella: holding 4, "and" 5 (excluded)
std::vector<AnnotationRecord> pipeline_fixture();

struct ExpectedPrompt {
  const char* text;
  int count;
};
inline constexpr std::array<ExpectedPrompt, 8> kPipelinePrompts = {{
    {"A photo of a person carrying a backpack", 5},
    {"A photo of a person feeding a horse", 6},
    {"A photo of a person holding an umbrella", 4},
    {"A photo of a person repairing a bicycle", 5},
    {"A photo of a person riding a bicycle", 11},
    {"A photo of a person riding a horse", 6},
    {"A photo of a person washing a bicycle", 3},
    {"A photo of a person wearing a backpack", 8},
}};
inline constexpr int kPipelineTotal = 48;

/// Pixel-center count of the union of boxes on a size x size grid, by integer cells.
int grid_union_count(const std::vector<std::array<int, 4>>& boxes, int size);

/// Tiny distinct image per index (distinct content hash).
Image tag_image(int index);

/// Scripted detections over four classes with hand-tallied accuracies.
struct HoiScript {
  std::vector<LabeledImage> items;
  std::map<std::uint64_t, std::vector<Detection>> detections;
  std::vector<PromptRecord> training_prompts;
};
HoiScript hoi_script();

// Hand tallies for hoi_script() (per-class macro averages).
inline constexpr double kDefFull = 11.0 / 24.0;
inline constexpr double kDefRare = 1.0 / 2.0;
inline constexpr double kKoFull = 5.0 / 8.0;
inline constexpr double kKoRare = 2.0 / 3.0;

/// Random labels and detection lists over a small class vocabulary.
HoiScript random_hoi_script(std::mt19937_64& rng, int images);

/// Fresh, empty scratch directory under $VERBDIFF_TEST_TMP (or the system temp dir).
std::filesystem::path scratch_dir(const std::string& name);

/// Shared random draws for property tests.
struct Gen {
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi);
  int integer(int lo, int hi);  // inclusive
  Vector vector(int n, double scale = 1.0);
  Image image(int channels, int height, int width, double scale = 1.0);
  Grid nonnegative_grid(int height, int width);
  Grid binary_grid(int height, int width);
  std::mt19937_64 rng;
};

}  // namespace verbdiff::testing

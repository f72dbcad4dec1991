#include "fixtures.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

namespace verbdiff::testing {

BoundingBox grid_box(int x0, int y0, int x1, int y1) {
  return {x0 / 16.0, y0 / 16.0, x1 / 16.0, y1 / 16.0};
}

namespace {

HOIPair make_pair(BoundingBox human, BoundingBox object, const std::string& verb, const std::string& object_name) {
  return {human, object, {"person", verb, object_name}};
}

HOIPair pattern_pair(int i, const std::string& verb, const std::string& object) {
  const int a = i % 5;
  const int b = i % 3;
  return make_pair(grid_box(a, b, a + 4, b + 8), grid_box(a + 3, b + 5, a + 9, b + 11), verb, object);
}

std::string image_name(int i) {
  char id[16];
  std::snprintf(id, sizeof id, "img_%02d", i);
  return id;
}

}  // namespace

std::vector<AnnotationRecord> pipeline_fixture() {
  std::vector<AnnotationRecord> out;
  for (int i = 0; i < 50; ++i) {
    AnnotationRecord r;
    r.image_id = image_name(i);
    r.width = 640;
    r.height = 480;
    if (i == 0) {
      r.pairs.push_back(make_pair(grid_box(2, 4, 6, 12), grid_box(4, 8, 10, 14), "riding", "bicycle"));
      r.pairs.push_back(make_pair(grid_box(10, 0, 14, 6), grid_box(12, 6, 16, 10), "riding", "bicycle"));
    } else if (i < 10) {
      r.pairs.push_back(pattern_pair(i, "riding", "bicycle"));
    } else if (i < 15) {
      r.pairs.push_back(pattern_pair(i, "repairing", "bicycle"));
    } else if (i == 15) {
      r.pairs.push_back(make_pair(grid_box(0, 0, 4, 8), grid_box(2, 6, 8, 12), "washing", "bicycle"));
      r.pairs.push_back(make_pair(grid_box(8, 8, 12, 16), grid_box(12, 2, 16, 6), "riding", "bicycle"));
    } else if (i < 18) {
      r.pairs.push_back(pattern_pair(i, "washing", "bicycle"));
    } else if (i < 24) {
      r.pairs.push_back(pattern_pair(i, "riding", "horse"));
    } else if (i < 30) {
      r.pairs.push_back(pattern_pair(i, "feeding", "horse"));
    } else if (i < 38) {
      r.pairs.push_back(pattern_pair(i, "wearing", "backpack"));
      if (i < 32) {
        const int a = i % 5;
        const int b = i % 3;
        r.pairs.push_back(make_pair(grid_box(a, b, a + 4, b + 8), grid_box(a + 6, b + 1, a + 10, b + 5),
                                    "carrying", "backpack"));
      }
    } else if (i < 41) {
      r.pairs.push_back(pattern_pair(i, "carrying", "backpack"));
    } else if (i < 45) {
      r.pairs.push_back(pattern_pair(i, "holding", "umbrella"));
    } else {
      r.pairs.push_back(pattern_pair(i, "and", "umbrella"));
    }
    out.push_back(std::move(r));
  }
  return out;
}

int grid_union_count(const std::vector<std::array<int, 4>>& boxes, int size) {
  int count = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      // On a 16-grid, pixel x is inside [x0, x1] / 16 iff x0 <= x < x1.
      const int gx = x * 16 / size;
      const int gy = y * 16 / size;
      const bool inside = std::any_of(boxes.begin(), boxes.end(), [&](const std::array<int, 4>& b) {
        return b[0] <= gx && gx < b[2] && b[1] <= gy && gy < b[3];
      });
      count += inside ? 1 : 0;
    }
  return count;
}

Image tag_image(int index) {
  Image img(1, 2, 2);
  for (std::size_t i = 0; i < img.size(); ++i) img.values()[i] = index + 0.25 * static_cast<double>(i);
  return img;
}

HoiScript hoi_script() {
  const HOITriplet rb{"person", "riding", "bicycle"};
  const HOITriplet wb{"person", "washing", "bicycle"};
  const HOITriplet fh{"person", "feeding", "horse"};
  const HOITriplet rh{"person", "riding", "horse"};

  struct Row {
    HOITriplet label;
    std::vector<Detection> detections;
  };
  const std::vector<Row> rows = {
      {rb, {{rb, 0.9}}},
      {rb, {{rh, 0.8}, {rb, 0.6}}},
      {rb, {{wb, 0.7}, {rb, 0.5}}},
      {wb, {{wb, 0.55}}},
      {wb, {{fh, 0.9}, {wb, 0.4}}},
      {wb, {}},
      {fh, {{rh, 0.6}, {fh, 0.3}}},
      {fh, {{fh, 0.95}}},
      {rh, {{rb, 0.7}}},
      {rh, {{rh, 0.5}, {rb, 0.45}}},
      {fh, {{fh, 0.2}, {rh, 0.1}}},
  };

  HoiScript script;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Image img = tag_image(static_cast<int>(i));
    script.detections[image_hash(img)] = rows[i].detections;
    script.items.push_back({"hoi_" + std::to_string(i), std::move(img), rows[i].label});
  }
  for (const auto& [triplet, count] : std::vector<std::pair<HOITriplet, int>>{{rb, 20}, {wb, 3}, {fh, 5}, {rh, 15}}) {
    PromptRecord p;
    p.triplet = triplet;
    p.text = render_prompt(triplet);
    p.sample_count = count;
    script.training_prompts.push_back(p);
  }
  return script;
}

HoiScript random_hoi_script(std::mt19937_64& rng, int images) {
  static const std::vector<HOITriplet> vocabulary = {
      {"person", "riding", "bicycle"}, {"person", "washing", "bicycle"}, {"person", "repairing", "bicycle"},
      {"person", "riding", "horse"},   {"person", "feeding", "horse"},   {"person", "holding", "umbrella"},
  };
  std::uniform_int_distribution<std::size_t> pick(0, vocabulary.size() - 1);
  std::uniform_int_distribution<int> how_many(0, 4);
  std::uniform_real_distribution<double> confidence(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 20);

  HoiScript script;
  for (int i = 0; i < images; ++i) {
    Image img = tag_image(i);
    std::vector<Detection> detections(static_cast<std::size_t>(how_many(rng)));
    for (auto& d : detections) d = {vocabulary[pick(rng)], confidence(rng)};
    script.detections[image_hash(img)] = detections;
    script.items.push_back({"rand_" + std::to_string(i), std::move(img), vocabulary[pick(rng)]});
  }
  for (const auto& triplet : vocabulary) {
    PromptRecord p;
    p.triplet = triplet;
    p.text = render_prompt(triplet);
    p.sample_count = count(rng);
    script.training_prompts.push_back(p);
  }
  return script;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const char* root = std::getenv("VERBDIFF_TEST_TMP");
  const std::filesystem::path base =
      root != nullptr && *root != '\0' ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "verbdiff_tests";
  const auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

double Gen::uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

int Gen::integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Vector Gen::vector(int n, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

Image Gen::image(int channels, int height, int width, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Image img(channels, height, width);
  for (double& v : img.values()) v = normal(rng);
  return img;
}

Grid Gen::nonnegative_grid(int height, int width) {
  Grid g(height, width);
  for (double& v : g.values()) v = uniform(0.0, 1.0);
  return g;
}

Grid Gen::binary_grid(int height, int width) {
  Grid g(height, width);
  for (double& v : g.values()) v = integer(0, 1);
  return g;
}

}  // namespace verbdiff::testing

#include "verbdiff/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "verbdiff/image_io.hpp"

namespace verbdiff {

namespace {

double code(const std::string& label, std::string_view salt) {
  return (fnv1a64(label, fnv1a64(salt)) & 1) ? 1.0 : -1.0;
}

double unit_hash(const std::string& label, std::string_view salt) {
  return static_cast<double>(fnv1a64(label, fnv1a64(salt)) % 1000) / 1000.0;
}

}  // namespace

Image render_synthetic_image(const AnnotationRecord& record, int size) {
  Image img(4, size, size);
  std::mt19937_64 rng(fnv1a64(record.image_id, fnv1a64("synthetic-noise")));
  std::normal_distribution<double> noise(0.0, 0.05);

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      img.at(0, y, x) = -0.5;
      img.at(3, y, x) = 0.3 * ((x + 0.5) / size - 0.5);
    }

  for (const auto& pair : record.pairs) {
    const auto& t = pair.triplet;
    const double object_code = code(t.object, "object");
    const double verb_level = 2.0 * unit_hash(t.verb, "level") - 1.0;
    const double verb_tint = 2.0 * unit_hash(t.verb, "tint") - 1.0;
    const double freq = 2.0 + 4.0 * unit_hash(t.verb, "freq");
    const double phase = 6.28 * unit_hash(t.verb, "phase");
    const InteractionRegion region = gt_interaction_region(pair.human_box, pair.object_box);

    for (int y = 0; y < size; ++y) {
      const double ny = (y + 0.5) / size;
      for (int x = 0; x < size; ++x) {
        const double nx = (x + 0.5) / size;
        const bool in_human = pair.human_box.contains(nx, ny);
        const bool in_object = pair.object_box.contains(nx, ny);
        if (in_human) img.at(0, y, x) = 1.0;
        if (in_object) img.at(1, y, x) = object_code * (1.0 + 0.5 * std::sin(8.0 * nx + 3.0 * ny));
        if (region.clipped_box.contains(nx, ny))
          img.at(2, y, x) = verb_level + 0.5 * std::sin(freq * 6.28 * nx + phase) * std::cos(freq * 3.14 * ny);
        if (in_human || in_object) img.at(3, y, x) += 0.6 * verb_tint;
      }
    }
  }
  for (double& v : img.values()) v += noise(rng);
  return img;
}

Image SyntheticImageSource::load(const AnnotationRecord& record) const {
  return render_synthetic_image(record, size_);
}

Image DirectoryImageSource::load(const AnnotationRecord& record) const {
  return read_tensor(dir_ / (record.image_id + ".vdt"));
}

SceneLayout synthetic_layout(const std::string& verb) {
  return {0.45 * unit_hash(verb, "layout-x") - 0.05, 0.45 * unit_hash(verb, "layout-y") - 0.15};
}

AnnotationRecord synthetic_scene(const std::string& image_id, const HOITriplet& triplet,
                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const SceneLayout layout = synthetic_layout(triplet.verb);
  AnnotationRecord r;
  r.image_id = image_id;
  r.width = 640;
  r.height = 480;
  const double hx = 0.15 + jitter(rng);
  const double hy = 0.15 + jitter(rng);
  BoundingBox human{hx, hy, hx + 0.3 + jitter(rng), hy + 0.55 + jitter(rng)};
  const double ox = std::clamp(hx + layout.dx + 0.1 + jitter(rng), 0.02, 0.68);
  const double oy = std::clamp(hy + layout.dy + 0.2 + jitter(rng), 0.02, 0.68);
  BoundingBox object{ox, oy, ox + 0.25 + jitter(rng), oy + 0.25 + jitter(rng)};
  r.pairs.push_back({human, object, triplet});
  return r;
}

std::vector<AnnotationRecord> synthetic_caption_corpus(int count, std::uint64_t seed) {
  static constexpr const char* verbs[] = {"riding",  "washing", "repairing", "holding", "carrying",
                                          "wearing", "feeding", "sitting on", "walking", "pushing",
                                          "pulling", "throwing", "catching",  "hugging", "petting",
                                          "kicking", "eating",  "cutting",   "flying",  "boarding"};
  static constexpr const char* objects[] = {"bicycle", "horse",    "backpack", "motorcycle", "dog",
                                            "kite",    "umbrella", "skateboard", "elephant", "cake"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_verb(0, std::size(verbs) - 1);
  std::uniform_int_distribution<std::size_t> pick_object(0, std::size(objects) - 1);
  std::vector<AnnotationRecord> out;
  for (int i = 0; i < count; ++i) {
    const HOITriplet triplet{"person", verbs[pick_verb(rng)], objects[pick_object(rng)]};
    out.push_back(synthetic_scene("corpus_" + std::to_string(i), triplet, rng));
  }
  return out;
}

std::vector<AnnotationRecord> synthetic_training_fixture(std::uint64_t seed) {
  struct ClassSpec {
    const char* verb;
    const char* object;
    int count;
  };
  static constexpr ClassSpec classes[] = {
      {"wearing", "backpack", 12}, {"holding", "backpack", 6}, {"carrying", "backpack", 4},
      {"riding", "bicycle", 10},   {"repairing", "bicycle", 5}, {"washing", "bicycle", 3},
      {"riding", "horse", 8},      {"feeding", "horse", 2},
  };

  std::mt19937_64 rng(seed);
  std::vector<AnnotationRecord> out;
  int index = 0;
  for (const auto& spec : classes) {
    for (int i = 0; i < spec.count; ++i, ++index) {
      char id[32];
      std::snprintf(id, sizeof id, "synth_%03d", index);
      out.push_back(synthetic_scene(id, {"person", spec.verb, spec.object}, rng));
    }
  }
  return out;
}

}  // namespace verbdiff

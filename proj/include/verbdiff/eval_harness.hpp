#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "verbdiff/common.hpp"
#include "verbdiff/guidance_losses.hpp"
#include "verbdiff/hoi_data.hpp"

namespace verbdiff {

enum class SimilarityKind { clip_like, sentence_like };
std::string to_string(SimilarityKind kind);

class SimilarityBackendPort {
 public:
  virtual ~SimilarityBackendPort() = default;
  virtual std::string id() const = 0;
  virtual SimilarityKind kind() const = 0;
  /// Unit-norm text embedding.
  virtual FeatureVector embed_text(const std::string& text) const = 0;
  virtual bool embeds_images() const { return false; }
  /// Same space as embed_text. Text-only backends throw ConfigError.
  virtual FeatureVector embed_image(const Image& image) const;
};

class CaptionerPort {
 public:
  virtual ~CaptionerPort() = default;
  virtual std::string id() const = 0;
  virtual std::string caption(const Image& image) const = 0;
};

struct Detection {
  HOITriplet triplet;
  double confidence = 0.0;
};

class HOIDetectorPort {
 public:
  virtual ~HOIDetectorPort() = default;
  virtual std::string id() const = 0;
  /// Ranked by descending confidence, each in [0, 1].
  virtual std::vector<Detection> detect(const Image& image) const = 0;
};

class VQAPort {
 public:
  virtual ~VQAPort() = default;
  virtual std::string id() const = 0;
  virtual double yes_probability(const Image& image, const std::string& question) const = 0;
  /// Image-to-text alignment with a free-form scoring prompt. Defaults to
  /// yes_probability on the same prompt.
  virtual double i2t_alignment(const Image& image, const std::string& prompt) const {
    return yes_probability(image, prompt);
  }
};

/// Content hash of an image (shape and values).
std::uint64_t image_hash(const Image& image);

/// Captions keyed by (image hash, captioner id); optionally persisted as JSON.
class CaptionCache {
 public:
  CaptionCache() = default;
  explicit CaptionCache(std::filesystem::path file);

  std::string caption(const Image& image, const CaptionerPort& captioner);
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  std::size_t size() const { return entries_.size(); }
  void save() const;

 private:
  std::optional<std::filesystem::path> file_;
  std::map<std::string, std::string> entries_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Mean cosine between embed(gt_text) and embed(caption(image)). Throws
/// std::invalid_argument on misaligned lists and DegenerateError when empty.
double t2t_similarity(const std::vector<std::string>& gt_texts, const std::vector<Image>& images,
                      const CaptionerPort& captioner, const SimilarityBackendPort& backend,
                      CaptionCache* cache = nullptr);

/// Mean cosine between prompt and image embeddings of a joint backend. Throws
/// ConfigError when the backend cannot embed images.
double t2i_similarity(const std::vector<std::string>& prompts, const std::vector<Image>& images,
                      const SimilarityBackendPort& backend);

struct HoiSetting {
  bool known_object = false;
  bool rare = false;
  bool operator==(const HoiSetting&) const = default;
};
std::string to_string(const HoiSetting& setting);  // def-full | def-rare | ko-full | ko-rare
HoiSetting parse_hoi_setting(const std::string& text);
std::vector<HoiSetting> all_hoi_settings();

inline constexpr int kRareThreshold = 10;

/// Classes with fewer than `threshold` training samples.
std::set<HOITriplet> rare_classes(const std::vector<PromptRecord>& training_prompts,
                                  int threshold = kRareThreshold);

struct LabeledImage {
  std::string id;
  Image image;
  HOITriplet label;
};

struct ClassTally {
  int hits = 0;
  int total = 0;
  double accuracy() const { return total > 0 ? static_cast<double>(hits) / total : 0.0; }
};

struct HoiAccuracy {
  double value = 0.0;  // mean of per-class accuracies
  int hits = 0;
  int total = 0;
  int empty_predictions = 0;
  std::map<std::string, ClassTally> per_class;
};

/// Default: the top detection must match verb and object. Known-object: detections are
/// first restricted to the ground-truth object, then the top one must match the verb.
/// Full averages over every labeled class, Rare over those in `rare`. An empty
/// detection list is a miss. Throws DegenerateError when no class is in scope.
HoiAccuracy hoi_accuracy(const std::vector<LabeledImage>& items, const HOIDetectorPort& detector,
                         const HoiSetting& setting, const std::set<HOITriplet>& rare);

/// "Is this figure showing a {H} {R} a/an {O}? Please answer yes or no".
std::string vqa_question(const HOITriplet& triplet);

double vqa_score(const std::vector<Image>& images, const std::vector<HOITriplet>& triplets,
                 const VQAPort& vqa);
/// i2t_alignment with the VQA question as scoring prompt.
double i2t_score(const std::vector<Image>& images, const std::vector<HOITriplet>& triplets,
                 const VQAPort& vqa);

inline const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names = {"t2t", "t2i", "hoi", "vqa", "i2t"};
  return names;
}

struct EvalItem {
  std::string id;
  Image image;
  HOITriplet triplet;
  std::string prompt;  // generation prompt; defaults to render_prompt(triplet)
};

struct EvalPorts {
  std::shared_ptr<const CaptionerPort> captioner;
  std::shared_ptr<const SimilarityBackendPort> clip_like;
  std::shared_ptr<const SimilarityBackendPort> sentence_like;
  std::shared_ptr<const SimilarityBackendPort> joint;  // for t2i
  std::shared_ptr<const HOIDetectorPort> detector;
  std::shared_ptr<const VQAPort> vqa;
};

struct EvalOptions {
  std::vector<std::string> metrics = known_metrics();
  std::vector<HoiSetting> settings = all_hoi_settings();
  std::set<HOITriplet> rare;
  CaptionCache* cache = nullptr;
};

/// Score keys: t2t_clip, t2t_sbert, t2i, hoi_<setting>, vqa, i2t.
struct EvalReport {
  std::map<std::string, double> scores;
  std::map<std::string, std::map<std::string, double>> per_class;  // metric -> class -> value
  std::vector<std::string> rare_classes;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Throws ConfigError for an unknown metric or a metric whose port is missing.
EvalReport evaluate(const std::vector<EvalItem>& items, const EvalPorts& ports,
                    const EvalOptions& options);

}  // namespace verbdiff

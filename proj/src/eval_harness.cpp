#include "verbdiff/eval_harness.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace verbdiff {

namespace {

// Order-independent mean: values are summed in sorted order.
double stable_mean(std::vector<double> values) {
  if (values.empty()) throw DegenerateError("mean of an empty list");
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": lists are not aligned (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  if (a == 0) throw DegenerateError(std::string(what) + ": no items to average");
}

bool metric_requested(const EvalOptions& options, const std::string& name) {
  return std::find(options.metrics.begin(), options.metrics.end(), name) != options.metrics.end();
}

}  // namespace

std::string to_string(SimilarityKind kind) {
  return kind == SimilarityKind::clip_like ? "clip_like" : "sentence_like";
}

FeatureVector SimilarityBackendPort::embed_image(const Image&) const {
  throw ConfigError("similarity backend '" + id() + "' embeds text only");
}

std::uint64_t image_hash(const Image& image) {
  std::uint64_t h = fnv1a64(std::to_string(image.channels()) + "x" + std::to_string(image.height()) +
                            "x" + std::to_string(image.width()));
  return fnv1a64(image.values(), h);
}

CaptionCache::CaptionCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  if (!in) return;
  try {
    const auto j = nlohmann::json::parse(in);
    entries_ = j.at("captions").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("caption cache " + file_->string() + " is corrupt: " + e.what());
  }
}

std::string CaptionCache::caption(const Image& image, const CaptionerPort& captioner) {
  const std::string key = hex64(image_hash(image)) + "|" + captioner.id();
  if (auto it = entries_.find(key); it != entries_.end()) {
    ++hits_;
    return it->second;
  }
  ++misses_;
  std::string text = captioner.caption(image);
  entries_.emplace(key, text);
  return text;
}

void CaptionCache::save() const {
  if (!file_) return;
  std::ofstream out(*file_, std::ios::trunc);
  if (!out) throw DataError("cannot write " + file_->string());
  out << nlohmann::json{{"captions", entries_}}.dump(1) << '\n';
}

namespace {

std::vector<double> t2t_values(const std::vector<std::string>& gt_texts,
                               const std::vector<Image>& images, const CaptionerPort& captioner,
                               const SimilarityBackendPort& backend, CaptionCache* cache) {
  check_aligned(gt_texts.size(), images.size(), "t2t_similarity");
  std::vector<double> values;
  values.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string caption = cache ? cache->caption(images[i], captioner) : captioner.caption(images[i]);
    values.push_back(cosine_sim(backend.embed_text(gt_texts[i]).values, backend.embed_text(caption).values));
  }
  return values;
}

}  // namespace

double t2t_similarity(const std::vector<std::string>& gt_texts, const std::vector<Image>& images,
                      const CaptionerPort& captioner, const SimilarityBackendPort& backend,
                      CaptionCache* cache) {
  return stable_mean(t2t_values(gt_texts, images, captioner, backend, cache));
}

double t2i_similarity(const std::vector<std::string>& prompts, const std::vector<Image>& images,
                      const SimilarityBackendPort& backend) {
  if (!backend.embeds_images())
    throw ConfigError("t2i needs a joint text-image backend; '" + backend.id() + "' embeds text only");
  check_aligned(prompts.size(), images.size(), "t2i_similarity");
  std::vector<double> values;
  for (std::size_t i = 0; i < images.size(); ++i)
    values.push_back(cosine_sim(backend.embed_text(prompts[i]).values, backend.embed_image(images[i]).values));
  return stable_mean(std::move(values));
}

std::string to_string(const HoiSetting& setting) {
  return std::string(setting.known_object ? "ko" : "def") + (setting.rare ? "-rare" : "-full");
}

HoiSetting parse_hoi_setting(const std::string& text) {
  for (const auto& s : all_hoi_settings())
    if (to_string(s) == text) return s;
  throw ConfigError("unknown HOI setting '" + text + "' (def-full | def-rare | ko-full | ko-rare)");
}

std::vector<HoiSetting> all_hoi_settings() {
  return {{false, false}, {false, true}, {true, false}, {true, true}};
}

std::set<HOITriplet> rare_classes(const std::vector<PromptRecord>& training_prompts, int threshold) {
  std::set<HOITriplet> out;
  for (const auto& p : training_prompts)
    if (p.sample_count < threshold) out.insert(p.triplet);
  return out;
}

HoiAccuracy hoi_accuracy(const std::vector<LabeledImage>& items, const HOIDetectorPort& detector,
                         const HoiSetting& setting, const std::set<HOITriplet>& rare) {
  HoiAccuracy acc;
  for (const auto& item : items) {
    if (setting.rare && !rare.contains(item.label)) continue;
    std::vector<Detection> ranked = detector.detect(item.image);
    if (setting.known_object)
      std::erase_if(ranked, [&](const Detection& d) { return d.triplet.object != item.label.object; });
    bool hit = false;
    if (ranked.empty()) {
      ++acc.empty_predictions;
    } else {
      const HOITriplet& top = ranked.front().triplet;
      hit = top.verb == item.label.verb && top.object == item.label.object;
    }
    ClassTally& tally = acc.per_class[to_string(item.label)];
    ++tally.total;
    ++acc.total;
    if (hit) {
      ++tally.hits;
      ++acc.hits;
    }
  }
  if (acc.per_class.empty())
    throw DegenerateError("no labeled classes in scope for HOI setting " + to_string(setting));
  std::vector<double> per_class;
  for (const auto& [name, tally] : acc.per_class) per_class.push_back(tally.accuracy());
  acc.value = stable_mean(std::move(per_class));
  return acc;
}

std::string vqa_question(const HOITriplet& triplet) {
  return "Is this figure showing " + indefinite_article(triplet.human) + " " + triplet.human + " " +
         triplet.verb + " " + indefinite_article(triplet.object) + " " + triplet.object +
         "? Please answer yes or no";
}

double vqa_score(const std::vector<Image>& images, const std::vector<HOITriplet>& triplets,
                 const VQAPort& vqa) {
  check_aligned(images.size(), triplets.size(), "vqa_score");
  std::vector<double> values;
  for (std::size_t i = 0; i < images.size(); ++i)
    values.push_back(vqa.yes_probability(images[i], vqa_question(triplets[i])));
  return stable_mean(std::move(values));
}

double i2t_score(const std::vector<Image>& images, const std::vector<HOITriplet>& triplets,
                 const VQAPort& vqa) {
  check_aligned(images.size(), triplets.size(), "i2t_score");
  std::vector<double> values;
  for (std::size_t i = 0; i < images.size(); ++i)
    values.push_back(vqa.i2t_alignment(images[i], vqa_question(triplets[i])));
  return stable_mean(std::move(values));
}

nlohmann::json EvalReport::to_json() const {
  return {{"scores", scores}, {"per_class", per_class}, {"rare_classes", rare_classes}, {"notes", notes}};
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  std::size_t width = 6;
  for (const auto& [k, v] : scores) width = std::max(width, k.size());
  out << std::left << std::setw(static_cast<int>(width)) << "metric" << "  score\n";
  out << std::string(width, '-') << "  ------\n";
  for (const auto& [k, v] : scores)
    out << std::left << std::setw(static_cast<int>(width)) << k << "  " << std::fixed
        << std::setprecision(4) << v << '\n';
  for (const auto& n : notes) out << "note: " << n << '\n';
  return out.str();
}

EvalReport evaluate(const std::vector<EvalItem>& items, const EvalPorts& ports,
                    const EvalOptions& options) {
  for (const auto& m : options.metrics) {
    if (std::find(known_metrics().begin(), known_metrics().end(), m) == known_metrics().end()) {
      std::string valid;
      for (const auto& k : known_metrics()) valid += (valid.empty() ? "" : ", ") + k;
      throw ConfigError("unknown metric '" + m + "' (valid: " + valid + ")");
    }
  }
  if (items.empty()) throw DegenerateError("nothing to evaluate");

  std::vector<Image> images;
  std::vector<HOITriplet> triplets;
  std::vector<std::string> gt_texts, prompts, classes;
  for (const auto& item : items) {
    images.push_back(item.image);
    triplets.push_back(item.triplet);
    gt_texts.push_back(render_prompt(item.triplet));
    prompts.push_back(item.prompt.empty() ? render_prompt(item.triplet) : item.prompt);
    classes.push_back(to_string(item.triplet));
  }

  EvalReport report;
  for (const auto& t : options.rare) report.rare_classes.push_back(to_string(t));

  auto per_class_mean = [&](const std::string& metric, const std::vector<double>& values) {
    std::map<std::string, std::vector<double>> grouped;
    for (std::size_t i = 0; i < values.size(); ++i) grouped[classes[i]].push_back(values[i]);
    for (auto& [cls, vs] : grouped) report.per_class[metric][cls] = stable_mean(std::move(vs));
  };

  if (metric_requested(options, "t2t")) {
    if (!ports.captioner || (!ports.clip_like && !ports.sentence_like))
      throw ConfigError("t2t needs a captioner and at least one similarity backend");
    for (const auto& [key, backend] : {std::pair{std::string("t2t_clip"), ports.clip_like},
                                       std::pair{std::string("t2t_sbert"), ports.sentence_like}}) {
      if (!backend) continue;
      auto values = t2t_values(gt_texts, images, *ports.captioner, *backend, options.cache);
      per_class_mean(key, values);
      report.scores[key] = stable_mean(std::move(values));
    }
  }
  if (metric_requested(options, "t2i")) {
    if (!ports.joint) throw ConfigError("t2i needs a joint text-image backend");
    report.scores["t2i"] = t2i_similarity(prompts, images, *ports.joint);
  }
  if (metric_requested(options, "hoi")) {
    if (!ports.detector) throw ConfigError("hoi needs a detector");
    std::vector<LabeledImage> labeled;
    for (const auto& item : items) labeled.push_back({item.id, item.image, item.triplet});
    for (const auto& setting : options.settings) {
      const std::string key = "hoi_" + to_string(setting);
      try {
        const HoiAccuracy acc = hoi_accuracy(labeled, *ports.detector, setting, options.rare);
        report.scores[key] = acc.value;
        for (const auto& [cls, tally] : acc.per_class) report.per_class[key][cls] = tally.accuracy();
        if (acc.empty_predictions > 0)
          report.notes.push_back(key + ": " + std::to_string(acc.empty_predictions) +
                                 " image(s) with no detections counted as misses");
      } catch (const DegenerateError& e) {
        report.notes.push_back(key + " skipped: " + e.what());
      }
    }
  }
  if (metric_requested(options, "vqa")) {
    if (!ports.vqa) throw ConfigError("vqa needs a VQA port");
    std::vector<double> values;
    for (std::size_t i = 0; i < images.size(); ++i)
      values.push_back(ports.vqa->yes_probability(images[i], vqa_question(triplets[i])));
    per_class_mean("vqa", values);
    report.scores["vqa"] = stable_mean(std::move(values));
  }
  if (metric_requested(options, "i2t")) {
    if (!ports.vqa) throw ConfigError("i2t needs a VQA port");
    report.scores["i2t"] = i2t_score(images, triplets, *ports.vqa);
  }
  return report;
}

}  // namespace verbdiff

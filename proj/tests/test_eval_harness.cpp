#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "checks.hpp"
#include "fixtures.hpp"
#include "verbdiff/eval_harness.hpp"
#include "verbdiff/toy_eval_ports.hpp"

using namespace verbdiff;
using verbdiff::testing::tag_image;

namespace {

std::shared_ptr<const TextEncoderPort> text_encoder() {
  static const auto text = std::make_shared<const ToyTextEncoder>(32, 3);
  return text;
}

const HOITriplet kRidingBicycle{"person", "riding", "bicycle"};
const HOITriplet kWashingBicycle{"person", "washing", "bicycle"};
const HOITriplet kFeedingHorse{"person", "feeding", "horse"};

std::vector<EvalItem> eval_items() {
  std::vector<EvalItem> items;
  const std::vector<HOITriplet> labels = {kRidingBicycle, kWashingBicycle, kFeedingHorse, kRidingBicycle};
  for (std::size_t i = 0; i < labels.size(); ++i)
    items.push_back({"e" + std::to_string(i), tag_image(static_cast<int>(i)), labels[i], render_prompt(labels[i])});
  return items;
}

class CountingCaptioner final : public CaptionerPort {
 public:
  std::string id() const override { return "counting"; }
  std::string caption(const Image& image) const override {
    ++calls;
    return "caption " + std::to_string(image.values()[0]);
  }
  mutable int calls = 0;
};

}  // namespace

TEST(T2t, EchoCaptionerScoresOne) {
  std::vector<std::string> texts;
  std::vector<Image> images;
  std::map<std::uint64_t, std::string> captions;
  for (int i = 0; i < 5; ++i) {
    texts.push_back(render_prompt({"person", i % 2 ? "riding" : "washing", i < 3 ? "bicycle" : "horse"}));
    images.push_back(tag_image(i));
    captions[image_hash(images.back())] = texts.back();
  }
  const LookupCaptioner echo(captions);
  const ToyTextSimilarity sim(SimilarityKind::sentence_like, text_encoder());
  EXPECT_NEAR(t2t_similarity(texts, images, echo, sim), 1.0, 1e-12);
  EXPECT_THROW(t2t_similarity({}, {}, echo, sim), DegenerateError);
  EXPECT_THROW(t2t_similarity(texts, {images[0]}, echo, sim), std::invalid_argument);
}

TEST(T2t, ReorderInvariantAndWithinRange) {
  std::mt19937_64 rng(8);
  const std::vector<std::string> verbs = {"riding", "washing", "holding", "repairing"};
  std::vector<std::string> texts;
  std::vector<Image> images;
  std::map<std::uint64_t, std::string> captions;
  for (int i = 0; i < 12; ++i) {
    texts.push_back(render_prompt({"person", verbs[rng() % 4], "bicycle"}));
    images.push_back(tag_image(i));
    captions[image_hash(images.back())] = render_prompt({"person", verbs[rng() % 4], "bicycle"});
  }
  const LookupCaptioner captioner(captions);
  const ToyTextSimilarity sim(SimilarityKind::clip_like, text_encoder());
  const double base = t2t_similarity(texts, images, captioner, sim);
  EXPECT_GE(base, -1.0);
  EXPECT_LE(base, 1.0);
  std::vector<std::size_t> order(texts.size());
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> t;
    std::vector<Image> im;
    for (std::size_t k : order) {
      t.push_back(texts[k]);
      im.push_back(images[k]);
    }
    EXPECT_NEAR(t2t_similarity(t, im, captioner, sim), base, 1e-12);
  }
}

TEST(CaptionCache, CachesAndPersists) {
  const auto file = verbdiff::testing::scratch_dir("eval_cache") / "captions.json";
  CountingCaptioner captioner;
  {
    CaptionCache cache(file);
    EXPECT_EQ(cache.caption(tag_image(1), captioner), "caption 1.000000");
    cache.caption(tag_image(1), captioner);
    cache.caption(tag_image(2), captioner);
    EXPECT_EQ(captioner.calls, 2);
    EXPECT_EQ(cache.hits(), 1u);
    cache.save();
  }
  CaptionCache reloaded(file);
  EXPECT_EQ(reloaded.size(), 2u);
  reloaded.caption(tag_image(2), captioner);
  EXPECT_EQ(captioner.calls, 2);
}

TEST(T2i, RiggedJointBackendScoresOne) {
  std::vector<std::string> prompts;
  std::vector<Image> images;
  std::map<std::uint64_t, std::string> texts;
  for (int i = 0; i < 4; ++i) {
    prompts.push_back(render_prompt({"person", "riding", i % 2 ? "horse" : "bicycle"}));
    images.push_back(tag_image(i));
    texts[image_hash(images.back())] = prompts.back();
  }
  const LookupJointBackend joint(text_encoder(), texts);
  EXPECT_NEAR(t2i_similarity(prompts, images, joint), 1.0, 1e-12);
  EXPECT_THROW(t2i_similarity({}, {}, joint), DegenerateError);
  const ToyTextSimilarity text_only(SimilarityKind::clip_like, text_encoder());
  EXPECT_THROW(t2i_similarity(prompts, images, text_only), ConfigError);
}

TEST(HoiAccuracy, OracleScoresOneEverywhere) {
  const auto items = eval_items();
  std::map<std::uint64_t, std::vector<Detection>> script;
  std::vector<LabeledImage> labeled;
  for (const auto& item : items) {
    script[image_hash(item.image)] = {{item.triplet, 1.0}};
    labeled.push_back({item.id, item.image, item.triplet});
  }
  const ScriptedDetector oracle(script);
  const std::set<HOITriplet> rare = {kWashingBicycle};
  for (const auto& setting : all_hoi_settings()) EXPECT_EQ(hoi_accuracy(labeled, oracle, setting, rare).value, 1.0);
}

TEST(HoiAccuracy, SettingSemantics) {
  const Image right_object_wrong_verb = tag_image(0);
  const Image wrong_object_top = tag_image(1);
  const std::vector<LabeledImage> items = {{"a", right_object_wrong_verb, kRidingBicycle}, {"b", wrong_object_top, kRidingBicycle}};
  const ScriptedDetector detector({{image_hash(right_object_wrong_verb), {{kWashingBicycle, 0.9}}},
                                   {image_hash(wrong_object_top), {{kFeedingHorse, 0.9}, {kRidingBicycle, 0.4}}}});
  const HoiAccuracy def = hoi_accuracy(items, detector, {false, false}, {});
  const HoiAccuracy ko = hoi_accuracy(items, detector, {true, false}, {});
  EXPECT_EQ(def.hits, 0);
  EXPECT_EQ(ko.hits, 1);
  EXPECT_DOUBLE_EQ(ko.value, 0.5);
  EXPECT_THROW(hoi_accuracy(items, detector, {false, true}, {}), DegenerateError);
}

TEST(HoiAccuracy, RareClassesFromTrainingCounts) {
  PromptRecord few, many;
  few.triplet = kWashingBicycle;
  few.sample_count = 9;
  many.triplet = kRidingBicycle;
  many.sample_count = 10;
  EXPECT_EQ(rare_classes({few, many}), (std::set<HOITriplet>{kWashingBicycle}));
}

TEST(HoiAccuracy, ScriptedFixtureAndRandomDetectors) {
  for (const auto& m : verbdiff::testing::metric_harness_suite(100, 31)) ADD_FAILURE() << m;
}

TEST(HoiSetting, Names) {
  for (const auto& s : all_hoi_settings()) EXPECT_EQ(parse_hoi_setting(to_string(s)), s);
  EXPECT_EQ(to_string(HoiSetting{true, true}), "ko-rare");
  EXPECT_THROW(parse_hoi_setting("ko-medium"), ConfigError);
}

TEST(Vqa, QuestionAndMeans) {
  EXPECT_EQ(vqa_question({"person", "riding", "bicycle"}), "Is this figure showing a person riding a bicycle? Please answer yes or no");
  EXPECT_EQ(vqa_question({"person", "boarding", "airplane"}), "Is this figure showing a person boarding an airplane? Please answer yes or no");
  const std::vector<Image> images = {tag_image(0), tag_image(1)};
  const std::vector<HOITriplet> triplets = {kRidingBicycle, kFeedingHorse};
  EXPECT_EQ(vqa_score(images, triplets, ScriptedVQA({}, 1.0)), 1.0);
  const ScriptedVQA scripted({{image_hash(images[0]), 0.2}, {image_hash(images[1]), 0.8}});
  EXPECT_NEAR(vqa_score(images, triplets, scripted), 0.5, 1e-15);
  EXPECT_NEAR(i2t_score(images, triplets, scripted), 0.5, 1e-15);
}

TEST(Evaluate, OraclePortsAndSubsets) {
  const auto items = eval_items();
  const EvalPorts ports = make_oracle_eval_ports(items, text_encoder());
  EvalOptions options;
  options.rare = {kWashingBicycle};
  const EvalReport report = evaluate(items, ports, options);
  for (const auto& [name, value] : report.scores) EXPECT_NEAR(value, 1.0, 1e-12) << name;
  EXPECT_TRUE(report.scores.contains("hoi_ko-rare"));
  EXPECT_TRUE(report.scores.contains("t2t_sbert"));

  EvalOptions subset;
  subset.metrics = {"t2t", "vqa"};
  const EvalReport small = evaluate(items, ports, subset);
  for (const auto& [name, value] : small.scores) EXPECT_TRUE(name.starts_with("t2t") || name == "vqa") << name;
  EXPECT_EQ(nlohmann::json::parse(small.to_json().dump()), small.to_json());
  EXPECT_FALSE(small.to_table().empty());

  subset.metrics = {"fid"};
  EXPECT_THROW(evaluate(items, ports, subset), ConfigError);
  EvalPorts missing = ports;
  missing.vqa = nullptr;
  subset.metrics = {"vqa"};
  EXPECT_THROW(evaluate(items, missing, subset), ConfigError);
}

TEST(Evaluate, RepeatableAndNonMutating) {
  const auto items = eval_items();
  const auto copy = items;
  const EvalPorts ports = make_oracle_eval_ports(items, text_encoder());
  const EvalReport a = evaluate(items, ports, EvalOptions{});
  const EvalReport b = evaluate(items, ports, EvalOptions{});
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.to_json(), b.to_json());
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(items[i].image, copy[i].image);
    EXPECT_EQ(items[i].triplet, copy[i].triplet);
  }
}

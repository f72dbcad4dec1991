#include "verbdiff/toy_eval_ports.hpp"

#include <algorithm>
#include <cmath>

namespace verbdiff {

namespace {

void sort_detections(std::vector<Detection>& d) {
  std::stable_sort(d.begin(), d.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
}

}  // namespace

std::string LookupCaptioner::caption(const Image& image) const {
  auto it = captions_.find(image_hash(image));
  if (it == captions_.end()) throw LookupError("no caption scripted for image " + hex64(image_hash(image)));
  return it->second;
}

ScriptedDetector::ScriptedDetector(std::map<std::uint64_t, std::vector<Detection>> script)
    : script_(std::move(script)) {
  for (auto& [hash, detections] : script_) {
    for (const auto& d : detections)
      if (d.confidence < 0.0 || d.confidence > 1.0)
        throw std::invalid_argument("detection confidence outside [0, 1]");
    sort_detections(detections);
  }
}

std::vector<Detection> ScriptedDetector::detect(const Image& image) const {
  auto it = script_.find(image_hash(image));
  return it == script_.end() ? std::vector<Detection>{} : it->second;
}

double ScriptedVQA::yes_probability(const Image& image, const std::string&) const {
  auto it = answers_.find(image_hash(image));
  return it == answers_.end() ? fallback_ : it->second;
}

FeatureVector LookupJointBackend::embed_image(const Image& image) const {
  auto it = image_texts_.find(image_hash(image));
  if (it == image_texts_.end()) throw LookupError("no text rigged for image " + hex64(image_hash(image)));
  return text_->encode(it->second);
}

RetrievalCaptioner::RetrievalCaptioner(std::shared_ptr<const SimilarityBackendPort> joint,
                                       std::vector<std::string> candidates)
    : joint_(std::move(joint)), candidates_(std::move(candidates)) {
  if (candidates_.empty()) throw ConfigError("retrieval captioner needs candidate captions");
  std::sort(candidates_.begin(), candidates_.end());
}

std::string RetrievalCaptioner::id() const {
  std::string key;
  for (const auto& c : candidates_) key += c + "\n";
  return "retrieval:" + joint_->id() + ":" + hex64(fnv1a64(key));
}

std::string RetrievalCaptioner::caption(const Image& image) const {
  const Vector f = joint_->embed_image(image).values;
  double best = -2.0;
  const std::string* pick = &candidates_.front();
  for (const auto& c : candidates_) {
    const double s = cosine_sim(f, joint_->embed_text(c).values);
    if (s > best) {
      best = s;
      pick = &c;
    }
  }
  return *pick;
}

RetrievalDetector::RetrievalDetector(std::shared_ptr<const SimilarityBackendPort> joint,
                                     std::vector<HOITriplet> candidates, double temperature)
    : joint_(std::move(joint)), candidates_(std::move(candidates)), temperature_(temperature) {
  if (candidates_.empty()) throw ConfigError("retrieval detector needs candidate triplets");
  std::sort(candidates_.begin(), candidates_.end());
}

std::vector<Detection> RetrievalDetector::detect(const Image& image) const {
  const Vector f = joint_->embed_image(image).values;
  std::vector<double> logits;
  for (const auto& t : candidates_)
    logits.push_back(temperature_ * cosine_sim(f, joint_->embed_text(render_prompt(t)).values));
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) z += (l = std::exp(l - top));
  std::vector<Detection> out;
  for (std::size_t i = 0; i < candidates_.size(); ++i) out.push_back({candidates_[i], logits[i] / z});
  sort_detections(out);
  return out;
}

double RetrievalVQA::yes_probability(const Image& image, const std::string& question) const {
  const double s = cosine_sim(joint_->embed_image(image).values, joint_->embed_text(question).values);
  return 1.0 / (1.0 + std::exp(-temperature_ * s));
}

EvalPorts make_oracle_eval_ports(const std::vector<EvalItem>& items,
                                 std::shared_ptr<const TextEncoderPort> text) {
  std::map<std::uint64_t, std::string> captions, prompts;
  std::map<std::uint64_t, std::vector<Detection>> detections;
  std::map<std::uint64_t, double> answers;
  for (const auto& item : items) {
    const std::uint64_t h = image_hash(item.image);
    captions[h] = render_prompt(item.triplet);
    prompts[h] = item.prompt.empty() ? render_prompt(item.triplet) : item.prompt;
    detections[h] = {{item.triplet, 1.0}};
    answers[h] = 1.0;
  }
  EvalPorts ports;
  ports.captioner = std::make_shared<LookupCaptioner>(std::move(captions), "oracle");
  ports.clip_like = std::make_shared<ToyTextSimilarity>(SimilarityKind::clip_like, text);
  ports.sentence_like = std::make_shared<ToyTextSimilarity>(SimilarityKind::sentence_like, text);
  ports.joint = std::make_shared<LookupJointBackend>(text, std::move(prompts));
  ports.detector = std::make_shared<ScriptedDetector>(std::move(detections));
  ports.vqa = std::make_shared<ScriptedVQA>(std::move(answers));
  return ports;
}

EvalPorts make_retrieval_eval_ports(const ModelBundle& bundle, const std::vector<HOITriplet>& candidates) {
  auto joint = std::make_shared<EncoderJointBackend>(bundle.text, bundle.image);
  std::vector<std::string> texts;
  for (const auto& t : candidates) texts.push_back(render_prompt(t));
  EvalPorts ports;
  ports.captioner = std::make_shared<RetrievalCaptioner>(joint, texts);
  ports.clip_like = std::make_shared<ToyTextSimilarity>(SimilarityKind::clip_like, bundle.text);
  ports.sentence_like = std::make_shared<ToyTextSimilarity>(SimilarityKind::sentence_like, bundle.text);
  ports.joint = joint;
  ports.detector = std::make_shared<RetrievalDetector>(joint, candidates);
  ports.vqa = std::make_shared<RetrievalVQA>(joint);
  return ports;
}

}  // namespace verbdiff

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "verbdiff/eval_harness.hpp"
#include "verbdiff/model_adapters.hpp"
#include "verbdiff/toy_backends.hpp"

namespace verbdiff {

/// Returns a fixed caption per image hash; unknown images raise LookupError.
class LookupCaptioner final : public CaptionerPort {
 public:
  explicit LookupCaptioner(std::map<std::uint64_t, std::string> captions, std::string id = "lookup")
      : captions_(std::move(captions)), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  std::string caption(const Image& image) const override;

 private:
  std::map<std::uint64_t, std::string> captions_;
  std::string id_;
};

/// Fixed detections per image hash (re-sorted by confidence); unknown images get none.
class ScriptedDetector final : public HOIDetectorPort {
 public:
  explicit ScriptedDetector(std::map<std::uint64_t, std::vector<Detection>> script);
  std::string id() const override { return "scripted"; }
  std::vector<Detection> detect(const Image& image) const override;

 private:
  std::map<std::uint64_t, std::vector<Detection>> script_;
};

class ScriptedVQA final : public VQAPort {
 public:
  explicit ScriptedVQA(std::map<std::uint64_t, double> answers, double fallback = 0.0)
      : answers_(std::move(answers)), fallback_(fallback) {}
  std::string id() const override { return "scripted"; }
  double yes_probability(const Image& image, const std::string& question) const override;

 private:
  std::map<std::uint64_t, double> answers_;
  double fallback_;
};

/// Text-only similarity backed by the toy text encoder.
class ToyTextSimilarity final : public SimilarityBackendPort {
 public:
  ToyTextSimilarity(SimilarityKind kind, std::shared_ptr<const TextEncoderPort> text)
      : kind_(kind), text_(std::move(text)) {}
  std::string id() const override { return "toy-" + to_string(kind_) + ":" + text_->id(); }
  SimilarityKind kind() const override { return kind_; }
  FeatureVector embed_text(const std::string& text) const override { return text_->encode(text); }

 private:
  SimilarityKind kind_;
  std::shared_ptr<const TextEncoderPort> text_;
};

/// Joint backend whose image embedding is the embedding of a text looked up by image
/// hash (a rigged fixture for t2i).
class LookupJointBackend final : public SimilarityBackendPort {
 public:
  LookupJointBackend(std::shared_ptr<const TextEncoderPort> text,
                     std::map<std::uint64_t, std::string> image_texts)
      : text_(std::move(text)), image_texts_(std::move(image_texts)) {}
  std::string id() const override { return "lookup-joint"; }
  SimilarityKind kind() const override { return SimilarityKind::clip_like; }
  FeatureVector embed_text(const std::string& text) const override { return text_->encode(text); }
  bool embeds_images() const override { return true; }
  FeatureVector embed_image(const Image& image) const override;

 private:
  std::shared_ptr<const TextEncoderPort> text_;
  std::map<std::uint64_t, std::string> image_texts_;
};

/// Joint backend over the model bundle's own text and image encoders.
class EncoderJointBackend final : public SimilarityBackendPort {
 public:
  EncoderJointBackend(std::shared_ptr<const TextEncoderPort> text,
                      std::shared_ptr<const ImageEncoderPort> image)
      : text_(std::move(text)), image_(std::move(image)) {}
  std::string id() const override { return "joint:" + text_->id() + "+" + image_->id(); }
  SimilarityKind kind() const override { return SimilarityKind::clip_like; }
  FeatureVector embed_text(const std::string& text) const override { return text_->encode(text); }
  bool embeds_images() const override { return true; }
  FeatureVector embed_image(const Image& image) const override { return image_->encode(image); }

 private:
  std::shared_ptr<const TextEncoderPort> text_;
  std::shared_ptr<const ImageEncoderPort> image_;
};

/// Captions an image with the candidate prompt closest to it in the joint space.
class RetrievalCaptioner final : public CaptionerPort {
 public:
  RetrievalCaptioner(std::shared_ptr<const SimilarityBackendPort> joint, std::vector<std::string> candidates);
  std::string id() const override;
  std::string caption(const Image& image) const override;

 private:
  std::shared_ptr<const SimilarityBackendPort> joint_;
  std::vector<std::string> candidates_;
};

/// Scores every candidate triplet by a softmax over joint-space cosines.
class RetrievalDetector final : public HOIDetectorPort {
 public:
  RetrievalDetector(std::shared_ptr<const SimilarityBackendPort> joint, std::vector<HOITriplet> candidates,
                    double temperature = 10.0);
  std::string id() const override { return "retrieval:" + joint_->id(); }
  std::vector<Detection> detect(const Image& image) const override;

 private:
  std::shared_ptr<const SimilarityBackendPort> joint_;
  std::vector<HOITriplet> candidates_;
  double temperature_;
};

/// yes = sigmoid(temperature * cos(image, question)).
class RetrievalVQA final : public VQAPort {
 public:
  RetrievalVQA(std::shared_ptr<const SimilarityBackendPort> joint, double temperature = 10.0)
      : joint_(std::move(joint)), temperature_(temperature) {}
  std::string id() const override { return "retrieval-vqa:" + joint_->id(); }
  double yes_probability(const Image& image, const std::string& question) const override;

 private:
  std::shared_ptr<const SimilarityBackendPort> joint_;
  double temperature_;
};

/// Ports that answer from the labels themselves: captions echo the ground truth,
/// the detector returns the label, VQA always says yes.
EvalPorts make_oracle_eval_ports(const std::vector<EvalItem>& items,
                                 std::shared_ptr<const TextEncoderPort> text);

/// Retrieval ports built on a model bundle's encoders over `candidates`.
EvalPorts make_retrieval_eval_ports(const ModelBundle& bundle, const std::vector<HOITriplet>& candidates);

}  // namespace verbdiff

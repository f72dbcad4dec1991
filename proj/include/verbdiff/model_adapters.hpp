#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "verbdiff/attention_geometry.hpp"
#include "verbdiff/common.hpp"
#include "verbdiff/guidance_losses.hpp"
#include "verbdiff/hoi_data.hpp"

namespace verbdiff {

struct Token {
  std::string text;
  std::size_t begin = 0;  // character offsets into the source text, [begin, end)
  std::size_t end = 0;
};

class TextEncoderPort {
 public:
  virtual ~TextEncoderPort() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  /// Pooled, unit-norm sentence feature.
  virtual FeatureVector encode(const std::string& text) const = 0;
  virtual std::vector<Token> tokenize(const std::string& text) const = 0;
  /// Per-token conditioning, one column per token of tokenize(text).
  virtual Matrix token_embeddings(const std::string& text) const = 0;
};

class ImageEncoderPort {
 public:
  virtual ~ImageEncoderPort() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual FeatureVector encode(const Image& image) const = 0;
  /// Pulls a gradient on the encoded (unit-norm) feature back to the pixels.
  /// Backends without gradients throw BackendError.
  virtual Image backward(const Image& image, const Vector& d_feature) const = 0;
};

class LatentCodecPort {
 public:
  virtual ~LatentCodecPort() = default;
  virtual Image encode_image(const Image& image) const = 0;
  virtual Image decode_latent(const Image& latent) const = 0;
  virtual Image decode_backward(const Image& latent, const Image& d_image) const = 0;
  virtual int latent_channels() const = 0;
  virtual int latent_size() const = 0;
};

enum class ParameterGroup { cross_attention, other };
std::string to_string(ParameterGroup group);

struct Parameter {
  std::string name;
  ParameterGroup group = ParameterGroup::other;
  Matrix value;
};

using ParameterGrads = std::map<std::string, Matrix>;

/// Per-token attention over latent positions from one denoiser call: P x L, each
/// row a softmax over the L prompt tokens.
struct RawAttention {
  int height = 0;
  int width = 0;
  Matrix weights;
};

/// Opaque forward state a denoiser needs for its backward pass.
struct DenoiserCache {
  virtual ~DenoiserCache() = default;
};

struct DenoiserOutput {
  Image noise;
  RawAttention attention;
  std::shared_ptr<const DenoiserCache> cache;
};

struct DenoiserBackward {
  ParameterGrads grads;  // cross_attention group only
  Image d_input;         // empty unless requested
};

class DenoiserPort {
 public:
  virtual ~DenoiserPort() = default;
  virtual std::string id() const = 0;
  /// conditioning: token embeddings, one column per token.
  virtual DenoiserOutput predict_noise(const Image& z_t, int timestep,
                                       const Matrix& conditioning) const = 0;
  virtual DenoiserBackward backward(const DenoiserCache& cache, const Image& d_noise,
                                    bool input_gradient) const = 0;
  virtual std::vector<Parameter>& parameters() = 0;
  virtual const std::vector<Parameter>& parameters() const = 0;
};

/// Discrete-time variance schedule (scaled-linear betas, as in latent diffusion).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(int steps = 1000, double beta_start = 0.00085, double beta_end = 0.012);
  int steps() const { return static_cast<int>(alphas_cumprod_.size()); }
  double alpha_bar(int t) const;
  /// Evenly spaced DDIM timesteps, descending.
  std::vector<int> ddim_timesteps(int sampling_steps) const;

 private:
  std::vector<double> alphas_cumprod_;
};

/// Everything a run needs from a model backend.
struct ModelBundle {
  std::string backend;
  std::shared_ptr<const TextEncoderPort> text;
  std::shared_ptr<const ImageEncoderPort> image;
  std::shared_ptr<const LatentCodecPort> codec;
  std::shared_ptr<DenoiserPort> denoiser;
  NoiseSchedule schedule;
  double guidance_scale = 1.0;  // classifier-free guidance; 1 disables the negative pass
};

struct ParameterSelection {
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
};

/// Exactly the cross_attention group. Throws ConfigError when the denoiser has none.
ParameterSelection trainable_parameter_filter(const DenoiserPort& denoiser);

/// Order-sensitive hash of every parameter of the given group.
std::uint64_t parameter_checksum(const DenoiserPort& denoiser, ParameterGroup group);

/// Token indices of the human, verb and object phrases of render_prompt(triplet),
/// located by character offsets.
std::map<Role, std::vector<int>> locate_role_spans(const HOITriplet& triplet,
                                                   const TextEncoderPort& text);

/// Averages P x L attention into per-token H x W maps at `resolution` (pooling when
/// the latent grid is a multiple of it).
std::map<int, Grid> attention_token_maps(const RawAttention& raw, int resolution);

/// Running mean of captured maps across denoiser calls.
class AttentionAccumulator {
 public:
  explicit AttentionAccumulator(int resolution) : resolution_(resolution) {}
  void add(const RawAttention& raw);
  int count() const { return count_; }
  AttentionStack stack(const std::map<Role, std::vector<int>>& spans) const;

 private:
  int resolution_;
  int count_ = 0;
  std::map<int, Grid> sums_;
};

/// Affine steps z' = a * z + b * eps(z) recorded for backpropagation.
struct TapeStep {
  std::shared_ptr<const DenoiserCache> positive;
  std::shared_ptr<const DenoiserCache> negative;  // null without guidance
  double a = 1.0;
  double b = 0.0;
  double guidance_scale = 1.0;
};

struct GenerationTape {
  std::vector<TapeStep> steps;
  Image final_latent;
};

/// Gradient of a loss on the decoded image with respect to trainable parameters.
ParameterGrads backpropagate(const ModelBundle& bundle, const GenerationTape& tape,
                             const Image& d_image);

struct CleanEstimate {
  Image image;
  AttentionStack attention;
  Image predicted_noise;
  GenerationTape tape;
};

/// Decoded one-step estimate x0 = (z_t - sqrt(1 - abar) eps) / sqrt(abar).
CleanEstimate differentiable_generation(const ModelBundle& bundle, const Image& z_t, int timestep,
                                        const std::string& text,
                                        const std::map<Role, std::vector<int>>& spans,
                                        int attention_resolution);

inline constexpr std::string_view kTrainingNegativePrompt =
    "black and white image, extra arms, extra legs";
inline constexpr std::string_view kInferenceNegativePrompt =
    "black and white image, extra arms, extra legs, naked, poor resolution";
inline constexpr int kTrainSamplingSteps = 30;
inline constexpr int kInferenceSamplingSteps = 50;

struct SampleRequest {
  std::string prompt;
  std::string negative_prompt = std::string(kInferenceNegativePrompt);
  int steps = kInferenceSamplingSteps;
  std::uint64_t seed = 0;
  bool capture_attention = true;
  std::map<Role, std::vector<int>> spans;  // empty: no roles attached
  int attention_resolution = 16;
  int grad_tail = 0;  // number of final steps recorded on the tape
};

struct SampleResult {
  Image image;
  AttentionStack attention;
  std::vector<int> timesteps;
  GenerationTape tape;
};

/// Deterministic DDIM (eta = 0) sampling. Failures are rethrown as BackendError
/// carrying the step index.
SampleResult sample(const ModelBundle& bundle, const SampleRequest& request);

/// generate_training_image: 30-step sample with the training negative prompt.
SampleResult generate_training_image(const ModelBundle& bundle, const HOITriplet& triplet,
                                     std::uint64_t seed, int steps = kTrainSamplingSteps,
                                     int attention_resolution = 16);

/// Gaussian latent drawn from a seed (same bytes on every run).
Image seeded_noise(int channels, int height, int width, std::uint64_t seed);

struct BackendOptions {
  std::string name = "toy";           // toy | external
  std::string external_name;          // registry key for external backends
  std::uint64_t seed = 0;             // seeds the toy weights
  int latent_size = 32;
  int feature_dim = 32;
  double guidance_scale = 1.0;
};

using BackendFactory = std::function<ModelBundle(const BackendOptions&)>;

/// Name -> factory table. Shared libraries in VERBDIFF_BACKEND_DIR exporting
/// `extern "C" void verbdiff_register_backends(verbdiff::BackendRegistry&)` are
/// loaded on first lookup of an unknown name.
class BackendRegistry {
 public:
  static BackendRegistry& instance();
  void add(const std::string& name, BackendFactory factory);
  bool contains(const std::string& name) const;
  ModelBundle create(const std::string& name, const BackendOptions& options);

 private:
  void load_plugins();
  bool plugins_loaded_ = false;
  std::map<std::string, BackendFactory> factories_;
};

/// `toy` builds the desk-scale backend; `external` resolves `external_name`.
ModelBundle make_backend(const BackendOptions& options);

}  // namespace verbdiff

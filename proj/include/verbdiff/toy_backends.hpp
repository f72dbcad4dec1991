#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "verbdiff/model_adapters.hpp"

namespace verbdiff {

/// Whitespace tokenizer; every lower-cased token maps to a fixed Gaussian vector drawn
/// from a seed derived from its text. encode() mean-pools and normalizes.
class ToyTextEncoder final : public TextEncoderPort {
 public:
  ToyTextEncoder(int dim, std::uint64_t seed);
  std::string id() const override;
  int dim() const override { return dim_; }
  FeatureVector encode(const std::string& text) const override;
  std::vector<Token> tokenize(const std::string& text) const override;
  Matrix token_embeddings(const std::string& text) const override;
  Vector token_vector(const std::string& token) const;

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Average-pools each channel by `pool`, then applies a linear projection plus bias and
/// normalizes. Starts random; make_toy_backend fits it to the text encoder on a
/// synthetic caption corpus so that both encoders share one space.
class ToyImageEncoder final : public ImageEncoderPort {
 public:
  ToyImageEncoder(int channels, int size, int pool, int dim, std::uint64_t seed);
  std::string id() const override;
  int dim() const override { return dim_; }
  FeatureVector encode(const Image& image) const override;
  Image backward(const Image& image, const Vector& d_feature) const override;

  /// Refits the readout by ridge regression so that images land on their targets
  /// (unnormalized least squares on the pre-normalization feature). The random
  /// hidden layer stays fixed.
  void fit(const std::vector<Image>& images, const std::vector<Vector>& targets, double ridge);

 private:
  Vector pooled(const Image& image) const;
  Vector hidden(const Vector& pooled) const;
  void check(const Image& image) const;

  int channels_;
  int size_;
  int pool_;
  int dim_;
  std::uint64_t seed_;
  Matrix hidden_weight_;
  Vector hidden_bias_;
  Matrix projection_;
  Vector bias_;
};

/// Latent == image.
class IdentityCodec final : public LatentCodecPort {
 public:
  IdentityCodec(int channels, int size) : channels_(channels), size_(size) {}
  Image encode_image(const Image& image) const override { return image; }
  Image decode_latent(const Image& latent) const override { return latent; }
  Image decode_backward(const Image&, const Image& d_image) const override { return d_image; }
  int latent_channels() const override { return channels_; }
  int latent_size() const override { return size_; }

 private:
  int channels_;
  int size_;
};

struct ToyDenoiserShape {
  int channels = 4;
  int size = 32;
  int features = 16;
  int attention_dim = 16;
  int text_dim = 32;
};

/// conv3x3 -> tanh (+ time and position embeddings) -> one residual cross-attention
/// block -> tanh -> conv3x3, plus a fixed per-timestep shrinkage skip
/// sqrt(1 - abar) / (abar * v + 1 - abar) * z_t standing in for a pretrained prior.
/// Only the cross-attention projections (to_q, to_k, to_v, to_out) are tagged
/// trainable.
class ToyDenoiser final : public DenoiserPort {
 public:
  ToyDenoiser(const ToyDenoiserShape& shape, const NoiseSchedule& schedule, std::uint64_t seed);
  std::string id() const override { return "toy-denoiser"; }
  DenoiserOutput predict_noise(const Image& z_t, int timestep,
                               const Matrix& conditioning) const override;
  DenoiserBackward backward(const DenoiserCache& cache, const Image& d_noise,
                            bool input_gradient) const override;
  std::vector<Parameter>& parameters() override { return params_; }
  const std::vector<Parameter>& parameters() const override { return params_; }

  const ToyDenoiserShape& shape() const { return shape_; }

 private:
  const Matrix& param(std::size_t index) const { return params_[index].value; }
  Vector time_embedding(int timestep) const;
  double skip_gain(int timestep) const;

  ToyDenoiserShape shape_;
  NoiseSchedule schedule_;
  Matrix positions_;  // F x P
  std::vector<Parameter> params_;
};

/// 3x3, zero-padded, stride-1 convolution. weights: C_out x (C_in * 9).
Matrix conv3x3(const Matrix& input, const Matrix& weights, const Vector& bias, int height,
               int width);
/// Gradient of conv3x3 with respect to its input.
Matrix conv3x3_input_grad(const Matrix& d_output, const Matrix& weights, int in_channels,
                          int height, int width);

inline constexpr int kToyCorpusSize = 2000;
inline constexpr int kToyImageHidden = 512;
inline constexpr double kToyRidge = 1e-2;

ModelBundle make_toy_backend(const BackendOptions& options);

}  // namespace verbdiff

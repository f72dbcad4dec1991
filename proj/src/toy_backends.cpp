#include "verbdiff/toy_backends.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <tuple>

#include "verbdiff/synthetic.hpp"

namespace verbdiff {

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  // Fill in a fixed row-major order so the draw sequence is layout independent.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct ToyCache final : DenoiserCache {
  Matrix z;
  int timestep = 0;
  Matrix h0, h1, q, k, v, attn, mixed, h2, g, cond;
};

enum ParamIndex : std::size_t {
  kConvInWeight, kConvInBias, kToQ, kToK, kToV, kToOut, kConvOutWeight, kConvOutBias, kDataVariance
};

}  // namespace

// ---------------------------------------------------------------- text encoder

ToyTextEncoder::ToyTextEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 1) throw ConfigError("text feature dimension must be positive");
}

std::string ToyTextEncoder::id() const { return "toy-text-" + std::to_string(dim_) + "-" + hex64(seed_); }

std::vector<Token> ToyTextEncoder::tokenize(const std::string& text) const {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t begin = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > begin) tokens.push_back({text.substr(begin, i - begin), begin, i});
  }
  return tokens;
}

Vector ToyTextEncoder::token_vector(const std::string& token) const {
  std::mt19937_64 rng(derive_seed(seed_, "token:" + lower(token)));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim_)));
  Vector v(dim_);
  for (int i = 0; i < dim_; ++i) v[i] = normal(rng);
  return v;
}

Matrix ToyTextEncoder::token_embeddings(const std::string& text) const {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw DataError("cannot embed empty text");
  Matrix out(dim_, static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t i = 0; i < tokens.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = token_vector(tokens[i].text);
  return out;
}

FeatureVector ToyTextEncoder::encode(const std::string& text) const {
  return FeatureVector::unit(token_embeddings(text).rowwise().mean());
}

// --------------------------------------------------------------- image encoder

ToyImageEncoder::ToyImageEncoder(int channels, int size, int pool, int dim, std::uint64_t seed)
    : channels_(channels), size_(size), pool_(pool), dim_(dim), seed_(seed) {
  if (pool < 1 || size % pool != 0) throw ConfigError("image pool factor must divide the image size");
  const int cells = size / pool;
  const Eigen::Index inputs = static_cast<Eigen::Index>(channels) * cells * cells;
  std::mt19937_64 rng(seed);
  hidden_weight_ = gaussian(rng, kToyImageHidden, inputs, 2.0 / std::sqrt(static_cast<double>(inputs)));
  hidden_bias_ = gaussian(rng, kToyImageHidden, 1, 0.5).col(0);
  projection_ = gaussian(rng, dim, kToyImageHidden, 1.0 / std::sqrt(static_cast<double>(kToyImageHidden)));
  bias_ = gaussian(rng, dim, 1, 0.05).col(0);
}

std::string ToyImageEncoder::id() const { return "toy-image-" + std::to_string(dim_) + "-" + hex64(seed_); }

void ToyImageEncoder::check(const Image& image) const {
  if (image.channels() != channels_ || image.height() != size_ || image.width() != size_)
    throw DataError("toy image encoder expects " + std::to_string(channels_) + "x" +
                    std::to_string(size_) + "x" + std::to_string(size_) + " images");
}

Vector ToyImageEncoder::pooled(const Image& image) const {
  check(image);
  const int cells = size_ / pool_;
  Vector p = Vector::Zero(static_cast<Eigen::Index>(channels_) * cells * cells);
  const double inv = 1.0 / (pool_ * pool_);
  for (int c = 0; c < channels_; ++c)
    for (int y = 0; y < size_; ++y)
      for (int x = 0; x < size_; ++x)
        p[(c * cells + y / pool_) * cells + x / pool_] += image.at(c, y, x) * inv;
  return p;
}

Vector ToyImageEncoder::hidden(const Vector& pooled) const {
  return (hidden_weight_ * pooled + hidden_bias_).array().tanh().matrix();
}

FeatureVector ToyImageEncoder::encode(const Image& image) const {
  return FeatureVector::unit(projection_ * hidden(pooled(image)) + bias_);
}

Image ToyImageEncoder::backward(const Image& image, const Vector& d_feature) const {
  const Vector h = hidden(pooled(image));
  const Vector u = projection_ * h + bias_;
  const double norm = u.norm();
  if (!(norm > 0.0)) throw std::domain_error("zero image feature");
  const Vector f = u / norm;
  const Vector d_u = (d_feature - f * f.dot(d_feature)) / norm;
  const Vector d_pre = ((projection_.transpose() * d_u).array() * (1.0 - h.array().square())).matrix();
  const Vector d_p = hidden_weight_.transpose() * d_pre;

  const int cells = size_ / pool_;
  const double inv = 1.0 / (pool_ * pool_);
  Image out(channels_, size_, size_);
  for (int c = 0; c < channels_; ++c)
    for (int y = 0; y < size_; ++y)
      for (int x = 0; x < size_; ++x)
        out.at(c, y, x) = d_p[(c * cells + y / pool_) * cells + x / pool_] * inv;
  return out;
}

void ToyImageEncoder::fit(const std::vector<Image>& images, const std::vector<Vector>& targets,
                          double ridge) {
  if (images.size() != targets.size() || images.empty())
    throw std::invalid_argument("fit needs matching, non-empty image and target lists");
  const Eigen::Index inputs = projection_.cols();
  const auto n = static_cast<Eigen::Index>(images.size());
  Matrix x(inputs + 1, n);
  Matrix y(dim_, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.col(i).head(inputs) = hidden(pooled(images[static_cast<std::size_t>(i)]));
    x(inputs, i) = 1.0;
    y.col(i) = targets[static_cast<std::size_t>(i)];
  }
  Matrix gram = x * x.transpose();
  gram.diagonal().head(inputs).array() += ridge;
  const Matrix w = gram.ldlt().solve(x * y.transpose()).transpose();
  projection_ = w.leftCols(inputs);
  bias_ = w.col(inputs);
}

// ----------------------------------------------------------------- convolution

Matrix conv3x3(const Matrix& input, const Matrix& weights, const Vector& bias, int height,
               int width) {
  const Eigen::Index in_channels = input.rows();
  const Eigen::Index positions = static_cast<Eigen::Index>(height) * width;
  Matrix cols = Matrix::Zero(in_channels * 9, positions);
  for (Eigen::Index ci = 0; ci < in_channels; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = ci * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int x = 0; x < width; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            cols(row, y * width + x) = input(ci, sy * width + sx);
          }
        }
      }
  Matrix out = weights * cols;
  out.colwise() += bias;
  return out;
}

Matrix conv3x3_input_grad(const Matrix& d_output, const Matrix& weights, int in_channels,
                          int height, int width) {
  const Matrix d_cols = weights.transpose() * d_output;
  Matrix d_input = Matrix::Zero(in_channels, static_cast<Eigen::Index>(height) * width);
  for (int ci = 0; ci < in_channels; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = ci * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int x = 0; x < width; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            d_input(ci, sy * width + sx) += d_cols(row, y * width + x);
          }
        }
      }
  return d_input;
}

// -------------------------------------------------------------------- denoiser

ToyDenoiser::ToyDenoiser(const ToyDenoiserShape& shape, const NoiseSchedule& schedule,
                         std::uint64_t seed)
    : shape_(shape), schedule_(schedule) {
  const int f = shape.features;
  if (f % 4 != 0) throw ConfigError("toy denoiser feature count must be a multiple of 4");
  std::mt19937_64 rng(seed);
  const double conv_in_std = 1.0 / std::sqrt(shape.channels * 9.0);
  const double conv_out_std = 0.3 / std::sqrt(f * 9.0);
  params_ = {
      {"conv_in.weight", ParameterGroup::other, gaussian(rng, f, shape.channels * 9, conv_in_std)},
      {"conv_in.bias", ParameterGroup::other, Matrix::Zero(f, 1)},
      {"cross_attn.to_q", ParameterGroup::cross_attention,
       gaussian(rng, shape.attention_dim, f, 1.0 / std::sqrt(static_cast<double>(f)))},
      {"cross_attn.to_k", ParameterGroup::cross_attention,
       gaussian(rng, shape.attention_dim, shape.text_dim, 1.0)},
      {"cross_attn.to_v", ParameterGroup::cross_attention,
       gaussian(rng, f, shape.text_dim, 1.0)},
      {"cross_attn.to_out", ParameterGroup::cross_attention,
       gaussian(rng, f, f, 0.5 / std::sqrt(static_cast<double>(f)))},
      {"conv_out.weight", ParameterGroup::other, gaussian(rng, shape.channels, f * 9, conv_out_std)},
      {"conv_out.bias", ParameterGroup::other, Matrix::Zero(shape.channels, 1)},
      {"prior.data_variance", ParameterGroup::other, Matrix::Constant(1, 1, 0.5)},
  };

  const int s = shape.size;
  positions_ = Matrix::Zero(f, static_cast<Eigen::Index>(s) * s);
  const int bands = f / 4;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      for (int j = 0; j < bands; ++j) {
        const double w = std::numbers::pi * (j + 1) / s;
        const Eigen::Index p = static_cast<Eigen::Index>(y) * s + x;
        positions_(4 * j + 0, p) = 0.5 * std::sin(w * x);
        positions_(4 * j + 1, p) = 0.5 * std::cos(w * x);
        positions_(4 * j + 2, p) = 0.5 * std::sin(w * y);
        positions_(4 * j + 3, p) = 0.5 * std::cos(w * y);
      }
}

Vector ToyDenoiser::time_embedding(int timestep) const {
  const int half = shape_.features / 2;
  Vector e(shape_.features);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(1000.0) * i / half);
    e[i] = 0.5 * std::sin(timestep * freq);
    e[half + i] = 0.5 * std::cos(timestep * freq);
  }
  return e;
}

double ToyDenoiser::skip_gain(int timestep) const {
  const double abar = schedule_.alpha_bar(timestep);
  const double variance = param(kDataVariance)(0, 0);
  return std::sqrt(1.0 - abar) / (abar * variance + 1.0 - abar);
}

DenoiserOutput ToyDenoiser::predict_noise(const Image& z_t, int timestep,
                                          const Matrix& conditioning) const {
  if (z_t.channels() != shape_.channels || z_t.height() != shape_.size || z_t.width() != shape_.size)
    throw DataError("toy denoiser latent shape mismatch");
  if (conditioning.rows() != shape_.text_dim || conditioning.cols() < 1)
    throw DataError("toy denoiser conditioning must be " + std::to_string(shape_.text_dim) +
                    " x tokens");

  auto cache = std::make_shared<ToyCache>();
  const int s = shape_.size;
  cache->z = z_t.as_matrix();
  cache->timestep = timestep;
  cache->cond = conditioning;

  cache->h0 = conv3x3(cache->z, param(kConvInWeight), param(kConvInBias).col(0), s, s);
  cache->h1 = cache->h0.array().tanh().matrix() + positions_;
  cache->h1.colwise() += time_embedding(timestep);

  const double scale = 1.0 / std::sqrt(static_cast<double>(shape_.attention_dim));
  cache->q = param(kToQ) * cache->h1;
  cache->k = param(kToK) * conditioning;
  cache->v = param(kToV) * conditioning;
  Matrix scores = (cache->q.transpose() * cache->k) * scale;  // P x L
  Eigen::VectorXd row_max = scores.rowwise().maxCoeff();
  scores.colwise() -= row_max;
  cache->attn = scores.array().exp().matrix();
  Eigen::VectorXd row_sum = cache->attn.rowwise().sum();
  for (Eigen::Index p = 0; p < cache->attn.rows(); ++p) cache->attn.row(p) /= row_sum[p];

  cache->mixed = cache->v * cache->attn.transpose();  // F x P
  cache->h2 = cache->h1 + param(kToOut) * cache->mixed;
  cache->g = cache->h2.array().tanh().matrix();

  Matrix eps = conv3x3(cache->g, param(kConvOutWeight), param(kConvOutBias).col(0), s, s) +
               skip_gain(timestep) * cache->z;

  DenoiserOutput out;
  out.noise = image_from_matrix(eps, s, s);
  out.attention = {s, s, cache->attn};
  out.cache = std::move(cache);
  return out;
}

DenoiserBackward ToyDenoiser::backward(const DenoiserCache& base, const Image& d_noise,
                                       bool input_gradient) const {
  const auto* cache = dynamic_cast<const ToyCache*>(&base);
  if (cache == nullptr) throw BackendError("toy denoiser received a foreign cache");
  const int s = shape_.size;
  const Matrix d_eps = d_noise.as_matrix();

  const Matrix d_g = conv3x3_input_grad(d_eps, param(kConvOutWeight), shape_.features, s, s);
  const Matrix d_h2 = (d_g.array() * (1.0 - cache->g.array().square())).matrix();

  DenoiserBackward out;
  out.grads["cross_attn.to_out"] = d_h2 * cache->mixed.transpose();
  const Matrix d_mixed = param(kToOut).transpose() * d_h2;             // F x P
  const Matrix d_v = d_mixed * cache->attn;                             // F x L
  const Matrix d_attn = d_mixed.transpose() * cache->v;                 // P x L
  const Eigen::VectorXd dot = (d_attn.array() * cache->attn.array()).rowwise().sum();
  Matrix d_scores = cache->attn.array() * (d_attn.colwise() - dot).array();
  const double scale = 1.0 / std::sqrt(static_cast<double>(shape_.attention_dim));
  d_scores *= scale;
  const Matrix d_q = cache->k * d_scores.transpose();  // d x P
  const Matrix d_k = cache->q * d_scores;              // d x L

  out.grads["cross_attn.to_q"] = d_q * cache->h1.transpose();
  out.grads["cross_attn.to_k"] = d_k * cache->cond.transpose();
  out.grads["cross_attn.to_v"] = d_v * cache->cond.transpose();

  if (input_gradient) {
    const Matrix d_h1 = d_h2 + param(kToQ).transpose() * d_q;
    const Matrix d_h0 = (d_h1.array() * (1.0 - cache->h0.array().tanh().square())).matrix();
    Matrix d_z = conv3x3_input_grad(d_h0, param(kConvInWeight), shape_.channels, s, s) +
                 skip_gain(cache->timestep) * d_eps;
    out.d_input = image_from_matrix(d_z, s, s);
  }
  return out;
}

namespace {

// Fits are cached: every bundle with the same options shares one encoder.
std::shared_ptr<const ToyImageEncoder> fitted_image_encoder(const TextEncoderPort& text, int channels,
                                                            const BackendOptions& options,
                                                            std::uint64_t seed) {
  static std::mutex mutex;
  static std::map<std::tuple<std::uint64_t, int, int>, std::shared_ptr<const ToyImageEncoder>> cache;
  const auto key = std::make_tuple(seed, options.latent_size, options.feature_dim);
  std::lock_guard lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  auto encoder = std::make_shared<ToyImageEncoder>(channels, options.latent_size, 4, options.feature_dim, seed);
  std::vector<Image> images;
  std::vector<Vector> targets;
  for (const auto& record : synthetic_caption_corpus(kToyCorpusSize, derive_seed(seed, "corpus"))) {
    const HOIPair& pair = record.pairs.front();
    const Image full = render_synthetic_image(record, options.latent_size);
    const Vector target = text.encode(render_prompt(pair.triplet)).values;
    const Grid mask = interaction_mask(record, pair.triplet, options.latent_size, options.latent_size);
    const InteractionRegion region = gt_interaction_region(pair.human_box, pair.object_box);
    for (Image view : {full, apply_mask(full, mask), crop_region(full, region)}) {
      images.push_back(std::move(view));
      targets.push_back(target);
    }
  }
  encoder->fit(images, targets, kToyRidge);
  cache.emplace(key, encoder);
  return encoder;
}

}  // namespace

ModelBundle make_toy_backend(const BackendOptions& options) {
  ModelBundle bundle;
  bundle.backend = "toy";
  bundle.guidance_scale = options.guidance_scale;
  constexpr int kChannels = 4;
  bundle.text = std::make_shared<ToyTextEncoder>(options.feature_dim, derive_seed(options.seed, "toy-text"));
  bundle.image = fitted_image_encoder(*bundle.text, kChannels, options, derive_seed(options.seed, "toy-image"));
  bundle.codec = std::make_shared<IdentityCodec>(kChannels, options.latent_size);
  ToyDenoiserShape shape;
  shape.channels = kChannels;
  shape.size = options.latent_size;
  shape.text_dim = options.feature_dim;
  bundle.denoiser = std::make_shared<ToyDenoiser>(shape, bundle.schedule,
                                                  derive_seed(options.seed, "toy-denoiser"));
  return bundle;
}

}  // namespace verbdiff

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "verbdiff/guidance_losses.hpp"
#include "verbdiff/hoi_data.hpp"
#include "verbdiff/model_adapters.hpp"

namespace verbdiff {

enum class GradientMode { one_step, last_steps };
std::string to_string(GradientMode mode);
GradientMode parse_gradient_mode(const std::string& text);

/// Training configuration. Serializes to `key = value` lines (TOML subset) with one
/// key per field, in declaration order.
struct TrainConfig {
  double lambda_rec = 1.0;
  double lambda_rdg = 10.0;
  double lambda_idg = 0.8;
  double margin = 0.2;
  double learning_rate = 4e-6;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 12;
  int epochs = 1;
  int max_steps = 0;  // 0: no cap
  int train_sampling_steps = kTrainSamplingSteps;
  int inference_steps = kInferenceSamplingSteps;
  BalanceMode balance_mode = BalanceMode::as_written;
  TripletSign triplet_sign = TripletSign::as_prose;
  double region_exponent = 1.0;
  int attention_resolution = 16;
  double min_extent = 0.05;
  GradientMode gradient_mode = GradientMode::one_step;
  int grad_tail_steps = 1;
  int gen_every = 1;
  bool log_generation = true;
  bool log_wall_time = false;
  int checkpoint_every = 100;
  std::uint64_t seed = 0;
  std::string backend = "toy";
  std::string external_backend;
  int latent_size = 32;
  int feature_dim = 32;
  double guidance_scale = 1.0;
  std::string data_dir;
  std::string image_dir;  // empty: render synthetic images from the annotations

  LossWeights weights() const { return {lambda_rec, lambda_rdg, lambda_idg}; }
  RegionOptions region() const { return {region_exponent, min_extent}; }
  BackendOptions backend_options() const;

  /// Throws ConfigError on a violated invariant.
  void validate() const;

  /// Hash of the fields that determine model weights and shapes; checkpoints carry it.
  std::string model_hash() const;

  std::string to_toml() const;
  static TrainConfig from_toml(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Applies one `key=value` override (same syntax as a file line).
  void set(const std::string& key, const std::string& value);
  /// Unquoted text of one field, as `set` would accept it.
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace verbdiff

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "verbdiff/checkpoint.hpp"
#include "verbdiff/guidance_losses.hpp"
#include "verbdiff/hoi_data.hpp"
#include "verbdiff/model_adapters.hpp"
#include "verbdiff/synthetic.hpp"
#include "verbdiff/train_config.hpp"

namespace verbdiff {

/// One (real image, mask, triplet) item with its prompts and class weight.
struct TrainingSample {
  std::string image_id;
  Image image;
  Grid mask;
  HOITriplet triplet;
  std::string prompt;
  std::string anchor_prompt;
  double alpha = 1.0;
  InteractionRegion gt_region;
};

/// Expands every kept prompt into one sample per listed image, ordered by
/// (prompt text, image id). Images must match the codec's latent size.
std::vector<TrainingSample> build_dataset(const std::vector<AnnotationRecord>& records,
                                          const std::vector<PromptRecord>& prompts,
                                          const AnchorTable& anchors, const BalanceTable& balance,
                                          const ImageSource& images, int size,
                                          const RegionOptions& region = {});

struct TrainStepRecord {
  int step = 0;  // 1-based
  LossBreakdown breakdown;
  std::vector<std::string> prompts;
  std::vector<std::string> anchor_prompts;
  std::vector<double> alphas;
  int idg_degenerate = 0;
  bool guidance = true;
  std::optional<double> gen_sim_gap;
  std::optional<double> wall_ms;

  nlohmann::json to_json() const;
  static TrainStepRecord from_json(const nlohmann::json& j);
};

/// Adam over the cross-attention parameters only.
class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate, double beta1, double beta2, double epsilon)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  /// Throws std::logic_error if `grads` names a frozen parameter.
  void apply(DenoiserPort& denoiser, const ParameterGrads& grads);

  std::uint64_t steps() const { return t_; }
  Checkpoint state(const std::string& config_hash) const;
  void restore(const Checkpoint& state);

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::uint64_t t_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

/// Holds the model and optimizer for one run.
class Trainer {
 public:
  Trainer(TrainConfig config, ModelBundle bundle);

  const TrainConfig& config() const { return config_; }
  ModelBundle& bundle() { return bundle_; }
  const ModelBundle& bundle() const { return bundle_; }
  AdamOptimizer& optimizer() { return optimizer_; }

  /// One optimizer update on `batch`; `step` is the 1-based global step and seeds all
  /// per-item noise. Port failures are rethrown with the step and image id.
  TrainStepRecord train_step(const std::vector<TrainingSample>& batch, int step);

  /// Batch-mean loss and parameter gradients of train_step, without the update.
  std::pair<TrainStepRecord, ParameterGrads> gradients(const std::vector<TrainingSample>& batch,
                                                       int step) const;

 private:
  struct ItemResult {
    ObjectiveGrad objective;
    ParameterGrads grads;
    std::optional<double> gen_sim_gap;
  };
  ItemResult run_item(const TrainingSample& item, int step, std::size_t index, bool guidance) const;

  TrainConfig config_;
  ModelBundle bundle_;
  AdamOptimizer optimizer_;
};

struct RunOptions {
  std::filesystem::path run_dir;
  bool resume = false;
  int stop_after = 0;  // > 0: stop after this many steps in this invocation
};

struct RunSummary {
  int steps_run = 0;
  int final_step = 0;
  int total_steps = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  std::uint64_t frozen_before = 0;
  std::uint64_t frozen_after = 0;
  std::vector<TrainStepRecord> records;  // this invocation only
};

inline constexpr const char* kCheckpointFile = "checkpoint.vdck";
inline constexpr const char* kOptimizerFile = "trainer_state.vdck";
inline constexpr const char* kMetricsFile = "metrics.jsonl";

/// Number of optimizer steps a full run takes.
int planned_steps(const TrainConfig& config, std::size_t dataset_size);

/// Trains over shuffled epochs, appending one JSON line per step to metrics.jsonl and
/// checkpointing every `checkpoint_every` steps and at the end. With `resume`, state is
/// restored from the run directory and the log is cut back to the checkpointed step.
RunSummary run(Trainer& trainer, const std::vector<TrainingSample>& dataset,
               const RunOptions& options);

std::vector<TrainStepRecord> read_metrics(const std::filesystem::path& path);

/// Mean over classes of sim(f_gen, e_gt) - sim(f_gen, e_anc) on images sampled with
/// fixed per-class seeds.
struct GapProbe {
  double mean_gap = 0.0;
  std::map<std::string, double> per_class;
};
GapProbe disentanglement_gap(const ModelBundle& bundle, const std::vector<PromptRecord>& prompts,
                             const AnchorTable& anchors, int steps, std::uint64_t seed,
                             int samples_per_class = 2);

}  // namespace verbdiff

#include "verbdiff/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace verbdiff {

namespace {

Grid resize_nearest(const Grid& mask, int height, int width) {
  if (mask.height() == height && mask.width() == width) return mask;
  Grid out(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      out(r, c) = mask(r * mask.height() / height, c * mask.width() / width);
  return out;
}

void add_into(ParameterGrads& total, const ParameterGrads& part, double weight) {
  for (const auto& [name, g] : part) {
    auto it = total.find(name);
    if (it == total.end())
      total.emplace(name, weight * g);
    else
      it->second += weight * g;
  }
}

std::string step_context(int step, const std::string& image_id) {
  return "train step " + std::to_string(step) + " (image " + image_id + "): ";
}

}  // namespace

std::vector<TrainingSample> build_dataset(const std::vector<AnnotationRecord>& records,
                                          const std::vector<PromptRecord>& prompts,
                                          const AnchorTable& anchors, const BalanceTable& balance,
                                          const ImageSource& images, int size,
                                          const RegionOptions& region) {
  std::map<std::string, const AnnotationRecord*> by_id;
  for (const auto& r : records) by_id[r.image_id] = &r;
  std::map<std::string, Image> cache;

  std::vector<TrainingSample> out;
  for (const auto& prompt : prompts) {
    const double alpha = balance.alpha(prompt.triplet);
    const std::string anchor = anchor_prompt(prompt.triplet, anchors);
    std::vector<std::string> ids = prompt.image_ids;
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("prompt '" + prompt.text + "' lists unknown image " + id);
      const AnnotationRecord& record = *it->second;
      auto img = cache.find(id);
      if (img == cache.end()) img = cache.emplace(id, images.load(record)).first;
      if (img->second.height() != size || img->second.width() != size)
        throw DataError("image " + id + " is " + std::to_string(img->second.height()) + "x" +
                        std::to_string(img->second.width()) + ", expected " + std::to_string(size) +
                        "x" + std::to_string(size));
      const HOIPair& pair = find_pair(record, prompt.triplet);
      TrainingSample s;
      s.image_id = id;
      s.image = img->second;
      s.mask = interaction_mask(record, prompt.triplet, size, size);
      s.triplet = prompt.triplet;
      s.prompt = prompt.text;
      s.anchor_prompt = anchor;
      s.alpha = alpha;
      s.gt_region = gt_interaction_region(pair.human_box, pair.object_box, region);
      out.push_back(std::move(s));
    }
  }
  return out;
}

nlohmann::json TrainStepRecord::to_json() const {
  nlohmann::json j = {{"step", step},
                      {"rec", breakdown.rec},
                      {"triple", breakdown.triple},
                      {"align", breakdown.align},
                      {"rdg", breakdown.rdg},
                      {"idg", breakdown.idg},
                      {"total", breakdown.total},
                      {"alpha_used", breakdown.alpha_used},
                      {"prompts", prompts},
                      {"anchor_prompts", anchor_prompts},
                      {"alphas", alphas},
                      {"idg_degenerate", idg_degenerate},
                      {"guidance", guidance}};
  if (gen_sim_gap) j["gen_sim_gap"] = *gen_sim_gap;
  if (wall_ms) j["wall_ms"] = *wall_ms;
  return j;
}

TrainStepRecord TrainStepRecord::from_json(const nlohmann::json& j) {
  TrainStepRecord r;
  r.step = j.at("step").get<int>();
  r.breakdown.rec = j.at("rec").get<double>();
  r.breakdown.triple = j.at("triple").get<double>();
  r.breakdown.align = j.at("align").get<double>();
  r.breakdown.rdg = j.at("rdg").get<double>();
  r.breakdown.idg = j.at("idg").get<double>();
  r.breakdown.total = j.at("total").get<double>();
  r.breakdown.alpha_used = j.at("alpha_used").get<double>();
  r.prompts = j.at("prompts").get<std::vector<std::string>>();
  r.anchor_prompts = j.at("anchor_prompts").get<std::vector<std::string>>();
  r.alphas = j.at("alphas").get<std::vector<double>>();
  r.idg_degenerate = j.at("idg_degenerate").get<int>();
  r.guidance = j.at("guidance").get<bool>();
  if (j.contains("gen_sim_gap")) r.gen_sim_gap = j["gen_sim_gap"].get<double>();
  if (j.contains("wall_ms")) r.wall_ms = j["wall_ms"].get<double>();
  return r;
}

void AdamOptimizer::apply(DenoiserPort& denoiser, const ParameterGrads& grads) {
  for (const auto& [name, g] : grads) {
    auto p = std::find_if(denoiser.parameters().begin(), denoiser.parameters().end(),
                          [&](const Parameter& q) { return q.name == name; });
    if (p == denoiser.parameters().end()) throw std::logic_error("gradient for unknown parameter " + name);
    if (p->group != ParameterGroup::cross_attention)
      throw std::logic_error("optimizer received a gradient for frozen parameter " + name);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& p : denoiser.parameters()) {
    auto it = grads.find(p.name);
    if (it == grads.end()) continue;
    const Matrix& g = it->second;
    Matrix& m = m_.try_emplace(p.name, Matrix::Zero(g.rows(), g.cols())).first->second;
    Matrix& v = v_.try_emplace(p.name, Matrix::Zero(g.rows(), g.cols())).first->second;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    p.value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon_);
  }
}

Checkpoint AdamOptimizer::state(const std::string& config_hash) const {
  Checkpoint ck;
  ck.config_hash = config_hash;
  ck.step = t_;
  for (const auto& [name, m] : m_) ck.tensors.push_back({"m/" + name, m});
  for (const auto& [name, v] : v_) ck.tensors.push_back({"v/" + name, v});
  return ck;
}

void AdamOptimizer::restore(const Checkpoint& state) {
  t_ = state.step;
  m_.clear();
  v_.clear();
  for (const auto& t : state.tensors) {
    if (t.name.rfind("m/", 0) == 0)
      m_[t.name.substr(2)] = t.value;
    else if (t.name.rfind("v/", 0) == 0)
      v_[t.name.substr(2)] = t.value;
    else
      throw DataError("unexpected optimizer tensor '" + t.name + "'");
  }
}

Trainer::Trainer(TrainConfig config, ModelBundle bundle)
    : config_(std::move(config)),
      bundle_(std::move(bundle)),
      optimizer_(config_.learning_rate, config_.adam_beta1, config_.adam_beta2, config_.adam_epsilon) {
  config_.validate();
  if (!bundle_.denoiser || !bundle_.text || !bundle_.image || !bundle_.codec)
    throw ConfigError("model bundle is incomplete");
  trainable_parameter_filter(*bundle_.denoiser);
}

Trainer::ItemResult Trainer::run_item(const TrainingSample& item, int step, std::size_t index,
                                      bool guidance) const {
  const ModelBundle& b = bundle_;
  const int channels = b.codec->latent_channels();
  const int size = b.codec->latent_size();
  std::mt19937_64 rng(derive_seed(config_.seed, "step/" + std::to_string(step) + "/" +
                                                    std::to_string(index)));
  const int t = static_cast<int>(rng() % static_cast<std::uint64_t>(b.schedule.steps()));
  const Image noise = seeded_noise(channels, size, size, rng());
  const std::uint64_t gen_seed = rng();

  const Image z0 = b.codec->encode_image(item.image);
  const double abar = b.schedule.alpha_bar(t);
  Image z_t(channels, size, size);
  z_t.as_matrix() = std::sqrt(abar) * z0.as_matrix() + std::sqrt(1.0 - abar) * noise.as_matrix();

  const auto spans = locate_role_spans(item.triplet, *b.text);
  const int res = config_.attention_resolution;

  // Reconstruction pass (shared with the one-step estimate).
  Image predicted;
  std::shared_ptr<const DenoiserCache> rec_cache;
  Image generated;
  AttentionStack attention;
  GenerationTape tape;
  if (config_.gradient_mode == GradientMode::one_step) {
    CleanEstimate est = differentiable_generation(b, z_t, t, item.prompt, spans, res);
    predicted = std::move(est.predicted_noise);
    rec_cache = est.tape.steps.front().positive;
    generated = std::move(est.image);
    attention = std::move(est.attention);
    tape = std::move(est.tape);
  } else {
    DenoiserOutput out = b.denoiser->predict_noise(z_t, t, b.text->token_embeddings(item.prompt));
    predicted = std::move(out.noise);
    rec_cache = out.cache;
    if (guidance) {
      SampleRequest request;
      request.prompt = item.prompt;
      request.negative_prompt = std::string(kTrainingNegativePrompt);
      request.steps = config_.train_sampling_steps;
      request.seed = gen_seed;
      request.spans = spans;
      request.attention_resolution = res;
      request.grad_tail = config_.grad_tail_steps;
      SampleResult s = sample(b, request);
      generated = std::move(s.image);
      attention = std::move(s.attention);
      tape = std::move(s.tape);
    }
  }

  ObjectiveInputs in;
  in.noise = noise;
  in.predicted_noise = predicted;
  in.mask = resize_nearest(item.mask, size, size);
  in.alpha = item.alpha;
  in.margin = config_.margin;
  in.sign = config_.triplet_sign;
  in.guidance = guidance;

  Image crop_gen;
  Grid crop_mask;
  if (guidance) {
    in.f_gen = b.image->encode(generated).values;
    in.e_gt = b.text->encode(item.prompt).values;
    in.e_anc = b.text->encode(item.anchor_prompt).values;
    in.f_gt_masked = b.image->encode(apply_mask(item.image, item.mask)).values;
    in.f_rel_gt = b.image->encode(crop_region(item.image, item.gt_region)).values;
    try {
      const RegionExtraction region = extract_region(attention, config_.region());
      crop_gen = crop_region(generated, region.region);
      crop_mask = rasterize_box(region.region.clipped_box, generated.height(), generated.width());
      in.f_rel_gen = b.image->encode(crop_gen).values;
    } catch (const DegenerateError&) {
      // No usable attention: the direction term switches off for this item.
      in.f_rel_gen = in.f_rel_gt;
    }
  }

  ItemResult result;
  result.objective = objective_with_grad(in, config_.weights());
  const ObjectiveGrad& g = result.objective;

  auto rec_back = b.denoiser->backward(*rec_cache, g.d_predicted_noise, false);
  result.grads = std::move(rec_back.grads);

  if (guidance) {
    Image d_generated = b.image->backward(generated, g.d_f_gen);
    if (crop_gen.size() > 0 && g.d_f_rel_gen.norm() > 0.0) {
      Image d_crop = b.image->backward(crop_gen, g.d_f_rel_gen);
      d_generated.as_matrix() += apply_mask(d_crop, crop_mask).as_matrix();
    }
    add_into(result.grads, backpropagate(b, tape, d_generated), 1.0);
    if (config_.log_generation)
      result.gen_sim_gap = cosine_sim(in.f_gen, in.e_gt) - cosine_sim(in.f_gen, in.e_anc);
  }
  return result;
}

TrainStepRecord Trainer::train_step(const std::vector<TrainingSample>& batch, int step) {
  const auto start = std::chrono::steady_clock::now();
  auto [record, grads] = gradients(batch, step);
  optimizer_.apply(*bundle_.denoiser, grads);
  if (config_.log_wall_time)
    record.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return record;
}

std::pair<TrainStepRecord, ParameterGrads> Trainer::gradients(const std::vector<TrainingSample>& batch,
                                                              int step) const {
  if (batch.empty()) throw std::invalid_argument("train_step needs a non-empty batch");
  const bool guidance = (step - 1) % config_.gen_every == 0 &&
                        (config_.lambda_rdg > 0.0 || config_.lambda_idg > 0.0);

  TrainStepRecord record;
  record.step = step;
  record.guidance = guidance;
  ParameterGrads grads;
  const double inv = 1.0 / static_cast<double>(batch.size());
  double rec = 0, triple = 0, align = 0, rdg_sum = 0, idg_sum = 0, gap = 0, alpha_sum = 0;
  bool have_gap = false;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainingSample& item = batch[i];
    ItemResult r;
    try {
      r = run_item(item, step, i, guidance);
    } catch (const BackendError& e) {
      throw BackendError(step_context(step, item.image_id) + e.what());
    } catch (const DataError& e) {
      throw DataError(step_context(step, item.image_id) + e.what());
    }
    const LossBreakdown& lb = r.objective.breakdown;
    rec += lb.rec;
    triple += lb.triple;
    align += lb.align;
    rdg_sum += lb.rdg;
    idg_sum += lb.idg;
    alpha_sum += item.alpha;
    if (r.objective.idg_degenerate) ++record.idg_degenerate;
    if (r.gen_sim_gap) {
      gap += *r.gen_sim_gap;
      have_gap = true;
    }
    add_into(grads, r.grads, inv);
    record.prompts.push_back(item.prompt);
    record.anchor_prompts.push_back(item.anchor_prompt);
    record.alphas.push_back(item.alpha);
  }

  LossBreakdown& lb = record.breakdown;
  lb.rec = rec * inv;
  lb.triple = triple * inv;
  lb.align = align * inv;
  lb.rdg = rdg_sum * inv;
  lb.idg = idg_sum * inv;
  lb.total = weighted_total(lb.rec, lb.rdg, lb.idg, config_.weights());
  // Per-item alphas are applied before averaging; report the effective batch weight.
  const double base = lb.triple + lb.align;
  lb.alpha_used = base > 0.0 ? lb.rdg / base : alpha_sum * inv;
  if (have_gap) record.gen_sim_gap = gap * inv;
  return {std::move(record), std::move(grads)};
}

int planned_steps(const TrainConfig& config, std::size_t dataset_size) {
  if (dataset_size == 0) return 0;
  const auto per_epoch = static_cast<int>((dataset_size + static_cast<std::size_t>(config.batch_size) - 1) /
                                          static_cast<std::size_t>(config.batch_size));
  const int total = per_epoch * config.epochs;
  return config.max_steps > 0 ? std::min(total, config.max_steps) : total;
}

std::vector<TrainStepRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("metrics log not found: " + path.string());
  std::vector<TrainStepRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(TrainStepRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

namespace {

// Keeps the first `keep_steps` lines of the metrics log.
void truncate_metrics(const std::filesystem::path& path, int keep_steps) {
  std::vector<std::string> kept;
  if (std::ifstream in(path); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (nlohmann::json::parse(line).at("step").get<int>() > keep_steps) break;
      kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& l : kept) out << l << '\n';
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "shuffle/" + std::to_string(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

}  // namespace

RunSummary run(Trainer& trainer, const std::vector<TrainingSample>& dataset,
               const RunOptions& options) {
  const TrainConfig& config = trainer.config();
  DenoiserPort& denoiser = *trainer.bundle().denoiser;
  RunSummary summary;
  summary.total_steps = planned_steps(config, dataset.size());
  summary.checkpoint = options.run_dir / kCheckpointFile;
  summary.metrics = options.run_dir / kMetricsFile;
  summary.frozen_before = parameter_checksum(denoiser, ParameterGroup::other);
  summary.frozen_after = summary.frozen_before;
  if (summary.total_steps == 0) return summary;

  std::filesystem::create_directories(options.run_dir);
  const std::string hash = config.model_hash();
  const auto optimizer_path = options.run_dir / kOptimizerFile;

  int start = 0;
  if (options.resume && std::filesystem::exists(summary.checkpoint)) {
    const Checkpoint ck = load_checkpoint(summary.checkpoint);
    if (ck.config_hash != hash)
      throw ConfigError("checkpoint model hash " + ck.config_hash + " does not match config " + hash);
    restore_trainable(denoiser, ck);
    trainer.optimizer().restore(load_checkpoint(optimizer_path));
    start = static_cast<int>(ck.step);
  }
  truncate_metrics(summary.metrics, start);
  summary.final_step = start;

  auto save = [&](int step) {
    save_checkpoint(summary.checkpoint, capture_trainable(denoiser, hash, static_cast<std::uint64_t>(step)));
    save_checkpoint(optimizer_path, trainer.optimizer().state(hash));
  };

  std::ofstream log(summary.metrics, std::ios::app);
  if (!log) throw DataError("cannot write " + summary.metrics.string());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  int step = 0;
  bool stopped = false;
  for (int epoch = 0; step < summary.total_steps && !stopped; ++epoch) {
    const auto order = epoch_order(dataset.size(), config.seed, epoch);
    for (std::size_t first = 0; first < order.size() && step < summary.total_steps; first += batch) {
      ++step;
      if (step <= start) continue;
      std::vector<TrainingSample> items;
      for (std::size_t k = first; k < std::min(first + batch, order.size()); ++k)
        items.push_back(dataset[order[k]]);
      TrainStepRecord record = trainer.train_step(items, step);
      log << record.to_json().dump() << '\n';
      log.flush();
      summary.records.push_back(std::move(record));
      summary.final_step = step;
      ++summary.steps_run;
      if (step % config.checkpoint_every == 0) save(step);
      if (options.stop_after > 0 && summary.steps_run >= options.stop_after) {
        stopped = true;
        break;
      }
    }
  }
  if (summary.final_step % config.checkpoint_every != 0 || summary.steps_run == 0) save(summary.final_step);

  summary.frozen_after = parameter_checksum(denoiser, ParameterGroup::other);
  if (summary.frozen_after != summary.frozen_before)
    throw std::logic_error("frozen parameters changed during training");
  return summary;
}

GapProbe disentanglement_gap(const ModelBundle& bundle, const std::vector<PromptRecord>& prompts,
                             const AnchorTable& anchors, int steps, std::uint64_t seed,
                             int samples_per_class) {
  GapProbe probe;
  if (prompts.empty()) return probe;
  double total = 0.0;
  for (const auto& prompt : prompts) {
    const Vector e_gt = bundle.text->encode(prompt.text).values;
    const Vector e_anc = bundle.text->encode(anchor_prompt(prompt.triplet, anchors)).values;
    double sum = 0.0;
    for (int k = 0; k < samples_per_class; ++k) {
      SampleRequest request;
      request.prompt = prompt.text;
      request.negative_prompt = std::string(kTrainingNegativePrompt);
      request.steps = steps;
      request.seed = derive_seed(seed, "probe/" + prompt.text + "/" + std::to_string(k));
      request.capture_attention = false;
      const Vector f = bundle.image->encode(sample(bundle, request).image).values;
      sum += cosine_sim(f, e_gt) - cosine_sim(f, e_anc);
    }
    const double gap = sum / samples_per_class;
    probe.per_class[prompt.text] = gap;
    total += gap;
  }
  probe.mean_gap = total / static_cast<double>(prompts.size());
  return probe;
}

}  // namespace verbdiff

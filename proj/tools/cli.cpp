#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "verbdiff/checkpoint.hpp"
#include "verbdiff/eval_harness.hpp"
#include "verbdiff/external_backends.hpp"
#include "verbdiff/hoi_data.hpp"
#include "verbdiff/image_io.hpp"
#include "verbdiff/model_adapters.hpp"
#include "verbdiff/synthetic.hpp"
#include "verbdiff/toy_eval_ports.hpp"
#include "verbdiff/train_config.hpp"
#include "verbdiff/trainer.hpp"

namespace verbdiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr const char* kPromptsFile = "prompts.jsonl";
constexpr const char* kExcludedFile = "excluded.jsonl";
constexpr const char* kTablesFile = "tables.json";
constexpr const char* kAnnotationsFile = "annotations.jsonl";
constexpr const char* kSummaryFile = "summary.json";
constexpr const char* kLockFile = "config.lock";

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) {
    const auto b = cur.find_first_not_of(' ');
    const auto e = cur.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

HOITriplet parse_triplet(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw UsageError("--triplet expects 'human,verb,object', got '" + text + "'");
  return {parts[0], parts[1], parts[2]};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + " not found");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + " not found");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

struct PreparedData {
  std::vector<AnnotationRecord> records;
  std::vector<PromptRecord> prompts;
  AnchorTable anchors;
  BalanceTable balance;
};

PreparedData load_prepared(const fs::path& dir) {
  for (const char* f : {kPromptsFile, kTablesFile, kAnnotationsFile})
    if (!fs::exists(dir / f))
      throw DataError((dir / f).string() + " is missing; run `verbdiff prep-data --annotations <file> --out " +
                      dir.string() + "` first");
  PreparedData data;
  data.records = load_annotations(dir / kAnnotationsFile).records;
  data.prompts = read_prompts(dir / kPromptsFile);
  tables_from_json(read_json(dir / kTablesFile), data.anchors, data.balance);
  return data;
}

// Model state for generate / extract-regions: config.lock and checkpoint of a run
// directory, or an explicit config with an optional checkpoint.
struct LoadedModel {
  TrainConfig config;
  ModelBundle bundle;
  std::optional<Checkpoint> checkpoint;
  fs::path checkpoint_path;
};

LoadedModel load_model(const std::string& run_dir, const std::string& config_path,
                       const std::string& checkpoint_path) {
  LoadedModel m;
  fs::path ck = checkpoint_path;
  if (!run_dir.empty()) {
    m.config = TrainConfig::load(fs::path(run_dir) / kLockFile);
    if (ck.empty()) ck = fs::path(run_dir) / kCheckpointFile;
  } else if (!config_path.empty()) {
    m.config = TrainConfig::load(config_path);
  }
  m.config.validate();
  m.bundle = make_backend(m.config.backend_options());
  if (!ck.empty()) {
    Checkpoint loaded = load_checkpoint(ck);
    const std::string expected = m.config.model_hash();
    if (loaded.config_hash != expected)
      throw BackendError("checkpoint " + ck.string() + " was trained with model hash " + loaded.config_hash +
                         " but the configured backend has hash " + expected);
    restore_trainable(*m.bundle.denoiser, loaded);
    m.checkpoint = std::move(loaded);
    m.checkpoint_path = ck;
  }
  return m;
}

// ---- prep-data -------------------------------------------------------------

struct PrepArgs {
  std::string annotations;
  std::string out;
  std::string format = "jsonl";
  std::string verb_names;
  std::string object_names;
  std::string balance_mode = to_string(TrainConfig{}.balance_mode);
};

CommandResult cmd_prep_data(const PrepArgs& a) {
  LoadResult loaded;
  if (a.format == "jsonl") {
    loaded = load_annotations(a.annotations);
  } else if (a.format == "qpic") {
    if (a.verb_names.empty() || a.object_names.empty())
      throw UsageError("--format qpic needs --verb-names and --object-names");
    loaded.records = convert_qpic_annotations(read_json(a.annotations), read_lines(a.verb_names),
                                              read_lines(a.object_names));
    std::sort(loaded.records.begin(), loaded.records.end(),
              [](const auto& x, const auto& y) { return x.image_id < y.image_id; });
  } else {
    throw UsageError("--format must be jsonl or qpic");
  }
  const BalanceMode mode = parse_balance_mode(a.balance_mode);
  const Realignment re = realign(loaded.records);
  if (re.prompts.empty()) throw DataError("no usable prompts in " + a.annotations);
  const AnchorTable anchors = build_anchor_table(re.prompts);
  const BalanceTable balance = build_balance_table(re.prompts, mode);

  const fs::path out(a.out);
  fs::create_directories(out);
  write_annotations(out / kAnnotationsFile, loaded.records);
  write_prompts(out / kPromptsFile, re.prompts);
  write_prompts(out / kExcludedFile, re.excluded);
  write_text(out / kTablesFile, tables_to_json(anchors, balance).dump(2) + "\n");

  std::set<std::string> kept_images, all_images;
  for (const auto& p : re.prompts) kept_images.insert(p.image_ids.begin(), p.image_ids.end());
  for (const auto& r : loaded.records) all_images.insert(r.image_id);
  const json summary = {{"records", loaded.records.size()},
                        {"rejected_records", loaded.rejected},
                        {"prompts_kept", re.prompts.size()},
                        {"prompts_excluded", re.excluded.size()},
                        {"images_kept", kept_images.size()},
                        {"images_total", all_images.size()},
                        {"balance_mode", to_string(mode)}};
  write_text(out / kSummaryFile, summary.dump(2) + "\n");

  CommandResult r;
  r.artifacts = {out / kAnnotationsFile, out / kPromptsFile, out / kExcludedFile, out / kTablesFile,
                 out / kSummaryFile};
  std::ostringstream s;
  s << "prompts kept: " << re.prompts.size() << ", excluded: " << re.excluded.size()
    << ", images kept: " << kept_images.size() << " of " << all_images.size()
    << ", rejected records: " << loaded.rejected;
  for (const auto& w : loaded.warnings) s << "\nwarning: " << w;
  r.summary = s.str();
  return r;
}

// ---- anchors ---------------------------------------------------------------

struct AnchorArgs {
  std::string data;
  std::string object;
  std::string balance_mode = to_string(TrainConfig{}.balance_mode);
};

CommandResult cmd_anchors(const AnchorArgs& a) {
  const fs::path dir(a.data);
  const auto prompts = read_prompts(dir / kPromptsFile);
  if (prompts.empty()) throw DataError("no prompts in " + (dir / kPromptsFile).string());
  const AnchorTable anchors = build_anchor_table(prompts);
  const BalanceTable balance = build_balance_table(prompts, parse_balance_mode(a.balance_mode));
  write_text(dir / kTablesFile, tables_to_json(anchors, balance).dump(2) + "\n");

  std::ostringstream s;
  auto show = [&](const std::string& object, const AnchorEntry& e) {
    s << object << ": anchor '" << e.anchor_verb << "' (";
    bool first = true;
    for (const auto& [verb, n] : e.counts) {
      s << (first ? "" : ", ") << verb << " " << n;
      first = false;
    }
    s << ")\n";
  };
  if (!a.object.empty()) {
    show(a.object, anchors.at(a.object));
  } else {
    for (const auto& [object, e] : anchors.objects) show(object, e);
  }
  s << "N = " << balance.total_samples << ", beta = " << balance.beta << ", mode " << to_string(balance.mode);
  for (const auto& c : balance.classes)
    if (a.object.empty() || c.triplet.object == a.object)
      s << "\n  alpha " << c.alpha << "  n=" << c.n_k << "  " << c.text;

  CommandResult r;
  r.artifacts = {dir / kTablesFile};
  r.summary = s.str();
  return r;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string run_dir;
  bool resume = false;
  int stop_after = 0;
  std::map<std::string, std::string> values;  // one per TrainConfig key
  std::map<std::string, CLI::Option*> options;
};

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig config = a.config.empty() ? TrainConfig{} : TrainConfig::load(a.config);
  for (const auto& [key, opt] : a.options)
    if (opt->count() > 0) config.set(key, a.values.at(key));
  config.validate();
  return config;
}

CommandResult cmd_train(const TrainArgs& a) {
  const TrainConfig config = resolve_config(a);
  if (config.data_dir.empty()) throw UsageError("data_dir is not set (config file or --data-dir)");
  const fs::path run_dir(a.run_dir);
  const fs::path lock = run_dir / kLockFile;
  if (a.resume && fs::exists(lock) && !(TrainConfig::load(lock) == config))
    throw UsageError("resolved config differs from " + lock.string() + "; resume with the same settings");

  const PreparedData data = load_prepared(config.data_dir);
  std::unique_ptr<ImageSource> images;
  if (config.image_dir.empty())
    images = std::make_unique<SyntheticImageSource>(config.latent_size);
  else
    images = std::make_unique<DirectoryImageSource>(config.image_dir);
  const auto dataset = build_dataset(data.records, data.prompts, data.anchors, data.balance, *images,
                                     config.latent_size, config.region());

  fs::create_directories(run_dir);
  config.save(lock);
  Trainer trainer(config, make_backend(config.backend_options()));
  RunOptions options;
  options.run_dir = run_dir;
  options.resume = a.resume;
  options.stop_after = a.stop_after;
  const RunSummary summary = run(trainer, dataset, options);

  CommandResult r;
  r.artifacts = {lock};
  if (summary.total_steps > 0) r.artifacts.insert(r.artifacts.end(), {summary.checkpoint, summary.metrics});
  std::ostringstream s;
  s << "steps " << summary.final_step << "/" << summary.total_steps << " (" << summary.steps_run
    << " this run), dataset " << dataset.size() << " samples";
  if (!summary.records.empty()) s << ", last total loss " << summary.records.back().breakdown.total;
  r.summary = s.str();
  return r;
}

// ---- generate --------------------------------------------------------------

struct GenerateArgs {
  std::string run_dir;
  std::string config;
  std::string checkpoint;
  std::string prompt;
  std::string triplet;
  std::uint64_t seed = 0;
  int steps = kInferenceSamplingSteps;
  std::string negative_prompt = std::string(kInferenceNegativePrompt);
  double guidance_scale = 0.0;  // 0: take the config value
  std::string out;
  std::string name = "sample";
  bool attention = false;
};

json point(const Centroid& c) { return json::array({c.x, c.y}); }

CommandResult cmd_generate(const GenerateArgs& a) {
  if (a.prompt.empty() == a.triplet.empty()) throw UsageError("give exactly one of --prompt or --triplet");
  if (a.attention && a.triplet.empty()) throw UsageError("--attention needs --triplet to locate role tokens");
  if (a.steps < 1) throw UsageError("--steps must be >= 1");
  LoadedModel model = load_model(a.run_dir, a.config, a.checkpoint);
  if (a.guidance_scale > 0.0) model.bundle.guidance_scale = a.guidance_scale;

  SampleRequest request;
  std::optional<HOITriplet> triplet;
  if (!a.triplet.empty()) {
    triplet = parse_triplet(a.triplet);
    request.prompt = render_prompt(*triplet);
    request.spans = locate_role_spans(*triplet, *model.bundle.text);
  } else {
    request.prompt = a.prompt;
  }
  request.negative_prompt = a.negative_prompt;
  request.steps = a.steps;
  request.seed = derive_seed(a.seed, "generate");
  request.capture_attention = a.attention;
  request.attention_resolution = model.config.attention_resolution;
  const SampleResult result = sample(model.bundle, request);

  const fs::path out(a.out);
  fs::create_directories(out);
  const fs::path tensor = out / (a.name + ".vdt");
  const fs::path png = out / (a.name + ".png");
  const fs::path meta = out / (a.name + ".json");
  write_tensor(tensor, result.image);
  write_png(png, preview(result.image, 8));

  json sidecar = {{"prompt", request.prompt},
                  {"negative_prompt", request.negative_prompt},
                  {"steps", request.steps},
                  {"seed", a.seed},
                  {"guidance_scale", model.bundle.guidance_scale},
                  {"model_hash", model.config.model_hash()},
                  {"timesteps", result.timesteps},
                  {"image", tensor.filename().string()}};
  if (model.checkpoint) {
    sidecar["checkpoint"] = model.checkpoint_path.string();
    sidecar["checkpoint_step"] = model.checkpoint->step;
  }
  if (a.attention) {
    const RegionExtraction ex = extract_region(result.attention, model.config.region());
    sidecar["attention"] = {{"resolution", result.attention.height},
                            {"c_h", point(ex.human)},
                            {"c_r", point(ex.verb)},
                            {"c_o", point(ex.object)},
                            {"c_rel", point(ex.center)},
                            {"half_extent", ex.region.half_extent}};
  }
  write_text(meta, sidecar.dump(2) + "\n");

  CommandResult r;
  r.artifacts = {tensor, png, meta};
  r.summary = "generated '" + request.prompt + "' in " + std::to_string(request.steps) + " steps";
  return r;
}

// ---- extract-regions -------------------------------------------------------

struct RegionArgs {
  std::string annotations;
  std::string image_id;
  std::string image_dir;
  std::string run_dir;
  std::string config;
  std::string checkpoint;
  std::string triplet;
  std::uint64_t seed = 0;
  int steps = kInferenceSamplingSteps;
  std::string out;
};

CommandResult cmd_extract_regions(const RegionArgs& a) {
  const bool real = !a.annotations.empty() || !a.image_id.empty();
  const bool generated = !a.run_dir.empty() || !a.config.empty() || !a.checkpoint.empty();
  if (real == generated)
    throw UsageError("give either --annotations with --image-id (real image) or --run-dir/--config with "
                     "--triplet (generated image)");
  const fs::path out(a.out);
  CommandResult r;

  if (real) {
    if (a.annotations.empty() || a.image_id.empty())
      throw UsageError("real-image regions need both --annotations and --image-id");
    const auto records = load_annotations(a.annotations).records;
    auto it = std::find_if(records.begin(), records.end(), [&](const auto& rec) { return rec.image_id == a.image_id; });
    if (it == records.end()) throw DataError("image " + a.image_id + " is not annotated in " + a.annotations);
    const HOIPair& pair = a.triplet.empty() ? it->pairs.front() : find_pair(*it, parse_triplet(a.triplet));
    const RegionOptions options = TrainConfig{}.region();
    const InteractionRegion region = gt_interaction_region(pair.human_box, pair.object_box, options);
    const Centroid ch{pair.human_box.center_x(), pair.human_box.center_y()};
    const Centroid co{pair.object_box.center_x(), pair.object_box.center_y()};
    const Image image = a.image_dir.empty() ? SyntheticImageSource(TrainConfig{}.latent_size).load(*it)
                                            : DirectoryImageSource(a.image_dir).load(*it);
    r.artifacts = emit_region_debug(out, a.image_id, preview(image, 8),
                                    region_sidecar(a.image_id, ch, region.center, co, region), region);
    r.summary = "ground-truth region for " + a.image_id + " (" + to_string(pair.triplet) + ")";
    return r;
  }

  if (a.triplet.empty()) throw UsageError("generated-image regions need --triplet");
  if (a.steps < 1) throw UsageError("--steps must be >= 1");
  const HOITriplet triplet = parse_triplet(a.triplet);
  LoadedModel model = load_model(a.run_dir, a.config, a.checkpoint);
  SampleRequest request;
  request.prompt = render_prompt(triplet);
  request.spans = locate_role_spans(triplet, *model.bundle.text);
  request.steps = a.steps;
  request.seed = derive_seed(a.seed, "generate");
  request.attention_resolution = model.config.attention_resolution;
  const SampleResult result = sample(model.bundle, request);
  const RegionExtraction ex = extract_region(result.attention, model.config.region());
  const std::string id = "generated_" + hex64(fnv1a64(request.prompt + "#" + std::to_string(a.seed)));
  r.artifacts = emit_region_debug(out, id, preview(result.image, 8),
                                  region_sidecar(id, ex.human, ex.verb, ex.object, ex.region), ex.region);
  r.summary = "attention region for '" + request.prompt + "'";
  return r;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string images;
  std::string labels;
  std::string out;
  std::string metrics = "t2t,t2i,hoi,vqa,i2t";
  std::vector<std::string> settings = {"def-full", "def-rare", "ko-full", "ko-rare"};
  std::string ports = "retrieval";
  std::string run_dir;
  std::string config;
  std::string train_prompts;
  std::string cache;
};

CommandResult cmd_eval(const EvalArgs& a) {
  EvalOptions options;
  options.metrics = split(a.metrics, ',');
  for (const auto& m : options.metrics)
    if (std::find(known_metrics().begin(), known_metrics().end(), m) == known_metrics().end()) {
      std::string valid;
      for (const auto& k : known_metrics()) valid += (valid.empty() ? "" : ", ") + k;
      throw UsageError("unknown metric '" + m + "' (valid: " + valid + ")");
    }
  options.settings.clear();
  for (const auto& s : a.settings)
    for (const auto& part : split(s, ',')) {
      try {
        options.settings.push_back(parse_hoi_setting(part));
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
    }

  std::vector<EvalItem> items;
  std::ifstream in(a.labels);
  if (!in) throw DataError("labels file not found: " + a.labels);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      EvalItem item;
      item.id = j.at("image_id").get<std::string>();
      item.triplet = {j.at("human").get<std::string>(), j.at("verb").get<std::string>(),
                      j.at("object").get<std::string>()};
      item.prompt = j.value("prompt", render_prompt(item.triplet));
      item.image = read_tensor(fs::path(a.images) / (item.id + ".vdt"));
      items.push_back(std::move(item));
    } catch (const json::exception& e) {
      throw DataError(a.labels + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  if (items.empty()) throw DataError("no labeled images in " + a.labels);

  std::vector<PromptRecord> training;
  if (!a.train_prompts.empty()) {
    training = read_prompts(a.train_prompts);
    options.rare = rare_classes(training);
  }

  TrainConfig config;
  if (!a.run_dir.empty())
    config = TrainConfig::load(fs::path(a.run_dir) / kLockFile);
  else if (!a.config.empty())
    config = TrainConfig::load(a.config);
  const ModelBundle bundle = make_backend(config.backend_options());

  EvalPorts ports;
  if (a.ports == "oracle") {
    ports = make_oracle_eval_ports(items, bundle.text);
  } else if (a.ports == "retrieval" || a.ports == "external") {
    std::set<HOITriplet> candidates;
    for (const auto& item : items) candidates.insert(item.triplet);
    for (const auto& p : training) candidates.insert(p.triplet);
    ports = make_retrieval_eval_ports(bundle, {candidates.begin(), candidates.end()});
    if (a.ports == "external") {
      ports.clip_like = external_similarity_backend(SimilarityKind::clip_like);
      ports.sentence_like = external_similarity_backend(SimilarityKind::sentence_like);
      if (!ports.clip_like && !ports.sentence_like)
        throw BackendError("no similarity-clip_like or similarity-sentence_like executable in VERBDIFF_BACKEND_DIR");
    }
  } else {
    throw UsageError("--ports must be oracle, retrieval or external");
  }

  std::optional<CaptionCache> cache;
  if (!a.cache.empty()) {
    cache.emplace(fs::path(a.cache));
    options.cache = &*cache;
  }
  const EvalReport report = evaluate(items, ports, options);
  if (cache) cache->save();

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, report.to_json().dump(2) + "\n");
  CommandResult r;
  r.artifacts = {out};
  if (cache) r.artifacts.emplace_back(a.cache);
  r.summary = report.to_table();
  return r;
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return kExitUsage;
  if (dynamic_cast<const BackendError*>(&e)) return kExitBackend;
  return kExitData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"verbdiff: interaction-aware text-to-image fine-tuning toolkit"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  PrepArgs prep;
  auto* prep_cmd = app.add_subcommand("prep-data", "Realign annotations into prompts, anchor and balance tables");
  prep_cmd->add_option("--annotations", prep.annotations, "Annotation file")->required();
  prep_cmd->add_option("--out", prep.out, "Output directory")->required();
  prep_cmd->add_option("--format", prep.format, "Annotation format: jsonl | qpic");
  prep_cmd->add_option("--verb-names", prep.verb_names, "Verb names, one per line (qpic)");
  prep_cmd->add_option("--object-names", prep.object_names, "Object names, one per line (qpic)");
  prep_cmd->add_option("--balance-mode", prep.balance_mode, "as_written | inverse_normalized");

  AnchorArgs anchors;
  auto* anchors_cmd = app.add_subcommand("anchors", "Rebuild and print anchor and balance tables");
  anchors_cmd->add_option("--data", anchors.data, "Prepared data directory")->required();
  anchors_cmd->add_option("--object", anchors.object, "Only show this object");
  anchors_cmd->add_option("--balance-mode", anchors.balance_mode, "as_written | inverse_normalized");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Fine-tune the cross-attention parameters");
  train_cmd->add_option("--config", train.config, "Config file (key = value lines)");
  train_cmd->add_option("--run-dir", train.run_dir, "Run directory")->required();
  train_cmd->add_flag("--resume", train.resume, "Resume from the run directory's checkpoint");
  train_cmd->add_option("--stop-after", train.stop_after, "Stop after this many steps (0: run to the end)");
  const TrainConfig defaults;
  for (const auto& key : TrainConfig::keys()) {
    train.values[key] = defaults.get(key);
    train.options[key] = train_cmd->add_option("--" + dashed(key), train.values[key], "Config key " + key);
  }

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Sample an image");
  gen_cmd->add_option("--run-dir", gen.run_dir, "Run directory (config.lock + checkpoint)");
  gen_cmd->add_option("--config", gen.config, "Config file when not using --run-dir");
  gen_cmd->add_option("--checkpoint", gen.checkpoint, "Checkpoint file");
  gen_cmd->add_option("--prompt", gen.prompt, "Free-form prompt");
  gen_cmd->add_option("--triplet", gen.triplet, "human,verb,object");
  gen_cmd->add_option("--seed", gen.seed, "Seed");
  gen_cmd->add_option("--steps", gen.steps, "Sampling steps");
  gen_cmd->add_option("--negative-prompt", gen.negative_prompt, "Negative prompt");
  gen_cmd->add_option("--guidance-scale", gen.guidance_scale, "Guidance scale (0: from config)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--name", gen.name, "Output file stem");
  gen_cmd->add_flag("--attention", gen.attention, "Record attention centroids in the sidecar");

  RegionArgs reg;
  auto* reg_cmd = app.add_subcommand("extract-regions", "Write interaction-region overlays and sidecars");
  reg_cmd->add_option("--annotations", reg.annotations, "Annotation file (real image)");
  reg_cmd->add_option("--image-id", reg.image_id, "Annotated image id (real image)");
  reg_cmd->add_option("--image-dir", reg.image_dir, "Directory of <id>.vdt tensors (default: synthetic render)");
  reg_cmd->add_option("--run-dir", reg.run_dir, "Run directory (generated image)");
  reg_cmd->add_option("--config", reg.config, "Config file (generated image)");
  reg_cmd->add_option("--checkpoint", reg.checkpoint, "Checkpoint file (generated image)");
  reg_cmd->add_option("--triplet", reg.triplet, "human,verb,object");
  reg_cmd->add_option("--seed", reg.seed, "Seed");
  reg_cmd->add_option("--steps", reg.steps, "Sampling steps");
  reg_cmd->add_option("--out", reg.out, "Output directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score generated images");
  eval_cmd->add_option("--images", ev.images, "Directory of <id>.vdt tensors")->required();
  eval_cmd->add_option("--labels", ev.labels, "JSON lines: image_id, human, verb, object[, prompt]")->required();
  eval_cmd->add_option("--out", ev.out, "Report JSON path")->required();
  eval_cmd->add_option("--metrics", ev.metrics, "Comma-separated subset of t2t,t2i,hoi,vqa,i2t");
  eval_cmd->add_option("--setting", ev.settings, "HOI settings: def-full | def-rare | ko-full | ko-rare");
  eval_cmd->add_option("--ports", ev.ports, "oracle | retrieval | external");
  eval_cmd->add_option("--run-dir", ev.run_dir, "Run directory whose encoders back retrieval ports");
  eval_cmd->add_option("--config", ev.config, "Config file when not using --run-dir");
  eval_cmd->add_option("--train-prompts", ev.train_prompts, "Training prompts.jsonl (defines rare classes)");
  eval_cmd->add_option("--cache", ev.cache, "Caption cache file");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    CommandResult result;
    if (*prep_cmd) result = cmd_prep_data(prep);
    else if (*anchors_cmd) result = cmd_anchors(anchors);
    else if (*train_cmd) result = cmd_train(train);
    else if (*gen_cmd) result = cmd_generate(gen);
    else if (*reg_cmd) result = cmd_extract_regions(reg);
    else if (*eval_cmd) result = cmd_eval(ev);
    out << result.summary << '\n';
    for (const auto& p : result.artifacts) out << "wrote " << p.string() << '\n';
    return result.exit_code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace verbdiff::cli

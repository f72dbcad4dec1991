#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "checks.hpp"
#include "cli.hpp"
#include "fixtures.hpp"
#include "verbdiff/attention_geometry.hpp"
#include "verbdiff/hoi_data.hpp"
#include "verbdiff/image_io.hpp"
#include "verbdiff/model_adapters.hpp"
#include "verbdiff/synthetic.hpp"
#include "verbdiff/train_config.hpp"
#include "verbdiff/trainer.hpp"

namespace fs = std::filesystem;
using namespace verbdiff;
using verbdiff::testing::files_identical;
using verbdiff::testing::scratch_dir;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "verbdiff");
  std::ostringstream out, err;
  Invocation r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(slurp(path)); }

fs::path write_fixture(const fs::path& dir) {
  const auto path = dir / "annotations.jsonl";
  write_annotations(path, verbdiff::testing::pipeline_fixture());
  return path;
}

// Prepared synthetic training data plus a small config file.
struct TrainSetup {
  fs::path data;
  fs::path config;
};

TrainSetup train_setup(const fs::path& dir) {
  const auto annotations = dir / "synthetic.jsonl";
  write_annotations(annotations, synthetic_training_fixture());
  TrainSetup s{dir / "data", dir / "config.toml"};
  EXPECT_EQ(invoke({"prep-data", "--annotations", annotations.string(), "--out", s.data.string()}).code, 0);
  TrainConfig c;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  c.max_steps = 10;
  c.checkpoint_every = 3;
  c.data_dir = s.data.string();
  c.save(s.config);
  return s;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(invoke({}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"fly"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"prep-data", "--out", "x"}).code, cli::kExitUsage);
  const auto dir = scratch_dir("cli_usage");
  const auto r = invoke({"generate", "--out", dir.string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("--prompt"), std::string::npos);
  EXPECT_EQ(invoke({"extract-regions", "--out", dir.string()}).code, cli::kExitUsage);
}

TEST(Cli, DataAndBackendErrors) {
  const auto dir = scratch_dir("cli_errors");
  EXPECT_EQ(invoke({"prep-data", "--annotations", (dir / "missing.jsonl").string(), "--out", (dir / "o").string()}).code,
            cli::kExitData);
  {
    std::ofstream bad(dir / "bad.jsonl");
    bad << "{\"image_id\": 3}\n";
  }
  EXPECT_EQ(invoke({"prep-data", "--annotations", (dir / "bad.jsonl").string(), "--out", (dir / "o").string()}).code,
            cli::kExitData);

  TrainConfig c;
  c.data_dir = (dir / "nothing").string();
  c.save(dir / "config.toml");
  const auto missing = invoke({"train", "--config", (dir / "config.toml").string(), "--run-dir", (dir / "run").string()});
  EXPECT_EQ(missing.code, cli::kExitData);
  EXPECT_NE(missing.err.find("prep-data"), std::string::npos) << missing.err;

  c.backend = "external";
  c.external_backend = "nobody-home";
  c.save(dir / "external.toml");
  EXPECT_EQ(invoke({"generate", "--config", (dir / "external.toml").string(), "--prompt", "x", "--out", dir.string()}).code,
            cli::kExitBackend);
}

TEST(Cli, HelpListsTrainDefaults) {
  const auto r = invoke({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  const TrainConfig defaults;
  for (const auto& key : TrainConfig::keys()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    flag[0] = flag[1] = '-';
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
    const std::string value = defaults.get(key);
    if (!value.empty()) EXPECT_NE(r.out.find("[" + value + "]"), std::string::npos) << key << " = " << value;
  }
  for (const char* cmd : {"prep-data", "anchors", "generate", "extract-regions", "eval"})
    EXPECT_EQ(invoke({cmd, "--help"}).code, 0) << cmd;
}

TEST(Cli, PrepDataCountsAndIdempotence) {
  const auto dir = scratch_dir("cli_prep");
  const auto annotations = write_fixture(dir);
  const auto first = invoke({"prep-data", "--annotations", annotations.string(), "--out", (dir / "a").string()});
  ASSERT_EQ(first.code, 0) << first.err;
  const auto summary = read_json(dir / "a" / "summary.json");
  EXPECT_EQ(summary.at("prompts_kept"), 8);
  EXPECT_EQ(summary.at("prompts_excluded"), 1);
  EXPECT_EQ(summary.at("images_kept"), 45);
  EXPECT_EQ(summary.at("images_total"), 50);

  ASSERT_EQ(invoke({"prep-data", "--annotations", annotations.string(), "--out", (dir / "b").string()}).code, 0);
  for (const char* f : {"annotations.jsonl", "prompts.jsonl", "excluded.jsonl", "tables.json", "summary.json"})
    EXPECT_TRUE(files_identical(dir / "a" / f, dir / "b" / f)) << f;

  const auto anchors = invoke({"anchors", "--data", (dir / "a").string(), "--object", "horse"});
  EXPECT_EQ(anchors.code, 0);
  EXPECT_NE(anchors.out.find("horse: anchor 'feeding'"), std::string::npos) << anchors.out;
  EXPECT_TRUE(files_identical(dir / "a" / "tables.json", dir / "b" / "tables.json"));
}

TEST(Cli, TrainResumeAndOverrides) {
  const auto dir = scratch_dir("cli_train");
  const TrainSetup s = train_setup(dir);

  const auto whole = invoke({"train", "--config", s.config.string(), "--run-dir", (dir / "whole").string()});
  ASSERT_EQ(whole.code, 0) << whole.err;
  EXPECT_EQ(read_metrics(dir / "whole" / kMetricsFile).size(), 10u);
  EXPECT_TRUE(fs::exists(dir / "whole" / kCheckpointFile));

  ASSERT_EQ(invoke({"train", "--config", s.config.string(), "--run-dir", (dir / "split").string(), "--stop-after", "5"}).code, 0);
  EXPECT_EQ(read_metrics(dir / "split" / kMetricsFile).size(), 5u);
  ASSERT_EQ(invoke({"train", "--config", s.config.string(), "--run-dir", (dir / "split").string(), "--resume"}).code, 0);
  const auto records = read_metrics(dir / "split" / kMetricsFile);
  ASSERT_EQ(records.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(records[static_cast<std::size_t>(i)].step, i + 1);
  EXPECT_TRUE(files_identical(dir / "whole" / kMetricsFile, dir / "split" / kMetricsFile));

  // Command-line keys win over the file.
  ASSERT_EQ(invoke({"train", "--config", s.config.string(), "--run-dir", (dir / "ablate").string(), "--lambda-rdg", "0",
                 "--lambda-idg", "0", "--max-steps", "3"})
                .code,
            0);
  const TrainConfig lock = TrainConfig::load(dir / "ablate" / "config.lock");
  EXPECT_EQ(lock.lambda_rdg, 0.0);
  EXPECT_EQ(lock.max_steps, 3);
  EXPECT_EQ(lock.batch_size, 2);
  for (const auto& r : read_metrics(dir / "ablate" / kMetricsFile)) EXPECT_EQ(r.breakdown.total, r.breakdown.rec);

  const auto changed = invoke({"train", "--config", s.config.string(), "--run-dir", (dir / "split").string(), "--resume",
                            "--margin", "0.5"});
  EXPECT_EQ(changed.code, cli::kExitUsage);
}

TEST(Cli, GenerateDeterministicWithSidecar) {
  const auto dir = scratch_dir("cli_generate");
  const TrainSetup s = train_setup(dir);
  ASSERT_EQ(invoke({"train", "--config", s.config.string(), "--run-dir", (dir / "run").string(), "--max-steps", "2"}).code, 0);

  for (const char* name : {"one", "two"}) {
    const auto r = invoke({"generate", "--run-dir", (dir / "run").string(), "--triplet", "person,riding,horse", "--seed", "5",
                        "--steps", "30", "--out", (dir / "gen").string(), "--name", name, "--attention"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_TRUE(files_identical(dir / "gen" / "one.vdt", dir / "gen" / "two.vdt"));
  EXPECT_TRUE(files_identical(dir / "gen" / "one.png", dir / "gen" / "two.png"));
  const auto meta = read_json(dir / "gen" / "one.json");
  EXPECT_EQ(meta.at("steps"), 30);
  EXPECT_EQ(meta.at("timesteps").size(), 30u);
  EXPECT_EQ(meta.at("negative_prompt"), "black and white image, extra arms, extra legs, naked, poor resolution");
  EXPECT_EQ(meta.at("prompt"), "A photo of a person riding a horse");
  EXPECT_EQ(meta.at("checkpoint_step"), 2);
  EXPECT_TRUE(meta.contains("attention"));

  ASSERT_EQ(invoke({"generate", "--run-dir", (dir / "run").string(), "--prompt", "A photo of a person riding a horse",
                 "--out", (dir / "gen").string(), "--name", "default"})
                .code,
            0);
  EXPECT_EQ(read_json(dir / "gen" / "default.json").at("steps"), 50);

  TrainConfig other = TrainConfig::load(dir / "run" / "config.lock");
  other.feature_dim = 16;
  other.save(dir / "other.toml");
  const auto mismatch = invoke({"generate", "--config", (dir / "other.toml").string(), "--checkpoint",
                             (dir / "run" / kCheckpointFile).string(), "--prompt", "x", "--out", (dir / "gen").string()});
  EXPECT_EQ(mismatch.code, cli::kExitBackend);
  EXPECT_NE(mismatch.err.find("hash"), std::string::npos);
}

TEST(Cli, ExtractRegionsBothPaths) {
  const auto dir = scratch_dir("cli_regions");
  const auto annotations = write_fixture(dir);
  ASSERT_EQ(invoke({"extract-regions", "--annotations", annotations.string(), "--image-id", "img_00", "--out",
                 (dir / "real").string()})
                .code,
            0);
  const auto real = read_json(dir / "real" / "img_00_region.json");
  const auto records = verbdiff::testing::pipeline_fixture();
  const auto& pair = records[0].pairs[0];
  const auto expected = gt_interaction_region(pair.human_box, pair.object_box);
  EXPECT_DOUBLE_EQ(real.at("c_rel")[0].get<double>(), expected.center.x);
  EXPECT_DOUBLE_EQ(real.at("c_rel")[1].get<double>(), expected.center.y);
  EXPECT_DOUBLE_EQ(real.at("half_extent").get<double>(), expected.half_extent);
  EXPECT_TRUE(fs::exists(dir / "real" / "img_00_region.png"));

  TrainConfig c;
  c.save(dir / "toy.toml");
  const auto gen = invoke({"extract-regions", "--config", (dir / "toy.toml").string(), "--triplet", "person,feeding,horse",
                        "--steps", "8", "--seed", "3", "--out", (dir / "gen").string()});
  ASSERT_EQ(gen.code, 0) << gen.err;
  fs::path sidecar;
  for (const auto& e : fs::directory_iterator(dir / "gen"))
    if (e.path().extension() == ".json") sidecar = e.path();
  ASSERT_FALSE(sidecar.empty());
  const auto j = read_json(sidecar);

  // Module-level oracle: same sampling request, then the centroid path.
  const ModelBundle bundle = make_backend(c.backend_options());
  SampleRequest request;
  request.prompt = render_prompt({"person", "feeding", "horse"});
  request.spans = locate_role_spans({"person", "feeding", "horse"}, *bundle.text);
  request.steps = 8;
  request.seed = derive_seed(3, "generate");
  const RegionExtraction ex = extract_region(sample(bundle, request).attention, c.region());
  EXPECT_DOUBLE_EQ(j.at("c_rel")[0].get<double>(), ex.center.x);
  EXPECT_DOUBLE_EQ(j.at("c_rel")[1].get<double>(), ex.center.y);
  EXPECT_DOUBLE_EQ(j.at("half_extent").get<double>(), ex.region.half_extent);

  EXPECT_EQ(invoke({"extract-regions", "--annotations", annotations.string(), "--out", (dir / "x").string()}).code,
            cli::kExitUsage);
  EXPECT_EQ(invoke({"extract-regions", "--config", (dir / "toy.toml").string(), "--triplet", "person-riding", "--out",
                 (dir / "x").string()})
                .code,
            cli::kExitUsage);
}

TEST(Cli, EvalOracleSubsetAndCache) {
  const auto dir = scratch_dir("cli_eval");
  fs::create_directories(dir / "images");
  {
    std::ofstream labels(dir / "labels.jsonl");
    const std::vector<HOITriplet> triplets = {{"person", "riding", "bicycle"}, {"person", "washing", "bicycle"},
                                              {"person", "feeding", "horse"}};
    for (int i = 0; i < 3; ++i) {
      const std::string id = "g" + std::to_string(i);
      write_tensor(dir / "images" / (id + ".vdt"), seeded_noise(4, 32, 32, static_cast<std::uint64_t>(i)));
      labels << nlohmann::json{{"image_id", id},
                               {"human", triplets[static_cast<std::size_t>(i)].human},
                               {"verb", triplets[static_cast<std::size_t>(i)].verb},
                               {"object", triplets[static_cast<std::size_t>(i)].object}}
                    .dump()
             << '\n';
    }
  }
  const std::vector<std::string> base = {"eval", "--images", (dir / "images").string(), "--labels",
                                         (dir / "labels.jsonl").string()};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
  };

  ASSERT_EQ(with({"--ports", "oracle", "--out", (dir / "oracle.json").string()}).code, 0);
  const auto oracle = read_json(dir / "oracle.json");
  EXPECT_EQ(oracle.at("scores").size(), 7u);
  for (const auto& [name, value] : oracle.at("scores").items()) EXPECT_NEAR(value.get<double>(), 1.0, 1e-12) << name;

  ASSERT_EQ(with({"--ports", "oracle", "--metrics", "t2t,vqa", "--out", (dir / "subset.json").string()}).code, 0);
  std::set<std::string> keys;
  const auto subset = read_json(dir / "subset.json");
  for (const auto& [name, value] : subset.at("scores").items()) keys.insert(name);
  EXPECT_EQ(keys, (std::set<std::string>{"t2t_clip", "t2t_sbert", "vqa"}));

  const auto unknown = with({"--metrics", "t2t,fid", "--out", (dir / "x.json").string()});
  EXPECT_EQ(unknown.code, cli::kExitUsage);
  EXPECT_NE(unknown.err.find("valid: t2t, t2i, hoi, vqa, i2t"), std::string::npos) << unknown.err;

  const auto cache = (dir / "captions.json").string();
  ASSERT_EQ(with({"--metrics", "t2t", "--cache", cache, "--out", (dir / "cold.json").string()}).code, 0);
  ASSERT_EQ(with({"--metrics", "t2t", "--cache", cache, "--out", (dir / "warm.json").string()}).code, 0);
  EXPECT_TRUE(files_identical(dir / "cold.json", dir / "warm.json"));
  EXPECT_TRUE(fs::exists(cache));
}

TEST(Cli, BinaryExitCodes) {
  const char* binary = std::getenv("VERBDIFF_CLI");
  if (binary == nullptr || *binary == '\0') GTEST_SKIP() << "VERBDIFF_CLI not set";
  const auto dir = scratch_dir("cli_binary");
  auto status = [&](const std::string& args) {
    const int raw = std::system(("\"" + std::string(binary) + "\" " + args + " > \"" + (dir / "log").string() + "\" 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status("bogus"), 1);
  EXPECT_EQ(status("prep-data --annotations \"" + (dir / "none.jsonl").string() + "\" --out \"" + dir.string() + "\""), 2);
  const auto annotations = write_fixture(dir);
  EXPECT_EQ(status("prep-data --annotations \"" + annotations.string() + "\" --out \"" + (dir / "data").string() + "\""), 0);
}

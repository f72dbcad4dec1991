#include "verbdiff/model_adapters.hpp"

#include <dlfcn.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "verbdiff/toy_backends.hpp"

namespace verbdiff {

std::string to_string(ParameterGroup group) {
  return group == ParameterGroup::cross_attention ? "cross_attention" : "other";
}

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("noise schedule needs at least one step");
  alphas_cumprod_.resize(static_cast<std::size_t>(steps));
  const double lo = std::sqrt(beta_start);
  const double hi = std::sqrt(beta_end);
  double product = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    const double root = lo + (hi - lo) * frac;
    product *= 1.0 - root * root;
    alphas_cumprod_[static_cast<std::size_t>(t)] = product;
  }
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t >= steps()) throw ConfigError("timestep " + std::to_string(t) + " outside schedule");
  return alphas_cumprod_[static_cast<std::size_t>(t)];
}

std::vector<int> NoiseSchedule::ddim_timesteps(int sampling_steps) const {
  if (sampling_steps < 1 || sampling_steps > steps())
    throw ConfigError("sampling steps must be in [1, " + std::to_string(steps()) + "]");
  const int stride = steps() / sampling_steps;
  std::vector<int> out;
  for (int i = sampling_steps - 1; i >= 0; --i) out.push_back(i * stride);
  return out;
}

ParameterSelection trainable_parameter_filter(const DenoiserPort& denoiser) {
  ParameterSelection selection;
  for (const auto& p : denoiser.parameters())
    (p.group == ParameterGroup::cross_attention ? selection.trainable : selection.frozen)
        .push_back(p.name);
  if (selection.trainable.empty())
    throw ConfigError("denoiser '" + denoiser.id() + "' exposes no cross_attention parameters");
  return selection;
}

std::uint64_t parameter_checksum(const DenoiserPort& denoiser, ParameterGroup group) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : denoiser.parameters()) {
    if (p.group != group) continue;
    h = fnv1a64(p.name, h);
    h = fnv1a64(std::span<const double>(p.value.data(), static_cast<std::size_t>(p.value.size())), h);
  }
  return h;
}

std::map<Role, std::vector<int>> locate_role_spans(const HOITriplet& triplet,
                                                   const TextEncoderPort& text) {
  const std::string prompt = render_prompt(triplet);
  const std::size_t human_begin = std::string_view("A photo of a ").size();
  const std::size_t human_end = human_begin + triplet.human.size();
  const std::size_t verb_begin = human_end + 1;
  const std::size_t verb_end = verb_begin + triplet.verb.size();
  const std::size_t object_end = prompt.size();
  const std::size_t object_begin = object_end - triplet.object.size();

  const auto tokens = text.tokenize(prompt);
  std::map<Role, std::vector<int>> spans;
  auto collect = [&](Role role, std::size_t begin, std::size_t end) {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i].begin < end && tokens[i].end > begin) spans[role].push_back(static_cast<int>(i));
    if (spans[role].empty())
      throw DataError("no tokens for " + to_string(role) + " in '" + prompt + "'");
  };
  collect(Role::human, human_begin, human_end);
  collect(Role::verb, verb_begin, verb_end);
  collect(Role::object, object_begin, object_end);
  return spans;
}

std::map<int, Grid> attention_token_maps(const RawAttention& raw, int resolution) {
  if (resolution < 1 || raw.height % resolution != 0 || raw.width % resolution != 0)
    throw ConfigError("attention resolution " + std::to_string(resolution) +
                      " does not divide the latent grid " + std::to_string(raw.height) + "x" +
                      std::to_string(raw.width));
  const int fy = raw.height / resolution;
  const int fx = raw.width / resolution;
  const double inv = 1.0 / (fx * fy);
  std::map<int, Grid> maps;
  for (int token = 0; token < raw.weights.cols(); ++token) {
    Grid g(resolution, resolution);
    for (int r = 0; r < raw.height; ++r)
      for (int c = 0; c < raw.width; ++c)
        g(r / fy, c / fx) += raw.weights(r * raw.width + c, token) * inv;
    maps.emplace(token, std::move(g));
  }
  return maps;
}

void AttentionAccumulator::add(const RawAttention& raw) {
  auto maps = attention_token_maps(raw, resolution_);
  if (count_ == 0) {
    sums_ = std::move(maps);
  } else {
    if (maps.size() != sums_.size()) throw DataError("attention token count changed between calls");
    for (auto& [token, grid] : maps) {
      auto dst = sums_.at(token).values();
      auto src = grid.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  ++count_;
}

AttentionStack AttentionAccumulator::stack(const std::map<Role, std::vector<int>>& spans) const {
  AttentionStack out;
  out.height = resolution_;
  out.width = resolution_;
  out.token_spans = spans;
  for (const auto& [token, grid] : sums_) {
    Grid mean = grid;
    for (double& v : mean.values()) v /= std::max(count_, 1);
    out.token_maps.emplace(token, std::move(mean));
  }
  return out;
}

ParameterGrads backpropagate(const ModelBundle& bundle, const GenerationTape& tape,
                             const Image& d_image) {
  ParameterGrads grads;
  auto accumulate = [&](ParameterGrads&& g, double weight) {
    for (auto& [name, m] : g) {
      auto it = grads.find(name);
      if (it == grads.end())
        grads.emplace(name, weight * m);
      else
        it->second += weight * m;
    }
  };

  Image d_z = bundle.codec->decode_backward(tape.final_latent, d_image);
  for (std::size_t k = tape.steps.size(); k-- > 0;) {
    const TapeStep& step = tape.steps[k];
    const bool need_input = k > 0;
    Image d_eps = d_z;
    for (double& v : d_eps.values()) v *= step.b;

    Image d_prev = d_z;
    for (double& v : d_prev.values()) v *= step.a;

    auto run = [&](const DenoiserCache& cache, double weight) {
      Image scaled = d_eps;
      for (double& v : scaled.values()) v *= weight;
      auto back = bundle.denoiser->backward(cache, scaled, need_input);
      accumulate(std::move(back.grads), 1.0);
      if (need_input) d_prev.as_matrix() += back.d_input.as_matrix();
    };
    if (step.negative) {
      run(*step.positive, step.guidance_scale);
      run(*step.negative, 1.0 - step.guidance_scale);
    } else {
      run(*step.positive, 1.0);
    }
    d_z = std::move(d_prev);
  }
  return grads;
}

CleanEstimate differentiable_generation(const ModelBundle& bundle, const Image& z_t, int timestep,
                                        const std::string& text,
                                        const std::map<Role, std::vector<int>>& spans,
                                        int attention_resolution) {
  const double abar = bundle.schedule.alpha_bar(timestep);
  const Matrix cond = bundle.text->token_embeddings(text);
  DenoiserOutput out = bundle.denoiser->predict_noise(z_t, timestep, cond);

  TapeStep step;
  step.positive = out.cache;
  step.a = 1.0 / std::sqrt(abar);
  step.b = -std::sqrt(1.0 - abar) / std::sqrt(abar);

  CleanEstimate est;
  Image latent(z_t.channels(), z_t.height(), z_t.width());
  latent.as_matrix() = step.a * z_t.as_matrix() + step.b * out.noise.as_matrix();
  est.image = bundle.codec->decode_latent(latent);
  AttentionAccumulator acc(attention_resolution);
  acc.add(out.attention);
  est.attention = acc.stack(spans);
  est.predicted_noise = std::move(out.noise);
  est.tape.steps.push_back(std::move(step));
  est.tape.final_latent = std::move(latent);
  return est;
}

Image seeded_noise(int channels, int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Image out(channels, height, width);
  for (double& v : out.values()) v = normal(rng);
  return out;
}

SampleResult sample(const ModelBundle& bundle, const SampleRequest& request) {
  const int channels = bundle.codec->latent_channels();
  const int size = bundle.codec->latent_size();
  const bool guided = bundle.guidance_scale != 1.0;

  SampleResult result;
  result.timesteps = bundle.schedule.ddim_timesteps(request.steps);
  Image z = seeded_noise(channels, size, size, request.seed);
  const Matrix cond = bundle.text->token_embeddings(request.prompt);
  Matrix uncond;
  if (guided) uncond = bundle.text->token_embeddings(request.negative_prompt);

  AttentionAccumulator acc(request.attention_resolution);
  const std::size_t n = result.timesteps.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int t = result.timesteps[i];
    try {
      DenoiserOutput pos = bundle.denoiser->predict_noise(z, t, cond);
      Matrix eps = pos.noise.as_matrix();
      std::shared_ptr<const DenoiserCache> neg_cache;
      if (guided) {
        DenoiserOutput neg = bundle.denoiser->predict_noise(z, t, uncond);
        eps = neg.noise.as_matrix() + bundle.guidance_scale * (eps - neg.noise.as_matrix());
        neg_cache = neg.cache;
      }
      if (request.capture_attention) acc.add(pos.attention);

      const double abar = bundle.schedule.alpha_bar(t);
      const double abar_prev = i + 1 < n ? bundle.schedule.alpha_bar(result.timesteps[i + 1]) : 1.0;
      TapeStep step;
      step.a = std::sqrt(abar_prev) / std::sqrt(abar);
      step.b = std::sqrt(1.0 - abar_prev) - std::sqrt(abar_prev) * std::sqrt(1.0 - abar) / std::sqrt(abar);
      z.as_matrix() = step.a * z.as_matrix() + step.b * eps;
      if (static_cast<int>(n - i) <= request.grad_tail) {
        step.positive = pos.cache;
        step.negative = neg_cache;
        step.guidance_scale = bundle.guidance_scale;
        result.tape.steps.push_back(std::move(step));
      }
    } catch (const std::exception& e) {
      throw BackendError("sampling failed at step " + std::to_string(i) + " (t=" +
                         std::to_string(t) + "): " + e.what());
    }
  }
  result.tape.final_latent = z;
  result.image = bundle.codec->decode_latent(z);
  if (request.capture_attention) {
    if (request.spans.empty()) {
      result.attention = acc.stack({});
    } else {
      result.attention = acc.stack(request.spans);
    }
  }
  return result;
}

SampleResult generate_training_image(const ModelBundle& bundle, const HOITriplet& triplet,
                                     std::uint64_t seed, int steps, int attention_resolution) {
  SampleRequest request;
  request.prompt = render_prompt(triplet);
  request.negative_prompt = std::string(kTrainingNegativePrompt);
  request.steps = steps;
  request.seed = seed;
  request.spans = locate_role_spans(triplet, *bundle.text);
  request.attention_resolution = attention_resolution;
  return sample(bundle, request);
}

BackendRegistry& BackendRegistry::instance() {
  static BackendRegistry registry;
  return registry;
}

void BackendRegistry::add(const std::string& name, BackendFactory factory) {
  factories_[name] = std::move(factory);
}

bool BackendRegistry::contains(const std::string& name) const { return factories_.contains(name); }

void BackendRegistry::load_plugins() {
  if (plugins_loaded_) return;
  plugins_loaded_ = true;
  const char* dir = std::getenv("VERBDIFF_BACKEND_DIR");
  if (dir == nullptr) return;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.path().extension() != ".so") continue;
    void* handle = dlopen(entry.path().c_str(), RTLD_NOW | RTLD_LOCAL);
    if (handle == nullptr) continue;
    using RegisterFn = void (*)(BackendRegistry&);
    auto fn = reinterpret_cast<RegisterFn>(dlsym(handle, "verbdiff_register_backends"));
    if (fn != nullptr) fn(*this);
  }
}

ModelBundle BackendRegistry::create(const std::string& name, const BackendOptions& options) {
  if (!contains(name)) load_plugins();
  auto it = factories_.find(name);
  if (it == factories_.end())
    throw BackendError("no backend registered under '" + name +
                       "' (set VERBDIFF_BACKEND_DIR to a directory of backend plugins)");
  return it->second(options);
}

ModelBundle make_backend(const BackendOptions& options) {
  if (options.name == "toy") return make_toy_backend(options);
  if (options.name == "external") {
    if (options.external_name.empty()) throw ConfigError("external backend needs a registry name");
    return BackendRegistry::instance().create(options.external_name, options);
  }
  throw ConfigError("unknown backend '" + options.name + "' (toy | external)");
}

}  // namespace verbdiff

#include "verbdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace verbdiff {

namespace {

constexpr char kMagic[4] = {'V', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError("truncated checkpoint " + path.string());
  return v;
}

std::string get_string(std::istream& in, const std::filesystem::path& path) {
  const auto n = get<std::uint32_t>(in, path);
  if (n > (1u << 20)) throw DataError("corrupt string length in " + path.string());
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw DataError("truncated checkpoint " + path.string());
  return s;
}

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(kMagic, 4);
    put(out, kVersion);
    put_string(out, checkpoint.config_hash);
    put(out, checkpoint.step);
    put(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
    for (const auto& t : checkpoint.tensors) {
      put_string(out, t.name);
      put(out, static_cast<std::uint32_t>(t.value.rows()));
      put(out, static_cast<std::uint32_t>(t.value.cols()));
      out.write(reinterpret_cast<const char*>(t.value.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.value.size())));
    }
    if (!out) throw DataError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path.string() + " is not a checkpoint");
  if (get<std::uint32_t>(in, path) != kVersion) throw DataError("unsupported checkpoint version");
  Checkpoint ck;
  ck.config_hash = get_string(in, path);
  ck.step = get<std::uint64_t>(in, path);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = get_string(in, path);
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) throw DataError("corrupt tensor shape in " + path.string());
    t.value.resize(rows, cols);
    if (!in.read(reinterpret_cast<char*>(t.value.data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.value.size()))))
      throw DataError("truncated checkpoint " + path.string());
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

Checkpoint capture_trainable(const DenoiserPort& denoiser, const std::string& config_hash,
                             std::uint64_t step) {
  Checkpoint ck;
  ck.config_hash = config_hash;
  ck.step = step;
  for (const auto& p : denoiser.parameters())
    if (p.group == ParameterGroup::cross_attention) ck.tensors.push_back({p.name, p.value});
  return ck;
}

void restore_trainable(DenoiserPort& denoiser, const Checkpoint& checkpoint) {
  for (const auto& t : checkpoint.tensors) {
    bool found = false;
    for (auto& p : denoiser.parameters()) {
      if (p.name != t.name) continue;
      if (p.group != ParameterGroup::cross_attention)
        throw DataError("checkpoint tensor '" + t.name + "' targets a frozen parameter");
      if (p.value.rows() != t.value.rows() || p.value.cols() != t.value.cols())
        throw DataError("checkpoint tensor '" + t.name + "' has the wrong shape");
      p.value = t.value;
      found = true;
    }
    if (!found) throw DataError("checkpoint tensor '" + t.name + "' has no matching parameter");
  }
}

}  // namespace verbdiff

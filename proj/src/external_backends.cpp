#include "verbdiff/external_backends.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

namespace verbdiff {

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

}  // namespace

std::optional<std::filesystem::path> find_backend_executable(const std::string& name) {
  const char* dir = std::getenv("VERBDIFF_BACKEND_DIR");
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  const std::filesystem::path p = std::filesystem::path(dir) / name;
  if (!std::filesystem::is_regular_file(p) || ::access(p.c_str(), X_OK) != 0) return std::nullopt;
  return p;
}

ExternalSimilarityBackend::ExternalSimilarityBackend(std::filesystem::path executable, SimilarityKind kind)
    : executable_(std::move(executable)), kind_(kind) {}

std::string ExternalSimilarityBackend::id() const {
  std::lock_guard lock(mutex_);
  return "external:" + executable_.filename().string() + (remote_id_.empty() ? "" : ":" + remote_id_);
}

std::vector<FeatureVector> ExternalSimilarityBackend::embed_texts(const std::vector<std::string>& texts) const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> missing;
  for (const auto& t : texts)
    if (!memo_.contains(t) && std::find(missing.begin(), missing.end(), t) == missing.end()) missing.push_back(t);

  if (!missing.empty()) {
    const auto tmp = std::filesystem::temp_directory_path();
    const std::string tag = std::to_string(::getpid()) + "_" + hex64(fnv1a64(executable_.string() + missing.front()));
    const auto request = tmp / ("verbdiff_req_" + tag + ".json");
    const auto response = tmp / ("verbdiff_resp_" + tag + ".json");
    {
      std::ofstream out(request);
      if (!out) throw BackendError("cannot write " + request.string());
      out << nlohmann::json{{"texts", missing}}.dump();
    }
    const std::string cmd =
        shell_quote(executable_.string()) + " " + shell_quote(request.string()) + " " + shell_quote(response.string());
    const int status = std::system(cmd.c_str());
    std::filesystem::remove(request);
    if (status != 0)
      throw BackendError(executable_.string() + " exited with status " + std::to_string(status));
    std::ifstream in(response);
    if (!in) throw BackendError(executable_.string() + " wrote no response");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(executable_.string() + " wrote malformed JSON: " + e.what());
    }
    in.close();
    std::filesystem::remove(response);
    const auto rows = j.at("embeddings").get<std::vector<std::vector<double>>>();
    if (rows.size() != missing.size())
      throw BackendError(executable_.string() + " returned " + std::to_string(rows.size()) +
                         " embeddings for " + std::to_string(missing.size()) + " texts");
    if (j.contains("id")) remote_id_ = j["id"].get<std::string>();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Vector v = Eigen::Map<const Vector>(rows[i].data(), static_cast<Eigen::Index>(rows[i].size()));
      if (v.norm() == 0.0) throw BackendError(executable_.string() + " returned a zero embedding");
      memo_[missing[i]] = v;
    }
  }
  std::vector<FeatureVector> out;
  for (const auto& t : texts) out.push_back(FeatureVector::unit(memo_.at(t)));
  return out;
}

FeatureVector ExternalSimilarityBackend::embed_text(const std::string& text) const {
  return embed_texts({text}).front();
}

std::shared_ptr<ExternalSimilarityBackend> external_similarity_backend(SimilarityKind kind) {
  auto exe = find_backend_executable("similarity-" + to_string(kind));
  if (!exe) return nullptr;
  return std::make_shared<ExternalSimilarityBackend>(*exe, kind);
}

}  // namespace verbdiff

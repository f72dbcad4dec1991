#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "verbdiff/eval_harness.hpp"

namespace verbdiff {

/// `$VERBDIFF_BACKEND_DIR/<name>` if it exists and is executable.
std::optional<std::filesystem::path> find_backend_executable(const std::string& name);

/// Text similarity served by an executable called as `<exe> <request.json> <response.json>`.
/// Request: {"texts": [...]}. Response: {"id": "...", "embeddings": [[...], ...]}, one row per
/// text. Embeddings are normalized on receipt and memoized per text.
class ExternalSimilarityBackend final : public SimilarityBackendPort {
 public:
  ExternalSimilarityBackend(std::filesystem::path executable, SimilarityKind kind);
  std::string id() const override;
  SimilarityKind kind() const override { return kind_; }
  FeatureVector embed_text(const std::string& text) const override;
  std::vector<FeatureVector> embed_texts(const std::vector<std::string>& texts) const;

 private:
  std::filesystem::path executable_;
  SimilarityKind kind_;
  mutable std::mutex mutex_;
  mutable std::string remote_id_;
  mutable std::map<std::string, Vector> memo_;
};

/// Looks for `similarity-clip_like` / `similarity-sentence_like` in the backend
/// directory; null when absent.
std::shared_ptr<ExternalSimilarityBackend> external_similarity_backend(SimilarityKind kind);

}  // namespace verbdiff

#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "verbdiff/attention_geometry.hpp"
#include "verbdiff/common.hpp"

namespace verbdiff {

/// (human, verb, object) label triple. Verbs may contain spaces ("sitting on").
struct HOITriplet {
  std::string human;
  std::string verb;
  std::string object;

  bool valid() const { return !human.empty() && !verb.empty() && !object.empty(); }
  auto operator<=>(const HOITriplet&) const = default;
};

std::string to_string(const HOITriplet& triplet);

struct HOIPair {
  BoundingBox human_box;
  BoundingBox object_box;
  HOITriplet triplet;
};

struct AnnotationRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<HOIPair> pairs;
};

struct PromptRecord {
  HOITriplet triplet;
  std::string text;
  std::vector<std::string> image_ids;
  int sample_count = 0;
};

/// Verb token for "no interaction" classes; those prompts are dropped.
inline constexpr std::string_view kExcludedVerb = "and";

struct LoadResult {
  std::vector<AnnotationRecord> records;  // sorted by image_id
  int rejected = 0;                       // records dropped for degenerate boxes
  std::vector<std::string> warnings;
};

/// Reads the JSON-lines annotation format. Throws DataError for a missing file or a
/// malformed line (the message carries the line number). Zero-area boxes reject the
/// record and bump `rejected` instead of failing the load.
LoadResult load_annotations(const std::filesystem::path& path);

/// Parses one annotation object; `line` is only used for messages.
AnnotationRecord parse_annotation(const nlohmann::json& j, std::size_t line);
nlohmann::json annotation_to_json(const AnnotationRecord& record);
void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationRecord>& records);

std::string indefinite_article(const std::string& noun);

/// "A photo of a {human} {verb} a/an {object}".
std::string render_prompt(const HOITriplet& triplet);

struct Realignment {
  std::vector<PromptRecord> prompts;  // sorted by prompt text
  std::vector<PromptRecord> excluded;
};

/// One record per distinct triplet. An image id is listed once under every triplet it
/// annotates; triplets whose verb is "and" go to `excluded`.
Realignment realign(const std::vector<AnnotationRecord>& records);
std::vector<PromptRecord> realign_to_prompts(const std::vector<AnnotationRecord>& records);

struct AnchorEntry {
  std::map<std::string, int> counts;  // verb -> sample count
  std::string anchor_verb;
};

struct AnchorTable {
  std::map<std::string, AnchorEntry> objects;

  /// Throws LookupError naming the object when it is unknown.
  const AnchorEntry& at(const std::string& object) const;
};

/// Anchor verb = most frequent verb per object; ties go to the lexicographically
/// smallest verb.
AnchorTable build_anchor_table(const std::vector<PromptRecord>& prompts);

/// render_prompt with the verb replaced by the object's anchor verb.
std::string anchor_prompt(const HOITriplet& triplet, const AnchorTable& table);

enum class BalanceMode { as_written, inverse_normalized };
std::string to_string(BalanceMode mode);
BalanceMode parse_balance_mode(const std::string& text);

/// (1 - beta^n) / (1 - beta) with beta = (N-1)/N for `as_written`; the raw inverse
/// (1 - beta) / (1 - beta^n) for `inverse_normalized`. The mean-one rescaling of the
/// inverse mode needs every class, so it happens in build_balance_table.
/// Throws std::domain_error for N < 2 or n < 1.
double effective_number(long long n_k, long long total, BalanceMode mode);

struct BalanceClass {
  std::string text;
  HOITriplet triplet;
  int n_k = 0;
  double alpha = 0.0;
};

struct BalanceTable {
  long long total_samples = 0;
  double beta = 0.0;
  BalanceMode mode = BalanceMode::as_written;
  std::vector<BalanceClass> classes;  // same order as the prompts it was built from

  const BalanceClass& at(const HOITriplet& triplet) const;
  double alpha(const HOITriplet& triplet) const { return at(triplet).alpha; }
};

/// One class per prompt; N is the sum of the prompt sample counts.
BalanceTable build_balance_table(const std::vector<PromptRecord>& prompts, BalanceMode mode);

/// Union of the human and object boxes of every pair annotated with `target`.
/// Throws DataError when no pair matches.
Grid interaction_mask(const AnnotationRecord& record, const HOITriplet& target, int height,
                      int width);

/// Ground-truth region: midpoint of the box centers, extent from the center distance
/// (normalized units).
InteractionRegion gt_interaction_region(const BoundingBox& human_box,
                                        const BoundingBox& object_box,
                                        const RegionOptions& options = {});

/// First pair annotated with `target`; throws DataError when none.
const HOIPair& find_pair(const AnnotationRecord& record, const HOITriplet& target);

// Serialization.
inline constexpr int kTablesFormatVersion = 1;
nlohmann::json tables_to_json(const AnchorTable& anchors, const BalanceTable& balance);
void tables_from_json(const nlohmann::json& j, AnchorTable& anchors, BalanceTable& balance);
nlohmann::json prompt_to_json(const PromptRecord& prompt);
PromptRecord prompt_from_json(const nlohmann::json& j);
void write_prompts(const std::filesystem::path& path, const std::vector<PromptRecord>& prompts);
std::vector<PromptRecord> read_prompts(const std::filesystem::path& path);

/// Converts the widely used QPIC-style `trainval_hico.json` layout (pixel boxes,
/// integer category ids) into annotation records. Entries must carry `width` and
/// `height`, or sizes must be supplied per file name. Ids index the name lists
/// starting at 1; the "no_interaction" verb becomes "and".
std::vector<AnnotationRecord> convert_qpic_annotations(
    const nlohmann::json& entries, const std::vector<std::string>& verb_names,
    const std::vector<std::string>& object_names,
    const std::map<std::string, std::pair<int, int>>& sizes = {});

}  // namespace verbdiff

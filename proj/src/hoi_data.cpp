#include "verbdiff/hoi_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace verbdiff {

using nlohmann::json;

std::string to_string(const HOITriplet& triplet) {
  return "(" + triplet.human + ", " + triplet.verb + ", " + triplet.object + ")";
}

namespace {

BoundingBox parse_box(const json& j, std::size_t line, const char* key) {
  if (!j.is_array() || j.size() != 4)
    throw DataError("line " + std::to_string(line) + ": " + key + " must be [x0,y0,x1,y1]");
  BoundingBox box;
  try {
    box = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  } catch (const json::exception&) {
    throw DataError("line " + std::to_string(line) + ": " + key + " must hold numbers");
  }
  return box;
}

std::string require_string(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty())
    throw DataError("line " + std::to_string(line) + ": missing or empty string field '" +
                    key + "'");
  return it->get<std::string>();
}

int require_int(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer() || it->get<long long>() <= 0)
    throw DataError("line " + std::to_string(line) + ": field '" + key +
                    "' must be a positive integer");
  return it->get<int>();
}

// Zero-area boxes are the one recoverable defect; everything else is malformed.
bool zero_area(const BoundingBox& b) { return b.x_min == b.x_max || b.y_min == b.y_max; }

void check_box(const BoundingBox& b, std::size_t line, const char* key) {
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!in_unit(b.x_min) || !in_unit(b.y_min) || !in_unit(b.x_max) || !in_unit(b.y_max))
    throw DataError("line " + std::to_string(line) + ": " + key + " outside [0,1]");
  if (b.x_min > b.x_max || b.y_min > b.y_max)
    throw DataError("line " + std::to_string(line) + ": " + key + " has min > max");
}

json box_to_json(const BoundingBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

}  // namespace

AnnotationRecord parse_annotation(const json& j, std::size_t line) {
  if (!j.is_object()) throw DataError("line " + std::to_string(line) + ": expected an object");
  AnnotationRecord record;
  record.image_id = require_string(j, "image_id", line);
  record.width = require_int(j, "width", line);
  record.height = require_int(j, "height", line);
  auto pairs = j.find("pairs");
  if (pairs == j.end() || !pairs->is_array() || pairs->empty())
    throw DataError("line " + std::to_string(line) + ": 'pairs' must be a non-empty array");
  for (const auto& p : *pairs) {
    if (!p.is_object()) throw DataError("line " + std::to_string(line) + ": pair must be an object");
    HOIPair pair;
    pair.human_box = parse_box(p.value("human_box", json()), line, "human_box");
    pair.object_box = parse_box(p.value("object_box", json()), line, "object_box");
    pair.triplet.human = require_string(p, "human", line);
    pair.triplet.verb = require_string(p, "verb", line);
    pair.triplet.object = require_string(p, "object", line);
    check_box(pair.human_box, line, "human_box");
    check_box(pair.object_box, line, "object_box");
    record.pairs.push_back(std::move(pair));
  }
  return record;
}

json annotation_to_json(const AnnotationRecord& record) {
  json pairs = json::array();
  for (const auto& p : record.pairs) {
    pairs.push_back({{"human_box", box_to_json(p.human_box)},
                     {"object_box", box_to_json(p.object_box)},
                     {"human", p.triplet.human},
                     {"verb", p.triplet.verb},
                     {"object", p.triplet.object}});
  }
  return {{"image_id", record.image_id},
          {"width", record.width},
          {"height", record.height},
          {"pairs", pairs}};
}

void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << annotation_to_json(r).dump() << '\n';
}

LoadResult load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("annotation file not found: " + path.string());

  LoadResult result;
  std::set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line) + ": invalid JSON (" + e.what() + ")");
    }
    AnnotationRecord record = parse_annotation(j, line);
    if (!seen.insert(record.image_id).second)
      throw DataError("line " + std::to_string(line) + ": duplicate image_id '" +
                      record.image_id + "'");
    const bool degenerate = std::any_of(record.pairs.begin(), record.pairs.end(), [](const auto& p) {
      return zero_area(p.human_box) || zero_area(p.object_box);
    });
    if (degenerate) {
      ++result.rejected;
      result.warnings.push_back("line " + std::to_string(line) + ": image '" + record.image_id +
                                "' rejected (zero-area box)");
      continue;
    }
    result.records.push_back(std::move(record));
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  return result;
}

std::string indefinite_article(const std::string& noun) {
  if (noun.empty()) return "a";
  switch (std::tolower(static_cast<unsigned char>(noun.front()))) {
    case 'a': case 'e': case 'i': case 'o': case 'u': return "an";
    default: return "a";
  }
}

std::string render_prompt(const HOITriplet& triplet) {
  return "A photo of a " + triplet.human + " " + triplet.verb + " " +
         indefinite_article(triplet.object) + " " + triplet.object;
}

Realignment realign(const std::vector<AnnotationRecord>& records) {
  std::map<HOITriplet, std::set<std::string>> images;
  for (const auto& record : records)
    for (const auto& pair : record.pairs) images[pair.triplet].insert(record.image_id);

  Realignment out;
  for (auto& [triplet, ids] : images) {
    PromptRecord prompt;
    prompt.triplet = triplet;
    prompt.text = render_prompt(triplet);
    prompt.image_ids.assign(ids.begin(), ids.end());
    prompt.sample_count = static_cast<int>(prompt.image_ids.size());
    (triplet.verb == kExcludedVerb ? out.excluded : out.prompts).push_back(std::move(prompt));
  }
  auto by_text = [](const PromptRecord& a, const PromptRecord& b) {
    return std::tie(a.text, a.triplet) < std::tie(b.text, b.triplet);
  };
  std::sort(out.prompts.begin(), out.prompts.end(), by_text);
  std::sort(out.excluded.begin(), out.excluded.end(), by_text);
  return out;
}

std::vector<PromptRecord> realign_to_prompts(const std::vector<AnnotationRecord>& records) {
  return realign(records).prompts;
}

const AnchorEntry& AnchorTable::at(const std::string& object) const {
  auto it = objects.find(object);
  if (it == objects.end()) throw LookupError("object '" + object + "' is not in the anchor table");
  return it->second;
}

AnchorTable build_anchor_table(const std::vector<PromptRecord>& prompts) {
  AnchorTable table;
  for (const auto& p : prompts) table.objects[p.triplet.object].counts[p.triplet.verb] += p.sample_count;
  for (auto& [object, entry] : table.objects) {
    int best = -1;
    // std::map iterates verbs in lexicographic order, so '>' keeps the smallest on ties.
    for (const auto& [verb, count] : entry.counts) {
      if (count > best) {
        best = count;
        entry.anchor_verb = verb;
      }
    }
  }
  return table;
}

std::string anchor_prompt(const HOITriplet& triplet, const AnchorTable& table) {
  HOITriplet anchored = triplet;
  anchored.verb = table.at(triplet.object).anchor_verb;
  return render_prompt(anchored);
}

std::string to_string(BalanceMode mode) {
  return mode == BalanceMode::as_written ? "as_written" : "inverse_normalized";
}

BalanceMode parse_balance_mode(const std::string& text) {
  if (text == "as_written") return BalanceMode::as_written;
  if (text == "inverse_normalized") return BalanceMode::inverse_normalized;
  throw ConfigError("unknown balance mode '" + text + "' (as_written | inverse_normalized)");
}

double effective_number(long long n_k, long long total, BalanceMode mode) {
  if (total < 2) throw std::domain_error("effective number needs N >= 2");
  if (n_k < 1) throw std::domain_error("effective number needs n_k >= 1");

  const double n = static_cast<double>(total);
  const double beta = (n - 1.0) / n;
  double alpha;
  if (n_k <= 1024) {
    // Geometric series sum_{i<n_k} beta^i; exact at n_k = 1.
    alpha = 0.0;
    double power = 1.0;
    for (long long i = 0; i < n_k; ++i) {
      alpha += power;
      power *= beta;
    }
  } else {
    alpha = -n * std::expm1(static_cast<double>(n_k) * std::log1p(-1.0 / n));
  }
  return mode == BalanceMode::as_written ? alpha : 1.0 / alpha;
}

const BalanceClass& BalanceTable::at(const HOITriplet& triplet) const {
  for (const auto& c : classes)
    if (c.triplet == triplet) return c;
  throw LookupError("no balance class for " + to_string(triplet));
}

BalanceTable build_balance_table(const std::vector<PromptRecord>& prompts, BalanceMode mode) {
  BalanceTable table;
  table.mode = mode;
  for (const auto& p : prompts) table.total_samples += p.sample_count;
  if (table.total_samples < 2) throw std::domain_error("balance table needs at least 2 samples");
  table.beta = (table.total_samples - 1.0) / static_cast<double>(table.total_samples);

  double sum = 0.0;
  for (const auto& p : prompts) {
    if (p.sample_count < 1) throw DataError("prompt '" + p.text + "' has no samples");
    BalanceClass c{p.text, p.triplet, p.sample_count,
                   effective_number(p.sample_count, table.total_samples, mode)};
    sum += c.alpha;
    table.classes.push_back(std::move(c));
  }
  if (mode == BalanceMode::inverse_normalized) {
    const double mean = sum / static_cast<double>(table.classes.size());
    for (auto& c : table.classes) c.alpha /= mean;
  }
  return table;
}

const HOIPair& find_pair(const AnnotationRecord& record, const HOITriplet& target) {
  for (const auto& p : record.pairs)
    if (p.triplet == target) return p;
  throw DataError("image '" + record.image_id + "' has no pair annotated " + to_string(target));
}

Grid interaction_mask(const AnnotationRecord& record, const HOITriplet& target, int height,
                      int width) {
  Grid mask(height, width);
  bool matched = false;
  for (const auto& p : record.pairs) {
    if (p.triplet != target) continue;
    matched = true;
    for (const BoundingBox* box : {&p.human_box, &p.object_box}) {
      Grid r = rasterize_box(*box, height, width);
      auto src = r.values();
      auto dst = mask.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
    }
  }
  if (!matched)
    throw DataError("image '" + record.image_id + "' has no pair annotated " + to_string(target));
  return mask;
}

InteractionRegion gt_interaction_region(const BoundingBox& human_box,
                                        const BoundingBox& object_box,
                                        const RegionOptions& options) {
  if (options.exponent != 1.0 && options.exponent != 2.0)
    throw ConfigError("region exponent must be 1 or 2");
  const Centroid h{human_box.center_x(), human_box.center_y()};
  const Centroid o{object_box.center_x(), object_box.center_y()};
  const Centroid mid{0.5 * (h.x + o.x), 0.5 * (h.y + o.y)};
  const double half =
      std::max(std::pow(std::hypot(h.x - o.x, h.y - o.y), options.exponent), options.min_extent);

  InteractionRegion region;
  region.center = mid;
  region.half_extent = half;
  region.clipped_box = {std::clamp(mid.x - half, 0.0, 1.0), std::clamp(mid.y - half, 0.0, 1.0),
                        std::clamp(mid.x + half, 0.0, 1.0), std::clamp(mid.y + half, 0.0, 1.0)};
  return region;
}

json tables_to_json(const AnchorTable& anchors, const BalanceTable& balance) {
  json objects = json::object();
  for (const auto& [object, entry] : anchors.objects)
    objects[object] = {{"anchor_verb", entry.anchor_verb}, {"counts", entry.counts}};
  json classes = json::array();
  for (const auto& c : balance.classes)
    classes.push_back({{"text", c.text},
                       {"human", c.triplet.human},
                       {"verb", c.triplet.verb},
                       {"object", c.triplet.object},
                       {"n_k", c.n_k},
                       {"alpha", c.alpha}});
  return {{"format_version", kTablesFormatVersion},
          {"anchors", objects},
          {"balance",
           {{"total_samples", balance.total_samples},
            {"beta", balance.beta},
            {"mode", to_string(balance.mode)},
            {"classes", classes}}}};
}

void tables_from_json(const json& j, AnchorTable& anchors, BalanceTable& balance) {
  try {
    if (j.at("format_version").get<int>() != kTablesFormatVersion)
      throw DataError("unsupported tables format_version");
    anchors = {};
    for (const auto& [object, entry] : j.at("anchors").items()) {
      AnchorEntry e;
      e.anchor_verb = entry.at("anchor_verb").get<std::string>();
      e.counts = entry.at("counts").get<std::map<std::string, int>>();
      anchors.objects.emplace(object, std::move(e));
    }
    const auto& b = j.at("balance");
    balance = {};
    balance.total_samples = b.at("total_samples").get<long long>();
    balance.beta = b.at("beta").get<double>();
    balance.mode = parse_balance_mode(b.at("mode").get<std::string>());
    for (const auto& c : b.at("classes"))
      balance.classes.push_back({c.at("text").get<std::string>(),
                                 {c.at("human").get<std::string>(), c.at("verb").get<std::string>(),
                                  c.at("object").get<std::string>()},
                                 c.at("n_k").get<int>(),
                                 c.at("alpha").get<double>()});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed tables document: ") + e.what());
  }
}

json prompt_to_json(const PromptRecord& p) {
  return {{"text", p.text},
          {"human", p.triplet.human},
          {"verb", p.triplet.verb},
          {"object", p.triplet.object},
          {"sample_count", p.sample_count},
          {"image_ids", p.image_ids}};
}

PromptRecord prompt_from_json(const json& j) {
  try {
    PromptRecord p;
    p.triplet = {j.at("human").get<std::string>(), j.at("verb").get<std::string>(),
                 j.at("object").get<std::string>()};
    p.text = j.at("text").get<std::string>();
    p.image_ids = j.at("image_ids").get<std::vector<std::string>>();
    p.sample_count = j.at("sample_count").get<int>();
    if (p.sample_count != static_cast<int>(p.image_ids.size()))
      throw DataError("prompt '" + p.text + "': sample_count does not match image_ids");
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed prompt record: ") + e.what());
  }
}

void write_prompts(const std::filesystem::path& path, const std::vector<PromptRecord>& prompts) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : prompts) out << prompt_to_json(p).dump() << '\n';
}

std::vector<PromptRecord> read_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("prompt file not found: " + path.string());
  std::vector<PromptRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(prompt_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<AnnotationRecord> convert_qpic_annotations(
    const json& entries, const std::vector<std::string>& verb_names,
    const std::vector<std::string>& object_names,
    const std::map<std::string, std::pair<int, int>>& sizes) {
  if (!entries.is_array()) throw DataError("QPIC annotations must be a JSON array");
  auto name_of = [](const std::vector<std::string>& names, int id, const char* what) {
    if (id < 1 || id > static_cast<int>(names.size()) || names[static_cast<std::size_t>(id - 1)].empty())
      throw DataError(std::string("unknown ") + what + " id " + std::to_string(id));
    return names[static_cast<std::size_t>(id - 1)];
  };

  std::vector<AnnotationRecord> out;
  for (const auto& e : entries) {
    try {
      const auto file = e.at("file_name").get<std::string>();
      AnnotationRecord record;
      record.image_id = std::filesystem::path(file).stem().string();
      if (e.contains("width") && e.contains("height")) {
        record.width = e.at("width").get<int>();
        record.height = e.at("height").get<int>();
      } else if (auto it = sizes.find(file); it != sizes.end()) {
        record.width = it->second.first;
        record.height = it->second.second;
      } else {
        throw DataError("no image size for '" + file + "'");
      }
      const auto& boxes = e.at("annotations");
      auto norm_box = [&](const json& a) {
        const auto b = a.at("bbox").get<std::vector<double>>();
        if (b.size() != 4) throw DataError("bbox must have 4 values in '" + file + "'");
        return BoundingBox{std::clamp(b[0] / record.width, 0.0, 1.0),
                           std::clamp(b[1] / record.height, 0.0, 1.0),
                           std::clamp(b[2] / record.width, 0.0, 1.0),
                           std::clamp(b[3] / record.height, 0.0, 1.0)};
      };
      for (const auto& h : e.at("hoi_annotation")) {
        const auto& subject = boxes.at(h.at("subject_id").get<std::size_t>());
        const auto& object = boxes.at(h.at("object_id").get<std::size_t>());
        HOIPair pair;
        pair.human_box = norm_box(subject);
        pair.object_box = norm_box(object);
        pair.triplet.human = name_of(object_names, subject.at("category_id").get<int>(), "object");
        pair.triplet.object = name_of(object_names, object.at("category_id").get<int>(), "object");
        std::string verb = name_of(verb_names, h.at("category_id").get<int>(), "verb");
        std::replace(verb.begin(), verb.end(), '_', ' ');
        pair.triplet.verb = verb == "no interaction" ? std::string(kExcludedVerb) : verb;
        record.pairs.push_back(std::move(pair));
      }
      if (!record.pairs.empty()) out.push_back(std::move(record));
    } catch (const json::exception& ex) {
      throw DataError(std::string("malformed QPIC entry: ") + ex.what());
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  return out;
}

}  // namespace verbdiff

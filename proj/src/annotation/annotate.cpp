#include "gae/annotation/annotate.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "gae/annotation/prompts.hpp"
#include "gae/common/error.hpp"
#include "gae/common/image.hpp"
#include "gae/common/log.hpp"

namespace gae::annotation {

using nlohmann::json;

bool SilverSet::valid() const {
  if (static_cast<int>(rewrites.size()) != kSilverRewrites) return false;
  std::set<std::string> seen{gold_query};
  for (const auto& r : rewrites) {
    if (r.empty() || !seen.insert(r).second) return false;
  }
  return true;
}

json extract_json(const std::string& text, const std::string& stage) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    const char open = text[start];
    if (open != '{' && open != '[') continue;
    const char close = open == '{' ? '}' : ']';
    int depth = 0;
    bool in_string = false;
    for (std::size_t k = start; k < text.size(); ++k) {
      const char c = text[k];
      if (in_string) {
        if (c == '\\') ++k;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == open) ++depth;
      else if (c == close && --depth == 0) {
        try {
          return json::parse(text.substr(start, k - start + 1));
        } catch (const json::exception&) {
          break;
        }
      }
    }
  }
  throw ContentError(stage + ": response contains no parseable JSON");
}

std::vector<NerEntity> locate_entities(
    const std::string& query, const std::vector<std::pair<std::string, std::string>>& surfaces_and_labels) {
  std::vector<std::size_t> order(surfaces_and_labels.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return surfaces_and_labels[a].first.size() > surfaces_and_labels[b].first.size();
  });
  std::vector<NerEntity> out;
  for (const auto k : order) {
    const auto& [surface, label] = surfaces_and_labels[k];
    if (surface.empty()) continue;
    bool placed = false;
    for (auto pos = query.find(surface); pos != std::string::npos; pos = query.find(surface, pos + 1)) {
      const auto end = pos + surface.size();
      const bool overlaps = std::any_of(out.begin(), out.end(), [&](const NerEntity& e) {
        return pos < e.end && e.begin < end;
      });
      if (!overlaps) {
        out.push_back({surface, label, pos, end});
        placed = true;
        break;
      }
    }
    if (!placed) logger()->debug("entity '{}' not found in query", surface);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
  return out;
}

std::string describe_state(const trajectory::StateRecord& state, const std::filesystem::path& image_root,
                           AnnotationClient& client, const std::string& request_id) {
  ChatRequest req;
  req.id = request_id;
  req.prompt = std::string(kDescribeStatePrompt);
  req.images.push_back({state.content_hash, "image/png",
                        base64_encode(read_file_bytes(image_root / state.screenshot.path))});
  std::string text = client.complete(req).text;
  std::string line;
  bool space = false;
  for (char c : text) {
    if (c == '\n' || c == '\r' || c == '\t' || c == ' ') {
      space = !line.empty();
      continue;
    }
    if (space) line.push_back(' ');
    space = false;
    line.push_back(c);
  }
  if (line.empty()) throw ContentError("describe_state " + request_id + ": empty completion");
  return line;
}

SilverResult generate_silver(const std::string& query, AnnotationClient& client,
                             const std::string& request_id) {
  if (query.empty()) throw UserError("generate_silver: query must be non-empty");
  SilverResult result;
  result.silver.gold_query = query;

  // Stage 1: entities.
  const auto ner_reply = client.complete({request_id + "/ner", build_ner_prompt(query), {}}).text;
  const json ner_json = extract_json(ner_reply, "silver stage 1 (NER)");
  const json& entity_list = ner_json.is_object() ? ner_json.value("entities", json::array()) : ner_json;
  if (!entity_list.is_array()) throw ContentError("silver stage 1 (NER): entities is not a list");
  std::vector<std::pair<std::string, std::string>> raw;
  for (const auto& e : entity_list) {
    if (!e.is_object()) throw ContentError("silver stage 1 (NER): entity is not an object");
    std::string surface = e.contains("surface") ? e["surface"].get<std::string>()
                          : e.contains("text")  ? e["text"].get<std::string>()
                                                : e.value("entity", std::string());
    std::string label = e.contains("label") ? e["label"].get<std::string>() : e.value("type", std::string());
    raw.emplace_back(std::move(surface), std::move(label));
  }
  result.entities = locate_entities(query, raw);

  // Stage 2: alternatives.
  json ners = json::array();
  for (const auto& e : result.entities) ners.push_back({{"surface", e.surface}, {"label", e.label}});
  if (!result.entities.empty()) {
    const auto alt_reply =
        client.complete({request_id + "/alternatives", build_alternatives_prompt(query, ners.dump()), {}}).text;
    const json alt_json = extract_json(alt_reply, "silver stage 2 (alternatives)");
    const json& alts = alt_json.contains("alternatives") ? alt_json["alternatives"] : alt_json;
    if (!alts.is_object()) throw ContentError("silver stage 2 (alternatives): expected an object");
    for (const auto& e : result.entities) {
      if (!alts.contains(e.surface) || !alts[e.surface].is_array()) {
        throw ContentError("silver stage 2 (alternatives): no alternatives for '" + e.surface + "'");
      }
      auto list = alts[e.surface].get<std::vector<std::string>>();
      if (static_cast<int>(list.size()) < kSilverRewrites) {
        throw ContentError("silver stage 2 (alternatives): fewer than five alternatives for '" +
                           e.surface + "'");
      }
      list.resize(kSilverRewrites);
      result.alternatives[e.surface] = std::move(list);
    }
  }

  // Substitute the k-th alternative of every entity, right to left so the
  // earlier offsets stay valid.
  for (int k = 0; k < kSilverRewrites; ++k) {
    std::string q = query;
    for (auto it = result.entities.rbegin(); it != result.entities.rend(); ++it) {
      q.replace(it->begin, it->end - it->begin, result.alternatives.at(it->surface)[static_cast<std::size_t>(k)]);
    }
    result.substituted.push_back(std::move(q));
  }

  // Stage 3: rewrite.
  const auto rw_reply =
      client.complete({request_id + "/rewrite", build_rewrite_prompt(result.substituted), {}}).text;
  const json rw_json = extract_json(rw_reply, "silver stage 3 (rewrite)");
  const json& rewrites = rw_json.is_object() ? rw_json.value("rewrites", json()) : rw_json;
  if (!rewrites.is_array()) throw ContentError("silver stage 3 (rewrite): rewrites is not a list");
  for (const auto& r : rewrites) {
    if (!r.is_string()) throw ContentError("silver stage 3 (rewrite): rewrite is not a string");
    result.silver.rewrites.push_back(r.get<std::string>());
  }
  if (static_cast<int>(result.silver.rewrites.size()) < kSilverRewrites) {
    throw ContentError("silver stage 3 (rewrite): got " + std::to_string(result.silver.rewrites.size()) +
                       " rewrites, need 5");
  }
  result.silver.rewrites.resize(kSilverRewrites);
  if (!result.silver.valid()) {
    throw ContentError("silver stage 3 (rewrite): rewrites are not pairwise distinct and distinct from the query");
  }
  return result;
}

std::string silver_to_json_line(const std::string& trajectory_id, const SilverResult& result) {
  nlohmann::ordered_json entities = nlohmann::ordered_json::array();
  for (const auto& e : result.entities) {
    entities.push_back({{"surface", e.surface}, {"label", e.label}, {"begin", e.begin}, {"end", e.end}});
  }
  nlohmann::ordered_json alternatives = nlohmann::ordered_json::object();
  for (const auto& [surface, list] : result.alternatives) alternatives[surface] = list;
  nlohmann::ordered_json line{{"trajectory_id", trajectory_id},
                              {"gold_query", result.silver.gold_query},
                              {"rewrites", result.silver.rewrites},
                              {"entities", entities},
                              {"alternatives", alternatives},
                              {"substituted", result.substituted}};
  return line.dump();
}

std::map<std::string, SilverSet> load_silver_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open silver file: " + path.string());
  std::map<std::string, SilverSet> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto j = json::parse(line);
      SilverSet s{j.at("gold_query").get<std::string>(), j.at("rewrites").get<std::vector<std::string>>()};
      if (!s.valid()) throw ValidationError(where + ": silver set must hold five distinct rewrites");
      out.emplace(j.at("trajectory_id").get<std::string>(), std::move(s));
    } catch (const json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gae::annotation

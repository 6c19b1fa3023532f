#include "gae/serialize/context.hpp"

#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gae/common/error.hpp"
#include "gae/trajectory/corpus.hpp"

namespace gae::serialize {

using trajectory::StateId;

void ContextSequence::append_text(std::string_view text) {
  if (text.empty()) return;
  if (!elements.empty()) {
    if (auto* run = std::get_if<TextRun>(&elements.back())) {
      run->text += text;
      return;
    }
  }
  elements.emplace_back(TextRun{std::string(text)});
}

void ContextSequence::append_image(std::string state_id) { elements.emplace_back(ImageSlot{std::move(state_id)}); }

void ContextSequence::append(const ContextSequence& other) {
  for (const auto& e : other.elements) {
    if (const auto* run = std::get_if<TextRun>(&e)) {
      append_text(run->text);
    } else {
      elements.push_back(e);
    }
  }
}

std::string ContextSequence::render(std::string_view image_token) const {
  std::string out;
  for (const auto& e : elements) {
    if (const auto* run = std::get_if<TextRun>(&e)) {
      out += run->text;
    } else {
      out += image_token;
    }
  }
  return out;
}

std::vector<std::string> ContextSequence::image_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : elements) {
    if (const auto* slot = std::get_if<ImageSlot>(&e)) ids.push_back(slot->state_id);
  }
  return ids;
}

std::size_t ContextSequence::image_count() const { return image_ids().size(); }

std::size_t ContextSequence::text_bytes() const {
  std::size_t n = 0;
  for (const auto& e : elements) {
    if (const auto* run = std::get_if<TextRun>(&e)) n += run->text.size();
  }
  return n;
}

ContextSequence serialize_state(const std::string& trajectory_id, const trajectory::StateRecord& s) {
  ContextSequence seq;
  seq.append_text("Observation: ");
  seq.append_image(StateId{trajectory_id, s.index}.str());
  return seq;
}

std::string format_coordinate(double v) {
  // glibc printf rounds the exact binary value with ties-to-even.
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

namespace {

std::string json_scalar(const nlohmann::json& v) {
  return v.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string render_value(const nlohmann::json& v) {
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k) out += ", ";
      out += json_scalar(v[k]);
    }
    return out + "]";
  }
  return json_scalar(v);
}

}  // namespace

std::string serialize_action(const trajectory::ActionRecord& a, int index) {
  std::string out = "Action " + std::to_string(index) + ": {\"operation\": " + json_scalar(a.operation) +
                    ", \"value\": " + render_value(a.value) + ", \"target\": ";
  if (a.target) {
    const auto& b = *a.target;
    out += "{\"x\": " + format_coordinate(b.x) + ", \"y\": " + format_coordinate(b.y) +
           ", \"width\": " + format_coordinate(b.width) + ", \"height\": " + format_coordinate(b.height) + "}";
  } else {
    out += "null";
  }
  return out + "}";
}

std::string serialize_action_space(const trajectory::ActionSpaceDef& space) {
  std::string out = "Action Space:\n";
  for (std::size_t k = 0; k < space.actions.size(); ++k) {
    out += std::to_string(k + 1) + ". " + space.actions[k].name + ": " + space.actions[k].description + "\n";
  }
  out += kCoordinateConvention;
  return out;
}

ContextSequence serialize_segment(const trajectory::TrajectoryRecord& t, int i, int j) {
  if (i < 1 || j < i || j > t.length()) {
    throw UserError("segment [" + std::to_string(i) + ":" + std::to_string(j) + "] out of range for trajectory '" +
                    t.id + "' with " + std::to_string(t.length()) + " steps");
  }
  ContextSequence seq;
  seq.append_text(serialize_action_space(t.action_space));
  for (int step = i; step <= j; ++step) {
    const int local = step - i + 1;
    seq.append_text("\nObservation " + std::to_string(local) + ": ");
    seq.append_image(StateId{t.id, step}.str());
    seq.append_text("\n" + serialize_action(t.action(step), local));
  }
  return seq;
}

ContextSequence serialize_key(const std::string& augmented_query, const std::optional<ContextSequence>& payload) {
  if (augmented_query.empty()) throw UserError("serialize_key: augmented query must be non-empty");
  std::string q = augmented_query;
  for (auto& c : q) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  ContextSequence seq;
  seq.side = Side::kKey;
  seq.append_text(q);
  if (payload && !payload->elements.empty()) {
    seq.append_text("\n");
    seq.append(*payload);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Grammar check
// ---------------------------------------------------------------------------

namespace {

constexpr char kSentinel = '\x01';

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (true) {
    const auto nl = s.find('\n', start);
    lines.push_back(s.substr(start, nl == std::string::npos ? std::string::npos : nl - start));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return lines;
}

bool is_numbered(const std::string& line, const std::string& head, int number, std::string* rest) {
  const std::string prefix = head + std::to_string(number) + ": ";
  if (!line.starts_with(prefix)) return false;
  *rest = line.substr(prefix.size());
  return true;
}

bool payload_well_formed(const std::vector<std::string>& lines, std::size_t from) {
  if (from >= lines.size()) return false;
  if (lines.size() - from == 1) return lines[from] == std::string("Observation: ") + kSentinel;
  if (lines[from] != "Action Space:") return false;
  std::size_t k = from + 1;
  int def = 1;
  for (; k < lines.size() && lines[k] != kCoordinateConvention; ++k, ++def) {
    const std::string prefix = std::to_string(def) + ". ";
    if (!lines[k].starts_with(prefix) || lines[k].find(": ", prefix.size()) == std::string::npos) return false;
  }
  if (def == 1 || k >= lines.size()) return false;  // no definitions or no convention line
  ++k;
  int block = 1;
  for (; k < lines.size(); k += 2, ++block) {
    std::string rest;
    if (k + 1 >= lines.size()) return false;
    if (!is_numbered(lines[k], "Observation ", block, &rest) || rest != std::string(1, kSentinel)) return false;
    if (!is_numbered(lines[k + 1], "Action ", block, &rest)) return false;
    try {
      const auto j = nlohmann::json::parse(rest);
      if (!j.is_object() || j.size() != 3 || !j.contains("operation") || !j.contains("value") || !j.contains("target")) {
        return false;
      }
    } catch (const nlohmann::json::exception&) {
      return false;
    }
  }
  return block > 1;
}

}  // namespace

bool is_well_formed(const ContextSequence& seq) {
  if (seq.elements.empty()) return false;
  const std::string text = seq.render(std::string(1, kSentinel));
  const auto lines = split_lines(text);
  if (seq.side == Side::kValue) return payload_well_formed(lines, 0);
  if (lines.front().empty() || lines.front().find(kSentinel) != std::string::npos) return false;
  if (lines.size() == 1) return true;  // query-only key
  return payload_well_formed(lines, 1);
}

// ---------------------------------------------------------------------------
// Corpus-backed serialization
// ---------------------------------------------------------------------------

CorpusIndex::CorpusIndex(const std::vector<trajectory::TrajectoryRecord>& corpus) : corpus_(corpus) {
  for (std::size_t k = 0; k < corpus.size(); ++k) by_id_.emplace(corpus[k].id, k);
}

const trajectory::TrajectoryRecord& CorpusIndex::at(const std::string& trajectory_id) const {
  const auto it = by_id_.find(trajectory_id);
  if (it == by_id_.end()) throw IntegrityError("unknown trajectory id '" + trajectory_id + "'");
  return corpus_[it->second];
}

const trajectory::StateRecord& CorpusIndex::state(const std::string& state_id) const {
  const auto id = StateId::parse(state_id);
  const auto& t = at(id.trajectory_id);
  if (id.index < 1 || id.index > t.length()) throw IntegrityError("state id out of range: " + state_id);
  return t.state(id.index);
}

ContextSequence serialize_value(const CorpusIndex& index, const pairs::SegmentRef& segment) {
  const auto& t = index.at(segment.trajectory_id);
  try {
    if (segment.kind == pairs::SegmentKind::kState) {
      if (segment.i < 1 || segment.i > t.length()) throw UserError("state index out of range");
      return serialize_state(t.id, t.state(segment.i));
    }
    return serialize_segment(t, segment.i, segment.j);
  } catch (const UserError& e) {
    throw IntegrityError("cannot serialize segment " + segment.id() + ": " + e.what());
  }
}

ContextSequence serialize_pair_key(const CorpusIndex& index, const pairs::RetrievalPair& pair) {
  std::optional<ContextSequence> payload;
  if (pair.key_segment) payload = serialize_value(index, *pair.key_segment);
  return serialize_key(pair.key_query, payload);
}

std::string to_json_line(const std::string& pair_id, const ContextSequence& seq) {
  nlohmann::ordered_json elements = nlohmann::ordered_json::array();
  for (const auto& e : seq.elements) {
    if (const auto* run = std::get_if<TextRun>(&e)) {
      elements.push_back({{"text", run->text}});
    } else {
      elements.push_back({{"image", std::get<ImageSlot>(e).state_id}});
    }
  }
  nlohmann::ordered_json j{{"pair_id", pair_id},
                           {"side", seq.side == Side::kKey ? "key" : "value"},
                           {"elements", elements}};
  return j.dump();
}

std::pair<std::string, ContextSequence> context_from_json_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  ContextSequence seq;
  const auto side = j.at("side").get<std::string>();
  if (side != "key" && side != "value") throw UserError("bad context side '" + side + "'");
  seq.side = side == "key" ? Side::kKey : Side::kValue;
  for (const auto& e : j.at("elements")) {
    if (e.contains("text")) {
      seq.elements.emplace_back(TextRun{e.at("text").get<std::string>()});
    } else {
      seq.elements.emplace_back(ImageSlot{e.at("image").get<std::string>()});
    }
  }
  return {j.at("pair_id").get<std::string>(), std::move(seq)};
}

}  // namespace gae::serialize

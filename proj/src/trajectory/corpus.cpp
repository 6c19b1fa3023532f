#include "gae/trajectory/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "gae/common/error.hpp"
#include "gae/common/hash.hpp"
#include "gae/common/image.hpp"
#include "gae/common/log.hpp"

namespace gae::trajectory {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

bool ActionSpaceDef::contains(std::string_view operation) const {
  return std::any_of(actions.begin(), actions.end(),
                     [&](const ActionDef& a) { return a.name == operation; });
}

std::string StateId::str() const { return trajectory_id + "#" + std::to_string(index); }

StateId StateId::parse(std::string_view text) {
  const auto hash = text.rfind('#');
  if (hash == std::string_view::npos) throw UserError("bad state id: " + std::string(text));
  StateId id{std::string(text.substr(0, hash)), 0};
  auto digits = text.substr(hash + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id.index);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || id.index < 1) {
    throw UserError("bad state id: " + std::string(text));
  }
  return id;
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

std::string to_json_line(const TrajectoryRecord& t) {
  ojson space = ojson::array();
  for (const auto& a : t.action_space.actions) {
    space.push_back(ojson{{"name", a.name}, {"description", a.description}});
  }
  ojson steps = ojson::array();
  for (const auto& step : t.steps) {
    ojson target = nullptr;
    if (step.action.target) {
      const auto& b = *step.action.target;
      target = ojson{{"x", b.x}, {"y", b.y}, {"width", b.width}, {"height", b.height}};
    }
    steps.push_back(ojson{
        {"index", step.state.index},
        {"screenshot",
         ojson{{"path", step.state.screenshot.path},
               {"width", step.state.screenshot.width},
               {"height", step.state.screenshot.height}}},
        {"description", step.state.description},
        {"action",
         ojson{{"operation", step.action.operation},
               {"value", ojson::parse(step.action.value.dump())},
               {"target", target}}},
    });
  }
  ojson line{{"id", t.id},
             {"source", t.source},
             {"query", t.query},
             {"action_space",
              ojson{{"source_name", t.action_space.source_name}, {"actions", space}}},
             {"steps", steps}};
  return line.dump();
}

namespace {

template <typename T>
T required(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ValidationError(where + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

TrajectoryRecord from_json_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("manifest line is not a JSON object");

  TrajectoryRecord t;
  t.id = required<std::string>(j, "id", "trajectory");
  const std::string where = "trajectory '" + t.id + "'";
  t.source = required<std::string>(j, "source", where);
  t.query = required<std::string>(j, "query", where);

  const auto& space = j.contains("action_space") ? j.at("action_space") : nlohmann::json();
  t.action_space.source_name = required<std::string>(space, "source_name", where + " action_space");
  const auto actions = required<nlohmann::json>(space, "actions", where + " action_space");
  if (!actions.is_array()) throw ValidationError(where + ": action_space.actions is not a list");
  for (const auto& a : actions) {
    t.action_space.actions.push_back({required<std::string>(a, "name", where + " action"),
                                      required<std::string>(a, "description", where + " action")});
  }

  const auto steps = required<nlohmann::json>(j, "steps", where);
  if (!steps.is_array()) throw ValidationError(where + ": steps is not a list");
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const auto& s = steps[k];
    const std::string swhere = where + " step " + std::to_string(k + 1);
    Step step;
    step.state.index = required<int>(s, "index", swhere);
    const auto shot = required<nlohmann::json>(s, "screenshot", swhere);
    step.state.screenshot.path = required<std::string>(shot, "path", swhere + " screenshot");
    step.state.screenshot.width = required<int>(shot, "width", swhere + " screenshot");
    step.state.screenshot.height = required<int>(shot, "height", swhere + " screenshot");
    step.state.description = required<std::string>(s, "description", swhere);
    const auto action = required<nlohmann::json>(s, "action", swhere);
    step.action.operation = required<std::string>(action, "operation", swhere + " action");
    step.action.value = action.contains("value") ? action.at("value") : nlohmann::json();
    if (action.contains("target") && !action.at("target").is_null()) {
      const auto& b = action.at("target");
      step.action.target = BoundingBox{required<double>(b, "x", swhere + " target"),
                                       required<double>(b, "y", swhere + " target"),
                                       required<double>(b, "width", swhere + " target"),
                                       required<double>(b, "height", swhere + " target")};
    }
    t.steps.push_back(std::move(step));
  }
  return t;
}

void write_manifest(const fs::path& path, const std::vector<TrajectoryRecord>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write manifest: " + path.string());
  for (const auto& t : corpus) out << to_json_line(t) << '\n';
}

std::vector<TrajectoryRecord> load_manifest(const fs::path& manifest, const fs::path& image_root,
                                            const std::string& source,
                                            const LoadOptions& options) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw UserError("cannot open manifest: " + manifest.string());

  std::vector<TrajectoryRecord> corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    TrajectoryRecord t;
    try {
      t = from_json_line(line);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!source.empty() && t.source != source) {
      throw ValidationError(where + ": trajectory '" + t.id + "' has source '" + t.source +
                            "', expected '" + source + "'");
    }
    t.image_root = image_root;

    if (options.check_images) {
      for (auto& step : t.steps) {
        const fs::path image = image_root / step.state.screenshot.path;
        if (!fs::exists(image)) {
          throw ValidationError(where + ": trajectory '" + t.id + "' step " +
                                std::to_string(step.state.index) + ": missing image " +
                                image.string());
        }
        const auto size = read_png_size(image);
        if (size.width != step.state.screenshot.width ||
            size.height != step.state.screenshot.height) {
          throw ValidationError(where + ": trajectory '" + t.id + "' step " +
                                std::to_string(step.state.index) + ": image " + image.string() +
                                " is " + std::to_string(size.width) + "x" +
                                std::to_string(size.height) + ", manifest says " +
                                std::to_string(step.state.screenshot.width) + "x" +
                                std::to_string(step.state.screenshot.height));
        }
        step.state.content_hash = sha256_hex(read_file_bytes(image));
      }
    }

    const auto report = validate_trajectory(t, options.require_descriptions);
    if (!report.ok()) {
      throw ValidationError(where + ": trajectory '" + t.id + "': " + report.summary());
    }
    corpus.push_back(std::move(t));
  }

  std::sort(corpus.begin(), corpus.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t k = 1; k < corpus.size(); ++k) {
    if (corpus[k].id == corpus[k - 1].id) {
      throw ValidationError(manifest.string() + ": duplicate trajectory id '" + corpus[k].id + "'");
    }
  }
  return corpus;
}

std::vector<TrajectoryRecord> ingest_corpus(const fs::path& root, const std::string& source,
                                            const LoadOptions& options) {
  if (!fs::is_directory(root)) throw UserError("corpus root is not a directory: " + root.string());
  std::vector<fs::path> manifests;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      manifests.push_back(entry.path());
    }
  }
  if (manifests.empty()) {
    logger()->warn("no JSONL manifest in {}; source '{}' is empty", root.string(), source);
    return {};
  }
  if (manifests.size() > 1) {
    std::sort(manifests.begin(), manifests.end());
    throw UserError("corpus root " + root.string() + " holds " +
                    std::to_string(manifests.size()) + " manifests; expected one");
  }
  auto corpus = load_manifest(manifests.front(), root, source, options);
  if (corpus.empty()) logger()->warn("manifest {} holds no trajectories", manifests.front().string());
  return corpus;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::string ValidationReport::summary() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    if (v.step) out += "step " + std::to_string(*v.step) + ": ";
    out += v.message;
  }
  return out;
}

namespace {

bool is_scalar(const nlohmann::json& v) {
  return v.is_string() || v.is_number() || v.is_boolean() || v.is_null();
}

void check_unit(double value, const char* name, int step, std::vector<Violation>& out) {
  if (!(value >= 0.0 && value <= 1.0)) {
    out.push_back({step, std::string("target.") + name + " out of [0,1]"});
  }
}

}  // namespace

ValidationReport validate_trajectory(const TrajectoryRecord& t, bool require_descriptions) {
  ValidationReport r;
  auto& v = r.violations;
  if (t.id.empty()) v.push_back({std::nullopt, "empty trajectory id"});
  if (t.action_space.actions.empty()) v.push_back({std::nullopt, "action space is empty"});
  std::set<std::string> names;
  for (const auto& a : t.action_space.actions) {
    if (!names.insert(a.name).second) {
      v.push_back({std::nullopt, "duplicate action name '" + a.name + "' in action space"});
    }
  }
  if (t.steps.empty()) v.push_back({std::nullopt, "trajectory has no steps"});

  for (std::size_t k = 0; k < t.steps.size(); ++k) {
    const auto& step = t.steps[k];
    const int expected = static_cast<int>(k) + 1;
    if (step.state.index != expected) {
      v.push_back({expected, "state index " + std::to_string(step.state.index) +
                                 " breaks consecutive numbering (expected " +
                                 std::to_string(expected) + ")"});
    }
    if (step.state.screenshot.width <= 0 || step.state.screenshot.height <= 0) {
      v.push_back({expected, "screenshot width/height must be positive"});
    }
    if (step.state.screenshot.path.empty()) v.push_back({expected, "screenshot path is empty"});
    if (require_descriptions && step.state.description.empty()) {
      v.push_back({expected, "state description is empty"});
    }
    const auto& a = step.action;
    if (!t.action_space.contains(a.operation)) {
      v.push_back({expected, "unknown operation '" + a.operation + "' for action space '" +
                                 t.action_space.source_name + "'"});
    }
    if (!(a.value.is_null() || a.value.is_string() ||
          (a.value.is_array() && std::all_of(a.value.begin(), a.value.end(), is_scalar)))) {
      v.push_back({expected, "action value must be null, a string, or a list of scalars"});
    }
    if (a.target) {
      const auto& b = *a.target;
      check_unit(b.x, "x", expected, v);
      check_unit(b.y, "y", expected, v);
      check_unit(b.width, "width", expected, v);
      check_unit(b.height, "height", expected, v);
      if (b.x + b.width > 1.0 + kBoxTolerance) v.push_back({expected, "target.x + target.width exceeds 1"});
      if (b.y + b.height > 1.0 + kBoxTolerance) v.push_back({expected, "target.y + target.height exceeds 1"});
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Dedup / stats
// ---------------------------------------------------------------------------

const StateId& StatePool::canonical(const StateId& s) const {
  auto it = representative_of.find(s);
  if (it == representative_of.end()) throw IntegrityError("state not in pool: " + s.str());
  return it->second;
}

StatePool dedup_states(const std::vector<TrajectoryRecord>& corpus) {
  std::map<std::string, StateId> first_by_hash;
  std::vector<std::pair<StateId, std::string>> all;
  for (const auto& t : corpus) {
    for (const auto& step : t.steps) {
      if (step.state.content_hash.empty()) {
        throw IntegrityError("state " + StateId{t.id, step.state.index}.str() + " has no content hash");
      }
      StateId id{t.id, step.state.index};
      auto [it, inserted] = first_by_hash.emplace(step.state.content_hash, id);
      if (!inserted && id < it->second) it->second = id;
      all.emplace_back(std::move(id), step.state.content_hash);
    }
  }
  StatePool pool;
  for (auto& [id, hash] : all) pool.representative_of.emplace(id, first_by_hash.at(hash));
  for (const auto& [hash, id] : first_by_hash) pool.members.push_back(id);
  std::sort(pool.members.begin(), pool.members.end());
  return pool;
}

const SourceStats* CorpusManifest::find(std::string_view source) const {
  for (const auto& s : sources) {
    if (s.source == source) return &s;
  }
  return nullptr;
}

SourceStats CorpusManifest::total() const {
  SourceStats t{"Total"};
  bool first = true;
  for (const auto& s : sources) {
    if (s.tasks == 0) continue;
    t.tasks += s.tasks;
    t.states_total += s.states_total;
    t.states_min = first ? s.states_min : std::min(t.states_min, s.states_min);
    t.states_max = first ? s.states_max : std::max(t.states_max, s.states_max);
    first = false;
  }
  return t;
}

std::string CorpusManifest::to_tsv() const {
  std::ostringstream out;
  out << "source\ttasks\tmin\tmax\tavg\ttotal\n";
  auto row = [&](const SourceStats& s) {
    char avg[32];
    std::snprintf(avg, sizeof avg, "%.2f", s.states_avg());
    out << s.source << '\t' << s.tasks << '\t' << s.states_min << '\t' << s.states_max << '\t'
        << avg << '\t' << s.states_total << '\n';
  };
  for (const auto& s : sources) row(s);
  row(total());
  return out.str();
}

CorpusManifest corpus_stats(const std::vector<TrajectoryRecord>& corpus) {
  std::map<std::string, SourceStats> by_source;
  for (const auto& t : corpus) {
    auto& s = by_source[t.source];
    const long n = t.length();
    if (s.tasks == 0) {
      s.source = t.source;
      s.states_min = s.states_max = n;
    }
    ++s.tasks;
    s.states_total += n;
    s.states_min = std::min(s.states_min, n);
    s.states_max = std::max(s.states_max, n);
  }
  CorpusManifest m;
  for (auto& [name, s] : by_source) m.sources.push_back(std::move(s));
  return m;
}

}  // namespace gae::trajectory

#include "gae/pipeline/pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "gae/annotation/annotate.hpp"
#include "gae/common/error.hpp"
#include "gae/common/log.hpp"
#include "gae/retrieval/store.hpp"
#include "gae/serialize/context.hpp"
#include "gae/trajectory/corpus.hpp"

namespace gae::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw UserError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw UserError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw UserError("config: '" + (where.empty() ? std::string(key) : where + "." + key) + "' has the wrong type");
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  check_keys(j, "", {"work_dir", "seed", "sources", "annotation", "lite", "split", "encoder", "train",
                     "token_select", "eval"});
  if (j.contains("work_dir")) c.work_dir = j.at("work_dir").get<std::string>();
  read(j, "seed", c.seed, "");
  if (j.contains("sources")) {
    for (const auto& s : j.at("sources")) {
      check_keys(s, "sources[]", {"name", "root"});
      if (!s.contains("name") || !s.contains("root")) throw UserError("config: each source needs name and root");
      c.sources.push_back({s.at("name").get<std::string>(), s.at("root").get<std::string>()});
    }
  }
  if (j.contains("annotation")) {
    const auto& a = j.at("annotation");
    check_keys(a, "annotation", {"endpoint", "model", "timeout_seconds", "max_retries", "token_env",
                                 "max_in_flight", "backoff_ms", "backoff_factor", "mock_dictionary"});
    read(a, "endpoint", c.backend.endpoint, "annotation");
    read(a, "model", c.backend.model_name, "annotation");
    read(a, "timeout_seconds", c.backend.timeout_seconds, "annotation");
    read(a, "max_retries", c.backend.max_retries, "annotation");
    read(a, "token_env", c.backend.token_env, "annotation");
    read(a, "max_in_flight", c.backend.max_in_flight, "annotation");
    long backoff = c.backend.backoff_base.count();
    read(a, "backoff_ms", backoff, "annotation");
    c.backend.backoff_base = std::chrono::milliseconds(backoff);
    read(a, "backoff_factor", c.backend.backoff_factor, "annotation");
    if (a.contains("mock_dictionary")) c.mock_dictionary = a.at("mock_dictionary").get<std::string>();
  }
  if (j.contains("lite")) {
    const auto& l = j.at("lite");
    check_keys(l, "lite", {"enabled", "trajectory_cap", "interval_cap"});
    read(l, "enabled", c.lite, "lite");
    read(l, "trajectory_cap", c.lite_cap.trajectory_cap, "lite");
    read(l, "interval_cap", c.lite_cap.interval_cap, "lite");
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, "split", {"ood_fraction", "train_fraction", "stratified"});
    read(s, "ood_fraction", c.split.ood_fraction, "split");
    read(s, "train_fraction", c.split.train_fraction, "split");
    read(s, "stratified", c.split.stratified, "split");
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    check_keys(e, "encoder", {"dim", "buckets", "normalize"});
    read(e, "dim", c.encoder.dim, "encoder");
    read(e, "buckets", c.encoder.buckets, "encoder");
    read(e, "normalize", c.encoder.normalize, "encoder");
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, "train", {"temperature", "batch_size", "sub_batch_size", "learning_rate", "warmup_fraction",
                            "mask_ratio", "max_sequence_tokens", "interleave_ratio", "steps"});
    read(t, "temperature", c.train.temperature, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "sub_batch_size", c.train.sub_batch_size, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "warmup_fraction", c.train.warmup_fraction, "train");
    read(t, "mask_ratio", c.train.mask_ratio, "train");
    read(t, "max_sequence_tokens", c.train.max_sequence_tokens, "train");
    read(t, "interleave_ratio", c.train.interleave_ratio, "train");
    read(t, "steps", c.train.steps, "train");
  }
  if (j.contains("token_select")) {
    const auto& t = j.at("token_select");
    check_keys(t, "token_select", {"patch_size", "delta"});
    read(t, "patch_size", c.patch_size, "token_select");
    read(t, "delta", c.similarity_delta, "token_select");
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, "eval", {"mini_pools", "threads"});
    read(e, "mini_pools", c.mini_pools, "eval");
    read(e, "threads", c.threads, "eval");
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UserError("config " + path.string() + ": " + e.what());
  }
  auto c = from_json(j);
  // Relative paths in a config file are relative to the file.
  const fs::path base = path.parent_path();
  if (c.work_dir.is_relative() && j.contains("work_dir")) c.work_dir = base / c.work_dir;
  for (auto& s : c.sources) {
    if (s.root.is_relative()) s.root = base / s.root;
  }
  if (c.mock_dictionary && c.mock_dictionary->is_relative()) c.mock_dictionary = base / *c.mock_dictionary;
  return c;
}

ojson PipelineConfig::to_json() const {
  ojson sources_json = ojson::array();
  for (const auto& s : sources) sources_json.push_back({{"name", s.name}, {"root", s.root.string()}});
  ojson annotation{{"endpoint", backend.endpoint},
                   {"model", backend.model_name},
                   {"timeout_seconds", backend.timeout_seconds},
                   {"max_retries", backend.max_retries},
                   {"token_env", backend.token_env},
                   {"max_in_flight", backend.max_in_flight},
                   {"backoff_ms", backend.backoff_base.count()},
                   {"backoff_factor", backend.backoff_factor}};
  if (mock_dictionary) annotation["mock_dictionary"] = mock_dictionary->string();
  return ojson{
      {"work_dir", work_dir.string()},
      {"seed", seed},
      {"sources", sources_json},
      {"annotation", annotation},
      {"lite", {{"enabled", lite}, {"trajectory_cap", lite_cap.trajectory_cap}, {"interval_cap", lite_cap.interval_cap}}},
      {"split",
       {{"ood_fraction", split.ood_fraction}, {"train_fraction", split.train_fraction}, {"stratified", split.stratified}}},
      {"encoder", {{"dim", encoder.dim}, {"buckets", encoder.buckets}, {"normalize", encoder.normalize}}},
      {"train",
       {{"temperature", train.temperature},
        {"batch_size", train.batch_size},
        {"sub_batch_size", train.sub_batch_size},
        {"learning_rate", train.learning_rate},
        {"warmup_fraction", train.warmup_fraction},
        {"mask_ratio", train.mask_ratio},
        {"max_sequence_tokens", train.max_sequence_tokens},
        {"interleave_ratio", train.interleave_ratio},
        {"steps", train.steps}}},
      {"token_select", {{"patch_size", patch_size}, {"delta", similarity_delta}}},
      {"eval", {{"mini_pools", mini_pools}, {"threads", threads}}},
  };
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace {

void require(const fs::path& artifact, std::string_view command) {
  if (!fs::exists(artifact)) {
    throw UserError("missing " + artifact.string() + " (run `" + std::string(command) + "` first)");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path.string());
  out << text;
}

std::vector<pairs::RetrievalPair> eval_pairs(const std::vector<pairs::RetrievalPair>& all) {
  std::vector<pairs::RetrievalPair> out;
  for (const auto& p : all) {
    if (p.split == pairs::Split::kInd || p.split == pairs::Split::kOod) out.push_back(p);
  }
  return out;
}

contrastive::FeaturizerOptions featurizer_options(const PipelineConfig& c) {
  return {c.encoder.buckets, c.patch_size, c.similarity_delta, c.train.max_sequence_tokens};
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)), work_{config_.work_dir} {
  config_.split.seed = config_.seed;
  config_.train.seed = config_.seed;
  config_.train.normalize = config_.encoder.normalize;
}

void Pipeline::echo_config() const {
  fs::create_directories(work_.root);
  write_text(work_.effective_config(), config_.to_json().dump(2) + "\n");
}

void Pipeline::ingest() {
  if (config_.sources.empty()) throw UserError("no sources configured (add `sources` to the config or pass --source)");
  echo_config();
  fs::create_directories(work_.root / "corpus");
  std::vector<trajectory::TrajectoryRecord> all;
  ojson sources = ojson::array();
  std::set<std::string> names;
  for (const auto& s : config_.sources) {
    if (!names.insert(s.name).second) throw UserError("source '" + s.name + "' configured twice");
    auto corpus = trajectory::ingest_corpus(s.root, s.name);
    trajectory::write_manifest(work_.corpus(s.name), corpus);
    sources.push_back({{"name", s.name}, {"image_root", fs::absolute(s.root).lexically_normal().string()}});
    logger()->info("ingested {} trajectories from {}", corpus.size(), s.name);
    all.insert(all.end(), std::make_move_iterator(corpus.begin()), std::make_move_iterator(corpus.end()));
  }
  std::set<std::string> ids;
  for (const auto& t : all) {
    if (!ids.insert(t.id).second) throw IntegrityError("trajectory id '" + t.id + "' appears in more than one source");
  }
  write_text(work_.sources(), sources.dump(2) + "\n");
  write_text(work_.corpus_stats(), trajectory::corpus_stats(all).to_tsv());
}

std::vector<trajectory::TrajectoryRecord> Pipeline::load_corpus(bool require_annotated) const {
  require(work_.sources(), "ingest");
  std::ifstream in(work_.sources());
  const auto sources = json::parse(in);
  std::vector<trajectory::TrajectoryRecord> all;
  for (const auto& s : sources) {
    const auto name = s.at("name").get<std::string>();
    const fs::path root = s.at("image_root").get<std::string>();
    fs::path manifest = work_.annotated(name);
    if (!fs::exists(manifest)) {
      if (require_annotated) require(manifest, "annotate");
      manifest = work_.corpus(name);
      require(manifest, "ingest");
    }
    trajectory::LoadOptions opts;
    opts.require_descriptions = require_annotated;
    auto corpus = trajectory::load_manifest(manifest, root, name, opts);
    all.insert(all.end(), std::make_move_iterator(corpus.begin()), std::make_move_iterator(corpus.end()));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return all;
}

void Pipeline::annotate() {
  echo_config();
  auto corpus = load_corpus(false);
  std::shared_ptr<annotation::Transport> transport;
  if (config_.backend.is_mock() && config_.mock_dictionary) {
    transport = std::make_shared<annotation::MockTransport>(annotation::MockTransport::from_file(*config_.mock_dictionary));
  } else {
    transport = annotation::make_transport(config_.backend);
  }
  annotation::AuditLog audit(work_.audit());
  annotation::AnnotationClient client(config_.backend, transport, &audit);

  int described = 0;
  for (auto& t : corpus) {
    for (auto& step : t.steps) {
      if (!step.state.description.empty()) continue;
      const auto id = trajectory::StateId{t.id, step.state.index}.str();
      step.state.description = annotation::describe_state(step.state, t.image_root, client, "describe/" + id);
      ++described;
    }
  }
  fs::create_directories(work_.root / "annotated");
  std::map<std::string, std::vector<trajectory::TrajectoryRecord>> by_source;
  for (const auto& t : corpus) by_source[t.source].push_back(t);
  std::ifstream sources_in(work_.sources());
  for (const auto& s : json::parse(sources_in)) {
    const auto name = s.at("name").get<std::string>();
    trajectory::write_manifest(work_.annotated(name), by_source[name]);
  }

  std::ofstream silver(work_.silver(), std::ios::binary);
  if (!silver) throw UserError("cannot write " + work_.silver().string());
  for (const auto& t : corpus) {
    silver << annotation::silver_to_json_line(t.id, annotation::generate_silver(t.query, client, "silver/" + t.id))
           << "\n";
  }
  logger()->info("described {} states, generated silver sets for {} trajectories", described, corpus.size());
}

void Pipeline::extract() {
  echo_config();
  const auto corpus = load_corpus(true);
  require(work_.silver(), "annotate");
  const auto silver = annotation::load_silver_file(work_.silver());
  auto out = pairs::extract_corpus_pairs(corpus, silver, pairs::InstructionTemplateSet::builtin(), config_.seed);
  if (config_.lite) out = pairs::apply_lite_cap(std::move(out), config_.lite_cap);
  pairs::write_pairs(work_.pairs(), out);
  write_text(work_.counts(), report_counts());
  logger()->info("extracted {} pairs", out.size());
}

void Pipeline::pools() {
  echo_config();
  const auto corpus = load_corpus(true);
  require(work_.pairs(), "extract");
  const auto all = pairs::read_pairs(work_.pairs());
  const auto state_pool = trajectory::dedup_states(corpus);
  const auto built = pairs::build_pools(corpus, state_pool,
                                        config_.lite ? std::optional<pairs::LiteCap>(config_.lite_cap) : std::nullopt);
  pairs::check_referential_integrity(all, built);
  pairs::write_pools(work_.pools(), built);
  logger()->info("pools: {} states, {} trajectories, {} intervals", built.state.size(), built.trajectory.size(),
                 built.interval.size());
}

void Pipeline::split() {
  echo_config();
  require(work_.pairs(), "extract");
  const auto corpus = load_corpus(true);
  std::vector<std::string> ids;
  for (const auto& t : corpus) ids.push_back(t.id);
  const auto out = pairs::split_dataset(pairs::read_pairs(work_.pairs()), ids, config_.split);
  pairs::write_pairs(work_.split_pairs(), out);
}

void Pipeline::serialize() {
  echo_config();
  require(work_.split_pairs(), "split");
  const auto corpus = load_corpus(true);
  const serialize::CorpusIndex index(corpus);
  std::ofstream out(work_.contexts(), std::ios::binary);
  if (!out) throw UserError("cannot write " + work_.contexts().string());
  for (const auto& p : pairs::read_pairs(work_.split_pairs())) {
    out << serialize::to_json_line(p.id, serialize::serialize_pair_key(index, p)) << "\n";
    out << serialize::to_json_line(p.id, serialize::serialize_value(index, p.value_segment)) << "\n";
  }
}

void Pipeline::train() {
  echo_config();
  require(work_.split_pairs(), "split");
  const auto corpus = load_corpus(true);
  const serialize::CorpusIndex index(corpus);
  std::vector<pairs::RetrievalPair> train_pairs;
  for (auto& p : pairs::read_pairs(work_.split_pairs())) {
    if (p.split == pairs::Split::kTrain) train_pairs.push_back(std::move(p));
  }
  const contrastive::Featurizer featurizer(contrastive::corpus_image_source(index), featurizer_options(config_));
  auto init = contrastive::EncoderParams::init(config_.encoder, config_.seed);
  const auto result = contrastive::train(train_pairs, index, featurizer, std::move(init), config_.train,
                                         [&](const contrastive::LossPoint& p) {
                                           if (p.step % 10 == 0 || p.step == config_.train.steps) {
                                             logger()->info("step {} loss {:.6f} lr {:.3g}", p.step, p.loss, p.lr);
                                           }
                                         });
  contrastive::write_checkpoint(work_.checkpoint(), result.params);
  contrastive::write_loss_csv(work_.loss_curve(), result.curve);
}

void Pipeline::embed() {
  echo_config();
  require(work_.checkpoint(), "train");
  const auto params = contrastive::read_checkpoint(work_.checkpoint());
  if (params.dim() != config_.encoder.dim || params.buckets() != config_.encoder.buckets) {
    throw UserError("checkpoint shape does not match the encoder config");
  }
  const auto corpus = load_corpus(true);
  const serialize::CorpusIndex index(corpus);
  pairs::CandidatePools pools;
  if (config_.mini_pools) {
    require(work_.split_pairs(), "split");
    pools = pairs::mini_pools(eval_pairs(pairs::read_pairs(work_.split_pairs())));
  } else {
    require(work_.pools(), "pools");
    pools = pairs::read_pools(work_.pools());
  }
  const contrastive::Featurizer featurizer(contrastive::corpus_image_source(index), featurizer_options(config_));
  for (auto kind : {pairs::PoolKind::kState, pairs::PoolKind::kTrajectory, pairs::PoolKind::kInterval}) {
    const auto store = retrieval::embed_pool(pools.get(kind), index, featurizer, params, config_.encoder.normalize,
                                             config_.threads);
    store.write(work_.store(kind));
    logger()->info("embedded {} {} candidates", store.size(), pairs::pool_kind_name(kind));
  }
}

void Pipeline::eval() {
  echo_config();
  require(work_.checkpoint(), "train");
  require(work_.split_pairs(), "split");
  const auto params = contrastive::read_checkpoint(work_.checkpoint());
  const auto corpus = load_corpus(true);
  const serialize::CorpusIndex index(corpus);
  const auto pairs = eval_pairs(pairs::read_pairs(work_.split_pairs()));
  retrieval::StoreSet stores;
  for (auto kind : {pairs::PoolKind::kState, pairs::PoolKind::kTrajectory, pairs::PoolKind::kInterval}) {
    require(work_.store(kind), "embed");
    stores.stores.emplace(kind, retrieval::EmbeddingStore::read(work_.store(kind)));
  }
  const contrastive::Featurizer featurizer(contrastive::corpus_image_source(index), featurizer_options(config_));
  std::vector<Eigen::VectorXd> queries;
  queries.reserve(pairs.size());
  for (const auto& p : pairs) {
    queries.push_back(contrastive::encode(featurizer.featurize(serialize::serialize_pair_key(index, p)), params,
                                          config_.encoder.normalize));
  }
  const auto report = retrieval::recall_at_k(pairs, queries, stores, config_.threads);
  write_text(work_.recall(), report.overall_tsv());
  write_text(work_.recall_subtask(), report.subtask_tsv());
}

void Pipeline::run_all() {
  ingest();
  annotate();
  extract();
  pools();
  split();
  serialize();
  train();
  embed();
  eval();
}

std::string Pipeline::report_counts() const {
  require(work_.pairs(), "extract");
  const auto counts = pairs::count_pairs(pairs::read_pairs(work_.pairs()));
  return counts.task_table_tsv() + "\n" + counts.subtask_table_tsv();
}

std::string Pipeline::report_recall() const {
  require(work_.recall(), "eval");
  require(work_.recall_subtask(), "eval");
  std::ifstream a(work_.recall()), b(work_.recall_subtask());
  std::stringstream out;
  out << a.rdbuf() << "\n" << b.rdbuf();
  return out.str();
}

void Pipeline::report_masks(const fs::path& out_dir, int limit) const {
  const auto corpus = load_corpus(false);
  fs::create_directories(out_dir);
  std::ofstream rle(out_dir / "masks.rle", std::ios::binary);
  int written = 0;
  for (const auto& t : corpus) {
    for (const auto& step : t.steps) {
      if (written >= limit) return;
      const auto id = trajectory::StateId{t.id, step.state.index}.str();
      const auto image = read_png(t.image_root / step.state.screenshot.path);
      const auto grid = tokensel::make_patch_grid(image, config_.patch_size);
      const auto labeling = tokensel::build_components(grid, config_.similarity_delta);
      const auto mask = tokensel::select_tokens(labeling, config_.train.mask_ratio,
                                                tokensel::mask_seed(step.state.content_hash, config_.seed, 0));
      std::string file = id;
      for (auto& c : file) {
        if (c == '#' || c == '/' || c == '\\') c = '_';
      }
      write_png(out_dir / (file + ".png"), tokensel::mask_overlay(image, grid, mask));
      rle << id << "\t" << tokensel::mask_rle(grid.rows, grid.cols, mask) << "\n";
      ++written;
    }
  }
}

}  // namespace gae::pipeline

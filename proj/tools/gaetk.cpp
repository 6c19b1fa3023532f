// gaetk: command-line driver for the trajectory retrieval pipeline.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gae/common/error.hpp"
#include "gae/common/log.hpp"
#include "gae/pipeline/pipeline.hpp"
#include "gae/trajectory/synthetic.hpp"

namespace {

using gae::pipeline::Pipeline;
using gae::pipeline::PipelineConfig;

struct Overrides {
  std::string config_path;
  std::string work_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sources;  // name=path
  bool lite = false;
  bool mini_pools = false;
  std::optional<int> threads;
  std::optional<int> steps;
  std::optional<double> lr;
  std::optional<double> warmup;
  std::optional<int> batch;
  std::optional<int> sub_batch;
  std::optional<double> temperature;
  std::optional<double> mask_ratio;
  std::optional<double> interleave;
  std::optional<std::string> endpoint;
  bool verbose = false;
  bool quiet = false;
};

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c = o.config_path.empty() ? PipelineConfig{} : PipelineConfig::load(o.config_path);
  if (!o.work_dir.empty()) c.work_dir = o.work_dir;
  if (o.seed) c.seed = *o.seed;
  for (const auto& s : o.sources) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
      throw gae::UserError("--source expects NAME=DIR, got '" + s + "'");
    }
    c.sources.push_back({s.substr(0, eq), s.substr(eq + 1)});
  }
  if (o.lite) c.lite = true;
  if (o.mini_pools) c.mini_pools = true;
  if (o.threads) c.threads = *o.threads;
  if (o.steps) c.train.steps = *o.steps;
  if (o.lr) c.train.learning_rate = *o.lr;
  if (o.warmup) c.train.warmup_fraction = *o.warmup;
  if (o.batch) c.train.batch_size = *o.batch;
  if (o.sub_batch) c.train.sub_batch_size = *o.sub_batch;
  if (o.temperature) c.train.temperature = *o.temperature;
  if (o.mask_ratio) c.train.mask_ratio = *o.mask_ratio;
  if (o.interleave) c.train.interleave_ratio = *o.interleave;
  if (o.endpoint) c.backend.endpoint = *o.endpoint;
  c.train.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaetk: GUI-agent trajectory retrieval toolkit"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("-c,--config", o.config_path, "JSON pipeline config")->check(CLI::ExistingFile);
  app.add_option("-w,--work", o.work_dir, "Work directory (overrides the config)");
  app.add_option("--seed", o.seed, "Global seed");
  app.add_option("--source", o.sources, "Extra source as NAME=DIR (repeatable)");
  app.add_flag("--lite", o.lite, "Apply the lite length caps");
  app.add_flag("--mini-pools", o.mini_pools, "Evaluate against pools restricted to evaluation values");
  app.add_option("--threads", o.threads, "Worker threads for embedding and evaluation");
  app.add_option("--steps", o.steps, "Training steps");
  app.add_option("--lr", o.lr, "Peak learning rate");
  app.add_option("--warmup", o.warmup, "Warm-up fraction of the steps");
  app.add_option("--batch", o.batch, "Accumulated batch size");
  app.add_option("--sub-batch", o.sub_batch, "GradCache sub-batch size");
  app.add_option("--temperature", o.temperature, "InfoNCE temperature");
  app.add_option("--mask-ratio", o.mask_ratio, "Token-selection mask ratio");
  app.add_option("--interleave", o.interleave, "Subtask interleaving ratio");
  app.add_option("--endpoint", o.endpoint, "Annotation endpoint URL or 'mock'");
  app.add_flag("-v,--verbose", o.verbose, "Debug logging");
  app.add_flag("-q,--quiet", o.quiet, "Warnings and errors only");

  std::map<std::string, CLI::App*> stages;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"ingest", "Validate source corpora and copy their manifests into the work directory"},
           {"annotate", "Describe unlabeled states and generate silver queries"},
           {"extract", "Extract retrieval pairs for all twelve subtasks"},
           {"pools", "Build candidate pools and check referential integrity"},
           {"split", "Assign train / IND / OOD splits"},
           {"serialize", "Write key and value context sequences"},
           {"train", "Train the reference encoder"},
           {"embed", "Embed candidate pools"},
           {"eval", "Compute Recall@1/5/10 tables"},
           {"all", "Run every stage from ingest to eval"}}) {
    stages[name] = app.add_subcommand(name, help)->fallthrough();
  }

  auto* report = app.add_subcommand("report", "Render count, recall or mask reports")->fallthrough();
  std::string report_kind;
  std::string mask_dir = "masks";
  int mask_limit = 16;
  report->add_option("kind", report_kind, "counts | recall | masks")
      ->required()
      ->check(CLI::IsMember({"counts", "recall", "masks"}));
  report->add_option("--out", mask_dir, "Output directory for mask overlays");
  report->add_option("--limit", mask_limit, "Maximum number of screenshots to overlay");

  auto* synth = app.add_subcommand("synth", "Write a synthetic source corpus")->fallthrough();
  gae::trajectory::SyntheticOptions synth_opts;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Target directory")->required();
  synth->add_option("--name", synth_opts.source, "Source name");
  synth->add_option("--trajectories", synth_opts.trajectories, "Number of trajectories");
  synth->add_option("--min-steps", synth_opts.min_steps, "Shortest trajectory");
  synth->add_option("--max-steps", synth_opts.max_steps, "Longest trajectory");
  synth->add_option("--shared-home", synth_opts.shared_home_probability, "Probability of a shared screenshot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto log = gae::logger();
  log->set_level(o.verbose ? spdlog::level::debug : o.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (synth->parsed()) {
      if (o.seed) synth_opts.seed = *o.seed;
      const auto corpus = gae::trajectory::write_synthetic_corpus(synth_out, synth_opts);
      log->info("wrote {} synthetic trajectories to {}", corpus.size(), synth_out);
      return 0;
    }
    Pipeline pipeline(resolve(o));
    if (report->parsed()) {
      if (report_kind == "counts") {
        std::cout << pipeline.report_counts();
      } else if (report_kind == "recall") {
        std::cout << pipeline.report_recall();
      } else {
        pipeline.report_masks(mask_dir, mask_limit);
      }
      return 0;
    }
    if (stages["ingest"]->parsed()) pipeline.ingest();
    if (stages["annotate"]->parsed()) pipeline.annotate();
    if (stages["extract"]->parsed()) pipeline.extract();
    if (stages["pools"]->parsed()) pipeline.pools();
    if (stages["split"]->parsed()) pipeline.split();
    if (stages["serialize"]->parsed()) pipeline.serialize();
    if (stages["train"]->parsed()) pipeline.train();
    if (stages["embed"]->parsed()) pipeline.embed();
    if (stages["eval"]->parsed()) pipeline.eval();
    if (stages["all"]->parsed()) pipeline.run_all();
    return 0;
  } catch (const gae::IntegrityError& e) {
    log->error("{}", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    log->error("malformed JSON: {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    log->error("{}", e.what());
    return 1;
  }
}

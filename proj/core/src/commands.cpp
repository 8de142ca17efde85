#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "pbl/experiment.hpp"
#include "pbl/sha256.hpp"
#include "pbl/svg_chart.hpp"

#ifndef PBL_VERSION
#define PBL_VERSION "0.0.0"
#endif

namespace pbl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCheckpointPath = "model/model.ckpt";
constexpr const char* kVocabPath = "model/vocab.txt";

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Artifact make_artifact(const fs::path& root, const std::string& kind, const std::string& rel) {
  return {kind, rel, sha256_file(root / rel)};
}

RunManifest open_manifest(const ExperimentConfig& config) {
  const fs::path path = config.output_dir / kManifestName;
  RunManifest m = fs::exists(path) ? RunManifest::load(path) : RunManifest{};
  m.version = PBL_VERSION;
  m.config_hash = config.hash();
  return m;
}

void drop_stages(RunManifest& m, std::initializer_list<const char*> names) {
  for (const char* n : names) m.stages.erase(n);
}

void record_config(const ExperimentConfig& config) { write_text(config.output_dir / "config.json", config.source_text); }

struct LoadedModel {
  ModelWeights weights;
  Tokenizer tokenizer;
};

LoadedModel load_model(const fs::path& checkpoint, const fs::path& vocab) {
  ModelWeights weights = load_checkpoint(checkpoint);
  Tokenizer tokenizer = Tokenizer::load(vocab);
  if (tokenizer.size() != weights.config().vocab_size) {
    fail(ErrorKind::compatibility, "vocabulary has " + std::to_string(tokenizer.size()) + " tokens, checkpoint expects " +
                                       std::to_string(weights.config().vocab_size));
  }
  const auto& meta = weights.metadata();
  if (meta.contains("vocab_sha256") && meta["vocab_sha256"] != tokenizer.fingerprint()) {
    fail(ErrorKind::compatibility, "vocabulary " + vocab.string() + " is not the one the checkpoint was trained with");
  }
  return {std::move(weights), std::move(tokenizer)};
}

LoadedModel load_run_model(const ExperimentConfig& config, const RunManifest& manifest) {
  manifest.verify(config.output_dir, "pretrain");
  return load_model(config.output_dir / kCheckpointPath, config.output_dir / kVocabPath);
}

std::vector<TaskRow> task_rows(const ExperimentConfig& config) {
  if (config.task.path) return read_task_rows(*config.task.path, config.task.format);
  return generate_task_rows(config.task.synthetic);
}

std::vector<TemplatePack> load_packs(const ExperimentConfig& config) {
  std::vector<TemplatePack> packs;
  for (const auto& p : config.template_packs) packs.push_back(load_template_pack(p));
  return packs;
}

std::vector<std::string> descriptor_words(const std::vector<TemplatePack>& packs) {
  std::vector<std::string> words;
  for (const auto& pack : packs) {
    for (const auto& [_, descriptors] : pack.groups) words.insert(words.end(), descriptors.begin(), descriptors.end());
  }
  return words;
}

std::vector<std::string> read_corpus(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) lines.push_back(line);
  }
  if (lines.empty()) fail(ErrorKind::data, path.string() + ": corpus has no sentences");
  return lines;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") != std::string::npos) {
    fail(ErrorKind::data, "value '" + s + "' cannot be written to a predictions CSV");
  }
}

std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) != 0 ? c : '_';
  return out;
}

struct PredictionRow {
  std::string source;
  std::string attribute;
  std::string group;
  int gold = 0;
  int pred = 0;
};

std::vector<PredictionRow> read_predictions(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != "example_id,source,attribute,group,gold,pred") {
    fail(ErrorKind::data, path.string() + ": unexpected predictions header");
  }
  std::vector<PredictionRow> rows;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 6) fail(ErrorKind::data, where + ": expected 6 fields");
    PredictionRow r{f[1], f[2], f[3], 0, 0};
    try {
      r.gold = std::stoi(f[4]);
      r.pred = std::stoi(f[5]);
    } catch (const std::exception&) {
      fail(ErrorKind::data, where + ": class is not an integer");
    }
    if (r.gold < 0 || r.gold >= kNumClasses || r.pred < 0 || r.pred >= kNumClasses) {
      fail(ErrorKind::data, where + ": class outside {0,1,2}");
    }
    if (r.source != "task" && r.source != "template") fail(ErrorKind::data, where + ": unknown source " + r.source);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

fs::path cmd_pretrain(const ExperimentConfig& config, std::ostream& log) {
  const Stopwatch watch;
  RunManifest manifest = open_manifest(config);
  const fs::path root = config.output_dir;
  const std::string stage_hash = config.pretrain_hash();
  record_config(config);

  if (const auto it = manifest.stages.find("pretrain"); it != manifest.stages.end() && it->second.config_hash == stage_hash) {
    try {
      manifest.verify(root, "pretrain");
      log << "pretrain: up to date (config hash " << stage_hash.substr(0, 12) << "), skipping\n";
      manifest.save(root / kManifestName);
      return root / kCheckpointPath;
    } catch (const Error&) {
      log << "pretrain: previous artifacts failed verification, rebuilding\n";
    }
  }

  fs::create_directories(root / "model");
  json info;
  if (config.model.checkpoint) {
    auto loaded = load_model(*config.model.checkpoint, *config.model.vocab);
    fs::copy_file(*config.model.checkpoint, root / kCheckpointPath, fs::copy_options::overwrite_existing);
    fs::copy_file(*config.model.vocab, root / kVocabPath, fs::copy_options::overwrite_existing);
    info["source"] = config.model.checkpoint->string();
    info["content_sha256"] = loaded.weights.content_hash();
    info["parameter_count"] = loaded.weights.parameter_count();
    log << "pretrain: using existing checkpoint " << config.model.checkpoint->string() << "\n";
  } else {
    const auto& p = config.model.pretrain;
    std::vector<std::string> corpus;
    if (p.corpus) {
      corpus = read_corpus(*p.corpus);
    } else {
      SyntheticCorpusOptions opts;
      opts.sentences = p.synthetic_sentences;
      opts.seed = derive_seed(config.seed, kCorpusStream);
      opts.mention_words = descriptor_words(load_packs(config));
      corpus = generate_pretraining_corpus(opts);
    }
    const Tokenizer tokenizer = Tokenizer::build(corpus, p.vocab_cap);
    ModelConfig arch = config.model.architecture;
    arch.vocab_size = tokenizer.size();
    std::vector<std::vector<int>> encoded;
    encoded.reserve(corpus.size());
    for (const auto& s : corpus) encoded.push_back(tokenizer.encode(s));

    PretrainOptions opts;
    opts.steps = p.steps;
    opts.seed = derive_seed(config.seed, kPretrainStream);
    opts.batch_size = p.batch_size;
    opts.learning_rate = p.learning_rate;
    log << "pretrain: " << corpus.size() << " sentences, vocab " << arch.vocab_size << ", " << arch.parameter_count()
        << " parameters, " << p.steps << " steps\n";
    const ModelWeights trained = pretrain_lm(arch, encoded, opts);

    json meta = trained.metadata();
    meta["vocab_sha256"] = tokenizer.fingerprint();
    meta["corpus_sentences"] = corpus.size();
    const ModelWeights weights(arch, trained.parameters(), meta);
    const std::size_t probe = std::min<std::size_t>(encoded.size(), 256);
    const double loss = mean_lm_loss(weights, {encoded.begin(), encoded.begin() + static_cast<std::ptrdiff_t>(probe)});
    log << "pretrain: mean next-token loss " << loss << " on " << probe << " sentences\n";

    tokenizer.save(root / kVocabPath);
    save_checkpoint(weights, root / kCheckpointPath);
    info["content_sha256"] = weights.content_hash();
    info["parameter_count"] = weights.parameter_count();
    info["final_lm_loss"] = loss;
  }

  StageRecord record;
  record.config_hash = stage_hash;
  record.artifacts = {make_artifact(root, "checkpoint", kCheckpointPath), make_artifact(root, "vocab", kVocabPath)};
  record.info = info;
  record.seconds = watch.seconds();
  manifest.stages["pretrain"] = record;
  drop_stages(manifest, {"tune", "evaluate", "report"});
  manifest.save(root / kManifestName);
  log << "pretrain: wrote " << (root / kCheckpointPath).string() << "\n";
  return root / kCheckpointPath;
}

std::vector<fs::path> cmd_tune(const ExperimentConfig& config, std::ostream& out, std::ostream& log) {
  const Stopwatch watch;
  RunManifest manifest = open_manifest(config);
  const fs::path root = config.output_dir;
  record_config(config);
  const auto model = load_run_model(config, manifest);
  const auto& weights = model.weights;
  const std::string file_sha_before = sha256_file(root / kCheckpointPath);
  const std::string content_before = weights.content_hash();

  const auto rows = task_rows(config);
  const TaskDataset data = build_task_dataset(rows, config.task.format, model.tokenizer,
                                              config.task.path ? config.task.path->string() : "synthetic");

  SweepOptions sweep;
  sweep.grid = config.grid();
  sweep.n_seeds = config.n_seeds;
  sweep.top_k = config.top_k;
  sweep.root_seed = config.seed;
  sweep.threads = config.threads;
  sweep.on_run_finished = [&log](const TuningRunRecord& r) {
    log << "tune: grid " << r.grid_index << " seed " << r.seed_index << " accuracy " << r.final_validation_accuracy
        << " after " << r.steps_taken << " steps" << (r.stopped_early ? " (early stop)" : "") << "\n";
  };
  log << "tune: " << sweep.grid.size() << " grid point(s) x " << config.n_seeds << " seeds on " << data.train.size()
      << " train / " << data.validation.size() << " validation examples\n";
  const SweepResult result = run_sweep(weights, data.train, data.validation, sweep);

  const std::string file_sha_after = sha256_file(root / kCheckpointPath);
  if (file_sha_after != file_sha_before || weights.compute_hash() != content_before) {
    fail(ErrorKind::integrity, "checkpoint changed during tuning");
  }

  fs::remove_all(root / "tune");
  fs::create_directories(root / "tune" / "traces");
  fs::create_directories(root / "tune" / "selected");
  StageRecord record;
  record.config_hash = config.hash();

  if (!config.task.path) {
    write_text(root / "tune" / "task.tsv", format_task_rows(rows));
    record.artifacts.push_back(make_artifact(root, "task_data", "tune/task.tsv"));
  }

  std::string runs_csv = "grid_index,seed_index,seed,learning_rate,n_prompt_tokens,validation_accuracy,steps_taken,stopped_early\n";
  for (const auto& r : result.runs) {
    std::string trace = "step,eval_loss\n";
    for (const auto& e : r.eval_loss_trace) trace += std::to_string(e.step) + "," + json_number(e.loss) + "\n";
    const std::string rel = "tune/traces/grid" + std::to_string(r.grid_index) + "_seed" + std::to_string(r.seed_index) + ".csv";
    write_text(root / rel, trace);
    record.artifacts.push_back(make_artifact(root, "trace", rel));
    runs_csv += std::to_string(r.grid_index) + "," + std::to_string(r.seed_index) + "," + std::to_string(r.seed) + "," +
                json_number(r.config.learning_rate) + "," + std::to_string(r.config.n_prompt_tokens) + "," +
                json_number(r.final_validation_accuracy) + "," + std::to_string(r.steps_taken) + "," +
                (r.stopped_early ? "true" : "false") + "\n";
  }
  write_text(root / "tune" / "runs.csv", runs_csv);
  record.artifacts.push_back(make_artifact(root, "runs", "tune/runs.csv"));

  std::vector<fs::path> snapshots;
  std::string ranking = "rank,grid_index,seed_index,seed,learning_rate,n_prompt_tokens,validation_accuracy,steps_taken,stopped_early\n";
  std::ostringstream table;
  table << "rank  seed  lr          n   val_acc   steps\n";
  for (std::size_t i = 0; i < result.selected.size(); ++i) {
    const auto& r = result.selected[i];
    const int rank = static_cast<int>(i) + 1;
    const json meta = {{"model_hash", weights.content_hash()},
                       {"rank", rank},
                       {"grid_index", r.grid_index},
                       {"seed_index", r.seed_index},
                       {"seed", r.seed},
                       {"tuning", r.config.to_json()},
                       {"validation_accuracy", r.final_validation_accuracy},
                       {"steps_taken", r.steps_taken},
                       {"stopped_early", r.stopped_early}};
    const std::string rel = "tune/selected/prompt_" + std::to_string(rank) + ".snap";
    save_prompt_snapshot(r.prompt, meta, root / rel);
    record.artifacts.push_back(make_artifact(root, "prompt_snapshot", rel));
    snapshots.push_back(root / rel);
    ranking += std::to_string(rank) + "," + std::to_string(r.grid_index) + "," + std::to_string(r.seed_index) + "," +
               std::to_string(r.seed) + "," + json_number(r.config.learning_rate) + "," +
               std::to_string(r.config.n_prompt_tokens) + "," + json_number(r.final_validation_accuracy) + "," +
               std::to_string(r.steps_taken) + "," + (r.stopped_early ? "true" : "false") + "\n";
    table << std::left << std::setw(6) << rank << std::setw(6) << r.seed_index << std::setw(12)
          << r.config.learning_rate << std::setw(4) << r.config.n_prompt_tokens << std::setw(10) << std::fixed
          << std::setprecision(4) << r.final_validation_accuracy << std::defaultfloat << r.steps_taken << "\n";
  }
  write_text(root / "tune" / "ranking.csv", ranking);
  record.artifacts.push_back(make_artifact(root, "ranking", "tune/ranking.csv"));

  const int n_selected = result.selected.front().config.n_prompt_tokens;
  const auto budget = parameter_budget(weights.config(), n_selected);
  std::ostringstream budget_line;
  budget_line << "trainable parameters: " << budget.trainable << " / " << budget.total << " ("
              << std::setprecision(4) << budget.fraction() * 100.0 << "%)";
  out << table.str() << budget_line.str() << "\n";

  std::vector<int> selected_seeds;
  for (const auto& r : result.selected) selected_seeds.push_back(r.seed_index);
  record.info = {{"grid_index", result.grid_index},
                 {"grid_scores", result.grid_scores},
                 {"failures", result.failures},
                 {"selected_seed_indices", selected_seeds},
                 {"parameter_budget",
                  {{"trainable", budget.trainable}, {"total", budget.total}, {"fraction", budget.fraction()}}},
                 {"checkpoint_sha256_before", file_sha_before},
                 {"checkpoint_sha256_after", file_sha_after}};
  record.seconds = watch.seconds();
  manifest.stages["tune"] = record;
  drop_stages(manifest, {"evaluate", "report"});
  manifest.save(root / kManifestName);
  for (const auto& f : result.failures) log << "tune: excluded " << f << "\n";
  log << "tune: selected " << snapshots.size() << " prompts from grid point " << result.grid_index << "\n";
  return snapshots;
}

std::vector<fs::path> cmd_evaluate(const ExperimentConfig& config, std::ostream& log) {
  const Stopwatch watch;
  RunManifest manifest = open_manifest(config);
  const fs::path root = config.output_dir;
  record_config(config);
  const auto model = load_run_model(config, manifest);
  manifest.verify(root, "tune");

  std::vector<PromptState> prompts;
  for (const auto& a : manifest.artifacts("tune", "prompt_snapshot")) {
    prompts.push_back(load_prompt_snapshot(root / a.path, model.weights).prompt);
  }
  if (prompts.empty()) fail(ErrorKind::data, "no selected prompts recorded by the tune stage");

  const TaskDataset data = build_task_dataset(task_rows(config), config.task.format, model.tokenizer,
                                              config.task.path ? config.task.path->string() : "synthetic");
  std::vector<EvalExample> templated;
  for (const auto& pack : load_packs(config)) {
    auto expanded = expand_pack(pack);
    templated.insert(templated.end(), expanded.begin(), expanded.end());
  }
  tokenize_examples(templated, model.tokenizer);
  for (const auto& e : templated) {
    check_csv_field(e.attribute);
    check_csv_field(e.group);
  }

  fs::remove_all(root / "predictions");
  fs::create_directories(root / "predictions");
  std::vector<std::string> rels(prompts.size());
  parallel_for(prompts.size(), config.threads, [&](std::size_t k) {
    std::string csv = "example_id,source,attribute,group,gold,pred\n";
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      const auto& ex = data.test[i];
      const Sentiment pred = predict(prompts[k], model.weights, ex.token_ids);
      csv += "task-" + std::to_string(i) + ",task,,," + std::to_string(class_index(ex.label)) + "," +
             std::to_string(class_index(pred)) + "\n";
    }
    for (std::size_t i = 0; i < templated.size(); ++i) {
      const auto& ex = templated[i];
      const Sentiment pred = predict(prompts[k], model.weights, ex.token_ids);
      csv += "template-" + std::to_string(i) + ",template," + ex.attribute + "," + ex.group + "," +
             std::to_string(class_index(ex.label)) + "," + std::to_string(class_index(pred)) + "\n";
    }
    rels[k] = "predictions/prompt_" + std::to_string(k + 1) + ".csv";
    write_text(root / rels[k], csv);
  });

  StageRecord record;
  record.config_hash = config.hash();
  std::vector<fs::path> files;
  for (const auto& rel : rels) {
    record.artifacts.push_back(make_artifact(root, "predictions", rel));
    files.push_back(root / rel);
  }
  record.info = {{"task_rows", data.test.size()}, {"template_rows", templated.size()}};
  record.seconds = watch.seconds();
  manifest.stages["evaluate"] = record;
  drop_stages(manifest, {"report"});
  manifest.save(root / kManifestName);
  log << "evaluate: " << files.size() << " prediction files, " << data.test.size() + templated.size() << " rows each\n";
  return files;
}

fs::path cmd_report(const ExperimentConfig& config, std::ostream& log) {
  const Stopwatch watch;
  RunManifest manifest = open_manifest(config);
  const fs::path root = config.output_dir;
  record_config(config);
  manifest.verify(root, "evaluate");

  const auto files = manifest.artifacts("evaluate", "predictions");
  if (files.size() < 2) {
    fail(ErrorKind::statistics, "report needs predictions from at least two prompts, found " + std::to_string(files.size()));
  }
  std::vector<std::vector<GroupPrediction>> per_prompt;
  std::vector<double> task_accuracy;
  for (const auto& a : files) {
    const auto rows = read_predictions(root / a.path);
    std::vector<GroupPrediction> groups;
    int task_total = 0;
    int task_correct = 0;
    for (const auto& r : rows) {
      if (r.source == "task") {
        ++task_total;
        task_correct += r.gold == r.pred ? 1 : 0;
      } else {
        groups.push_back({r.attribute, r.group, static_cast<Sentiment>(r.gold), static_cast<Sentiment>(r.pred)});
      }
    }
    if (groups.empty()) fail(ErrorKind::data, a.path + ": no template predictions");
    per_prompt.push_back(std::move(groups));
    if (task_total > 0) task_accuracy.push_back(static_cast<double>(task_correct) / task_total);
  }

  const GapReport gap_report = compute_gap_report(per_prompt, config.report.gap);

  std::vector<ModelGaps> models;
  models.push_back({config.name, config.task.label, gap_report.results});
  for (const auto& extra : config.report.extra_runs) {
    json j;
    try {
      j = json::parse(read_text(extra.gaps));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::data, extra.gaps.string() + ": " + e.what());
    }
    if (!j.is_array()) fail(ErrorKind::data, extra.gaps.string() + ": expected an array of gap results");
    ModelGaps m{extra.model, extra.dataset, {}};
    for (const auto& r : j) m.results.push_back(gap_result_from_json(r));
    models.push_back(std::move(m));
  }
  const auto cells = net_counts(models);

  fs::remove_all(root / "report");
  fs::create_directories(root / "report");
  StageRecord record;
  record.config_hash = config.hash();

  json gaps_json = json::array();
  for (const auto& r : gap_report.results) gaps_json.push_back(to_json(r));
  write_text(root / "report" / "gaps.json", gaps_json.dump(2) + "\n");
  record.artifacts.push_back(make_artifact(root, "report", "report/gaps.json"));

  write_text(root / "report" / "net_counts.csv", format_net_counts_csv(cells));
  record.artifacts.push_back(make_artifact(root, "report", "report/net_counts.csv"));

  std::string warnings;
  for (const auto& w : gap_report.warnings) warnings += w + "\n";
  write_text(root / "report" / "warnings.txt", warnings);
  record.artifacts.push_back(make_artifact(root, "report", "report/warnings.txt"));

  std::set<std::pair<std::string, int>> charts;
  for (const auto& r : gap_report.results) charts.insert({r.attribute, static_cast<int>(r.metric)});
  for (const auto& [attribute, metric_id] : charts) {
    const auto metric = static_cast<Metric>(metric_id);
    const std::string rel = "report/" + file_safe(attribute) + "_" + to_string(metric) + ".svg";
    write_text(root / rel, render_gap_chart(attribute, metric, gap_report.results));
    record.artifacts.push_back(make_artifact(root, "chart", rel));
  }

  json summary = {{"model", config.name},
                  {"dataset", config.task.label},
                  {"n_prompts", files.size()},
                  {"n_results", gap_report.results.size()},
                  {"n_warnings", gap_report.warnings.size()}};
  if (task_accuracy.size() >= 2) {
    const auto iv = gap_with_ci(task_accuracy, config.report.gap.confidence);
    summary["test_accuracy"] = {{"per_prompt", task_accuracy}, {"mean", iv.mean}, {"ci_low", iv.low}, {"ci_high", iv.high}};
  }
  json harmful = json::array();
  int significant = 0;
  for (const auto& r : gap_report.results) {
    significant += r.significant ? 1 : 0;
    if (r.direction_harmful) harmful.push_back(r.attribute + "/" + r.group + "/" + to_string(r.metric));
  }
  summary["n_significant"] = significant;
  summary["harmful"] = harmful;
  if (const auto it = manifest.stages.find("tune"); it != manifest.stages.end() && it->second.info.contains("parameter_budget")) {
    summary["parameter_budget"] = it->second.info["parameter_budget"];
  }
  write_text(root / "report" / "summary.json", summary.dump(2) + "\n");
  record.artifacts.push_back(make_artifact(root, "report", "report/summary.json"));

  record.info = {{"results", gap_report.results.size()}, {"warnings", gap_report.warnings.size()}};
  record.seconds = watch.seconds();
  manifest.stages["report"] = record;
  manifest.save(root / kManifestName);
  for (const auto& w : gap_report.warnings) log << "report: warning: " << w << "\n";
  log << "report: " << gap_report.results.size() << " gap results, " << significant << " significant, "
      << harmful.size() << " harmful\n";
  return root / "report";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::capacity: return 2;
    case ErrorKind::numerical:
    case ErrorKind::sweep: return 3;
    default: return 4;
  }
}

int run_command(const std::string& command, const fs::path& config_path, const std::optional<fs::path>& output_dir,
                const std::optional<std::uint64_t>& seed, std::ostream& out, std::ostream& log) {
  try {
    const auto config = load_experiment_config(config_path, output_dir, seed);
    if (command == "pretrain") {
      cmd_pretrain(config, log);
    } else if (command == "tune") {
      cmd_tune(config, out, log);
    } else if (command == "evaluate") {
      cmd_evaluate(config, log);
    } else if (command == "report") {
      cmd_report(config, log);
    } else if (command == "run") {
      cmd_pretrain(config, log);
      cmd_tune(config, out, log);
      cmd_evaluate(config, log);
      cmd_report(config, log);
    } else {
      log << "unknown command '" << command << "'\n";
      return 2;
    }
    return 0;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return 4;
  } catch (const nlohmann::json::exception& e) {
    log << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    log << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pbl

#include "pbl/experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "pbl/sha256.hpp"

namespace pbl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::config, where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) fail(ErrorKind::config, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::config, where + "." + key + " has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) fail(ErrorKind::config, what + " not found: " + p.string());
}

}  // namespace

std::vector<TuningConfig> ExperimentConfig::grid() const {
  std::vector<TuningConfig> out;
  for (double lr : learning_rates) {
    for (int n : prompt_lengths) {
      TuningConfig c = tuning_base;
      c.learning_rate = lr;
      c.n_prompt_tokens = n;
      out.push_back(c);
    }
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (name.empty()) fail(ErrorKind::config, "name must not be empty");
  if (output_dir.empty()) fail(ErrorKind::config, "output_dir is required");
  if (threads < 0) fail(ErrorKind::config, "threads must be >= 0");
  if (model.checkpoint.has_value() != model.vocab.has_value()) {
    fail(ErrorKind::config, "model.checkpoint and model.vocab must be given together");
  }
  if (model.checkpoint) {
    require_file(*model.checkpoint, "model.checkpoint");
    require_file(*model.vocab, "model.vocab");
  } else {
    ModelConfig probe = model.architecture;
    probe.vocab_size = std::max(probe.vocab_size, kReservedTokens);
    probe.validate();
    const auto& p = model.pretrain;
    if (p.corpus) require_file(*p.corpus, "model.pretrain.corpus");
    if (!p.corpus && p.synthetic_sentences < 1) fail(ErrorKind::config, "model.pretrain.synthetic_sentences must be positive");
    if (p.steps < 0) fail(ErrorKind::config, "model.pretrain.steps must be >= 0");
    if (p.batch_size < 1) fail(ErrorKind::config, "model.pretrain.batch_size must be positive");
    if (!(p.learning_rate > 0)) fail(ErrorKind::config, "model.pretrain.learning_rate must be positive");
    if (p.vocab_cap < kReservedTokens) fail(ErrorKind::config, "model.pretrain.vocab_cap is below the reserved tokens");
  }
  if (task.path) {
    require_file(*task.path, "task_dataset.path");
  } else {
    const auto& s = task.synthetic;
    if (s.train < 1 || s.validation < 1 || s.test < 0) {
      fail(ErrorKind::config, "task_dataset.synthetic needs train >= 1, validation >= 1, test >= 0");
    }
  }
  if (template_packs.empty()) fail(ErrorKind::config, "template_packs must list at least one pack");
  for (const auto& p : template_packs) require_file(p, "template pack");
  if (learning_rates.empty() || prompt_lengths.empty()) {
    fail(ErrorKind::config, "tuning.learning_rates and tuning.prompt_lengths must be non-empty");
  }
  for (const auto& c : grid()) c.validate();
  if (n_seeds < 1) fail(ErrorKind::config, "n_seeds must be at least 1");
  if (top_k < 1 || top_k > n_seeds) {
    fail(ErrorKind::config, "top_k must lie in [1, n_seeds] (top_k=" + std::to_string(top_k) +
                                ", n_seeds=" + std::to_string(n_seeds) + ")");
  }
  const double conf = report.gap.confidence;
  if (!(conf > 0.0 && conf < 1.0)) fail(ErrorKind::config, "report.confidence must lie in (0, 1)");
}

std::string ExperimentConfig::hash() const {
  json j = effective;
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

std::string ExperimentConfig::pretrain_hash() const {
  json j = {{"seed", effective.value("seed", json())},
            {"model", effective.value("model", json())},
            {"template_packs", json::array()}};
  for (const auto& p : template_packs) j["template_packs"].push_back(sha256_file(p));
  if (model.pretrain.corpus) j["corpus_sha256"] = sha256_file(*model.pretrain.corpus);
  if (model.checkpoint) j["checkpoint_sha256"] = sha256_file(*model.checkpoint);
  return sha256_hex(j.dump());
}

ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir) {
  allow_keys(j, {"name", "seed", "output_dir", "threads", "model", "task_dataset", "template_packs", "tuning", "n_seeds",
                 "top_k", "report"},
             "config");
  ExperimentConfig c;
  c.effective = j;
  c.name = get_or<std::string>(j, "name", c.name, "config");
  c.seed = get_or<std::uint64_t>(j, "seed", 0, "config");
  if (j.contains("output_dir")) c.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "", "config"));
  c.threads = get_or<int>(j, "threads", 0, "config");
  c.n_seeds = get_or<int>(j, "n_seeds", c.n_seeds, "config");
  c.top_k = get_or<int>(j, "top_k", c.top_k, "config");

  const json model = j.value("model", json::object());
  allow_keys(model, {"checkpoint", "vocab", "embed_dim", "num_layers", "num_heads", "max_seq_len", "ff_multiplier",
                     "pretrain"},
             "model");
  if (model.contains("checkpoint")) c.model.checkpoint = resolve(base_dir, get_or<std::string>(model, "checkpoint", "", "model"));
  if (model.contains("vocab")) c.model.vocab = resolve(base_dir, get_or<std::string>(model, "vocab", "", "model"));
  auto& arch = c.model.architecture;
  arch.embed_dim = get_or<int>(model, "embed_dim", arch.embed_dim, "model");
  arch.num_layers = get_or<int>(model, "num_layers", arch.num_layers, "model");
  arch.num_heads = get_or<int>(model, "num_heads", arch.num_heads, "model");
  arch.max_seq_len = get_or<int>(model, "max_seq_len", arch.max_seq_len, "model");
  arch.ff_multiplier = get_or<int>(model, "ff_multiplier", arch.ff_multiplier, "model");
  const json pre = model.value("pretrain", json::object());
  allow_keys(pre, {"corpus", "synthetic_sentences", "steps", "batch_size", "learning_rate", "vocab_cap"}, "model.pretrain");
  auto& p = c.model.pretrain;
  if (pre.contains("corpus")) p.corpus = resolve(base_dir, get_or<std::string>(pre, "corpus", "", "model.pretrain"));
  p.synthetic_sentences = get_or<int>(pre, "synthetic_sentences", p.synthetic_sentences, "model.pretrain");
  p.steps = get_or<int>(pre, "steps", p.steps, "model.pretrain");
  p.batch_size = get_or<int>(pre, "batch_size", p.batch_size, "model.pretrain");
  p.learning_rate = get_or<double>(pre, "learning_rate", p.learning_rate, "model.pretrain");
  p.vocab_cap = get_or<int>(pre, "vocab_cap", p.vocab_cap, "model.pretrain");

  const json task = j.value("task_dataset", json::object());
  allow_keys(task, {"format", "path", "synthetic", "label"}, "task_dataset");
  try {
    c.task.format = parse_dataset_format(get_or<std::string>(task, "format", "semeval", "task_dataset"));
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("task_dataset.format: ") + e.what());
  }
  if (task.contains("path")) c.task.path = resolve(base_dir, get_or<std::string>(task, "path", "", "task_dataset"));
  const json syn = task.value("synthetic", json::object());
  allow_keys(syn, {"train", "validation", "test"}, "task_dataset.synthetic");
  c.task.synthetic.format = c.task.format;
  c.task.synthetic.train = get_or<int>(syn, "train", c.task.synthetic.train, "task_dataset.synthetic");
  c.task.synthetic.validation = get_or<int>(syn, "validation", c.task.synthetic.validation, "task_dataset.synthetic");
  c.task.synthetic.test = get_or<int>(syn, "test", c.task.synthetic.test, "task_dataset.synthetic");
  c.task.synthetic.seed = derive_seed(c.seed, kTaskStream);
  c.task.label = get_or<std::string>(task, "label", to_string(c.task.format), "task_dataset");

  for (const auto& s : get_or<std::vector<std::string>>(j, "template_packs", {}, "config")) {
    c.template_packs.push_back(resolve(base_dir, s));
  }

  const json tuning = j.value("tuning", json::object());
  allow_keys(tuning, {"learning_rates", "prompt_lengths", "batch_size", "eval_interval", "warmup_steps",
                      "stopping_window", "max_steps", "weight_decay"},
             "tuning");
  c.learning_rates = get_or<std::vector<double>>(tuning, "learning_rates", c.learning_rates, "tuning");
  c.prompt_lengths = get_or<std::vector<int>>(tuning, "prompt_lengths", c.prompt_lengths, "tuning");
  auto& t = c.tuning_base;
  t.batch_size = get_or<int>(tuning, "batch_size", t.batch_size, "tuning");
  t.eval_interval = get_or<int>(tuning, "eval_interval", t.eval_interval, "tuning");
  t.warmup_steps_before_stopping = get_or<int>(tuning, "warmup_steps", t.warmup_steps_before_stopping, "tuning");
  t.stopping_window = get_or<int>(tuning, "stopping_window", t.stopping_window, "tuning");
  t.max_steps = get_or<int>(tuning, "max_steps", t.max_steps, "tuning");
  t.weight_decay = get_or<double>(tuning, "weight_decay", t.weight_decay, "tuning");

  const json report = j.value("report", json::object());
  allow_keys(report, {"confidence", "center", "aggregation", "extra_runs"}, "report");
  auto& g = c.report.gap;
  g.confidence = get_or<double>(report, "confidence", g.confidence, "report");
  const auto center = get_or<std::string>(report, "center", "median", "report");
  if (center == "median") {
    g.center = Center::median;
  } else if (center == "mean") {
    g.center = Center::mean;
  } else {
    fail(ErrorKind::config, "report.center must be 'median' or 'mean'");
  }
  const auto aggregation = get_or<std::string>(report, "aggregation", "mean_of_gaps", "report");
  if (aggregation == "mean_of_gaps") {
    g.aggregation = Aggregation::mean_of_gaps;
  } else if (aggregation == "gap_of_means") {
    g.aggregation = Aggregation::gap_of_means;
  } else {
    fail(ErrorKind::config, "report.aggregation must be 'mean_of_gaps' or 'gap_of_means'");
  }
  for (const auto& e : report.value("extra_runs", json::array())) {
    allow_keys(e, {"model", "dataset", "gaps"}, "report.extra_runs[]");
    ExtraRun run;
    run.model = get_or<std::string>(e, "model", "", "report.extra_runs[]");
    run.dataset = get_or<std::string>(e, "dataset", "", "report.extra_runs[]");
    run.gaps = resolve(base_dir, get_or<std::string>(e, "gaps", "", "report.extra_runs[]"));
    if (run.model.empty() || run.dataset.empty()) fail(ErrorKind::config, "report.extra_runs[] needs model and dataset");
    c.report.extra_runs.push_back(std::move(run));
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path, const std::optional<fs::path>& output_dir,
                                        const std::optional<std::uint64_t>& seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::config, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::config, path.string() + ": config must be a JSON object");
  if (seed) j["seed"] = *seed;
  auto c = parse_experiment_config(j, path.parent_path());
  if (output_dir) c.output_dir = fs::absolute(*output_dir).lexically_normal();
  c.source_text = ss.str();
  c.validate();
  return c;
}

json RunManifest::to_json() const {
  json stages_json = json::object();
  for (const auto& [name, s] : stages) {
    json arts = json::array();
    for (const auto& a : s.artifacts) arts.push_back({{"kind", a.kind}, {"path", a.path}, {"sha256", a.sha256}});
    stages_json[name] = {{"config_hash", s.config_hash}, {"seconds", s.seconds}, {"artifacts", arts}, {"info", s.info}};
  }
  return {{"version", version}, {"config_hash", config_hash}, {"stages", stages_json}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.version = j.at("version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& [name, s] : j.at("stages").items()) {
      StageRecord r;
      r.config_hash = s.at("config_hash").get<std::string>();
      r.seconds = s.at("seconds").get<double>();
      r.info = s.value("info", json::object());
      for (const auto& a : s.at("artifacts")) {
        r.artifacts.push_back({a.at("kind").get<std::string>(), a.at("path").get<std::string>(),
                               a.at("sha256").get<std::string>()});
      }
      m.stages[name] = std::move(r);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "no manifest at " + path.string() + "; run the earlier stages first");
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::format, path.string() + ": " + e.what());
  }
}

void RunManifest::save(const fs::path& path) const {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << to_json().dump(2) << '\n';
    if (!out) fail(ErrorKind::data, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

const StageRecord& RunManifest::stage(const std::string& name) const {
  const auto it = stages.find(name);
  if (it == stages.end()) fail(ErrorKind::data, "manifest has no '" + name + "' stage; run it first");
  return it->second;
}

std::vector<Artifact> RunManifest::artifacts(const std::string& stage_name, const std::string& kind) const {
  std::vector<Artifact> out;
  for (const auto& a : stage(stage_name).artifacts) {
    if (a.kind == kind) out.push_back(a);
  }
  return out;
}

void RunManifest::verify(const fs::path& root, const std::string& stage_name) const {
  for (const auto& a : stage(stage_name).artifacts) {
    const fs::path p = root / a.path;
    if (!fs::is_regular_file(p)) fail(ErrorKind::integrity, "artifact missing: " + p.string());
    if (sha256_file(p) != a.sha256) fail(ErrorKind::integrity, "artifact hash mismatch: " + p.string());
  }
}

}  // namespace pbl

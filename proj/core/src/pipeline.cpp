#include "fassist/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace fassist {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 9> kTaskNames = {
    "extract", "load", "split", "train_translation", "build_phrases", "build_features", "train_reranker",
    "evaluate", "serve"};

}  // namespace

std::string_view task_name(Task task) noexcept { return kTaskNames[static_cast<std::size_t>(task)]; }

std::optional<Task> parse_task(std::string_view name) {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
    if (kTaskNames[i] == name) return static_cast<Task>(i);
  }
  return std::nullopt;
}

bool PipelineConfig::has(Task task) const { return std::find(tasks.begin(), tasks.end(), task) != tasks.end(); }

PipelineError::PipelineError(Task task, const std::string& cause)
    : Error("task '" + std::string(task_name(task)) + "' failed: " + cause), task_(task) {}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::optional<Task> prerequisite(Task t) {
  switch (t) {
    case Task::kExtract:
    case Task::kLoad: return std::nullopt;
    case Task::kSplit:
    case Task::kTrainTranslation: return Task::kLoad;
    case Task::kBuildPhrases: return Task::kTrainTranslation;
    case Task::kBuildFeatures: return Task::kBuildPhrases;
    case Task::kTrainReranker: return Task::kBuildFeatures;
    case Task::kEvaluate:
    case Task::kServe: return Task::kTrainTranslation;
  }
  return std::nullopt;
}

std::string q(std::string_view s) { return "'" + std::string(s) + "'"; }

/// Strict reader over one JSON object section.
class Section {
 public:
  Section(const json& obj, std::string name, std::vector<std::string_view> allowed) : obj_(obj), name_(std::move(name)) {
    if (!obj.is_object()) throw ConfigError(where() + "must be an object");
    for (const auto& [key, value] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        throw ConfigError("unknown setting " + q(key) + (name_.empty() ? "" : " in section " + q(name_)));
      }
    }
  }

  template <typename T>
  std::optional<T> get(const std::string& key) const {
    if (!obj_.contains(key)) return std::nullopt;
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("setting " + path(key) + " has the wrong type");
    }
  }

  template <typename T>
  void read(const std::string& key, T& into) const {
    if (auto v = get<T>(key)) into = *v;
  }

  double positive(const std::string& key, double current, bool allow_zero = false) const {
    const double v = get<double>(key).value_or(current);
    if (!(allow_zero ? v >= 0.0 : v > 0.0)) throw ConfigError("setting " + path(key) + " must be " + (allow_zero ? "non-negative" : "positive"));
    return v;
  }

  std::size_t count(const std::string& key, std::size_t current, std::size_t min = 1) const {
    if (!obj_.contains(key)) return current;
    const auto& v = obj_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
      throw ConfigError("setting " + path(key) + " must be an integer >= " + std::to_string(min));
    }
    return v.get<std::size_t>();
  }

  std::string path(const std::string& key) const { return q(name_.empty() ? key : name_ + "." + key); }

 private:
  std::string where() const { return name_.empty() ? "config " : "section " + q(name_) + " "; }
  const json& obj_;
  std::string name_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void apply_set(json& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override " + q(assignment) + " is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    raw[key] = std::move(value);
    return;
  }
  const std::string section = key.substr(0, dot);
  const std::string field = key.substr(dot + 1);
  if (field.empty() || field.find('.') != std::string::npos) throw ConfigError("override key " + q(key) + " must be section.key");
  if (raw.contains(section) && !raw[section].is_object()) throw ConfigError("override target " + q(section) + " is not a section");
  raw[section][field] = std::move(value);
}

}  // namespace

PipelineConfig parse_config(std::string_view json_text, const ConfigOverrides& overrides,
                            const std::filesystem::path& base_dir) {
  json raw = json::parse(json_text, nullptr, false);
  if (raw.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& s : overrides.sets) apply_set(raw, s);
  if (overrides.seed) raw["seed"] = *overrides.seed;
  if (overrides.baseline) raw["baseline"] = true;

  std::vector<std::string_view> top = {"project", "seed", "work_dir", "baseline", "tasks"};
  top.insert(top.end(), kTaskNames.begin(), kTaskNames.end());
  const Section g(raw, "", top);
  const json empty = json::object();
  auto section = [&](std::string_view name) -> const json& {
    const auto it = raw.find(std::string(name));
    return it == raw.end() ? empty : *it;
  };

  PipelineConfig cfg;
  cfg.project = g.get<std::string>("project");
  if (raw.contains("seed")) {
    if (!raw["seed"].is_number_unsigned()) throw ConfigError("setting 'seed' must be a non-negative integer");
    cfg.seed = raw["seed"].get<std::uint64_t>();
  }
  if (auto w = g.get<std::string>("work_dir")) cfg.work_dir = *w;
  cfg.work_dir = resolve(base_dir, cfg.work_dir.string());
  g.read("baseline", cfg.baseline);

  // Tasks: known, unique, in pipeline order, prerequisites present.
  if (!raw.contains("tasks") || !raw["tasks"].is_array() || raw["tasks"].empty()) {
    throw ConfigError("setting 'tasks' must be a non-empty list of task names");
  }
  for (const auto& t : raw["tasks"]) {
    if (!t.is_string()) throw ConfigError("setting 'tasks' must contain task names");
    const auto task = parse_task(t.get<std::string>());
    if (!task) throw ConfigError("unknown task " + q(t.get<std::string>()));
    if (cfg.has(*task)) throw ConfigError("task " + q(task_name(*task)) + " is listed twice");
    cfg.tasks.push_back(*task);
  }
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
    const Task t = cfg.tasks[i];
    for (std::size_t j = i + 1; j < cfg.tasks.size(); ++j) {
      if (cfg.tasks[j] < t) {
        throw ConfigError("task " + q(task_name(t)) + " must come after " + q(task_name(cfg.tasks[j])));
      }
    }
    if (const auto pre = prerequisite(t); pre && !cfg.has(*pre)) {
      throw ConfigError("task " + q(task_name(t)) + " requires task " + q(task_name(*pre)) + " earlier in the list");
    }
  }

  // Per-task sections are validated whether or not the task runs.
  {
    const Section s(section("extract"), "extract", {"command", "repo", "url_template", "include_private"});
    s.read("command", cfg.extract.command);
    if (auto r = s.get<std::string>("repo")) cfg.extract.repo = resolve(base_dir, *r);
    cfg.extract.url_template = s.get<std::string>("url_template");
    s.read("include_private", cfg.extract.include_private);
    if (cfg.has(Task::kExtract) && cfg.extract.repo.empty()) throw ConfigError("task 'extract' requires setting 'extract.repo'");
  }
  {
    const Section s(section("load"), "load", {"corpus", "hierarchy"});
    if (auto c = s.get<std::string>("corpus")) cfg.load.corpus = resolve(base_dir, *c);
    if (auto h = s.get<std::string>("hierarchy")) cfg.load.hierarchy = resolve(base_dir, *h);
    if (cfg.has(Task::kExtract)) {
      if (!cfg.load.corpus) cfg.load.corpus = cfg.work_dir / artifacts::kCorpus;
      if (!cfg.load.hierarchy) cfg.load.hierarchy = cfg.work_dir / artifacts::kHierarchy;
    }
    if (cfg.has(Task::kLoad) && !cfg.load.corpus) throw ConfigError("task 'load' requires setting 'load.corpus'");
  }
  {
    const Section s(section("split"), "split", {"train", "dev", "test"});
    cfg.split.train_frac = s.positive("train", cfg.split.train_frac);
    cfg.split.dev_frac = s.positive("dev", cfg.split.dev_frac);
    cfg.split.test_frac = s.positive("test", cfg.split.test_frac);
    try {
      cfg.split.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("section 'split': ") + e.what());
    }
  }
  TrainingSettings& tr = cfg.training;
  {
    const Section s(section("train_translation"), "train_translation", {"iterations", "length_constant", "floor"});
    tr.em_iterations = s.count("iterations", tr.em_iterations);
    s.read("length_constant", tr.scoring.length_constant);
    tr.scoring.floor = s.positive("floor", tr.scoring.floor);
  }
  {
    const Section s(section("build_phrases"), "build_phrases", {"max_len"});
    tr.phrase_max_len = s.count("max_len", tr.phrase_max_len);
  }
  {
    const Section s(section("build_features"), "build_features", {"pool_size", "folds"});
    tr.reranker.pool_size = s.count("pool_size", tr.reranker.pool_size, 2);
    tr.feature_folds = s.count("folds", tr.feature_folds, 0);
  }
  {
    const Section s(section("train_reranker"), "train_reranker", {"epochs", "eta0", "decay_horizon", "l2", "init"});
    tr.reranker.epochs = s.count("epochs", tr.reranker.epochs, 0);
    tr.reranker.eta0 = s.positive("eta0", tr.reranker.eta0);
    tr.reranker.decay_horizon = s.positive("decay_horizon", tr.reranker.decay_horizon, true);
    tr.reranker.l2 = s.positive("l2", tr.reranker.l2, true);
    if (auto init = s.get<std::string>("init")) {
      if (*init == "translation") tr.reranker.init = InitialWeights::kTranslation;
      else if (*init == "zero") tr.reranker.init = InitialWeights::kZero;
      else throw ConfigError("setting 'train_reranker.init' must be \"translation\" or \"zero\"");
    }
  }
  {
    const Section s(section("evaluate"), "evaluate", {"systems", "bow_pool_size", "bow_epochs", "bow_eta0", "bow_l2"});
    tr.bow.pool_size = s.count("bow_pool_size", tr.bow.pool_size, 2);
    tr.bow.epochs = s.count("bow_epochs", tr.bow.epochs, 0);
    tr.bow.eta0 = s.positive("bow_eta0", tr.bow.eta0);
    tr.bow.l2 = s.positive("bow_l2", tr.bow.l2, true);
    const bool reranker_trained = cfg.has(Task::kTrainReranker) && !cfg.baseline;
    const auto names = s.get<std::vector<std::string>>("systems");
    if (names) {
      for (const auto& n : *names) {
        const auto sys = parse_system(n);
        if (!sys) throw ConfigError("unknown system " + q(n) + " in 'evaluate.systems'");
        cfg.systems.insert(*sys);
      }
    } else {
      cfg.systems = {System::kBow, System::kTermMatch, System::kTranslation, System::kReranker};
    }
    // Baseline mode evaluates the baselines only.
    if (cfg.baseline) cfg.systems.erase(System::kReranker);
    if (!reranker_trained && cfg.systems.count(System::kReranker)) {
      if (names) {
        throw ConfigError("system 'Reranker' in 'evaluate.systems' requires task 'train_reranker'");
      }
      cfg.systems.erase(System::kReranker);
    }
    if (cfg.has(Task::kEvaluate) && cfg.systems.empty()) throw ConfigError("setting 'evaluate.systems' selects no system");
  }
  {
    const Section s(section("serve"), "serve", {"host", "port", "static_dir"});
    s.read("host", cfg.serve.host);
    if (auto p = s.get<long long>("port")) {
      if (*p < 0 || *p > 65535) throw ConfigError("setting 'serve.port' must be in [0, 65535]");
      cfg.serve.port = static_cast<int>(*p);
    }
    if (auto d = s.get<std::string>("static_dir")) cfg.serve.static_dir = resolve(base_dir, *d);
  }

  // One seed drives every random choice.
  cfg.split.seed = cfg.seed;
  tr.reranker.seed = cfg.seed;
  tr.bow.seed = cfg.seed;
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides, path.parent_path());
}

// ---------------------------------------------------------------------------
// Execution

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

bool same_file(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::error_code ec;
  return std::filesystem::exists(a, ec) && std::filesystem::exists(b, ec) && std::filesystem::equivalent(a, b, ec);
}

struct State {
  std::optional<Corpus> corpus;
  std::optional<CorpusSplits> splits;
  std::optional<Model> model;
  std::optional<RerankPools> pools;
};

}  // namespace

std::string extractor_command(const ExtractSettings& settings, const std::string& project,
                              const std::filesystem::path& out_corpus, const std::filesystem::path& out_hierarchy) {
  // The command itself may carry arguments (e.g. "python3 -m extractor").
  std::string cmd = settings.command + " --repo " + shell_quote(settings.repo.string()) + " --out-corpus " +
                    shell_quote(out_corpus.string()) + " --out-hierarchy " + shell_quote(out_hierarchy.string());
  if (settings.include_private) cmd += " --include-private";
  if (!project.empty()) cmd += " --project " + shell_quote(project);
  if (settings.url_template) cmd += " --url-template " + shell_quote(*settings.url_template);
  return cmd;
}

PipelineResult run_pipeline(const PipelineConfig& config, const PipelineHooks& hooks) {
  PipelineResult result;
  State st;
  const auto& dir = config.work_dir;
  auto say = [&](const std::string& msg) {
    if (hooks.log) *hooks.log << msg << std::endl;
  };
  auto splits = [&]() -> const CorpusSplits& {
    if (!st.splits) st.splits = split_corpus(*st.corpus, config.split);
    return *st.splits;
  };
  auto save = [&] { save_model(*st.model, dir / artifacts::kModel); };

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create work directory " + dir.string() + ": " + ec.message());

  for (const Task task : config.tasks) {
    if (config.baseline && (task == Task::kBuildFeatures || task == Task::kTrainReranker)) {
      say(std::string("[") + std::string(task_name(task)) + "] skipped (baseline)");
      continue;
    }
    say(std::string("[") + std::string(task_name(task)) + "]");
    try {
      switch (task) {
        case Task::kExtract: {
          const auto cmd = extractor_command(config.extract, config.project.value_or(""), dir / artifacts::kCorpus,
                                             dir / artifacts::kHierarchy);
          const int rc = std::system(cmd.c_str());
          if (rc != 0) throw Error("extractor command exited with status " + std::to_string(rc) + ": " + cmd);
          break;
        }
        case Task::kLoad: {
          std::optional<std::filesystem::path> hier = config.load.hierarchy;
          if (hier && !std::filesystem::exists(*hier) && config.has(Task::kExtract)) hier.reset();
          st.corpus = load_corpus(*config.load.corpus, hier);
          if (config.project) st.corpus->project_name = *config.project;
          if (st.corpus->project_name.empty()) st.corpus->project_name = config.load.corpus->stem().string();
          const auto out_corpus = dir / artifacts::kCorpus;
          const auto out_hier = dir / artifacts::kHierarchy;
          if (!same_file(*config.load.corpus, out_corpus) && !(hier && same_file(*hier, out_hier))) {
            save_corpus(*st.corpus, out_corpus, out_hier);
          }
          say("  " + std::to_string(st.corpus->pairs.size()) + " pairs, " +
              std::to_string(st.corpus->hierarchy.class_descs().size()) + " classes");
          break;
        }
        case Task::kSplit: {
          const auto& s = splits();
          save_corpus(s.train, dir / artifacts::kTrain);
          save_corpus(s.dev, dir / artifacts::kDev);
          save_corpus(s.test, dir / artifacts::kTest);
          say("  train/dev/test = " + std::to_string(s.train.pairs.size()) + "/" + std::to_string(s.dev.pairs.size()) +
              "/" + std::to_string(s.test.pairs.size()));
          break;
        }
        case Task::kTrainTranslation: {
          st.model = init_model(*st.corpus, config.training.scoring);
          st.model->pool_size = config.training.reranker.pool_size;
          train_translation(*st.model, splits().train, config.training.em_iterations);
          save();
          break;
        }
        case Task::kBuildPhrases: {
          build_phrases(*st.model, splits().train, config.training.phrase_max_len);
          save();
          say("  " + std::to_string(st.model->phrases->phrases().size()) + " phrase pairs, " +
              std::to_string(st.model->phrases->hierarchical().size()) + " hierarchical");
          break;
        }
        case Task::kBuildFeatures: {
          st.pools = build_features(*st.model, splits().train, config.training.reranker.pool_size,
                                    config.training.feature_folds, config.training.em_iterations,
                                    config.training.phrase_max_len);
          say("  " + std::to_string(st.pools->index.size()) + " features over " +
              std::to_string(st.pools->examples.size()) + " training pools");
          break;
        }
        case Task::kTrainReranker: {
          RerankTrainLog log;
          train_reranker(*st.model, std::move(*st.pools), splits().dev, config.training.reranker, &log);
          st.pools.reset();
          save();
          say("  best epoch " + std::to_string(log.best_epoch) + " (dev MRR " +
              std::to_string(log.dev_mrr.empty() ? 0.0 : log.dev_mrr[log.best_epoch]) + ")");
          break;
        }
        case Task::kEvaluate: {
          std::optional<BowModel> bow;
          if (config.systems.count(System::kBow)) {
            bow = train_bow(splits().train, splits().dev, st.model->inventory, config.training.bow);
          }
          auto report = evaluate_systems({&*st.model, bow ? &*bow : nullptr}, splits(), config.systems);
          report.seed = config.seed;
          write_text(dir / artifacts::kReport, report_json(report));
          write_text(dir / artifacts::kReportText, report_table(report));
          say(report_table(report));
          result.report = std::move(report);
          break;
        }
        case Task::kServe: {
          auto engine = std::make_shared<const QueryEngine>(*st.model, *st.corpus);
          QueryServer server(engine, config.serve);
          const int port = server.bind();
          say("  serving on http://" + config.serve.host + ":" + std::to_string(port));
          if (hooks.serve) hooks.serve(server, port);
          else server.listen();
          break;
        }
      }
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError(task, e.what());
    }
    result.executed.push_back(task);
  }
  return result;
}

}  // namespace fassist

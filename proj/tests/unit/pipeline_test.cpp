#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "fassist/error.hpp"
#include "fassist/pipeline.hpp"
#include "test_support.hpp"

namespace fassist {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;
using testing::read_file;
using testing::test_data;
using testing::write_file;

std::string message_of(const std::string& json, const ConfigOverrides& o = {}) {
  try {
    parse_config(json, o);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Config, RerankerBeforeTranslationNamesBothTasks) {
  const auto msg = message_of(R"({"tasks": ["load", "train_reranker", "train_translation", "build_features"],
                                  "load": {"corpus": "c.jsonl"}})");
  EXPECT_NE(msg.find("train_reranker"), std::string::npos) << msg;
  EXPECT_NE(msg.find("train_translation"), std::string::npos) << msg;
}

TEST(Config, MissingPrerequisiteNamesIt) {
  const auto msg = message_of(R"({"tasks": ["load", "train_translation", "train_reranker"], "load": {"corpus": "c"}})");
  EXPECT_NE(msg.find("train_reranker"), std::string::npos) << msg;
  EXPECT_NE(msg.find("build_features"), std::string::npos) << msg;
}

TEST(Config, MinimalIsValidWithDefaults) {
  const auto cfg = parse_config(R"({"tasks": ["load", "train_translation", "evaluate"], "load": {"corpus": "c.jsonl"}})",
                                {}, "/base");
  EXPECT_EQ(cfg.tasks, (std::vector<Task>{Task::kLoad, Task::kTrainTranslation, Task::kEvaluate}));
  EXPECT_EQ(cfg.seed, 13u);
  EXPECT_EQ(cfg.training.em_iterations, 10u);
  EXPECT_EQ(cfg.load.corpus, fs::path("/base/c.jsonl"));
  EXPECT_EQ(cfg.split.train_frac, 0.70);
  EXPECT_EQ(cfg.systems, (std::set<System>{System::kBow, System::kTermMatch, System::kTranslation}));
  EXPECT_FALSE(cfg.baseline);
}

TEST(Config, UnknownSettingRejected) {
  EXPECT_NE(message_of(R"({"tasks": ["load"], "load": {"corpus": "c"}, "foo": 1})").find("'foo'"), std::string::npos);
  const auto nested = message_of(R"({"tasks": ["load"], "load": {"corpus": "c", "foo": 1}})");
  EXPECT_NE(nested.find("'foo'"), std::string::npos);
  EXPECT_NE(nested.find("'load'"), std::string::npos);
}

TEST(Config, OtherErrors) {
  EXPECT_FALSE(message_of("not json").empty());
  EXPECT_FALSE(message_of(R"({"tasks": []})").empty());
  EXPECT_NE(message_of(R"({"tasks": ["load", "dance"], "load": {"corpus": "c"}})").find("dance"), std::string::npos);
  EXPECT_NE(message_of(R"({"tasks": ["load", "load"], "load": {"corpus": "c"}})").find("twice"), std::string::npos);
  EXPECT_FALSE(message_of(R"({"tasks": ["load"]})").empty());
  EXPECT_FALSE(message_of(R"({"tasks": ["load"], "load": {"corpus": "c"}, "split": {"train": 0.9}})").empty());
  EXPECT_FALSE(message_of(R"({"tasks": ["load", "train_translation"], "load": {"corpus": "c"},
                              "train_translation": {"iterations": "ten"}})").empty());
  EXPECT_FALSE(message_of(R"({"tasks": ["load", "train_translation", "evaluate"], "load": {"corpus": "c"},
                              "evaluate": {"systems": ["Reranker"]}})").empty());
}

TEST(Config, FlagsBeatFile) {
  const std::string text = R"({"tasks": ["load", "train_translation", "build_phrases", "build_features",
                                         "train_reranker", "evaluate"],
                               "seed": 5, "load": {"corpus": "c"}, "train_translation": {"iterations": 3}})";
  const auto plain = parse_config(text);
  EXPECT_EQ(plain.seed, 5u);
  EXPECT_TRUE(plain.systems.contains(System::kReranker));
  ConfigOverrides o;
  o.seed = 99;
  o.baseline = true;
  o.sets = {"train_translation.iterations=7", "train_reranker.init=zero", "work_dir=out"};
  const auto cfg = parse_config(text, o);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.split.seed, 99u);
  EXPECT_TRUE(cfg.baseline);
  EXPECT_FALSE(cfg.systems.contains(System::kReranker));
  EXPECT_EQ(cfg.training.em_iterations, 7u);
  EXPECT_EQ(cfg.training.reranker.init, InitialWeights::kZero);
  EXPECT_EQ(cfg.work_dir, fs::path("out"));
  o.sets = {"train_translation.bogus=1"};
  EXPECT_NE(message_of(text, o).find("bogus"), std::string::npos);
}

TEST(Config, LoadFileResolvesRelativePaths) {
  TempDir dir;
  write_file(dir / "p.json", R"({"tasks": ["load"], "load": {"corpus": "data/c.jsonl"}})");
  EXPECT_EQ(load_config(dir / "p.json").load.corpus, dir.path() / "data/c.jsonl");
  EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
}

TEST(Tasks, Names) {
  for (int i = 0; i <= static_cast<int>(Task::kServe); ++i) {
    EXPECT_EQ(parse_task(task_name(static_cast<Task>(i))), static_cast<Task>(i));
  }
}

std::string full_config(const fs::path& work, bool extra_serve = false) {
  std::string tasks = R"("load", "split", "train_translation", "build_phrases", "build_features", "train_reranker", "evaluate")";
  if (extra_serve) tasks += R"(, "serve")";
  return R"({"project": "fig1", "seed": 4, "work_dir": ")" + work.string() + R"(",
             "tasks": [)" + tasks + R"(],
             "load": {"corpus": ")" + test_data("figure1/corpus.jsonl").string() + R"(",
                      "hierarchy": ")" + test_data("figure1/hierarchy.jsonl").string() + R"("},
             "split": {"train": 0.5, "dev": 0.25, "test": 0.25},
             "train_translation": {"iterations": 4},
             "build_features": {"pool_size": 5, "folds": 2},
             "train_reranker": {"epochs": 3},
             "evaluate": {"bow_epochs": 2},
             "serve": {"port": 0}})";
}

TEST(Run, FullPipelineWritesReloadableArtifacts) {
  TempDir dir;
  std::ostringstream log;
  const auto res = run_pipeline(parse_config(full_config(dir / "w")), {&log, {}});
  ASSERT_TRUE(res.report);
  EXPECT_EQ(res.report->rows.size(), 4u);
  EXPECT_EQ(res.report->project, "fig1");
  for (const char* f : {artifacts::kTrain, artifacts::kDev, artifacts::kTest, artifacts::kModel, artifacts::kReport,
                        artifacts::kReportText}) {
    EXPECT_TRUE(fs::exists(dir / "w" / f)) << f;
  }
  const Model m = load_model(dir / "w" / artifacts::kModel);
  EXPECT_TRUE(m.has_reranker());
  EXPECT_EQ(m.project, "fig1");
  const auto train = load_corpus(dir / "w" / artifacts::kTrain);
  const auto dev = load_corpus(dir / "w" / artifacts::kDev);
  const auto test = load_corpus(dir / "w" / artifacts::kTest);
  EXPECT_EQ(train.pairs.size() + dev.pairs.size() + test.pairs.size(), 12u);
  EXPECT_EQ(res.report->test_pairs, test.pairs.size());
  EXPECT_NE(log.str().find("[train_reranker]"), std::string::npos);
}

TEST(Run, RerunIsByteIdentical) {
  TempDir a, b;
  run_pipeline(parse_config(full_config(a / "w")));
  run_pipeline(parse_config(full_config(b / "w")));
  for (const char* f : {artifacts::kModel, artifacts::kReport, artifacts::kReportText, artifacts::kTrain}) {
    EXPECT_EQ(read_file(a / "w" / f), read_file(b / "w" / f)) << f;
  }
  const auto first = read_file(a / "w" / artifacts::kModel);
  run_pipeline(parse_config(full_config(a / "w")));
  EXPECT_EQ(read_file(a / "w" / artifacts::kModel), first);
}

TEST(Run, BaselineSkipsReranker) {
  TempDir dir;
  ConfigOverrides o;
  o.baseline = true;
  std::ostringstream log;
  const auto res = run_pipeline(parse_config(full_config(dir / "w"), o), {&log, {}});
  ASSERT_TRUE(res.report);
  EXPECT_EQ(res.report->find(System::kReranker), nullptr);
  EXPECT_NE(res.report->find(System::kBow), nullptr);
  EXPECT_NE(res.report->find(System::kTranslation), nullptr);
  EXPECT_FALSE(load_model(dir / "w" / artifacts::kModel).has_reranker());
  EXPECT_NE(log.str().find("skipped (baseline)"), std::string::npos);
  EXPECT_EQ(std::count(res.executed.begin(), res.executed.end(), Task::kTrainReranker), 0);
}

TEST(Run, FailingTaskIsNamed) {
  TempDir dir;
  auto text = full_config(dir / "w");
  const auto good = test_data("figure1/corpus.jsonl").string();
  text.replace(text.find(good), good.size(), (dir / "missing.jsonl").string());
  try {
    run_pipeline(parse_config(text));
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.task(), Task::kLoad);
    EXPECT_NE(std::string(e.what()).find("task 'load' failed"), std::string::npos);
  }
}

TEST(Run, ServeTaskUsesHook) {
  TempDir dir;
  int seen_port = -1;
  PipelineHooks hooks;
  hooks.serve = [&](QueryServer& server, int port) {
    seen_port = port;
    EXPECT_EQ(server.snapshot()->project(), "fig1");
    EXPECT_FALSE(server.snapshot()->answer_query("add an arc", 3).empty());
  };
  const auto res = run_pipeline(parse_config(full_config(dir / "w", true)), hooks);
  EXPECT_GT(seen_port, 0);
  EXPECT_EQ(res.executed.back(), Task::kServe);
}

TEST(Run, ExtractDelegatesToCommand) {
  TempDir dir;
  const auto script = dir / "fake_extract.sh";
  write_file(script, "#!/bin/sh\n"
                     "while [ $# -gt 0 ]; do case \"$1\" in\n"
                     "  --out-corpus) cp '" + test_data("figure1/corpus.jsonl").string() + "' \"$2\"; shift 2;;\n"
                     "  --out-hierarchy) cp '" + test_data("figure1/hierarchy.jsonl").string() + "' \"$2\"; shift 2;;\n"
                     "  --include-private) shift;;\n"
                     "  *) shift 2;;\n"
                     "esac; done\n");
  fs::permissions(script, fs::perms::owner_all);
  const std::string text = R"({"work_dir": ")" + (dir / "w").string() + R"(",
      "tasks": ["extract", "load", "train_translation", "evaluate"],
      "extract": {"command": ")" + script.string() + R"(", "repo": "/src/repo"},
      "train_translation": {"iterations": 2},
      "evaluate": {"systems": ["term_match", "translation"]}})";
  const auto res = run_pipeline(parse_config(text));
  EXPECT_TRUE(fs::exists(dir / "w" / artifacts::kCorpus));
  ASSERT_TRUE(res.report);
  EXPECT_EQ(res.report->rows.size(), 2u);

  auto bad = text;
  bad.replace(bad.find(script.string()), script.string().size(), "false");
  try {
    run_pipeline(parse_config(bad));
    FAIL() << "expected PipelineError";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.task(), Task::kExtract);
  }
}

TEST(Run, ExtractorCommandQuoting) {
  ExtractSettings s;
  s.command = "python3 -m extractor";
  s.repo = "/repo with space";
  s.include_private = true;
  s.url_template = "https://x/{file}#L{line}";
  const auto cmd = extractor_command(s, "it's", "/o/c.jsonl", "/o/h.jsonl");
  EXPECT_EQ(cmd, "python3 -m extractor --repo '/repo with space' --out-corpus '/o/c.jsonl' --out-hierarchy "
                 "'/o/h.jsonl' --include-private --project 'it'\\''s' --url-template 'https://x/{file}#L{line}'");
}

}  // namespace
}  // namespace fassist

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fassist/corpus.hpp"
#include "fassist/error.hpp"
#include "fassist/evaluation.hpp"
#include "fassist/model.hpp"
#include "fassist/service.hpp"

namespace fassist {

enum class Task : std::uint8_t {
  kExtract,
  kLoad,
  kSplit,
  kTrainTranslation,
  kBuildPhrases,
  kBuildFeatures,
  kTrainReranker,
  kEvaluate,
  kServe,
};

std::string_view task_name(Task task) noexcept;
std::optional<Task> parse_task(std::string_view name);

struct ExtractSettings {
  std::string command = "fassist-extract";
  std::filesystem::path repo;
  std::optional<std::string> url_template;
  bool include_private = false;
};

struct LoadSettings {
  /// Defaults to the extracted files in work_dir when extract runs.
  std::optional<std::filesystem::path> corpus;
  std::optional<std::filesystem::path> hierarchy;
};

struct PipelineConfig {
  std::optional<std::string> project;  // overrides the corpus header
  std::uint64_t seed = 13;
  std::filesystem::path work_dir = "work";
  bool baseline = false;
  std::vector<Task> tasks;

  ExtractSettings extract;
  LoadSettings load;
  SplitSpec split;
  TrainingSettings training;
  std::set<System> systems;
  ServerOptions serve;

  bool has(Task task) const;
};

/// Command-line settings applied on top of the file (flag beats file).
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  bool baseline = false;
  /// "section.key=value" or "key=value"; value is JSON, or a bare string.
  std::vector<std::string> sets;
};

/// Parses a JSON config, applies overrides and defaults, and checks task
/// order. Relative paths resolve against base_dir. Throws ConfigError naming
/// the offending key or tasks.
PipelineConfig parse_config(std::string_view json_text, const ConfigOverrides& overrides = {},
                            const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Raised when a task fails; what() names the task and the cause.
class PipelineError : public Error {
 public:
  PipelineError(Task task, const std::string& cause);
  Task task() const noexcept { return task_; }

 private:
  Task task_;
};

/// Artifact file names inside work_dir.
namespace artifacts {
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kHierarchy = "hierarchy.jsonl";
inline constexpr const char* kTrain = "train.jsonl";
inline constexpr const char* kDev = "dev.jsonl";
inline constexpr const char* kTest = "test.jsonl";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kReportText = "report.txt";
}  // namespace artifacts

struct PipelineHooks {
  /// Progress messages; nullptr silences them.
  std::ostream* log = nullptr;
  /// Called by the serve task after binding; the default blocks in listen().
  std::function<void(QueryServer&, int port)> serve;
};

struct PipelineResult {
  std::optional<ExperimentReport> report;
  std::vector<Task> executed;
};

/// Runs the tasks in order. Throws PipelineError on the first failure.
PipelineResult run_pipeline(const PipelineConfig& config, const PipelineHooks& hooks = {});

/// Shell command line for the external extractor.
std::string extractor_command(const ExtractSettings& settings, const std::string& project,
                              const std::filesystem::path& out_corpus, const std::filesystem::path& out_hierarchy);

}  // namespace fassist

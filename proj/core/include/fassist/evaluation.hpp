#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fassist/corpus.hpp"
#include "fassist/model.hpp"
#include "fassist/reranker.hpp"
#include "fassist/translation.hpp"

namespace fassist {

struct EvalResult {
  double acc_at_1 = 0.0;
  double acc_at_10 = 0.0;
  double mrr = 0.0;
  /// 1-based gold rank per query; nullopt when the gold was not returned.
  std::vector<std::optional<std::size_t>> gold_ranks;

  std::size_t queries() const noexcept { return gold_ranks.size(); }
  /// Fraction of queries with the gold at rank <= k.
  double acc_at(std::size_t k) const;

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

/// True iff the linearizations are identical.
bool exact_match(const Component& candidate, const Component& gold);

/// Metrics from per-query gold ranks (absent ranks count 0 toward MRR).
EvalResult compute_metrics(std::span<const std::optional<std::size_t>> gold_ranks);
/// Metrics from ranked component lists; throws InvalidArgument when the
/// number of rankings and golds differ.
EvalResult compute_metrics(const std::vector<std::vector<Component>>& rankings, const std::vector<Component>& golds);

/// 1-based position of gold in a ranking, if present.
std::optional<std::size_t> gold_rank(std::span<const Candidate> ranking, std::size_t gold);

/// score(z) = sum over query tokens w of [w in linearized(z)]; full ranking,
/// ties by inventory order.
std::vector<Candidate> term_match_rank(const TextSequence& x, const ComponentInventory& inventory);

/// Bag-of-words log-linear baseline over word/component-term indicators.
struct BowModel {
  FeatureIndex index;
  WeightVector weights;
  friend bool operator==(const BowModel&, const BowModel&) = default;
};

/// SGD on pools of gold plus pool_size uniformly sampled negatives (seeded),
/// with dev selection on sampled dev pools of the same shape.
BowModel train_bow(const Corpus& train, const Corpus& dev, const ComponentInventory& inventory,
                   const RerankTrainConfig& config, RerankTrainLog* log = nullptr);

/// Full-inventory linear-score ranking; ties by inventory order.
std::vector<Candidate> bow_rank(const TextSequence& x, const ComponentInventory& inventory, const BowModel& bow);

enum class System : std::uint8_t { kBow, kTermMatch, kTranslation, kReranker };

/// "BoW", "Term Match", "Translation", "Reranker".
std::string_view system_name(System system) noexcept;
/// Accepts the display names and bow, term_match, translation, reranker.
std::optional<System> parse_system(std::string_view name);

struct SystemResult {
  System system;
  EvalResult dev;
  EvalResult test;
  friend bool operator==(const SystemResult&, const SystemResult&) = default;
};

struct ExperimentReport {
  std::string project;
  std::uint64_t seed = 0;
  std::size_t train_pairs = 0;
  std::size_t dev_pairs = 0;
  std::size_t test_pairs = 0;
  std::size_t inventory_size = 0;
  /// Always in System order: BoW, Term Match, Translation, Reranker.
  std::vector<SystemResult> rows;

  const SystemResult* find(System system) const;
  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

/// Trained systems to evaluate; a system is skipped when its model is absent.
struct SystemModels {
  const Model* model = nullptr;  // Translation, Term Match inventory, Reranker
  const BowModel* bow = nullptr;
};

/// Ranks every dev and test query over the full inventory with each
/// requested system. Never modifies the models.
ExperimentReport evaluate_systems(const SystemModels& models, const CorpusSplits& splits,
                                  const std::set<System>& systems);

/// split -> train requested systems -> evaluate.
ExperimentReport run_experiment(const Corpus& corpus, const SplitSpec& spec, const std::set<System>& systems,
                                const TrainingSettings& settings = {});

/// Structured record (JSON text, newline-terminated).
std::string report_json(const ExperimentReport& report);
/// Aligned text table with one row per system and split.
std::string report_table(const ExperimentReport& report);

}  // namespace fassist

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fassist/corpus.hpp"
#include "fassist/features.hpp"
#include "fassist/reranker.hpp"
#include "fassist/translation.hpp"

namespace fassist {

/// Hyperparameters for every trained system.
struct TrainingSettings {
  std::size_t em_iterations = 10;
  ScoreOptions scoring;
  std::size_t phrase_max_len = 3;
  /// Cross-fitting folds for reranker training pools (< 2: use the full model).
  std::size_t feature_folds = 5;
  RerankTrainConfig reranker;
  /// Bag-of-words baseline: same SGD, zero start, sampled negative pools.
  RerankTrainConfig bow{.pool_size = 100, .init = InitialWeights::kZero};
};

/// Everything needed to answer queries against one API.
struct Model {
  std::string project;
  ComponentInventory inventory;
  std::vector<ParamDescs> param_descs;  // parallel to inventory
  ClassHierarchy hierarchy;
  ScoreOptions scoring;

  LexTable text_given_component;
  LexTable component_given_text;
  TrainLog forward_log;
  TrainLog reverse_log;

  std::optional<PhraseTable> phrases;
  std::optional<RerankerModel> reranker;
  std::size_t pool_size = 100;

  /// Full-feature featurizer over this model's tables; references *this.
  Featurizer featurizer() const;
  /// Context over this model's inventory; references *this and featurizer.
  RerankContext rerank_context(const Featurizer& featurizer) const;

  bool has_reranker() const noexcept { return reranker.has_value(); }

  /// Translation ranking of the k best inventory components.
  std::vector<Candidate> rank_translation(const TextSequence& x, std::size_t k) const;
  /// Translation ranking over the full inventory with its first pool_size
  /// entries reordered by the reranker (translation order when untrained).
  std::vector<Candidate> rank(const TextSequence& x) const;

  friend bool operator==(const Model&, const Model&);
};

/// Inventory, parameter descriptions and hierarchy of the whole API.
Model init_model(const Corpus& api, const ScoreOptions& scoring = {});

/// Trains both Model 1 directions on the training pairs.
void train_translation(Model& model, const Corpus& train, std::size_t iterations);

/// Symmetrized alignments -> phrase table.
void build_phrases(Model& model, const Corpus& train, std::size_t max_len);

struct RerankPools {
  FeatureIndex index;  // frozen
  std::vector<TrainingExample> examples;
};

/// Featurizes translation pools for every training pair. With folds >= 2,
/// pairs are dealt round-robin into folds and each fold's pools, translation
/// scores and phrase features come from tables trained on the other folds.
RerankPools build_features(const Model& model, const Corpus& train, std::size_t pool_size, std::size_t folds = 5,
                           std::size_t em_iterations = 10, std::size_t phrase_max_len = 3);

/// Trains reranker weights on prepared pools with dev-set epoch selection.
void train_reranker(Model& model, RerankPools pools, const Corpus& dev, const RerankTrainConfig& config,
                    RerankTrainLog* log = nullptr);

/// init + translation + phrases (+ reranker unless skip_reranker).
Model train_model(const Corpus& api, const CorpusSplits& splits, const TrainingSettings& settings,
                  bool skip_reranker = false, RerankTrainLog* log = nullptr);

/// Versioned structured-text model file.
inline constexpr int kModelFormatVersion = 1;
std::string serialize_model(const Model& model);
/// Throws FormatError on malformed content or a format version mismatch.
Model parse_model(const std::string& text);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace fassist

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fassist/corpus.hpp"
#include "fassist/features.hpp"
#include "fassist/translation.hpp"

namespace fassist {

/// Dense theta indexed by FeatureIndex ids (slot 0 is the OOV bucket).
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::size_t dim) : values_(dim, 0.0) {}
  explicit WeightVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  bool all_finite() const noexcept;

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

 private:
  std::vector<double> values_;
};

/// Starting point for SGD.
enum class InitialWeights : std::uint8_t {
  kZero,
  /// Unit weight on the translation-score feature: the untrained reranker
  /// reproduces the translation ranking.
  kTranslation,
};

struct RerankTrainConfig {
  std::size_t pool_size = 100;
  std::size_t epochs = 10;
  double eta0 = 0.1;
  /// Decay horizon T in eta_t = eta0 / (1 + t / T); 0 means the number of
  /// training examples.
  double decay_horizon = 0.0;
  double l2 = 1e-5;
  std::uint64_t seed = 13;
  InitialWeights init = InitialWeights::kTranslation;

  /// Throws InvalidArgument unless pool_size >= 2, eta0 > 0 and l2 >= 0.
  void validate() const;
};

/// One featurized candidate pool with the position of the gold candidate.
struct TrainingExample {
  std::vector<FeatureVector> candidates;
  std::size_t gold = 0;
};

struct RerankTrainLog {
  /// Dev score of the initial weights followed by one entry per epoch.
  std::vector<double> dev_mrr;
  /// 0 = the initial weights were never beaten.
  std::size_t best_epoch = 0;
};

/// theta . phi for every candidate.
std::vector<double> linear_scores(std::span<const FeatureVector> candidates, const WeightVector& weights);

/// Softmax over linear scores with max subtraction. Throws InvalidArgument
/// for an empty pool.
std::vector<double> softmax(std::span<const double> scores);
std::vector<double> conditional_prob(std::span<const FeatureVector> candidates, const WeightVector& weights);

/// sum_n log p(gold_n | x_n) - (l2 / 2) |theta|^2.
double conditional_log_likelihood(std::span<const TrainingExample> examples, const WeightVector& weights, double l2);
/// Its gradient: sum_n (phi(gold_n) - E_p[phi]) - l2 * theta.
std::vector<double> conditional_log_likelihood_gradient(std::span<const TrainingExample> examples,
                                                        const WeightVector& weights, double l2);

/// Online stochastic gradient ascent. Examples are visited in a seeded
/// shuffle each epoch; step t uses eta0 / (1 + t / T). When dev_score is
/// set, the weights with the best dev score (initial weights included,
/// earliest wins ties) are returned; otherwise the final weights.
WeightVector train_weights(std::span<const TrainingExample> examples, WeightVector initial,
                           const RerankTrainConfig& config,
                           const std::function<double(const WeightVector&)>& dev_score = {},
                           RerankTrainLog* log = nullptr);

/// Inventory-level inputs for featurizing candidates.
struct RerankContext {
  const ComponentInventory* inventory = nullptr;
  const std::vector<ParamDescs>* param_descs = nullptr;  // parallel to inventory
  const Featurizer* featurizer = nullptr;

  /// Throws InvalidArgument when a pointer is missing or sizes disagree.
  void validate() const;
};

/// p(z | x; theta) over the given inventory candidates.
std::vector<double> conditional_prob(const TextSequence& x, std::span<const std::size_t> candidates,
                                     const WeightVector& weights, const FeatureIndex& index,
                                     const RerankContext& context);

/// Reorders the pool by theta . phi (ties: smaller inventory index, i.e.
/// lexicographic linearization) and keeps the k best. Never adds components.
std::vector<Candidate> rerank(const TextSequence& x, std::span<const Candidate> pool, const WeightVector& weights,
                              const FeatureIndex& index, const RerankContext& context, std::size_t k);

/// Reranks the first pool_size entries of a full translation ranking and
/// appends the remaining entries in translation order.
std::vector<Candidate> rerank_prefix(const TextSequence& x, std::span<const Candidate> translation_ranking,
                                     std::size_t pool_size, const WeightVector& weights, const FeatureIndex& index,
                                     const RerankContext& context);

struct RerankerModel {
  FeatureIndex index;
  WeightVector weights;
  friend bool operator==(const RerankerModel&, const RerankerModel&) = default;
};

/// Featurized training pools: translation top-k plus the gold component
/// when the beam misses it. Grows index.
std::vector<TrainingExample> build_training_pools(const Corpus& train, const RerankContext& context,
                                                  std::size_t pool_size, FeatureIndex& index);

/// Trains on prepared pools with dev-MRR epoch selection. Dev queries are
/// ranked by rerank_prefix over the full inventory; index must be frozen.
WeightVector train_reranker_weights(std::span<const TrainingExample> pools, const FeatureIndex& index,
                                    const Corpus& dev, const RerankContext& context,
                                    const RerankTrainConfig& config, RerankTrainLog* log = nullptr);

/// build_training_pools, freeze, train_reranker_weights.
RerankerModel train_reranker(const Corpus& train, const Corpus& dev, const RerankContext& context,
                             const RerankTrainConfig& config, RerankTrainLog* log = nullptr);

/// Weights for init on an index: zero, or one on the translation feature.
WeightVector initial_weights(const FeatureIndex& index, InitialWeights init);

}  // namespace fassist

#include "fassist/reranker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fassist/error.hpp"

namespace fassist {

bool WeightVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void RerankTrainConfig::validate() const {
  if (pool_size < 2) throw InvalidArgument("reranker pool size must be at least 2");
  if (!(eta0 > 0.0)) throw InvalidArgument("initial step size must be positive");
  if (!(l2 >= 0.0)) throw InvalidArgument("L2 strength must be non-negative");
  if (!(decay_horizon >= 0.0)) throw InvalidArgument("decay horizon must be non-negative");
}

std::vector<double> linear_scores(std::span<const FeatureVector> candidates, const WeightVector& weights) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(c.dot(weights.values()));
  return out;
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("empty candidate list");
  const double max = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - max);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> conditional_prob(std::span<const FeatureVector> candidates, const WeightVector& weights) {
  return softmax(linear_scores(candidates, weights));
}

double conditional_log_likelihood(std::span<const TrainingExample> examples, const WeightVector& weights, double l2) {
  double total = 0.0;
  for (const auto& ex : examples) {
    const auto scores = linear_scores(ex.candidates, weights);
    const double max = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - max);
    total += scores[ex.gold] - max - std::log(z);
  }
  double norm = 0.0;
  for (double w : weights.values()) norm += w * w;
  return total - 0.5 * l2 * norm;
}

namespace {

// grad += phi(gold) - E_p[phi]
void accumulate_expectation_gap(const TrainingExample& ex, const WeightVector& weights, std::span<double> grad) {
  const auto p = conditional_prob(ex.candidates, weights);
  for (const auto& [id, v] : ex.candidates[ex.gold].entries) grad[id] += v;
  for (std::size_t c = 0; c < ex.candidates.size(); ++c) {
    for (const auto& [id, v] : ex.candidates[c].entries) grad[id] -= p[c] * v;
  }
}

void check_dimensions(const TrainingExample& ex, std::size_t dim) {
  if (ex.candidates.empty()) throw InvalidArgument("training example with an empty pool");
  if (ex.gold >= ex.candidates.size()) throw InvalidArgument("gold index outside the pool");
  for (const auto& c : ex.candidates) {
    if (!c.entries.empty() && c.entries.back().first >= dim) {
      throw InvalidArgument("feature id beyond weight dimension (featurizer/index mismatch)");
    }
  }
}

}  // namespace

std::vector<double> conditional_log_likelihood_gradient(std::span<const TrainingExample> examples,
                                                        const WeightVector& weights, double l2) {
  std::vector<double> grad(weights.size(), 0.0);
  for (const auto& ex : examples) {
    check_dimensions(ex, weights.size());
    accumulate_expectation_gap(ex, weights, grad);
  }
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] -= l2 * weights[i];
  return grad;
}

WeightVector train_weights(std::span<const TrainingExample> examples, WeightVector initial,
                           const RerankTrainConfig& config,
                           const std::function<double(const WeightVector&)>& dev_score, RerankTrainLog* log) {
  config.validate();
  for (const auto& ex : examples) check_dimensions(ex, initial.size());

  WeightVector weights = std::move(initial);
  WeightVector best = weights;
  double best_score = -std::numeric_limits<double>::infinity();
  RerankTrainLog local;
  if (dev_score) {
    best_score = dev_score(weights);
    local.dev_mrr.push_back(best_score);
  }

  const double horizon =
      config.decay_horizon > 0.0 ? config.decay_horizon : static_cast<double>(std::max<std::size_t>(examples.size(), 1));
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(config.seed);
  std::size_t t = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (std::size_t n : order) {
      const TrainingExample& ex = examples[n];
      const double eta = config.eta0 / (1.0 + static_cast<double>(t) / horizon);
      ++t;
      // Ascent on the conditional log-likelihood: theta += eta * (gap - l2 * theta).
      if (config.l2 > 0.0) {
        const double shrink = 1.0 - eta * config.l2;
        for (double& w : weights.values()) w *= shrink;
      }
      const auto p = conditional_prob(ex.candidates, weights);
      for (const auto& [id, v] : ex.candidates[ex.gold].entries) weights[id] += eta * v;
      for (std::size_t c = 0; c < ex.candidates.size(); ++c) {
        if (p[c] == 0.0) continue;
        for (const auto& [id, v] : ex.candidates[c].entries) weights[id] -= eta * p[c] * v;
      }
    }
    if (!weights.all_finite()) throw Error("reranker weights diverged in epoch " + std::to_string(epoch));
    if (dev_score) {
      const double score = dev_score(weights);
      local.dev_mrr.push_back(score);
      if (score > best_score) {
        best_score = score;
        best = weights;
        local.best_epoch = epoch;
      }
    }
  }
  if (log) *log = std::move(local);
  return dev_score ? best : weights;
}

// ---------------------------------------------------------------------------
// Inventory-level helpers

void RerankContext::validate() const {
  if (!inventory || !param_descs || !featurizer) throw InvalidArgument("incomplete rerank context");
  if (param_descs->size() != inventory->size()) {
    throw InvalidArgument("parameter descriptions do not match the inventory");
  }
}

namespace {

std::vector<FeatureVector> featurize_pool(const TextSequence& x, std::span<const std::size_t> candidates,
                                          const FeatureIndex& index, const RerankContext& ctx) {
  const auto prepared = ctx.featurizer->prepare(x);
  std::vector<FeatureVector> out;
  out.reserve(candidates.size());
  for (std::size_t c : candidates) {
    if (c >= ctx.inventory->size()) throw InvalidArgument("candidate outside the inventory");
    out.push_back(ctx.featurizer->extract(prepared, (*ctx.inventory)[c], (*ctx.param_descs)[c], index));
  }
  return out;
}

void check_weights(const WeightVector& weights, const FeatureIndex& index) {
  if (weights.size() != index.size()) {
    throw InvalidArgument("weight dimension " + std::to_string(weights.size()) + " does not match feature index size " +
                          std::to_string(index.size()));
  }
}

std::vector<Candidate> order_by_score(std::span<const std::size_t> indices, std::span<const double> scores) {
  std::vector<Candidate> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = {indices[i], scores[i]};
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  });
  return out;
}

}  // namespace

std::vector<double> conditional_prob(const TextSequence& x, std::span<const std::size_t> candidates,
                                     const WeightVector& weights, const FeatureIndex& index,
                                     const RerankContext& context) {
  context.validate();
  check_weights(weights, index);
  if (candidates.empty()) throw InvalidArgument("empty candidate list");
  return conditional_prob(featurize_pool(x, candidates, index, context), weights);
}

std::vector<Candidate> rerank(const TextSequence& x, std::span<const Candidate> pool, const WeightVector& weights,
                              const FeatureIndex& index, const RerankContext& context, std::size_t k) {
  context.validate();
  check_weights(weights, index);
  if (pool.empty()) throw InvalidArgument("empty candidate pool");
  if (k == 0) throw InvalidArgument("k must be at least 1");
  std::vector<std::size_t> indices;
  indices.reserve(pool.size());
  for (const auto& c : pool) indices.push_back(c.index);
  const auto vectors = featurize_pool(x, indices, index, context);
  auto ranked = order_by_score(indices, linear_scores(vectors, weights));
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

std::vector<Candidate> rerank_prefix(const TextSequence& x, std::span<const Candidate> translation_ranking,
                                     std::size_t pool_size, const WeightVector& weights, const FeatureIndex& index,
                                     const RerankContext& context) {
  const std::size_t head = std::min(pool_size, translation_ranking.size());
  auto out = rerank(x, translation_ranking.first(head), weights, index, context, head);
  out.insert(out.end(), translation_ranking.begin() + static_cast<std::ptrdiff_t>(head), translation_ranking.end());
  return out;
}

WeightVector initial_weights(const FeatureIndex& index, InitialWeights init) {
  WeightVector w(index.size());
  if (init == InitialWeights::kTranslation) {
    if (auto id = index.find(std::string(kTranslationFeature))) w[*id] = 1.0;
  }
  return w;
}

std::vector<TrainingExample> build_training_pools(const Corpus& train, const RerankContext& context,
                                                  std::size_t pool_size, FeatureIndex& index) {
  context.validate();
  const LexTable* table = context.featurizer->context().translation;
  if (!table) throw InvalidArgument("reranker training needs a translation table in the featurizer context");

  std::vector<TrainingExample> examples;
  examples.reserve(train.pairs.size());
  for (const Pair& p : train.pairs) {
    auto gold = context.inventory->find(p.component);
    if (!gold) throw InvalidArgument("gold component " + p.component.signature() + " missing from inventory");
    const auto ranked =
        rank_components(p.text, *context.inventory, *table, pool_size, context.featurizer->context().score_options);
    std::vector<std::size_t> pool;
    pool.reserve(ranked.size() + 1);
    for (const auto& c : ranked) pool.push_back(c.index);
    auto at = std::find(pool.begin(), pool.end(), *gold);
    if (at == pool.end()) at = pool.insert(pool.end(), *gold);

    TrainingExample ex;
    ex.gold = static_cast<std::size_t>(at - pool.begin());
    const auto prepared = context.featurizer->prepare(p.text);
    for (std::size_t c : pool) {
      ex.candidates.push_back(context.featurizer->extract(prepared, (*context.inventory)[c], (*context.param_descs)[c], index));
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

WeightVector train_reranker_weights(std::span<const TrainingExample> pools, const FeatureIndex& index,
                                    const Corpus& dev, const RerankContext& context,
                                    const RerankTrainConfig& config, RerankTrainLog* log) {
  config.validate();
  context.validate();
  if (pools.empty() || dev.pairs.empty()) throw InvalidArgument("reranker training needs non-empty train and dev sets");
  if (!index.frozen()) throw InvalidArgument("feature index must be frozen before training");
  const LexTable* table = context.featurizer->context().translation;
  if (!table) throw InvalidArgument("reranker training needs a translation table in the featurizer context");

  // Dev pools are featurized once; each epoch only re-scores them.
  struct DevQuery {
    std::vector<Candidate> pool;
    std::vector<FeatureVector> vectors;
    std::optional<std::size_t> gold_in_pool;
    std::optional<std::size_t> translation_rank;  // 1-based, over the full inventory
  };
  std::vector<DevQuery> dev_queries;
  dev_queries.reserve(dev.pairs.size());
  for (const Pair& p : dev.pairs) {
    DevQuery q;
    const auto gold = context.inventory->find(p.component);
    const auto full = rank_components(p.text, *context.inventory, *table, context.inventory->size(),
                                      context.featurizer->context().score_options);
    for (std::size_t r = 0; r < full.size(); ++r) {
      if (gold && full[r].index == *gold) q.translation_rank = r + 1;
    }
    const std::size_t head = std::min(config.pool_size, full.size());
    q.pool.assign(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(head));
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < q.pool.size(); ++i) {
      indices.push_back(q.pool[i].index);
      if (gold && q.pool[i].index == *gold) q.gold_in_pool = i;
    }
    q.vectors = featurize_pool(p.text, indices, index, context);
    dev_queries.push_back(std::move(q));
  }

  auto dev_mrr = [&dev_queries](const WeightVector& w) {
    double total = 0.0;
    for (const auto& q : dev_queries) {
      if (q.gold_in_pool) {
        const auto scores = linear_scores(q.vectors, w);
        const std::size_t g = *q.gold_in_pool;
        std::size_t rank = 1;
        for (std::size_t c = 0; c < scores.size(); ++c) {
          if (c == g) continue;
          if (scores[c] > scores[g] || (scores[c] == scores[g] && q.pool[c].index < q.pool[g].index)) ++rank;
        }
        total += 1.0 / static_cast<double>(rank);
      } else if (q.translation_rank) {
        total += 1.0 / static_cast<double>(*q.translation_rank);
      }
    }
    return total / static_cast<double>(dev_queries.size());
  };

  return train_weights(pools, initial_weights(index, config.init), config, dev_mrr, log);
}

RerankerModel train_reranker(const Corpus& train, const Corpus& dev, const RerankContext& context,
                             const RerankTrainConfig& config, RerankTrainLog* log) {
  config.validate();
  context.validate();
  if (train.pairs.empty() || dev.pairs.empty()) throw InvalidArgument("reranker training needs non-empty train and dev sets");
  RerankerModel model;
  const auto examples = build_training_pools(train, context, config.pool_size, model.index);
  model.index.freeze();
  model.weights = train_reranker_weights(examples, model.index, dev, context, config, log);
  return model;
}

}  // namespace fassist

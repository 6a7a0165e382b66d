#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fassist/error.hpp"
#include "fassist/model.hpp"
#include "fassist/reranker.hpp"
#include "test_support.hpp"

namespace fassist {
namespace {

FeatureVector fv(std::vector<std::pair<std::uint32_t, double>> e) { return FeatureVector{std::move(e)}; }

TEST(Softmax, ZeroWeightsUniform) {
  const std::vector<FeatureVector> c = {fv({{1, 1.0}}), fv({{2, 3.0}}), fv({}), fv({{1, 2.0}})};
  for (double p : conditional_prob(c, WeightVector(3))) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Softmax, ShiftInvariant) {
  const std::vector<double> s = {1.0, -2.0, 0.5};
  std::vector<double> shifted = s;
  for (double& v : shifted) v += 1000.0;
  EXPECT_EQ(softmax(s), softmax(shifted));
  double total = 0.0;
  for (double p : softmax(shifted)) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Softmax, SingleFeatureHandArithmetic) {
  WeightVector w(2);
  w[1] = 2.0;
  const auto p = conditional_prob(std::vector<FeatureVector>{fv({{1, 1.0}}), fv({})}, w);
  EXPECT_NEAR(p[0], std::exp(2.0) / (std::exp(2.0) + 1.0), 1e-15);
  EXPECT_NEAR(p[0], 0.8808, 1e-4);
}

TEST(Softmax, EmptyPoolIsAnError) { EXPECT_THROW(softmax(std::vector<double>{}), InvalidArgument); }

// Direct dense recomputation of the objective for the finite-difference oracle.
double dense_objective(const std::vector<TrainingExample>& ex, const std::vector<double>& w, double l2) {
  double total = 0.0;
  for (const auto& e : ex) {
    std::vector<double> s;
    for (const auto& c : e.candidates) {
      double v = 0.0;
      for (const auto& [id, x] : c.entries) v += w[id] * x;
      s.push_back(v);
    }
    double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - mx);
    total += s[e.gold] - mx - std::log(z);
  }
  double norm = 0.0;
  for (double v : w) norm += v * v;
  return total - 0.5 * l2 * norm;
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t dim = 8;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TrainingExample> ex(3);
    for (auto& e : ex) {
      for (int c = 0; c < 5; ++c) {
        FeatureVector v;
        for (std::uint32_t id = 0; id < dim; ++id) {
          if (gen() % 2) v.entries.emplace_back(id, u(gen));
        }
        e.candidates.push_back(v);
      }
      e.gold = gen() % 5;
    }
    WeightVector w(dim);
    for (std::size_t i = 0; i < dim; ++i) w[i] = u(gen);
    const double l2 = 0.1;
    const auto g = conditional_log_likelihood_gradient(ex, w, l2);
    const std::vector<double> base(w.values().begin(), w.values().end());
    EXPECT_NEAR(conditional_log_likelihood(ex, w, l2), dense_objective(ex, base, l2), 1e-12);
    for (std::size_t i = 0; i < dim; ++i) {
      auto plus = base, minus = base;
      plus[i] += 1e-5;
      minus[i] -= 1e-5;
      const double fd = (dense_objective(ex, plus, l2) - dense_objective(ex, minus, l2)) / 2e-5;
      const double rel = std::abs(fd - g[i]) / std::max(1e-8, std::max(std::abs(fd), std::abs(g[i])));
      EXPECT_LT(rel, 1e-4) << "coordinate " << i;
    }
  }
}

RerankTrainConfig zero_init() {
  RerankTrainConfig c;
  c.init = InitialWeights::kZero;
  return c;
}

TEST(TrainWeights, ZeroEpochsReturnsInitial) {
  auto cfg = zero_init();
  cfg.epochs = 0;
  const std::vector<TrainingExample> ex = {{{fv({{1, 1.0}}), fv({})}, 0}};
  EXPECT_EQ(train_weights(ex, WeightVector(2), cfg), WeightVector(2));
}

TEST(TrainWeights, GoldOnlyPoolLeavesZeroWithoutL2) {
  auto cfg = zero_init();
  cfg.l2 = 0.0;
  const std::vector<TrainingExample> ex = {{{fv({{1, 1.0}, {2, -3.0}})}, 0}, {{fv({{2, 0.5}})}, 0}};
  EXPECT_EQ(train_weights(ex, WeightVector(3), cfg), WeightVector(3));
}

TEST(TrainWeights, GoldOnlyPoolShrinksWithL2) {
  auto cfg = zero_init();
  cfg.l2 = 0.5;
  cfg.epochs = 1;
  WeightVector w(2);
  w[1] = 1.0;
  const std::vector<TrainingExample> ex = {{{fv({{1, 1.0}})}, 0}};
  const auto out = train_weights(ex, w, cfg);
  EXPECT_NEAR(out[1], 1.0 - cfg.eta0 * cfg.l2, 1e-15);
}

std::vector<TrainingExample> separable(std::size_t n) {
  // Feature 1 fires only on the gold candidate; feature 2 is noise on both.
  std::vector<TrainingExample> ex;
  for (std::size_t i = 0; i < n; ++i) {
    const bool first = i % 2 == 0;
    TrainingExample e;
    e.candidates = {fv({{1, first ? 1.0 : 0.0}, {2, 1.0}}), fv({{1, first ? 0.0 : 1.0}, {2, 1.0}})};
    for (auto& c : e.candidates) {
      std::erase_if(c.entries, [](const auto& kv) { return kv.second == 0.0; });
    }
    e.gold = first ? 0 : 1;
    ex.push_back(e);
  }
  return ex;
}

TEST(TrainWeights, SeparableFixture) {
  const auto ex = separable(10);
  const auto w = train_weights(ex, WeightVector(3), zero_init());
  EXPECT_GT(w[1], 0.0);
  for (const auto& e : ex) {
    const auto s = linear_scores(e.candidates, w);
    EXPECT_GT(s[e.gold], s[1 - e.gold]);
  }
}

TEST(TrainWeights, DeterministicForSeed) {
  const auto ex = separable(9);
  EXPECT_EQ(train_weights(ex, WeightVector(3), zero_init()), train_weights(ex, WeightVector(3), zero_init()));
}

TEST(TrainWeights, BestDevEpochSelection) {
  const auto ex = separable(6);
  int calls = 0;
  RerankTrainLog log;
  auto cfg = zero_init();
  cfg.epochs = 4;
  // Dev score peaks after epoch 2.
  const auto w = train_weights(ex, WeightVector(3), cfg, [&](const WeightVector&) {
    const double s[] = {0.1, 0.3, 0.9, 0.5, 0.9};
    return s[calls++];
  }, &log);
  EXPECT_EQ(log.dev_mrr.size(), 5u);
  EXPECT_EQ(log.best_epoch, 2u);
  auto cfg2 = cfg;
  cfg2.epochs = 2;
  EXPECT_EQ(w, train_weights(ex, WeightVector(3), cfg2));
}

TEST(TrainWeights, InitialWeightsKeptWhenNeverBeaten) {
  RerankTrainLog log;
  WeightVector init(3);
  init[2] = 0.7;
  const auto w = train_weights(separable(4), init, zero_init(), [](const WeightVector&) { return 0.5; }, &log);
  EXPECT_EQ(log.best_epoch, 0u);
  EXPECT_EQ(w, init);
}

TEST(RerankConfig, Validation) {
  RerankTrainConfig c;
  c.pool_size = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.eta0 = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.l2 = -1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(TrainWeights, DimensionMismatchIsAnError) {
  const std::vector<TrainingExample> ex = {{{fv({{5, 1.0}}), fv({})}, 0}};
  EXPECT_THROW(train_weights(ex, WeightVector(2), zero_init()), InvalidArgument);
}

struct Figure1Rerank : ::testing::Test {
  void SetUp() override {
    corpus = testing::figure1_corpus();
    model = init_model(corpus);
    train_translation(model, corpus, 10);
    build_phrases(model, corpus, 3);
    featurizer.emplace(model.featurizer());
    ctx = model.rerank_context(*featurizer);
    for (const auto& p : corpus.pairs) {
      for (std::size_t i = 0; i < model.inventory.size(); ++i) {
        featurizer->extract(featurizer->prepare(p.text), model.inventory[i], model.param_descs[i], index);
      }
    }
    index.freeze();
  }
  Corpus corpus;
  Model model;
  std::optional<Featurizer> featurizer;
  RerankContext ctx;
  FeatureIndex index;
};

TEST_F(Figure1Rerank, UnitTranslationWeightReproducesTranslationOrder) {
  const auto w = initial_weights(index, InitialWeights::kTranslation);
  for (const auto& p : corpus.pairs) {
    const auto pool = model.rank_translation(p.text, model.inventory.size());
    const auto r = rerank(p.text, pool, w, index, ctx, pool.size());
    ASSERT_EQ(r.size(), pool.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(r[i].index, pool[i].index);
      EXPECT_NEAR(r[i].score, pool[i].score / static_cast<double>(p.text.size()), 1e-9);
    }
  }
}

TEST_F(Figure1Rerank, ZeroWeightsFallBackToInventoryOrder) {
  const auto x = testing::words("adds an arc");
  const auto pool = model.rank_translation(x, 6);
  const auto r = rerank(x, pool, WeightVector(index.size()), index, ctx, 6);
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_LT(r[i - 1].index, r[i].index);
}

TEST_F(Figure1Rerank, NeverIntroducesComponentsAndTruncates) {
  const auto x = testing::words("removes the node");
  const auto pool = model.rank_translation(x, 4);
  WeightVector w(index.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(static_cast<double>(i));
  const auto r = rerank(x, pool, w, index, ctx, 3);
  ASSERT_EQ(r.size(), 3u);
  for (const auto& c : r) {
    EXPECT_TRUE(std::any_of(pool.begin(), pool.end(), [&](const Candidate& p) { return p.index == c.index; }));
  }
  for (std::size_t i = 1; i < r.size(); ++i) EXPECT_GE(r[i - 1].score, r[i].score);
}

TEST_F(Figure1Rerank, PrefixRerankKeepsTranslationTail) {
  const auto x = testing::words("removes the node");
  const auto full = model.rank_translation(x, model.inventory.size());
  const auto r = rerank_prefix(x, full, 3, WeightVector(index.size()), index, ctx);
  ASSERT_EQ(r.size(), full.size());
  for (std::size_t i = 3; i < r.size(); ++i) EXPECT_EQ(r[i], full[i]);
}

TEST_F(Figure1Rerank, WeightIndexMismatchIsAnError) {
  const auto x = testing::words("removes the node");
  const auto pool = model.rank_translation(x, 3);
  EXPECT_THROW(rerank(x, pool, WeightVector(index.size() + 1), index, ctx, 3), InvalidArgument);
}

TEST_F(Figure1Rerank, SeparableMoveGoldFromSecondToFirst) {
  // Two candidates where the gold (second by translation) carries a feature the
  // other lacks; training on that example lifts the gold to rank 1.
  const auto x = testing::words("adds an arc from the node");
  const auto pool = model.rank_translation(x, 2);
  const std::size_t gold = pool[1].index;
  const auto prepared = featurizer->prepare(x);
  TrainingExample ex;
  for (const auto& c : pool) ex.candidates.push_back(featurizer->extract(prepared, model.inventory[c.index], model.param_descs[c.index], index));
  ex.gold = 1;
  const std::vector<TrainingExample> examples(5, ex);
  const auto w = train_weights(examples, initial_weights(index, InitialWeights::kTranslation), RerankTrainConfig{});
  const auto r = rerank(x, pool, w, index, ctx, 2);
  EXPECT_EQ(r[0].index, gold);
}

TEST_F(Figure1Rerank, ConditionalProbOverInventory) {
  const std::vector<std::size_t> cands = {0, 1, 2};
  const auto p = conditional_prob(testing::words("adds an arc"), cands, WeightVector(index.size()), index, ctx);
  for (double v : p) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  EXPECT_THROW(conditional_prob(testing::words("adds"), std::vector<std::size_t>{}, WeightVector(index.size()), index, ctx),
               InvalidArgument);
}

TEST_F(Figure1Rerank, TrainingPoolsInjectGold) {
  FeatureIndex idx;
  const auto pools = build_training_pools(corpus, ctx, 2, idx);
  ASSERT_EQ(pools.size(), corpus.pairs.size());
  for (const auto& ex : pools) {
    EXPECT_GE(ex.candidates.size(), 2u);
    EXPECT_LE(ex.candidates.size(), 3u);
    EXPECT_LT(ex.gold, ex.candidates.size());
  }
}

}  // namespace
}  // namespace fassist

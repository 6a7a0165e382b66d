#include <benchmark/benchmark.h>

#include "fassist/corpus.hpp"
#include "fassist/features.hpp"
#include "fassist/model.hpp"
#include "fassist/translation.hpp"

namespace {

const fassist::Corpus& corpus() {
  static const fassist::Corpus c =
      fassist::load_corpus(FASSIST_DATA_DIR "/nltk/corpus.jsonl", FASSIST_DATA_DIR "/nltk/hierarchy.jsonl");
  return c;
}

const fassist::Model& model() {
  static const fassist::Model m = [] {
    const auto splits = fassist::split_corpus(corpus(), {});
    fassist::Model out = fassist::init_model(corpus());
    fassist::train_translation(out, splits.train, 10);
    fassist::build_phrases(out, splits.train, 3);
    return out;
  }();
  return m;
}

void BM_Model1Training(benchmark::State& state) {
  const auto splits = fassist::split_corpus(corpus(), {});
  fassist::Model1Options opts;
  opts.iterations = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto r = fassist::train_model1(splits.train, fassist::Direction::kTextGivenComponent, opts);
    benchmark::DoNotOptimize(r.table.num_entries());
  }
}
BENCHMARK(BM_Model1Training)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_RankFullInventory(benchmark::State& state) {
  const auto& m = model();
  const auto x = fassist::tokenize_text("train a hidden markov model tagger");
  for (auto _ : state) {
    auto r = m.rank_translation(x, m.inventory.size());
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(m.inventory.size()));
}
BENCHMARK(BM_RankFullInventory)->Unit(benchmark::kMicrosecond);

void BM_FeaturizePool(benchmark::State& state) {
  const auto& m = model();
  const auto f = m.featurizer();
  const auto x = fassist::tokenize_text("add an arc from the head to the dependent");
  const auto pool = m.rank_translation(x, 100);
  fassist::FeatureIndex index;
  for (auto _ : state) {
    const auto prepared = f.prepare(x);
    for (const auto& c : pool) {
      auto v = f.extract(prepared, m.inventory[c.index], m.param_descs[c.index], index);
      benchmark::DoNotOptimize(v.entries.data());
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(pool.size()));
}
BENCHMARK(BM_FeaturizePool)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();

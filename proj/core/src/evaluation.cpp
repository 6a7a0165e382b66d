#include "fassist/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "fassist/error.hpp"

namespace fassist {

double EvalResult::acc_at(std::size_t k) const {
  if (gold_ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : gold_ranks) hits += (r && *r <= k) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gold_ranks.size());
}

bool exact_match(const Component& candidate, const Component& gold) {
  return candidate.linearized() == gold.linearized();
}

EvalResult compute_metrics(std::span<const std::optional<std::size_t>> gold_ranks) {
  EvalResult r;
  r.gold_ranks.assign(gold_ranks.begin(), gold_ranks.end());
  if (gold_ranks.empty()) return r;
  std::size_t at1 = 0;
  std::size_t at10 = 0;
  double rr = 0.0;
  for (const auto& rank : gold_ranks) {
    if (!rank) continue;
    if (*rank == 0) throw InvalidArgument("gold ranks are 1-based");
    at1 += *rank <= 1 ? 1 : 0;
    at10 += *rank <= 10 ? 1 : 0;
    rr += 1.0 / static_cast<double>(*rank);
  }
  const double n = static_cast<double>(gold_ranks.size());
  r.acc_at_1 = static_cast<double>(at1) / n;
  r.acc_at_10 = static_cast<double>(at10) / n;
  r.mrr = rr / n;
  return r;
}

EvalResult compute_metrics(const std::vector<std::vector<Component>>& rankings, const std::vector<Component>& golds) {
  if (rankings.size() != golds.size()) {
    throw InvalidArgument("compute_metrics: " + std::to_string(rankings.size()) + " rankings for " +
                          std::to_string(golds.size()) + " gold components");
  }
  std::vector<std::optional<std::size_t>> ranks(golds.size());
  for (std::size_t q = 0; q < golds.size(); ++q) {
    for (std::size_t r = 0; r < rankings[q].size(); ++r) {
      if (exact_match(rankings[q][r], golds[q])) {
        ranks[q] = r + 1;
        break;
      }
    }
  }
  return compute_metrics(ranks);
}

std::optional<std::size_t> gold_rank(std::span<const Candidate> ranking, std::size_t gold) {
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (ranking[r].index == gold) return r + 1;
  }
  return std::nullopt;
}

std::vector<Candidate> term_match_rank(const TextSequence& x, const ComponentInventory& inventory) {
  std::vector<double> scores(inventory.size(), 0.0);
  for (std::size_t i = 0; i < inventory.size(); ++i) {
    const auto& terms = inventory[i].linearized();
    const std::unordered_set<std::string> set(terms.begin(), terms.end());
    double s = 0.0;
    for (const auto& w : x) s += set.count(w) ? 1.0 : 0.0;
    scores[i] = s;
  }
  return top_k(scores, scores.size());
}

// ---------------------------------------------------------------------------
// BoW baseline

namespace {

const Featurizer& bow_featurizer() {
  static const Featurizer f(FeatureContext{}, FeatureSet::kWordPairs);
  return f;
}

const ParamDescs kNoParams;

/// Gold first, then up to `negatives` distinct non-gold indices drawn
/// uniformly without replacement.
std::vector<std::size_t> sample_pool(std::size_t gold, std::size_t inventory_size, std::size_t negatives, Rng& rng) {
  std::vector<std::size_t> others;
  others.reserve(inventory_size - 1);
  for (std::size_t i = 0; i < inventory_size; ++i) {
    if (i != gold) others.push_back(i);
  }
  const std::size_t take = std::min(negatives, others.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(others.size() - i));
    std::swap(others[i], others[j]);
  }
  std::vector<std::size_t> pool{gold};
  pool.insert(pool.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(take));
  return pool;
}

}  // namespace

BowModel train_bow(const Corpus& train, const Corpus& dev, const ComponentInventory& inventory,
                   const RerankTrainConfig& config, RerankTrainLog* log) {
  config.validate();
  if (inventory.size() < 2) throw InvalidArgument("BoW training needs at least two inventory components");
  const Featurizer& f = bow_featurizer();
  const std::size_t negatives = config.pool_size - 1;
  Rng rng(config.seed ^ 0x626f77ULL);

  BowModel bow;
  std::vector<TrainingExample> examples;
  for (const Pair& p : train.pairs) {
    const auto gold = inventory.find(p.component);
    if (!gold) continue;
    const auto prepared = f.prepare(p.text);
    TrainingExample ex;
    for (std::size_t idx : sample_pool(*gold, inventory.size(), negatives, rng)) {
      ex.candidates.push_back(f.extract(prepared, inventory[idx], kNoParams, bow.index));
    }
    ex.gold = 0;
    examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw InvalidArgument("BoW training set has no pairs in the inventory");
  bow.index.freeze();

  struct DevPool {
    std::vector<std::size_t> indices;
    std::vector<FeatureVector> vectors;
  };
  std::vector<DevPool> dev_pools;
  for (const Pair& p : dev.pairs) {
    const auto gold = inventory.find(p.component);
    if (!gold) continue;
    const auto prepared = f.prepare(p.text);
    DevPool d;
    d.indices = sample_pool(*gold, inventory.size(), negatives, rng);
    for (std::size_t idx : d.indices) d.vectors.push_back(f.extract(prepared, inventory[idx], kNoParams, bow.index));
    dev_pools.push_back(std::move(d));
  }

  std::function<double(const WeightVector&)> dev_score;
  if (!dev_pools.empty()) {
    dev_score = [&dev_pools](const WeightVector& w) {
      double total = 0.0;
      for (const auto& d : dev_pools) {
        const auto scores = linear_scores(d.vectors, w);
        std::size_t rank = 1;
        for (std::size_t c = 1; c < scores.size(); ++c) {
          if (scores[c] > scores[0] || (scores[c] == scores[0] && d.indices[c] < d.indices[0])) ++rank;
        }
        total += 1.0 / static_cast<double>(rank);
      }
      return total / static_cast<double>(dev_pools.size());
    };
  }
  bow.weights = train_weights(examples, initial_weights(bow.index, config.init), config, dev_score, log);
  return bow;
}

std::vector<Candidate> bow_rank(const TextSequence& x, const ComponentInventory& inventory, const BowModel& bow) {
  if (bow.weights.size() != bow.index.size()) throw InvalidArgument("BoW weights do not match its feature index");
  const Featurizer& f = bow_featurizer();
  const auto prepared = f.prepare(x);
  std::vector<double> scores(inventory.size());
  for (std::size_t i = 0; i < inventory.size(); ++i) {
    const FeatureIndex& index = bow.index;
    scores[i] = f.extract(prepared, inventory[i], kNoParams, index).dot(bow.weights.values());
  }
  return top_k(scores, scores.size());
}

// ---------------------------------------------------------------------------
// Experiments

std::string_view system_name(System system) noexcept {
  switch (system) {
    case System::kBow: return "BoW";
    case System::kTermMatch: return "Term Match";
    case System::kTranslation: return "Translation";
    case System::kReranker: return "Reranker";
  }
  return "?";
}

std::optional<System> parse_system(std::string_view name) {
  if (name == "BoW" || name == "bow") return System::kBow;
  if (name == "Term Match" || name == "term_match") return System::kTermMatch;
  if (name == "Translation" || name == "translation") return System::kTranslation;
  if (name == "Reranker" || name == "reranker") return System::kReranker;
  return std::nullopt;
}

const SystemResult* ExperimentReport::find(System system) const {
  for (const auto& row : rows) {
    if (row.system == system) return &row;
  }
  return nullptr;
}

namespace {

EvalResult evaluate_split(System system, const SystemModels& models, const Corpus& split) {
  const Model& m = *models.model;
  std::vector<std::optional<std::size_t>> ranks;
  ranks.reserve(split.pairs.size());
  for (const Pair& p : split.pairs) {
    const auto gold = m.inventory.find(p.component);
    if (!gold) {
      ranks.emplace_back();
      continue;
    }
    std::vector<Candidate> ranking;
    switch (system) {
      case System::kBow: ranking = bow_rank(p.text, m.inventory, *models.bow); break;
      case System::kTermMatch: ranking = term_match_rank(p.text, m.inventory); break;
      case System::kTranslation: ranking = m.rank_translation(p.text, m.inventory.size()); break;
      case System::kReranker: ranking = m.rank(p.text); break;
    }
    ranks.push_back(gold_rank(ranking, *gold));
  }
  return compute_metrics(ranks);
}

}  // namespace

ExperimentReport evaluate_systems(const SystemModels& models, const CorpusSplits& splits,
                                  const std::set<System>& systems) {
  if (!models.model) throw InvalidArgument("evaluation needs a model");
  const Model& m = *models.model;
  ExperimentReport report;
  report.project = m.project;
  report.train_pairs = splits.train.pairs.size();
  report.dev_pairs = splits.dev.pairs.size();
  report.test_pairs = splits.test.pairs.size();
  report.inventory_size = m.inventory.size();
  for (System s : systems) {  // std::set iterates in enum (= report) order
    if (s == System::kBow && !models.bow) throw InvalidArgument("BoW requested but no BoW model was trained");
    if (s == System::kReranker && !m.has_reranker()) {
      throw InvalidArgument("Reranker requested but the model has no trained reranker");
    }
    report.rows.push_back({s, evaluate_split(s, models, splits.dev), evaluate_split(s, models, splits.test)});
  }
  return report;
}

ExperimentReport run_experiment(const Corpus& corpus, const SplitSpec& spec, const std::set<System>& systems,
                                const TrainingSettings& settings) {
  const CorpusSplits splits = split_corpus(corpus, spec);
  const bool need_reranker = systems.count(System::kReranker) != 0;
  const Model model = train_model(corpus, splits, settings, !need_reranker);
  std::optional<BowModel> bow;
  if (systems.count(System::kBow)) bow = train_bow(splits.train, splits.dev, model.inventory, settings.bow);
  ExperimentReport report = evaluate_systems({&model, bow ? &*bow : nullptr}, splits, systems);
  report.seed = spec.seed;
  return report;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

nlohmann::json metrics_json(const EvalResult& r) {
  nlohmann::json ranks = nlohmann::json::array();
  for (const auto& g : r.gold_ranks) ranks.push_back(g ? nlohmann::json(*g) : nlohmann::json(nullptr));
  return {{"acc_at_1", r.acc_at_1}, {"acc_at_10", r.acc_at_10}, {"mrr", r.mrr}, {"queries", r.queries()},
          {"gold_ranks", std::move(ranks)}};
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

}  // namespace

std::string report_json(const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"system", system_name(row.system)}, {"dev", metrics_json(row.dev)}, {"test", metrics_json(row.test)}});
  }
  nlohmann::json doc = {{"project", report.project},
                        {"seed", report.seed},
                        {"splits", {{"train", report.train_pairs}, {"dev", report.dev_pairs}, {"test", report.test_pairs}}},
                        {"inventory_size", report.inventory_size},
                        {"systems", std::move(rows)}};
  return doc.dump(2) + "\n";
}

std::string report_table(const ExperimentReport& report) {
  std::vector<std::vector<std::string>> cells = {{"System", "Split", "Acc@1", "Acc@10", "MRR", "Queries"}};
  for (const auto& row : report.rows) {
    for (const auto& [split, r] : {std::pair<const char*, const EvalResult*>{"dev", &row.dev}, {"test", &row.test}}) {
      cells.push_back({std::string(system_name(row.system)), split, pct(r->acc_at_1), pct(r->acc_at_10), pct(r->mrr),
                       std::to_string(r->queries())});
    }
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  out << "project: " << report.project << "  seed: " << report.seed << "  train/dev/test: " << report.train_pairs
      << "/" << report.dev_pairs << "/" << report.test_pairs << "  inventory: " << report.inventory_size << "\n";
  for (std::size_t l = 0; l < cells.size(); ++l) {
    for (std::size_t c = 0; c < cells[l].size(); ++c) {
      const auto& s = cells[l][c];
      const std::string pad(width[c] - s.size(), ' ');
      if (c < 2) out << s << pad;
      else out << pad << s;
      out << (c + 1 < cells[l].size() ? "  " : "\n");
    }
    if (l == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out << std::string(total - 2, '-') << "\n";
    }
  }
  return out.str();
}

}  // namespace fassist

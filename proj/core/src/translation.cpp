#include "fassist/translation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "fassist/error.hpp"

namespace fassist {

std::string_view direction_name(Direction d) noexcept {
  return d == Direction::kTextGivenComponent ? "text_given_component" : "component_given_text";
}

std::optional<Direction> parse_direction(std::string_view name) noexcept {
  if (name == "text_given_component") return Direction::kTextGivenComponent;
  if (name == "component_given_text") return Direction::kComponentGivenText;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// LexTable

LexTable::LexTable(Direction direction, std::vector<std::string> given_vocab,
                   std::vector<std::string> emitted_vocab, std::vector<Row> rows, bool has_null)
    : direction_(direction),
      has_null_(has_null),
      given_vocab_(std::move(given_vocab)),
      emitted_vocab_(std::move(emitted_vocab)),
      rows_(std::move(rows)) {
  if (rows_.size() != given_vocab_.size()) throw FormatError("lexical table: row count does not match vocabulary");
  if (has_null_ && (given_vocab_.empty() || given_vocab_[0] != kNullTerm)) {
    throw FormatError("lexical table: NULL must be conditioning term 0");
  }
  for (std::uint32_t i = 0; i < given_vocab_.size(); ++i) {
    if (!given_ids_.emplace(given_vocab_[i], i).second) throw FormatError("lexical table: duplicate term " + given_vocab_[i]);
  }
  for (std::uint32_t i = 0; i < emitted_vocab_.size(); ++i) {
    if (!emitted_ids_.emplace(emitted_vocab_[i], i).second) throw FormatError("lexical table: duplicate term " + emitted_vocab_[i]);
  }
  for (std::uint32_t g = 0; g < rows_.size(); ++g) {
    double sum = 0.0;
    for (std::size_t k = 0; k < rows_[g].size(); ++k) {
      const auto [e, p] = rows_[g][k];
      if (e >= emitted_vocab_.size()) throw FormatError("lexical table: emitted id out of range");
      if (k > 0 && rows_[g][k - 1].first >= e) throw FormatError("lexical table: row entries not sorted by emitted id");
      if (!(p > 0.0 && p <= 1.0)) throw FormatError("lexical table: probability outside (0, 1]");
      lookup_.emplace(key(g, e), p);
      sum += p;
    }
    if (!rows_[g].empty() && std::abs(sum - 1.0) > 1e-6) {
      throw FormatError("lexical table: row for '" + given_vocab_[g] + "' does not sum to 1");
    }
  }
}

const std::vector<std::string>& LexTable::text_vocab() const noexcept {
  return direction_ == Direction::kTextGivenComponent ? emitted_vocab_ : given_vocab_;
}

const std::vector<std::string>& LexTable::comp_vocab() const noexcept {
  return direction_ == Direction::kTextGivenComponent ? given_vocab_ : emitted_vocab_;
}

std::optional<std::uint32_t> LexTable::given_id(std::string_view term) const {
  auto it = given_ids_.find(std::string(term));
  if (it == given_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> LexTable::emitted_id(std::string_view term) const {
  auto it = emitted_ids_.find(std::string(term));
  if (it == emitted_ids_.end()) return std::nullopt;
  return it->second;
}

double LexTable::prob(std::uint32_t given, std::uint32_t emitted) const {
  auto it = lookup_.find(key(given, emitted));
  return it == lookup_.end() ? 0.0 : it->second;
}

double LexTable::prob(std::string_view emitted, std::string_view given) const {
  auto g = given_id(given);
  auto e = emitted_id(emitted);
  if (!g || !e) return 0.0;
  return prob(*g, *e);
}

double LexTable::max_normalization_error() const {
  double worst = 0.0;
  for (const Row& r : rows_) {
    if (r.empty()) continue;
    double sum = 0.0;
    for (const auto& [e, p] : r) sum += p;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// EM training

namespace {

std::vector<std::string> sorted_vocab(const std::set<std::string>& terms) {
  return {terms.begin(), terms.end()};
}

}  // namespace

Model1Result train_model1(std::span<const BitextPair> pairs, Direction direction,
                          const Model1Options& options) {
  if (pairs.empty()) throw InvalidArgument("cannot train on an empty corpus");
  if (options.iterations == 0) throw InvalidArgument("EM needs at least one iteration");

  std::set<std::string> given_set, emitted_set;
  for (const auto& p : pairs) {
    if (p.emitted.empty()) throw InvalidArgument("training pair with empty emitted side");
    given_set.insert(p.given.begin(), p.given.end());
    emitted_set.insert(p.emitted.begin(), p.emitted.end());
  }
  if (options.include_null) given_set.erase(std::string(kNullTerm));

  std::vector<std::string> given_vocab;
  if (options.include_null) given_vocab.emplace_back(kNullTerm);
  for (auto& t : given_set) given_vocab.push_back(t);
  std::vector<std::string> emitted_vocab = sorted_vocab(emitted_set);

  std::unordered_map<std::string, std::uint32_t> gid, eid;
  for (std::uint32_t i = 0; i < given_vocab.size(); ++i) gid.emplace(given_vocab[i], i);
  for (std::uint32_t i = 0; i < emitted_vocab.size(); ++i) eid.emplace(emitted_vocab[i], i);

  // Encode each pair: given positions (NULL first), emitted positions.
  struct Encoded {
    std::vector<std::uint32_t> given;
    std::vector<std::uint32_t> emitted;
  };
  std::vector<Encoded> enc(pairs.size());
  std::vector<std::uint64_t> keys;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    if (options.include_null) enc[n].given.push_back(0);
    for (const auto& t : pairs[n].given) enc[n].given.push_back(gid.at(t));
    for (const auto& t : pairs[n].emitted) enc[n].emitted.push_back(eid.at(t));
    if (enc[n].given.empty()) throw InvalidArgument("training pair with nothing to condition on");
    for (auto g : enc[n].given) {
      for (auto e : enc[n].emitted) keys.push_back((static_cast<std::uint64_t>(g) << 32) | e);
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  // Slots are ordered by (given, emitted); each pair gets a slot matrix.
  std::unordered_map<std::uint64_t, std::uint32_t> slot_of;
  slot_of.reserve(keys.size());
  for (std::uint32_t s = 0; s < keys.size(); ++s) slot_of.emplace(keys[s], s);
  std::vector<std::vector<std::uint32_t>> slots(pairs.size());
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto& e = enc[n];
    slots[n].reserve(e.emitted.size() * e.given.size());
    for (auto w : e.emitted) {
      for (auto g : e.given) slots[n].push_back(slot_of.at((static_cast<std::uint64_t>(g) << 32) | w));
    }
  }

  auto given_of = [&](std::size_t s) { return static_cast<std::uint32_t>(keys[s] >> 32); };

  std::vector<double> prob(keys.size());
  {
    std::vector<std::size_t> row_size(given_vocab.size(), 0);
    for (std::size_t s = 0; s < keys.size(); ++s) ++row_size[given_of(s)];
    for (std::size_t s = 0; s < keys.size(); ++s) prob[s] = 1.0 / static_cast<double>(row_size[given_of(s)]);
  }

  auto build_table = [&] {
    std::vector<LexTable::Row> rows(given_vocab.size());
    for (std::size_t s = 0; s < keys.size(); ++s) {
      if (prob[s] > 0.0) rows[given_of(s)].emplace_back(static_cast<std::uint32_t>(keys[s] & 0xFFFFFFFFu), prob[s]);
    }
    return LexTable(direction, given_vocab, emitted_vocab, std::move(rows), options.include_null);
  };

  auto corpus_log_likelihood = [&] {
    double ll = 0.0;
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      const std::size_t width = enc[n].given.size();
      const auto* row = slots[n].data();
      for (std::size_t j = 0; j < enc[n].emitted.size(); ++j, row += width) {
        double sum = 0.0;
        for (std::size_t i = 0; i < width; ++i) sum += prob[row[i]];
        ll += std::log(sum);
      }
      ll -= static_cast<double>(enc[n].emitted.size()) * std::log(static_cast<double>(width));
    }
    return ll;
  };

  Model1Result result;
  std::vector<double> counts(keys.size());
  std::vector<double> totals(given_vocab.size());
  for (std::size_t iter = 1; iter <= options.iterations; ++iter) {
    std::fill(counts.begin(), counts.end(), 0.0);
    // E-step: exact posteriors, accumulated in corpus order.
    for (std::size_t n = 0; n < pairs.size(); ++n) {
      const std::size_t width = enc[n].given.size();
      const auto* row = slots[n].data();
      for (std::size_t j = 0; j < enc[n].emitted.size(); ++j, row += width) {
        double denom = 0.0;
        for (std::size_t i = 0; i < width; ++i) denom += prob[row[i]];
        for (std::size_t i = 0; i < width; ++i) counts[row[i]] += prob[row[i]] / denom;
      }
    }
    // M-step: renormalize per conditioning term.
    std::fill(totals.begin(), totals.end(), 0.0);
    for (std::size_t s = 0; s < keys.size(); ++s) totals[given_of(s)] += counts[s];
    for (std::size_t s = 0; s < keys.size(); ++s) prob[s] = counts[s] / totals[given_of(s)];

    result.log.log_likelihood.push_back(corpus_log_likelihood());
    if (options.on_iteration) options.on_iteration(iter, build_table());
  }
  result.table = build_table();
  return result;
}

Model1Result train_model1(const Corpus& corpus, Direction direction, const Model1Options& options) {
  std::vector<BitextPair> bitext;
  bitext.reserve(corpus.pairs.size());
  for (const Pair& p : corpus.pairs) {
    const auto& words = p.text.tokens();
    const auto& terms = p.component.linearized();
    if (direction == Direction::kTextGivenComponent) {
      bitext.push_back({terms, words});
    } else {
      bitext.push_back({words, terms});
    }
  }
  return train_model1(bitext, direction, options);
}

// ---------------------------------------------------------------------------
// Scoring

double likelihood(std::span<const std::string> x, std::span<const std::string> z, const LexTable& table,
                  const ScoreOptions& options) {
  if (x.empty()) throw InvalidArgument("empty query");
  if (options.evaluation_counter) options.evaluation_counter->fetch_add(1, std::memory_order_relaxed);

  std::vector<std::uint32_t> given;
  given.reserve(z.size() + 1);
  if (table.has_null()) given.push_back(0);
  for (const auto& u : z) {
    if (auto id = table.given_id(u)) given.push_back(*id);
  }
  const double log_floor = std::log(options.floor);
  double score = 0.0;
  for (const auto& w : x) {
    double sum = 0.0;
    if (auto e = table.emitted_id(w)) {
      for (auto g : given) sum += table.prob(g, *e);
    }
    score += sum > options.floor ? std::log(sum) : log_floor;
  }
  if (options.length_constant) {
    score -= static_cast<double>(x.size()) * std::log(static_cast<double>(z.size() + 1));
  }
  return score;
}

double likelihood(const TextSequence& x, const Component& z, const LexTable& table, const ScoreOptions& options) {
  if (table.direction() != Direction::kTextGivenComponent) {
    throw InvalidArgument("likelihood needs a text_given_component table");
  }
  return likelihood(std::span<const std::string>(x.tokens()), std::span<const std::string>(z.linearized()),
                    table, options);
}

std::vector<Candidate> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<Candidate> all(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) all[i] = {i, scores[i]};
  k = std::min(k, all.size());
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

std::vector<Candidate> rank_components(const TextSequence& x, const ComponentInventory& inventory,
                                       const LexTable& table, std::size_t k, const ScoreOptions& options) {
  if (x.empty()) throw InvalidArgument("empty query");
  if (inventory.empty()) throw InvalidArgument("empty component inventory");
  if (k == 0) throw InvalidArgument("k must be at least 1");
  std::vector<double> scores(inventory.size());
  for (std::size_t c = 0; c < inventory.size(); ++c) scores[c] = likelihood(x, inventory[c], table, options);
  return top_k(scores, k);
}

// ---------------------------------------------------------------------------
// Alignment

Alignment::Alignment(std::size_t target_len, std::vector<std::size_t> target_of)
    : target_len_(target_len), target_of_(std::move(target_of)) {
  for (auto i : target_of_) {
    if (i > target_len_) throw InvalidArgument("alignment link beyond target length");
  }
}

std::vector<std::pair<std::size_t, std::size_t>> Alignment::links() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(target_of_.size());
  for (std::size_t j = 0; j < target_of_.size(); ++j) out.emplace_back(j, target_of_[j]);
  return out;
}

Alignment viterbi_align(std::span<const std::string> emitted, std::span<const std::string> given,
                        const LexTable& table) {
  std::vector<std::optional<std::uint32_t>> gids;
  gids.reserve(given.size());
  for (const auto& g : given) gids.push_back(table.given_id(g));

  std::vector<std::size_t> target_of(emitted.size(), 0);
  for (std::size_t j = 0; j < emitted.size(); ++j) {
    auto e = table.emitted_id(emitted[j]);
    if (!e) continue;
    double best = table.has_null() ? table.prob(0, *e) : -1.0;
    for (std::size_t i = 0; i < given.size(); ++i) {
      double p = gids[i] ? table.prob(*gids[i], *e) : 0.0;
      if (p > best) {
        best = p;
        target_of[j] = i + 1;
      }
    }
  }
  return Alignment(given.size(), std::move(target_of));
}

Alignment viterbi_align(const TextSequence& x, const Component& z, const LexTable& table) {
  if (table.direction() != Direction::kTextGivenComponent) {
    throw InvalidArgument("text->component alignment needs a text_given_component table");
  }
  return viterbi_align(std::span<const std::string>(x.tokens()), std::span<const std::string>(z.linearized()), table);
}

LinkSet grow_diag(const LinkSet& forward, const LinkSet& reverse_transposed) {
  LinkSet current;
  std::set_intersection(forward.begin(), forward.end(), reverse_transposed.begin(), reverse_transposed.end(),
                        std::inserter(current, current.end()));
  LinkSet unioned;
  std::set_union(forward.begin(), forward.end(), reverse_transposed.begin(), reverse_transposed.end(),
                 std::inserter(unioned, unioned.end()));

  std::map<std::size_t, std::size_t> row_cover, col_cover;
  for (const auto& [j, i] : current) {
    ++row_cover[j];
    ++col_cover[i];
  }
  auto adjacent = [&current](std::size_t j, std::size_t i) {
    for (const auto& [lj, li] : current) {
      auto dj = lj > j ? lj - j : j - lj;
      auto di = li > i ? li - i : i - li;
      if (dj <= 1 && di <= 1 && (dj + di) > 0) return true;
    }
    return false;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& link : unioned) {
      if (current.count(link)) continue;
      const auto [j, i] = link;
      bool uncovered = row_cover[j] == 0 || col_cover[i] == 0;
      if (uncovered && adjacent(j, i)) {
        current.insert(link);
        ++row_cover[j];
        ++col_cover[i];
        changed = true;
      }
    }
  }
  return current;
}

LinkSet symmetrize(const Alignment& forward, const Alignment& reverse) {
  if (forward.source_len() != reverse.target_len() || forward.target_len() != reverse.source_len()) {
    throw InvalidArgument("forward and reverse alignments cover different sequence lengths");
  }
  LinkSet f, r;
  for (const auto& [j, i] : forward.links()) {
    if (i > 0) f.emplace(j, i - 1);
  }
  for (const auto& [i, j] : reverse.links()) {
    if (j > 0) r.emplace(j - 1, i);
  }
  return grow_diag(f, r);
}

}  // namespace fassist

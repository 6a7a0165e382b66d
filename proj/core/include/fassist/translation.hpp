#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fassist/corpus.hpp"

namespace fassist {

/// Which side of a pair the lexical multinomials generate.
enum class Direction : std::uint8_t {
  kTextGivenComponent,  // p_t(w | u): the noisy-channel scoring model
  kComponentGivenText,  // p_t(u | w): used for reverse alignments
};

std::string_view direction_name(Direction d) noexcept;
std::optional<Direction> parse_direction(std::string_view name) noexcept;

/// Name of the artificial NULL conditioning term.
inline constexpr std::string_view kNullTerm = "<null>";

/// Lexical translation parameters: one multinomial over emitted terms per
/// conditioning term (including NULL at id 0 when present). Only
/// co-occurring (given, emitted) pairs are stored; every stored probability
/// lies in (0, 1] and every row sums to 1.
class LexTable {
 public:
  using Row = std::vector<std::pair<std::uint32_t, double>>;

  LexTable() = default;
  /// given_vocab[0] must be kNullTerm when has_null is set. Rows are indexed
  /// by given id and hold (emitted id, probability) sorted by emitted id.
  LexTable(Direction direction, std::vector<std::string> given_vocab,
           std::vector<std::string> emitted_vocab, std::vector<Row> rows, bool has_null);

  Direction direction() const noexcept { return direction_; }
  bool has_null() const noexcept { return has_null_; }

  const std::vector<std::string>& given_vocab() const noexcept { return given_vocab_; }
  const std::vector<std::string>& emitted_vocab() const noexcept { return emitted_vocab_; }
  /// Text-side and component-side vocabularies, resolved through direction.
  const std::vector<std::string>& text_vocab() const noexcept;
  const std::vector<std::string>& comp_vocab() const noexcept;

  std::optional<std::uint32_t> given_id(std::string_view term) const;
  std::optional<std::uint32_t> emitted_id(std::string_view term) const;

  /// Stored probability, 0 for unseen pairs.
  double prob(std::uint32_t given, std::uint32_t emitted) const;
  double prob(std::string_view emitted, std::string_view given) const;

  const Row& row(std::uint32_t given) const { return rows_[given]; }
  std::size_t num_entries() const noexcept { return lookup_.size(); }

  /// Largest |sum - 1| over all rows.
  double max_normalization_error() const;

  friend bool operator==(const LexTable& a, const LexTable& b) {
    return a.direction_ == b.direction_ && a.has_null_ == b.has_null_ &&
           a.given_vocab_ == b.given_vocab_ && a.emitted_vocab_ == b.emitted_vocab_ && a.rows_ == b.rows_;
  }

 private:
  static std::uint64_t key(std::uint32_t given, std::uint32_t emitted) noexcept {
    return (static_cast<std::uint64_t>(given) << 32) | emitted;
  }

  Direction direction_ = Direction::kTextGivenComponent;
  bool has_null_ = true;
  std::vector<std::string> given_vocab_;
  std::vector<std::string> emitted_vocab_;
  std::unordered_map<std::string, std::uint32_t> given_ids_;
  std::unordered_map<std::string, std::uint32_t> emitted_ids_;
  std::vector<Row> rows_;
  std::unordered_map<std::uint64_t, double> lookup_;
};

/// Per-iteration corpus log-likelihood recorded during EM.
struct TrainLog {
  std::vector<double> log_likelihood;
};

struct Model1Options {
  std::size_t iterations = 10;
  /// NULL is part of the model; disabling it exists for textbook fixtures.
  bool include_null = true;
  /// Called after every M-step with the 1-based iteration and current table.
  std::function<void(std::size_t, const LexTable&)> on_iteration;
};

/// A (conditioning sequence, emitted sequence) pair for EM.
struct BitextPair {
  std::vector<std::string> given;
  std::vector<std::string> emitted;
};

struct Model1Result {
  LexTable table;
  TrainLog log;
};

/// IBM Model 1 EM. Parameters start uniform over co-occurring terms; each
/// iteration computes exact posteriors and renormalizes. Throws
/// InvalidArgument for an empty corpus or zero iterations.
Model1Result train_model1(std::span<const BitextPair> pairs, Direction direction,
                          const Model1Options& options);
Model1Result train_model1(const Corpus& corpus, Direction direction, const Model1Options& options);

/// Scoring knobs for likelihood().
struct ScoreOptions {
  /// Include the (|z|+1)^-|x| alignment normalizer.
  bool length_constant = true;
  /// Lower bound on each word's summed translation probability.
  double floor = 1e-40;
  /// Incremented once per likelihood evaluation when set.
  std::atomic<std::size_t>* evaluation_counter = nullptr;
};

/// log p(x | z) = sum_j log max(floor, sum_{i=0..|z|} p_t(w_j | u_i)) - |x| log(|z|+1).
/// Throws InvalidArgument for empty x or a table of the wrong direction.
double likelihood(const TextSequence& x, const Component& z, const LexTable& table,
                  const ScoreOptions& options = {});
double likelihood(std::span<const std::string> x, std::span<const std::string> z,
                  const LexTable& table, const ScoreOptions& options = {});

/// Index into an inventory plus its score.
struct Candidate {
  std::size_t index = 0;
  double score = 0.0;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Indices of the k best scores, descending; ties go to the smaller index.
std::vector<Candidate> top_k(std::span<const double> scores, std::size_t k);

/// Scores every inventory component by likelihood (uniform prior) and
/// returns the k best. Ties resolve to the lexicographically smaller
/// linearization. Throws InvalidArgument for an empty query or inventory,
/// or k == 0.
std::vector<Candidate> rank_components(const TextSequence& x, const ComponentInventory& inventory,
                                       const LexTable& table, std::size_t k,
                                       const ScoreOptions& options = {});

/// Many-to-one alignment from an emitted sequence onto a conditioning
/// sequence; target 0 is NULL, 1..target_len are real positions.
class Alignment {
 public:
  Alignment(std::size_t target_len, std::vector<std::size_t> target_of);

  std::size_t source_len() const noexcept { return target_of_.size(); }
  std::size_t target_len() const noexcept { return target_len_; }
  std::size_t target_of(std::size_t j) const { return target_of_[j]; }
  /// (j, i) for every source position, i = 0 meaning NULL.
  std::vector<std::pair<std::size_t, std::size_t>> links() const;

  friend bool operator==(const Alignment&, const Alignment&) = default;

 private:
  std::size_t target_len_ = 0;
  std::vector<std::size_t> target_of_;
};

/// Links each emitted position to argmax_i p_t(e_j | g_i) over NULL and the
/// given positions; ties go to NULL, then the smaller position.
Alignment viterbi_align(std::span<const std::string> emitted, std::span<const std::string> given,
                        const LexTable& table);
/// Text -> component alignment under a text_given_component table.
Alignment viterbi_align(const TextSequence& x, const Component& z, const LexTable& table);

/// 0-based (text position, component position) links.
using LinkSet = std::set<std::pair<std::size_t, std::size_t>>;

/// Intersection of the two link sets grown with grow-diag: union links
/// adjacent (8-neighbourhood) to an accepted link whose row or column is
/// still uncovered are admitted, scanning candidates in ascending (j, i),
/// until a fixpoint.
LinkSet grow_diag(const LinkSet& forward, const LinkSet& reverse_transposed);

/// Symmetrizes a text->component alignment with a component->text one.
/// NULL links are dropped. Throws InvalidArgument on mismatched lengths.
LinkSet symmetrize(const Alignment& forward, const Alignment& reverse);

}  // namespace fassist

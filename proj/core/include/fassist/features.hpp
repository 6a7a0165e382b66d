#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fassist/corpus.hpp"
#include "fassist/translation.hpp"

namespace fassist {

/// Gap symbol in hierarchical phrases.
inline constexpr std::string_view kGap = "<gap>";

using Phrase = std::vector<std::string>;

struct PhrasePair {
  Phrase text;
  Phrase component;
  friend auto operator<=>(const PhrasePair&, const PhrasePair&) = default;
};

/// Phrase pairs consistent with symmetrized alignments, plus hierarchical
/// pairs carrying a single gap on each side.
class PhraseTable {
 public:
  explicit PhraseTable(std::size_t max_len = 3);

  std::size_t max_len() const noexcept { return max_len_; }

  /// Adds count occurrences. Gapped pairs (containing kGap) go to the
  /// hierarchical set. Throws InvalidArgument for over-long sides or a zero count.
  void add(const PhrasePair& pair, std::size_t count = 1);

  const std::map<PhrasePair, std::size_t>& phrases() const noexcept { return phrases_; }
  const std::map<PhrasePair, std::size_t>& hierarchical() const noexcept { return hierarchical_; }
  bool empty() const noexcept { return phrases_.empty() && hierarchical_.empty(); }

  /// Component sides recorded for a text side (joined with spaces).
  const std::vector<std::string>* component_sides(const std::string& text_key) const;

  friend bool operator==(const PhraseTable& a, const PhraseTable& b) {
    return a.max_len_ == b.max_len_ && a.phrases_ == b.phrases_ && a.hierarchical_ == b.hierarchical_;
  }

 private:
  std::size_t max_len_;
  std::map<PhrasePair, std::size_t> phrases_;
  std::map<PhrasePair, std::size_t> hierarchical_;
  std::unordered_map<std::string, std::vector<std::string>> by_text_;
};

std::string join_phrase(std::span<const std::string> phrase);

/// True if the box [t_begin, t_end) x [c_begin, c_end) contains at least one
/// link and no link connects the inside of the box to the outside.
bool is_consistent(const LinkSet& links, std::size_t t_begin, std::size_t t_end, std::size_t c_begin,
                   std::size_t c_end);

/// Extracts every consistent phrase pair with sides of at most max_len, and
/// the hierarchical pairs obtained by replacing one consistent sub-pair with
/// a gap on both sides (each side keeps at least one terminal).
PhraseTable build_phrase_table(const Corpus& corpus, std::span<const LinkSet> alignments, std::size_t max_len = 3);

/// Symmetrized alignment of every corpus pair under the two trained tables.
std::vector<LinkSet> align_corpus(const Corpus& corpus, const LexTable& text_given_component,
                                  const LexTable& component_given_text);

// ---------------------------------------------------------------------------
// Feature vectors

/// Feature name -> value before indexing; sorted, so indexing order is stable.
using NamedFeatures = std::map<std::string, double>;

/// Bidirectional feature-name <-> id map. Id 0 is the OOV bucket; once
/// frozen, unknown names resolve to it instead of growing the index.
class FeatureIndex {
 public:
  static constexpr std::uint32_t kOov = 0;
  static constexpr std::string_view kOovName = "<oov>";

  FeatureIndex();
  /// Rebuilds an index from its names; names[0] must be kOovName.
  static FeatureIndex from_names(std::vector<std::string> names, bool frozen);

  /// Id of name, adding it when not frozen.
  std::uint32_t intern(const std::string& name);
  /// Id of name, or kOov.
  std::uint32_t lookup(const std::string& name) const;
  std::optional<std::uint32_t> find(const std::string& name) const;

  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }
  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::uint32_t id) const { return names_[id]; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const FeatureIndex& a, const FeatureIndex& b) {
    return a.names_ == b.names_ && a.frozen_ == b.frozen_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
  bool frozen_ = false;
};

/// Sparse feature vector sorted by id with no explicit zeros.
struct FeatureVector {
  std::vector<std::pair<std::uint32_t, double>> entries;

  double dot(std::span<const double> weights) const;
  std::optional<double> get(std::uint32_t id) const;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Resolves names through the index, growing it unless frozen. OOV values
/// are summed into the OOV bucket.
FeatureVector vectorize(const NamedFeatures& named, FeatureIndex& index);
/// Same, never growing the index.
FeatureVector vectorize(const NamedFeatures& named, const FeatureIndex& index);

// ---------------------------------------------------------------------------
// Feature classes

using ParamDescs = std::map<std::string, TextSequence>;

/// Word/component co-occurrence indicators, exact-match indicators and
/// counts, overlap (raw and normalized by |x|), and zone indicators.
void word_features(const TextSequence& x, const Component& z, NamedFeatures& out);
/// Only the word/component co-occurrence indicators (the bag-of-words set).
void word_pair_features(const TextSequence& x, const Component& z, NamedFeatures& out);

/// Phrase matches for one query, computed once and reused across candidates.
class PhraseMatcher {
 public:
  PhraseMatcher(const TextSequence& x, const PhraseTable& table);
  void match(const Component& z, NamedFeatures& out) const;

 private:
  std::size_t max_len_;
  // component-side key -> feature names of entries whose text side occurs in x
  std::unordered_map<std::string, std::vector<std::string>> contiguous_;
  std::unordered_map<std::string, std::vector<std::string>> gapped_;
};

void phrase_features(const TextSequence& x, const Component& z, const PhraseTable& table, NamedFeatures& out);

/// Ancestor-class indicators, ancestor description overlap, and parameter
/// description indicators.
void doc_features(const TextSequence& x, const Component& z, const ClassHierarchy& hierarchy,
                  const ParamDescs& param_descs, NamedFeatures& out);

/// Name of the dense translation-score feature.
inline constexpr std::string_view kTranslationFeature = "tm";

enum class FeatureSet : std::uint8_t {
  kFull,       // word + phrase + document + translation score
  kWordPairs,  // word/component co-occurrence indicators only
};

/// Everything extraction reads besides the (query, candidate) pair.
struct FeatureContext {
  const LexTable* translation = nullptr;  // text_given_component
  ScoreOptions score_options;
  const PhraseTable* phrases = nullptr;
  const ClassHierarchy* hierarchy = nullptr;
};

/// phi(x, z). Pure: identical inputs give identical vectors.
class Featurizer {
 public:
  explicit Featurizer(FeatureContext context, FeatureSet set = FeatureSet::kFull);

  /// Per-query state shared across that query's candidates.
  class Prepared {
   public:
    const TextSequence& query() const noexcept { return *query_; }

   private:
    friend class Featurizer;
    const TextSequence* query_ = nullptr;
    std::optional<PhraseMatcher> phrases_;
  };

  /// The returned object references x; x must outlive it.
  Prepared prepare(const TextSequence& x) const;

  NamedFeatures named(const Prepared& query, const Component& z, const ParamDescs& params) const;
  NamedFeatures named(const TextSequence& x, const Component& z, const ParamDescs& params) const;

  /// Index grows while not frozen.
  FeatureVector extract(const Prepared& query, const Component& z, const ParamDescs& params,
                        FeatureIndex& index) const;
  FeatureVector extract(const Prepared& query, const Component& z, const ParamDescs& params,
                        const FeatureIndex& index) const;

  FeatureSet feature_set() const noexcept { return set_; }
  const FeatureContext& context() const noexcept { return context_; }

 private:
  FeatureContext context_;
  FeatureSet set_;
};

/// Parameter descriptions merged per inventory component (first non-empty
/// description per argument, in corpus order).
std::vector<ParamDescs> collect_param_descs(const ComponentInventory& inventory, const Corpus& corpus);

}  // namespace fassist

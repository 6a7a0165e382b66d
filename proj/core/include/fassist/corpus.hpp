#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fassist {

/// Tokenized natural-language text: lowercase tokens, none empty, none
/// containing whitespace.
class TextSequence {
 public:
  TextSequence() = default;
  /// Throws InvalidArgument if a token is empty or contains whitespace.
  explicit TextSequence(std::vector<std::string> tokens);

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }
  auto begin() const noexcept { return tokens_.begin(); }
  auto end() const noexcept { return tokens_.end(); }

  /// Tokens joined by single spaces.
  std::string joined() const;

  friend bool operator==(const TextSequence&, const TextSequence&) = default;

 private:
  std::vector<std::string> tokens_;
};

/// Lowercases, splits on whitespace and punctuation, drops tokens with no
/// word characters. Total over arbitrary UTF-8.
TextSequence tokenize_text(std::string_view raw);

/// Splits an identifier on underscores and camelCase boundaries into
/// lowercase subtokens ("trainHMM" -> train, hmm; "add_arc" -> add, arc).
std::vector<std::string> split_identifier(std::string_view identifier);

/// Structural region of a component that a linearized term came from.
enum class Zone : std::uint8_t { kNamespace, kClass, kFunction, kArgument };

std::string_view zone_name(Zone zone) noexcept;

/// Structured function representation. The linearization is computed on
/// construction and is a pure function of the other fields.
class Component {
 public:
  /// Throws InvalidArgument when function_name is empty or any identifier is
  /// empty or contains whitespace.
  Component(std::vector<std::string> namespace_path,
            std::optional<std::string> class_name, std::string function_name,
            std::vector<std::string> arg_names);

  const std::vector<std::string>& namespace_path() const noexcept { return namespace_; }
  const std::optional<std::string>& class_name() const noexcept { return class_name_; }
  const std::string& function_name() const noexcept { return function_name_; }
  const std::vector<std::string>& arg_names() const noexcept { return arg_names_; }

  /// u_1..u_|z|: namespace tokens, class, function, args; each identifier
  /// followed by its subtokens when it decomposes.
  const std::vector<std::string>& linearized() const noexcept { return linearized_; }
  /// Zone of each linearized term, parallel to linearized().
  const std::vector<Zone>& zones() const noexcept { return zones_; }

  /// Dotted "ns.path.Class" identifier, or nullopt for free functions.
  std::optional<std::string> qualified_class() const;

  /// Human-readable "ns.path.Class.fn(a, b)".
  std::string signature() const;

  /// Linearization joined with single spaces; unique key within an inventory.
  std::string key() const;

  friend bool operator==(const Component& a, const Component& b) {
    return a.namespace_ == b.namespace_ && a.class_name_ == b.class_name_ &&
           a.function_name_ == b.function_name_ && a.arg_names_ == b.arg_names_;
  }

 private:
  std::vector<std::string> namespace_;
  std::optional<std::string> class_name_;
  std::string function_name_;
  std::vector<std::string> arg_names_;
  std::vector<std::string> linearized_;
  std::vector<Zone> zones_;
};

/// Linearization of c (same as c.linearized(); provided as a free function).
std::vector<std::string> linearize_component(const Component& c);

/// Canonical order: lexicographic on linearization.
bool linearization_less(const Component& a, const Component& b);

struct SourceLocation {
  std::string file;
  std::int64_t line = 0;
  friend bool operator==(const SourceLocation&, const SourceLocation&) = default;
};

/// One (description, component) training example.
struct Pair {
  /// Original description text as read from the corpus file; text is its
  /// tokenization.
  std::string description;
  TextSequence text;
  Component component;
  std::map<std::string, TextSequence> param_descs;
  SourceLocation source;

  friend bool operator==(const Pair&, const Pair&) = default;
};

/// Parent/child relation among API classes plus tokenized class
/// descriptions. Class identifiers are dotted module paths ("a.b.Class").
class ClassHierarchy {
 public:
  /// Registers a class (idempotent). A non-empty description replaces an
  /// empty one.
  void add_class(const std::string& id, TextSequence description = {});
  /// Adds child -> parent; both classes are registered. Self-loops throw
  /// FormatError.
  void add_edge(const std::string& child, const std::string& parent);

  /// Throws FormatError naming the cycle if the edges contain one.
  void check_acyclic() const;

  bool empty() const noexcept { return class_descs_.empty(); }
  bool contains(const std::string& id) const { return class_descs_.count(id) != 0; }

  /// The class itself followed by all transitive parents, sorted and
  /// deduplicated. Unknown ids yield an empty list.
  std::vector<std::string> ancestors(const std::string& id) const;

  const TextSequence& description(const std::string& id) const;

  const std::set<std::pair<std::string, std::string>>& edges() const noexcept { return edges_; }
  const std::map<std::string, TextSequence>& class_descs() const noexcept { return class_descs_; }

  friend bool operator==(const ClassHierarchy&, const ClassHierarchy&) = default;

 private:
  std::set<std::pair<std::string, std::string>> edges_;
  std::map<std::string, TextSequence> class_descs_;
};

struct Corpus {
  std::vector<Pair> pairs;
  ClassHierarchy hierarchy;
  std::string project_name;
  std::optional<std::string> source_url_template;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Distinct components of one or more corpora, sorted by linearization.
class ComponentInventory {
 public:
  ComponentInventory() = default;
  explicit ComponentInventory(std::vector<Component> components);

  static ComponentInventory from_corpus(const Corpus& corpus);

  const std::vector<Component>& components() const noexcept { return components_; }
  std::size_t size() const noexcept { return components_.size(); }
  bool empty() const noexcept { return components_.empty(); }
  const Component& operator[](std::size_t i) const { return components_[i]; }

  /// Index of the component with c's linearization, if present.
  std::optional<std::size_t> find(const Component& c) const;

 private:
  std::vector<Component> components_;
  std::map<std::string, std::size_t> by_key_;
};

struct SplitSpec {
  std::uint64_t seed = 13;
  double train_frac = 0.70;
  double dev_frac = 0.15;
  double test_frac = 0.15;

  /// Throws InvalidArgument unless every fraction is > 0 and they sum to 1.
  void validate() const;
};

struct CorpusSplits {
  Corpus train;
  Corpus dev;
  Corpus test;
};

/// Seeded shuffle then partition: dev and test get floor(n * frac) pairs,
/// train gets the rest. Throws InvalidArgument for fewer than 3 pairs.
CorpusSplits split_corpus(const Corpus& corpus, const SplitSpec& spec);

/// Deterministic 64-bit generator shared by every seeded procedure.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;
  std::uint64_t next() noexcept;
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Uniform double in [0, 1).
  double uniform() noexcept;

 private:
  std::uint64_t state_;
};

/// Fisher-Yates shuffle driven by Rng.
template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

/// Reads the corpus file and, if given, its hierarchy file. Errors carry the
/// offending line number ("line 3: missing function_name").
Corpus load_corpus(const std::filesystem::path& corpus_path,
                   const std::optional<std::filesystem::path>& hierarchy_path = std::nullopt);
Corpus read_corpus(std::istream& corpus_in, std::istream* hierarchy_in = nullptr);

void save_corpus(const Corpus& corpus, const std::filesystem::path& corpus_path,
                 const std::optional<std::filesystem::path>& hierarchy_path = std::nullopt);
void write_corpus(const Corpus& corpus, std::ostream& corpus_out);
void write_hierarchy(const ClassHierarchy& hierarchy, std::ostream& out);

}  // namespace fassist

#include "fassist/features.hpp"

#include <algorithm>
#include <set>

#include "fassist/error.hpp"

namespace fassist {

std::string join_phrase(std::span<const std::string> phrase) {
  std::string out;
  for (std::size_t i = 0; i < phrase.size(); ++i) {
    if (i) out += ' ';
    out += phrase[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// PhraseTable

PhraseTable::PhraseTable(std::size_t max_len) : max_len_(max_len) {
  if (max_len_ == 0) throw InvalidArgument("phrase length bound must be at least 1");
}

void PhraseTable::add(const PhrasePair& pair, std::size_t count) {
  if (count == 0) throw InvalidArgument("phrase count must be at least 1");
  if (pair.text.empty() || pair.component.empty()) throw InvalidArgument("phrase sides must be non-empty");
  if (pair.text.size() > max_len_ || pair.component.size() > max_len_) {
    throw InvalidArgument("phrase longer than the table's bound");
  }
  auto is_gap = [](const std::string& s) { return s == kGap; };
  const auto text_gaps = std::count_if(pair.text.begin(), pair.text.end(), is_gap);
  const auto comp_gaps = std::count_if(pair.component.begin(), pair.component.end(), is_gap);
  if (text_gaps != comp_gaps || text_gaps > 1) throw InvalidArgument("hierarchical phrases carry exactly one gap per side");

  auto& target = text_gaps ? hierarchical_ : phrases_;
  auto [it, inserted] = target.try_emplace(pair, 0);
  it->second += count;
  if (inserted) by_text_[join_phrase(pair.text)].push_back(join_phrase(pair.component));
}

const std::vector<std::string>* PhraseTable::component_sides(const std::string& text_key) const {
  auto it = by_text_.find(text_key);
  return it == by_text_.end() ? nullptr : &it->second;
}

bool is_consistent(const LinkSet& links, std::size_t t_begin, std::size_t t_end, std::size_t c_begin,
                   std::size_t c_end) {
  bool any_inside = false;
  for (const auto& [j, i] : links) {
    const bool in_text = j >= t_begin && j < t_end;
    const bool in_comp = i >= c_begin && i < c_end;
    if (in_text != in_comp) return false;
    any_inside = any_inside || in_text;
  }
  return any_inside;
}

namespace {

struct Box {
  std::size_t tb, te, cb, ce;
};

Phrase gapped_side(std::span<const std::string> seq, std::size_t outer_b, std::size_t outer_e,
                   std::size_t inner_b, std::size_t inner_e) {
  Phrase out(seq.begin() + static_cast<std::ptrdiff_t>(outer_b), seq.begin() + static_cast<std::ptrdiff_t>(inner_b));
  out.emplace_back(kGap);
  out.insert(out.end(), seq.begin() + static_cast<std::ptrdiff_t>(inner_e), seq.begin() + static_cast<std::ptrdiff_t>(outer_e));
  return out;
}

// Calls f(key) for every contiguous n-gram (n <= max_len) of seq, or, when
// gapped is set, every single-gap pattern prefix + <gap> + suffix with at
// least one terminal and prefix + gap + suffix spanning at most max_len.
template <typename F>
void for_each_pattern(std::span<const std::string> seq, std::size_t max_len, bool gapped, F&& f) {
  const std::size_t n = seq.size();
  if (!gapped) {
    for (std::size_t s = 0; s < n; ++s) {
      std::string key;
      for (std::size_t len = 1; len <= max_len && s + len <= n; ++len) {
        if (len > 1) key += ' ';
        key += seq[s + len - 1];
        f(key);
      }
    }
    return;
  }
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < max_len; ++a) {
      for (std::size_t b = 0; a + b < max_len; ++b) {
        if (a + b == 0) continue;
        for (std::size_t g = 1; a + g + b <= max_len; ++g) {
          if (s + a + g + b > n) break;
          std::string key;
          for (std::size_t k = 0; k < a; ++k) {
            key += seq[s + k];
            key += ' ';
          }
          key += kGap;
          for (std::size_t k = 0; k < b; ++k) {
            key += ' ';
            key += seq[s + a + g + k];
          }
          f(key);
        }
      }
    }
  }
}

}  // namespace

PhraseTable build_phrase_table(const Corpus& corpus, std::span<const LinkSet> alignments, std::size_t max_len) {
  if (alignments.size() != corpus.pairs.size()) {
    throw InvalidArgument("alignments must correspond one-to-one with corpus pairs");
  }
  PhraseTable table(max_len);
  for (std::size_t n = 0; n < corpus.pairs.size(); ++n) {
    const auto& x = corpus.pairs[n].text.tokens();
    const auto& z = corpus.pairs[n].component.linearized();
    const LinkSet& links = alignments[n];
    if (links.empty()) continue;

    std::vector<Box> boxes;
    for (std::size_t tb = 0; tb < x.size(); ++tb) {
      for (std::size_t te = tb + 1; te <= x.size() && te - tb <= max_len; ++te) {
        for (std::size_t cb = 0; cb < z.size(); ++cb) {
          for (std::size_t ce = cb + 1; ce <= z.size() && ce - cb <= max_len; ++ce) {
            if (is_consistent(links, tb, te, cb, ce)) boxes.push_back({tb, te, cb, ce});
          }
        }
      }
    }
    for (const Box& p : boxes) {
      table.add({Phrase(x.begin() + static_cast<std::ptrdiff_t>(p.tb), x.begin() + static_cast<std::ptrdiff_t>(p.te)),
                 Phrase(z.begin() + static_cast<std::ptrdiff_t>(p.cb), z.begin() + static_cast<std::ptrdiff_t>(p.ce))});
    }
    for (const Box& p : boxes) {
      for (const Box& q : boxes) {
        const bool inside = q.tb >= p.tb && q.te <= p.te && q.cb >= p.cb && q.ce <= p.ce;
        const std::size_t text_terminals = (p.te - p.tb) - (q.te - q.tb);
        const std::size_t comp_terminals = (p.ce - p.cb) - (q.ce - q.cb);
        if (!inside || text_terminals == 0 || comp_terminals == 0) continue;
        table.add({gapped_side(x, p.tb, p.te, q.tb, q.te), gapped_side(z, p.cb, p.ce, q.cb, q.ce)});
      }
    }
  }
  return table;
}

std::vector<LinkSet> align_corpus(const Corpus& corpus, const LexTable& text_given_component,
                                  const LexTable& component_given_text) {
  if (text_given_component.direction() != Direction::kTextGivenComponent ||
      component_given_text.direction() != Direction::kComponentGivenText) {
    throw InvalidArgument("align_corpus needs one table per direction");
  }
  std::vector<LinkSet> out;
  out.reserve(corpus.pairs.size());
  for (const Pair& p : corpus.pairs) {
    const auto& x = p.text.tokens();
    const auto& z = p.component.linearized();
    Alignment forward = viterbi_align(std::span<const std::string>(x), std::span<const std::string>(z), text_given_component);
    Alignment reverse = viterbi_align(std::span<const std::string>(z), std::span<const std::string>(x), component_given_text);
    out.push_back(symmetrize(forward, reverse));
  }
  return out;
}

// ---------------------------------------------------------------------------
// FeatureIndex / FeatureVector

FeatureIndex::FeatureIndex() {
  names_.emplace_back(kOovName);
  ids_.emplace(std::string(kOovName), kOov);
}

FeatureIndex FeatureIndex::from_names(std::vector<std::string> names, bool frozen) {
  if (names.empty() || names[0] != kOovName) throw FormatError("feature index must start with the OOV bucket");
  FeatureIndex index;
  for (std::size_t i = 1; i < names.size(); ++i) {
    if (index.ids_.count(names[i])) throw FormatError("duplicate feature name " + names[i]);
    index.intern(names[i]);
  }
  index.frozen_ = frozen;
  return index;
}

std::uint32_t FeatureIndex::intern(const std::string& name) {
  auto it = ids_.find(name);
  if (it != ids_.end()) return it->second;
  if (frozen_) return kOov;
  auto id = static_cast<std::uint32_t>(names_.size());
  names_.push_back(name);
  ids_.emplace(name, id);
  return id;
}

std::uint32_t FeatureIndex::lookup(const std::string& name) const {
  auto it = ids_.find(name);
  return it == ids_.end() ? kOov : it->second;
}

std::optional<std::uint32_t> FeatureIndex::find(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

double FeatureVector::dot(std::span<const double> weights) const {
  double s = 0.0;
  for (const auto& [id, v] : entries) {
    if (id < weights.size()) s += v * weights[id];
  }
  return s;
}

std::optional<double> FeatureVector::get(std::uint32_t id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), id,
                             [](const auto& e, std::uint32_t key) { return e.first < key; });
  if (it == entries.end() || it->first != id) return std::nullopt;
  return it->second;
}

namespace {

template <typename Resolve>
FeatureVector vectorize_with(const NamedFeatures& named, Resolve&& resolve) {
  FeatureVector v;
  v.entries.reserve(named.size());
  for (const auto& [name, value] : named) {
    if (value == 0.0) continue;
    v.entries.emplace_back(resolve(name), value);
  }
  std::sort(v.entries.begin(), v.entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Merge OOV hits into one bucket entry.
  std::vector<std::pair<std::uint32_t, double>> merged;
  merged.reserve(v.entries.size());
  for (const auto& e : v.entries) {
    if (!merged.empty() && merged.back().first == e.first) {
      merged.back().second += e.second;
    } else {
      merged.push_back(e);
    }
  }
  std::erase_if(merged, [](const auto& e) { return e.second == 0.0; });
  v.entries = std::move(merged);
  return v;
}

}  // namespace

FeatureVector vectorize(const NamedFeatures& named, FeatureIndex& index) {
  return vectorize_with(named, [&index](const std::string& n) { return index.intern(n); });
}

FeatureVector vectorize(const NamedFeatures& named, const FeatureIndex& index) {
  return vectorize_with(named, [&index](const std::string& n) { return index.lookup(n); });
}

// ---------------------------------------------------------------------------
// Feature classes

void word_pair_features(const TextSequence& x, const Component& z, NamedFeatures& out) {
  for (const auto& w : x) {
    for (const auto& u : z.linearized()) out["wp:" + w + "|" + u] = 1.0;
  }
}

void word_features(const TextSequence& x, const Component& z, NamedFeatures& out) {
  word_pair_features(x, z, out);

  const auto& terms = z.linearized();
  const std::set<std::string> term_set(terms.begin(), terms.end());
  std::set<std::string> matched;
  double match_count = 0.0;
  for (const auto& w : x) {
    if (term_set.count(w)) {
      match_count += 1.0;
      matched.insert(w);
      out["em:" + w] = 1.0;
    }
  }
  if (match_count > 0) {
    out["em_count"] = match_count;
    out["overlap"] = static_cast<double>(matched.size());
    out["overlap_norm"] = static_cast<double>(matched.size()) / static_cast<double>(x.size());
  }

  std::map<Zone, std::set<std::string>> zone_terms;
  for (std::size_t i = 0; i < terms.size(); ++i) zone_terms[z.zones()[i]].insert(terms[i]);
  for (const auto& [zone, zset] : zone_terms) {
    const std::string zname(zone_name(zone));
    double hits = 0.0;
    for (const auto& w : x) {
      if (zset.count(w)) {
        out["zone:" + w + "|" + zname] = 1.0;
        hits += 1.0;
      }
    }
    if (hits > 0) out["zone_match:" + zname] = hits;
  }
}

PhraseMatcher::PhraseMatcher(const TextSequence& x, const PhraseTable& table) : max_len_(table.max_len()) {
  auto collect = [&](bool gapped) {
    auto& target = gapped ? gapped_ : contiguous_;
    const std::string prefix = gapped ? "hph:" : "ph:";
    std::set<std::string> seen;
    for_each_pattern(std::span<const std::string>(x.tokens()), max_len_, gapped, [&](const std::string& key) {
      if (!seen.insert(key).second) return;
      const auto* sides = table.component_sides(key);
      if (!sides) return;
      for (const auto& comp : *sides) {
        const bool comp_gapped = comp.find(kGap) != std::string::npos;
        if (comp_gapped != gapped) continue;
        target[comp].push_back(prefix + key + "|" + comp);
      }
    });
  };
  collect(false);
  collect(true);
}

void PhraseMatcher::match(const Component& z, NamedFeatures& out) const {
  auto run = [&](bool gapped, const std::unordered_map<std::string, std::vector<std::string>>& entries,
                 const char* count_name) {
    if (entries.empty()) return;
    std::set<std::string> seen;
    double fired = 0.0;
    for_each_pattern(std::span<const std::string>(z.linearized()), max_len_, gapped, [&](const std::string& key) {
      if (!seen.insert(key).second) return;
      auto it = entries.find(key);
      if (it == entries.end()) return;
      for (const auto& name : it->second) {
        out[name] = 1.0;
        fired += 1.0;
      }
    });
    if (fired > 0) out[count_name] = fired;
  };
  run(false, contiguous_, "ph_count");
  run(true, gapped_, "hph_count");
}

void phrase_features(const TextSequence& x, const Component& z, const PhraseTable& table, NamedFeatures& out) {
  PhraseMatcher(x, table).match(z, out);
}

void doc_features(const TextSequence& x, const Component& z, const ClassHierarchy& hierarchy,
                  const ParamDescs& param_descs, NamedFeatures& out) {
  const std::set<std::string> words(x.begin(), x.end());

  if (auto cls = z.qualified_class()) {
    const auto ancestors = hierarchy.ancestors(*cls);
    std::set<std::string> desc_words;
    for (const auto& a : ancestors) {
      for (const auto& w : words) out["anc:" + w + "|" + a] = 1.0;
      const auto& d = hierarchy.description(a);
      desc_words.insert(d.begin(), d.end());
    }
    double overlap = 0.0;
    for (const auto& w : x) overlap += desc_words.count(w) ? 1.0 : 0.0;
    if (overlap > 0) {
      out["anc_desc_overlap"] = overlap;
      out["anc_desc_overlap_norm"] = overlap / static_cast<double>(x.size());
    }
  }

  double param_hits = 0.0;
  std::set<std::string> seen_args;
  for (const auto& arg : z.arg_names()) {
    if (!seen_args.insert(arg).second) continue;
    auto it = param_descs.find(arg);
    if (it == param_descs.end()) continue;
    const bool hit = std::any_of(it->second.begin(), it->second.end(), [&](const std::string& t) { return words.count(t) != 0; });
    if (hit) {
      out["param_desc:" + arg] = 1.0;
      param_hits += 1.0;
    }
  }
  if (param_hits > 0) out["param_desc_count"] = param_hits;
}

// ---------------------------------------------------------------------------
// Featurizer

Featurizer::Featurizer(FeatureContext context, FeatureSet set) : context_(context), set_(set) {
  if (context_.translation && context_.translation->direction() != Direction::kTextGivenComponent) {
    throw InvalidArgument("featurizer needs a text_given_component translation table");
  }
}

Featurizer::Prepared Featurizer::prepare(const TextSequence& x) const {
  Prepared p;
  p.query_ = &x;
  if (set_ == FeatureSet::kFull && context_.phrases && !context_.phrases->empty()) {
    p.phrases_.emplace(x, *context_.phrases);
  }
  return p;
}

NamedFeatures Featurizer::named(const Prepared& query, const Component& z, const ParamDescs& params) const {
  const TextSequence& x = query.query();
  NamedFeatures out;
  if (set_ == FeatureSet::kWordPairs) {
    word_pair_features(x, z, out);
    return out;
  }
  word_features(x, z, out);
  if (query.phrases_) query.phrases_->match(z, out);
  static const ClassHierarchy kNoHierarchy;
  doc_features(x, z, context_.hierarchy ? *context_.hierarchy : kNoHierarchy, params, out);
  if (context_.translation) {
    out[std::string(kTranslationFeature)] =
        likelihood(x, z, *context_.translation, context_.score_options) / static_cast<double>(x.size());
  }
  return out;
}

NamedFeatures Featurizer::named(const TextSequence& x, const Component& z, const ParamDescs& params) const {
  return named(prepare(x), z, params);
}

FeatureVector Featurizer::extract(const Prepared& query, const Component& z, const ParamDescs& params,
                                  FeatureIndex& index) const {
  return vectorize(named(query, z, params), index);
}

FeatureVector Featurizer::extract(const Prepared& query, const Component& z, const ParamDescs& params,
                                  const FeatureIndex& index) const {
  return vectorize(named(query, z, params), index);
}

std::vector<ParamDescs> collect_param_descs(const ComponentInventory& inventory, const Corpus& corpus) {
  std::vector<ParamDescs> out(inventory.size());
  for (const Pair& p : corpus.pairs) {
    auto idx = inventory.find(p.component);
    if (!idx) continue;
    for (const auto& [arg, desc] : p.param_descs) {
      auto [it, inserted] = out[*idx].try_emplace(arg, desc);
      if (!inserted && it->second.empty() && !desc.empty()) it->second = desc;
    }
  }
  return out;
}

}  // namespace fassist

#include "fassist/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fassist/error.hpp"

namespace fassist {

namespace {

bool is_ascii_alnum(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

bool has_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  });
}

// Decodes one UTF-8 sequence starting at s[i]. Returns the byte length, or 0
// for an invalid sequence.
std::size_t utf8_sequence(std::string_view s, std::size_t i, char32_t& cp) {
  auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = 0;
  if (b0 >= 0xC2 && b0 <= 0xDF) {
    len = 2;
    cp = b0 & 0x1F;
  } else if (b0 >= 0xE0 && b0 <= 0xEF) {
    len = 3;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xF0 && b0 <= 0xF4) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return 0;
  }
  if (i + len > s.size()) return 0;
  for (std::size_t k = 1; k < len; ++k) {
    auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  return len;
}

// Non-ASCII code points treated as separators: Latin-1 punctuation and
// symbols, general punctuation, CJK punctuation, fullwidth ASCII punctuation.
bool is_unicode_separator(char32_t cp) {
  return (cp >= 0x80 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 ||
         (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0x3000 && cp <= 0x303F) ||
         (cp >= 0xFF00 && cp <= 0xFF0F) || cp == 0xFEFF;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), ascii_lower);
  return out;
}

void check_identifier(std::string_view id, std::string_view what) {
  if (id.empty()) throw InvalidArgument(std::string(what) + " is empty");
  if (has_whitespace(id)) {
    throw InvalidArgument(std::string(what) + " '" + std::string(id) + "' contains whitespace");
  }
}

void append_identifier(std::string_view id, Zone zone, std::vector<std::string>& terms,
                       std::vector<Zone>& zones) {
  std::string whole = lowercase(id);
  std::vector<std::string> parts = split_identifier(id);
  terms.push_back(whole);
  zones.push_back(zone);
  if (parts.size() == 1 && parts.front() == whole) return;
  for (auto& p : parts) {
    terms.push_back(std::move(p));
    zones.push_back(zone);
  }
}

}  // namespace

TextSequence::TextSequence(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (const auto& t : tokens_) {
    if (t.empty()) throw InvalidArgument("empty token");
    if (has_whitespace(t)) throw InvalidArgument("token '" + t + "' contains whitespace");
  }
}

std::string TextSequence::joined() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (i) out += ' ';
    out += tokens_[i];
  }
  return out;
}

TextSequence tokenize_text(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < raw.size()) {
    auto c = static_cast<unsigned char>(raw[i]);
    if (c < 0x80) {
      if (is_ascii_alnum(c)) {
        current += ascii_lower(static_cast<char>(c));
      } else {
        flush();
      }
      ++i;
      continue;
    }
    char32_t cp = 0;
    std::size_t len = utf8_sequence(raw, i, cp);
    if (len == 0) {
      flush();
      ++i;
      continue;
    }
    if (is_unicode_separator(cp)) {
      flush();
    } else {
      current.append(raw.substr(i, len));
    }
    i += len;
  }
  flush();
  return TextSequence(std::move(tokens));
}

std::vector<std::string> split_identifier(std::string_view identifier) {
  std::vector<std::string> parts;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) parts.push_back(lowercase(current));
    current.clear();
  };
  auto is_upper = [](char c) { return c >= 'A' && c <= 'Z'; };
  auto is_lower_or_digit = [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'); };
  for (std::size_t i = 0; i < identifier.size(); ++i) {
    char c = identifier[i];
    if (!is_ascii_alnum(static_cast<unsigned char>(c)) && static_cast<unsigned char>(c) < 0x80) {
      flush();
      continue;
    }
    if (is_upper(c) && !current.empty()) {
      char prev = current.back();
      bool next_lower = i + 1 < identifier.size() && identifier[i + 1] >= 'a' && identifier[i + 1] <= 'z';
      // fooBar | HTTPServer -> HTTP, Server
      if (is_lower_or_digit(prev) || (is_upper(prev) && next_lower)) flush();
    }
    current += c;
  }
  flush();
  return parts;
}

std::string_view zone_name(Zone zone) noexcept {
  switch (zone) {
    case Zone::kNamespace: return "namespace";
    case Zone::kClass: return "class";
    case Zone::kFunction: return "function";
    case Zone::kArgument: return "argument";
  }
  return "unknown";
}

Component::Component(std::vector<std::string> namespace_path, std::optional<std::string> class_name,
                     std::string function_name, std::vector<std::string> arg_names)
    : namespace_(std::move(namespace_path)),
      class_name_(std::move(class_name)),
      function_name_(std::move(function_name)),
      arg_names_(std::move(arg_names)) {
  if (function_name_.empty()) throw InvalidArgument("missing function_name");
  check_identifier(function_name_, "function_name");
  for (const auto& ns : namespace_) check_identifier(ns, "namespace token");
  if (class_name_) check_identifier(*class_name_, "class_name");
  for (const auto& a : arg_names_) check_identifier(a, "argument name");

  for (const auto& ns : namespace_) append_identifier(ns, Zone::kNamespace, linearized_, zones_);
  if (class_name_) append_identifier(*class_name_, Zone::kClass, linearized_, zones_);
  append_identifier(function_name_, Zone::kFunction, linearized_, zones_);
  for (const auto& a : arg_names_) append_identifier(a, Zone::kArgument, linearized_, zones_);
}

std::optional<std::string> Component::qualified_class() const {
  if (!class_name_) return std::nullopt;
  std::string out;
  for (const auto& ns : namespace_) {
    out += ns;
    out += '.';
  }
  out += *class_name_;
  return out;
}

std::string Component::signature() const {
  std::string out;
  for (const auto& ns : namespace_) {
    out += ns;
    out += '.';
  }
  if (class_name_) {
    out += *class_name_;
    out += '.';
  }
  out += function_name_;
  out += '(';
  for (std::size_t i = 0; i < arg_names_.size(); ++i) {
    if (i) out += ", ";
    out += arg_names_[i];
  }
  out += ')';
  return out;
}

std::string Component::key() const {
  std::string out;
  for (std::size_t i = 0; i < linearized_.size(); ++i) {
    if (i) out += ' ';
    out += linearized_[i];
  }
  return out;
}

std::vector<std::string> linearize_component(const Component& c) { return c.linearized(); }

bool linearization_less(const Component& a, const Component& b) {
  return a.linearized() < b.linearized();
}

// ---------------------------------------------------------------------------
// ClassHierarchy

void ClassHierarchy::add_class(const std::string& id, TextSequence description) {
  check_identifier(id, "class identifier");
  auto [it, inserted] = class_descs_.try_emplace(id, std::move(description));
  if (!inserted && it->second.empty() && !description.empty()) it->second = std::move(description);
}

void ClassHierarchy::add_edge(const std::string& child, const std::string& parent) {
  if (child == parent) throw FormatError("hierarchy self-loop on " + child);
  add_class(child);
  add_class(parent);
  edges_.emplace(child, parent);
}

void ClassHierarchy::check_acyclic() const {
  enum class Mark { kNone, kActive, kDone };
  std::map<std::string, Mark> marks;
  std::vector<std::string> path;

  std::function<void(const std::string&)> visit = [&](const std::string& node) {
    marks[node] = Mark::kActive;
    path.push_back(node);
    for (auto it = edges_.lower_bound({node, std::string()}); it != edges_.end() && it->first == node; ++it) {
      const std::string& parent = it->second;
      Mark m = marks[parent];
      if (m == Mark::kActive) {
        std::string msg = "hierarchy cycle: ";
        auto start = std::find(path.begin(), path.end(), parent);
        for (auto p = start; p != path.end(); ++p) msg += *p + " -> ";
        msg += parent;
        throw FormatError(msg);
      }
      if (m == Mark::kNone) visit(parent);
    }
    path.pop_back();
    marks[node] = Mark::kDone;
  };

  for (const auto& [id, desc] : class_descs_) {
    if (marks[id] == Mark::kNone) visit(id);
  }
}

std::vector<std::string> ClassHierarchy::ancestors(const std::string& id) const {
  if (!contains(id)) return {};
  std::set<std::string> seen{id};
  std::vector<std::string> frontier{id};
  while (!frontier.empty()) {
    std::string node = std::move(frontier.back());
    frontier.pop_back();
    for (auto it = edges_.lower_bound({node, std::string()}); it != edges_.end() && it->first == node; ++it) {
      if (seen.insert(it->second).second) frontier.push_back(it->second);
    }
  }
  return {seen.begin(), seen.end()};
}

const TextSequence& ClassHierarchy::description(const std::string& id) const {
  static const TextSequence kEmpty;
  auto it = class_descs_.find(id);
  return it == class_descs_.end() ? kEmpty : it->second;
}

// ---------------------------------------------------------------------------
// ComponentInventory

ComponentInventory::ComponentInventory(std::vector<Component> components) {
  std::stable_sort(components.begin(), components.end(), linearization_less);
  for (auto& c : components) {
    if (!components_.empty() && components_.back().linearized() == c.linearized()) continue;
    by_key_.emplace(c.key(), components_.size());
    components_.push_back(std::move(c));
  }
}

ComponentInventory ComponentInventory::from_corpus(const Corpus& corpus) {
  std::vector<Component> all;
  all.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) all.push_back(p.component);
  return ComponentInventory(std::move(all));
}

std::optional<std::size_t> ComponentInventory::find(const Component& c) const {
  auto it = by_key_.find(c.key());
  if (it == by_key_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Splitting

void SplitSpec::validate() const {
  if (!(train_frac > 0 && dev_frac > 0 && test_frac > 0)) {
    throw InvalidArgument("split fractions must all be > 0");
  }
  if (std::abs(train_frac + dev_frac + test_frac - 1.0) > 1e-9) {
    throw InvalidArgument("split fractions must sum to 1");
  }
}

Rng::Rng(std::uint64_t seed) noexcept : state_(seed) {}

std::uint64_t Rng::next() noexcept {
  // splitmix64
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  if (bound <= 1) return 0;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return v % bound;
}

double Rng::uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

CorpusSplits split_corpus(const Corpus& corpus, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = corpus.pairs.size();
  if (n < 3) throw InvalidArgument("corpus too small to split: " + std::to_string(n) + " pairs (need >= 3)");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  shuffle_in_place(order, rng);

  auto portion = [n](double frac) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-9));
  };
  const std::size_t n_dev = portion(spec.dev_frac);
  const std::size_t n_test = portion(spec.test_frac);
  const std::size_t n_train = n - n_dev - n_test;

  CorpusSplits out;
  for (Corpus* c : {&out.train, &out.dev, &out.test}) {
    c->hierarchy = corpus.hierarchy;
    c->project_name = corpus.project_name;
    c->source_url_template = corpus.source_url_template;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const Pair& p = corpus.pairs[order[k]];
    if (k < n_train) {
      out.train.pairs.push_back(p);
    } else if (k < n_train + n_dev) {
      out.dev.pairs.push_back(p);
    } else {
      out.test.pairs.push_back(p);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// File format

namespace {

using nlohmann::json;

[[noreturn]] void line_error(std::size_t line, const std::string& msg) {
  throw FormatError("line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> string_array(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end()) line_error(line, std::string("missing ") + key);
  if (!it->is_array()) line_error(line, std::string(key) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) line_error(line, std::string(key) + " must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

ClassHierarchy read_hierarchy(std::istream& in) {
  ClassHierarchy h;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(raw);
    } catch (const json::parse_error& e) {
      line_error(line, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object()) line_error(line, "record must be an object");
    auto child = rec.find("child");
    if (child == rec.end() || !child->is_string() || child->get<std::string>().empty()) {
      line_error(line, "missing child");
    }
    TextSequence desc;
    if (auto d = rec.find("desc"); d != rec.end() && !d->is_null()) {
      if (!d->is_string()) line_error(line, "desc must be a string");
      desc = tokenize_text(d->get<std::string>());
    }
    std::optional<std::string> parent;
    if (auto p = rec.find("parent"); p != rec.end() && !p->is_null()) {
      if (!p->is_string()) line_error(line, "parent must be a string or null");
      parent = p->get<std::string>();
    }
    try {
      h.add_class(child->get<std::string>(), desc);
      if (parent) h.add_edge(child->get<std::string>(), *parent);
    } catch (const InvalidArgument& e) {
      line_error(line, e.what());
    } catch (const FormatError& e) {
      line_error(line, e.what());
    }
  }
  h.check_acyclic();
  return h;
}

}  // namespace

Corpus read_corpus(std::istream& corpus_in, std::istream* hierarchy_in) {
  Corpus corpus;
  if (hierarchy_in) corpus.hierarchy = read_hierarchy(*hierarchy_in);

  std::string raw;
  std::size_t line = 0;
  bool seen_record = false;
  while (std::getline(corpus_in, raw)) {
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(raw);
    } catch (const json::parse_error& e) {
      line_error(line, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object()) line_error(line, "record must be an object");

    if (!seen_record && rec.contains("project") && !rec.contains("function")) {
      if (!rec["project"].is_string()) line_error(line, "project must be a string");
      corpus.project_name = rec["project"].get<std::string>();
      if (auto t = rec.find("source_url_template"); t != rec.end() && !t->is_null()) {
        if (!t->is_string()) line_error(line, "source_url_template must be a string");
        corpus.source_url_template = t->get<std::string>();
      }
      seen_record = true;
      continue;
    }
    seen_record = true;

    auto fn = rec.find("function");
    if (fn == rec.end() || fn->is_null() || (fn->is_string() && fn->get<std::string>().empty())) {
      line_error(line, "missing function_name");
    }
    if (!fn->is_string()) line_error(line, "function must be a string");
    auto text = rec.find("text");
    if (text == rec.end() || !text->is_string()) line_error(line, "missing text");

    std::optional<std::string> cls;
    if (auto c = rec.find("class"); c != rec.end() && !c->is_null()) {
      if (!c->is_string()) line_error(line, "class must be a string or null");
      cls = c->get<std::string>();
    }
    auto file = rec.find("file");
    if (file == rec.end() || !file->is_string()) line_error(line, "missing file");
    auto lno = rec.find("line");
    if (lno == rec.end() || !lno->is_number_integer()) line_error(line, "missing line");

    std::map<std::string, TextSequence> params;
    if (auto pd = rec.find("param_descs"); pd != rec.end() && !pd->is_null()) {
      if (!pd->is_object()) line_error(line, "param_descs must be an object");
      for (const auto& [arg, desc] : pd->items()) {
        if (!desc.is_string()) line_error(line, "param_descs values must be strings");
        params.emplace(arg, tokenize_text(desc.get<std::string>()));
      }
    }

    try {
      Pair p{text->get<std::string>(),
             tokenize_text(text->get<std::string>()),
             Component(string_array(rec, "namespace", line), cls, fn->get<std::string>(),
                       string_array(rec, "args", line)),
             std::move(params),
             SourceLocation{file->get<std::string>(), lno->get<std::int64_t>()}};
      if (p.text.empty()) line_error(line, "text has no word tokens");
      if (!corpus.hierarchy.empty()) {
        if (auto q = p.component.qualified_class(); q && !corpus.hierarchy.contains(*q)) {
          line_error(line, "class " + *q + " not in hierarchy");
        }
      }
      corpus.pairs.push_back(std::move(p));
    } catch (const InvalidArgument& e) {
      line_error(line, e.what());
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& corpus_path,
                   const std::optional<std::filesystem::path>& hierarchy_path) {
  std::ifstream in(corpus_path);
  if (!in) throw Error("cannot open corpus file " + corpus_path.string());
  if (!hierarchy_path) return read_corpus(in, nullptr);
  std::ifstream hin(*hierarchy_path);
  if (!hin) throw Error("cannot open hierarchy file " + hierarchy_path->string());
  try {
    return read_corpus(in, &hin);
  } catch (const FormatError& e) {
    throw FormatError(corpus_path.filename().string() + ": " + e.what());
  }
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  json header = {{"project", corpus.project_name},
                 {"source_url_template", corpus.source_url_template ? json(*corpus.source_url_template) : json(nullptr)}};
  out << header.dump() << '\n';
  for (const Pair& p : corpus.pairs) {
    const Component& c = p.component;
    json params = json::object();
    for (const auto& [arg, desc] : p.param_descs) params[arg] = desc.joined();
    json rec = {{"text", p.description},
                {"namespace", c.namespace_path()},
                {"class", c.class_name() ? json(*c.class_name()) : json(nullptr)},
                {"function", c.function_name()},
                {"args", c.arg_names()},
                {"param_descs", params},
                {"file", p.source.file},
                {"line", p.source.line}};
    out << rec.dump() << '\n';
  }
}

void write_hierarchy(const ClassHierarchy& hierarchy, std::ostream& out) {
  const auto& edges = hierarchy.edges();
  for (const auto& [id, desc] : hierarchy.class_descs()) {
    auto it = edges.lower_bound({id, std::string()});
    bool any_parent = false;
    for (; it != edges.end() && it->first == id; ++it) {
      any_parent = true;
      out << json{{"child", id}, {"parent", it->second}, {"desc", desc.joined()}}.dump() << '\n';
    }
    if (!any_parent) out << json{{"child", id}, {"parent", nullptr}, {"desc", desc.joined()}}.dump() << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& corpus_path,
                 const std::optional<std::filesystem::path>& hierarchy_path) {
  std::ofstream out(corpus_path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file " + corpus_path.string());
  write_corpus(corpus, out);
  if (hierarchy_path) {
    std::ofstream hout(*hierarchy_path, std::ios::binary);
    if (!hout) throw Error("cannot write hierarchy file " + hierarchy_path->string());
    write_hierarchy(corpus.hierarchy, hout);
  }
}

}  // namespace fassist

#include "fassist/model.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fassist/error.hpp"

namespace fassist {

using nlohmann::json;

Featurizer Model::featurizer() const {
  FeatureContext ctx;
  ctx.translation = &text_given_component;
  ctx.score_options = scoring;
  ctx.phrases = phrases ? &*phrases : nullptr;
  ctx.hierarchy = &hierarchy;
  return Featurizer(ctx, FeatureSet::kFull);
}

RerankContext Model::rerank_context(const Featurizer& f) const { return RerankContext{&inventory, &param_descs, &f}; }

std::vector<Candidate> Model::rank_translation(const TextSequence& x, std::size_t k) const {
  return rank_components(x, inventory, text_given_component, k, scoring);
}

std::vector<Candidate> Model::rank(const TextSequence& x) const {
  auto full = rank_translation(x, inventory.size());
  if (!reranker) return full;
  const Featurizer f = featurizer();
  return rerank_prefix(x, full, pool_size, reranker->weights, reranker->index, rerank_context(f));
}

bool operator==(const Model& a, const Model& b) {
  return a.project == b.project && a.inventory.components() == b.inventory.components() &&
         a.param_descs == b.param_descs && a.hierarchy == b.hierarchy &&
         a.scoring.length_constant == b.scoring.length_constant && a.scoring.floor == b.scoring.floor &&
         a.text_given_component == b.text_given_component && a.component_given_text == b.component_given_text &&
         a.forward_log.log_likelihood == b.forward_log.log_likelihood &&
         a.reverse_log.log_likelihood == b.reverse_log.log_likelihood && a.phrases == b.phrases &&
         a.reranker == b.reranker && a.pool_size == b.pool_size;
}

Model init_model(const Corpus& api, const ScoreOptions& scoring) {
  Model m;
  m.project = api.project_name;
  m.inventory = ComponentInventory::from_corpus(api);
  if (m.inventory.empty()) throw InvalidArgument("cannot build a model over an empty corpus");
  m.param_descs = collect_param_descs(m.inventory, api);
  m.hierarchy = api.hierarchy;
  m.scoring = scoring;
  m.scoring.evaluation_counter = nullptr;
  return m;
}

void train_translation(Model& model, const Corpus& train, std::size_t iterations) {
  Model1Options opts;
  opts.iterations = iterations;
  auto forward = train_model1(train, Direction::kTextGivenComponent, opts);
  auto reverse = train_model1(train, Direction::kComponentGivenText, opts);
  model.text_given_component = std::move(forward.table);
  model.forward_log = std::move(forward.log);
  model.component_given_text = std::move(reverse.table);
  model.reverse_log = std::move(reverse.log);
  model.phrases.reset();
  model.reranker.reset();
}

void build_phrases(Model& model, const Corpus& train, std::size_t max_len) {
  const auto links = align_corpus(train, model.text_given_component, model.component_given_text);
  model.phrases = build_phrase_table(train, links, max_len);
  model.reranker.reset();
}

RerankPools build_features(const Model& model, const Corpus& train, std::size_t pool_size, std::size_t folds,
                           std::size_t em_iterations, std::size_t phrase_max_len) {
  RerankPools pools;
  if (folds < 2 || train.pairs.size() < folds) {
    const Featurizer f = model.featurizer();
    pools.examples = build_training_pools(train, model.rerank_context(f), pool_size, pools.index);
    pools.index.freeze();
    return pools;
  }
  std::vector<TrainingExample> by_pair(train.pairs.size());
  for (std::size_t fold = 0; fold < folds; ++fold) {
    Corpus rest;
    Corpus held;
    rest.hierarchy = held.hierarchy = train.hierarchy;
    for (std::size_t i = 0; i < train.pairs.size(); ++i) {
      (i % folds == fold ? held : rest).pairs.push_back(train.pairs[i]);
    }
    Model m;
    m.scoring = model.scoring;
    train_translation(m, rest, em_iterations);
    build_phrases(m, rest, phrase_max_len);
    FeatureContext ctx;
    ctx.translation = &m.text_given_component;
    ctx.score_options = model.scoring;
    ctx.phrases = &*m.phrases;
    ctx.hierarchy = &model.hierarchy;
    const Featurizer f(ctx, FeatureSet::kFull);
    auto examples = build_training_pools(held, model.rerank_context(f), pool_size, pools.index);
    for (std::size_t k = 0; k < examples.size(); ++k) by_pair[fold + k * folds] = std::move(examples[k]);
  }
  pools.examples = std::move(by_pair);
  pools.index.freeze();
  return pools;
}

void train_reranker(Model& model, RerankPools pools, const Corpus& dev, const RerankTrainConfig& config,
                    RerankTrainLog* log) {
  const Featurizer f = model.featurizer();
  RerankerModel r;
  r.weights = train_reranker_weights(pools.examples, pools.index, dev, model.rerank_context(f), config, log);
  r.index = std::move(pools.index);
  model.reranker = std::move(r);
  model.pool_size = config.pool_size;
}

Model train_model(const Corpus& api, const CorpusSplits& splits, const TrainingSettings& settings,
                  bool skip_reranker, RerankTrainLog* log) {
  Model m = init_model(api, settings.scoring);
  train_translation(m, splits.train, settings.em_iterations);
  build_phrases(m, splits.train, settings.phrase_max_len);
  m.pool_size = settings.reranker.pool_size;
  if (!skip_reranker) {
    train_reranker(m,
                   build_features(m, splits.train, settings.reranker.pool_size, settings.feature_folds,
                                  settings.em_iterations, settings.phrase_max_len),
                   splits.dev, settings.reranker, log);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::vector<std::string> split_spaces(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

json table_to_json(const LexTable& t, const TrainLog& log) {
  json rows = json::array();
  for (std::uint32_t g = 0; g < t.given_vocab().size(); ++g) {
    json row = json::array();
    for (const auto& [e, p] : t.row(g)) row.push_back(json::array({e, p}));
    rows.push_back(std::move(row));
  }
  return {{"direction", direction_name(t.direction())},
          {"has_null", t.has_null()},
          {"given", t.given_vocab()},
          {"emitted", t.emitted_vocab()},
          {"rows", std::move(rows)},
          {"train_log", log.log_likelihood}};
}

LexTable table_from_json(const json& j, TrainLog& log) {
  auto dir = parse_direction(j.at("direction").get<std::string>());
  if (!dir) throw FormatError("unknown table direction");
  std::vector<LexTable::Row> rows;
  for (const auto& row : j.at("rows")) {
    LexTable::Row r;
    for (const auto& cell : row) r.emplace_back(cell.at(0).get<std::uint32_t>(), cell.at(1).get<double>());
    rows.push_back(std::move(r));
  }
  log.log_likelihood = j.at("train_log").get<std::vector<double>>();
  return LexTable(*dir, j.at("given").get<std::vector<std::string>>(), j.at("emitted").get<std::vector<std::string>>(),
                  std::move(rows), j.at("has_null").get<bool>());
}

json phrases_to_json(const PhraseTable& t) {
  auto dump = [](const std::map<PhrasePair, std::size_t>& m) {
    json arr = json::array();
    for (const auto& [pp, count] : m) arr.push_back(json::array({join_phrase(pp.text), join_phrase(pp.component), count}));
    return arr;
  };
  return {{"max_len", t.max_len()}, {"phrases", dump(t.phrases())}, {"hierarchical", dump(t.hierarchical())}};
}

PhraseTable phrases_from_json(const json& j) {
  PhraseTable t(j.at("max_len").get<std::size_t>());
  for (const char* key : {"phrases", "hierarchical"}) {
    for (const auto& e : j.at(key)) {
      t.add({split_spaces(e.at(0).get<std::string>()), split_spaces(e.at(1).get<std::string>())},
            e.at(2).get<std::size_t>());
    }
  }
  return t;
}

}  // namespace

std::string serialize_model(const Model& m) {
  json inventory = json::array();
  for (std::size_t i = 0; i < m.inventory.size(); ++i) {
    const Component& c = m.inventory[i];
    json params = json::object();
    for (const auto& [arg, desc] : m.param_descs[i]) params[arg] = desc.joined();
    inventory.push_back({{"namespace", c.namespace_path()},
                         {"class", c.class_name() ? json(*c.class_name()) : json(nullptr)},
                         {"function", c.function_name()},
                         {"args", c.arg_names()},
                         {"param_descs", std::move(params)}});
  }
  json hierarchy = json::array();
  for (const auto& [id, desc] : m.hierarchy.class_descs()) {
    json parents = json::array();
    for (auto it = m.hierarchy.edges().lower_bound({id, std::string()});
         it != m.hierarchy.edges().end() && it->first == id; ++it) {
      parents.push_back(it->second);
    }
    hierarchy.push_back({{"class", id}, {"parents", std::move(parents)}, {"desc", desc.joined()}});
  }
  json doc = {{"format", "fassist-model"},
              {"version", kModelFormatVersion},
              {"project", m.project},
              {"scoring", {{"length_constant", m.scoring.length_constant}, {"floor", m.scoring.floor}}},
              {"inventory", std::move(inventory)},
              {"hierarchy", std::move(hierarchy)},
              {"translation", m.text_given_component.given_vocab().empty()
                                  ? json(nullptr)
                                  : json{{"text_given_component", table_to_json(m.text_given_component, m.forward_log)},
                                         {"component_given_text", table_to_json(m.component_given_text, m.reverse_log)}}},
              {"phrases", m.phrases ? phrases_to_json(*m.phrases) : json(nullptr)},
              {"pool_size", m.pool_size}};
  if (m.reranker) {
    doc["reranker"] = {{"features", m.reranker->index.names()},
                       {"frozen", m.reranker->index.frozen()},
                       {"weights", std::vector<double>(m.reranker->weights.values().begin(),
                                                       m.reranker->weights.values().end())}};
  } else {
    doc["reranker"] = nullptr;
  }
  return doc.dump() + "\n";
}

Model parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "fassist-model") throw FormatError("not a model file");
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw FormatError("model format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    }
    Model m;
    m.project = doc.at("project").get<std::string>();
    m.scoring.length_constant = doc.at("scoring").at("length_constant").get<bool>();
    m.scoring.floor = doc.at("scoring").at("floor").get<double>();

    std::vector<Component> comps;
    std::vector<ParamDescs> params;
    for (const auto& c : doc.at("inventory")) {
      std::optional<std::string> cls;
      if (!c.at("class").is_null()) cls = c.at("class").get<std::string>();
      comps.emplace_back(c.at("namespace").get<std::vector<std::string>>(), cls, c.at("function").get<std::string>(),
                         c.at("args").get<std::vector<std::string>>());
      ParamDescs pd;
      for (const auto& [arg, desc] : c.at("param_descs").items()) pd.emplace(arg, tokenize_text(desc.get<std::string>()));
      params.push_back(std::move(pd));
    }
    m.inventory = ComponentInventory(comps);
    if (m.inventory.size() != comps.size()) throw FormatError("model inventory contains duplicate components");
    for (std::size_t i = 0; i < comps.size(); ++i) {
      if (!(m.inventory[i] == comps[i])) throw FormatError("model inventory is not in canonical order");
    }
    m.param_descs = std::move(params);

    for (const auto& h : doc.at("hierarchy")) {
      const auto id = h.at("class").get<std::string>();
      m.hierarchy.add_class(id, tokenize_text(h.at("desc").get<std::string>()));
      for (const auto& p : h.at("parents")) m.hierarchy.add_edge(id, p.get<std::string>());
    }
    m.hierarchy.check_acyclic();

    if (const auto& tr = doc.at("translation"); !tr.is_null()) {
      m.text_given_component = table_from_json(tr.at("text_given_component"), m.forward_log);
      m.component_given_text = table_from_json(tr.at("component_given_text"), m.reverse_log);
      if (m.text_given_component.direction() != Direction::kTextGivenComponent ||
          m.component_given_text.direction() != Direction::kComponentGivenText) {
        throw FormatError("translation tables stored under the wrong direction");
      }
    }
    if (!doc.at("phrases").is_null()) m.phrases = phrases_from_json(doc.at("phrases"));
    m.pool_size = doc.at("pool_size").get<std::size_t>();
    if (!doc.at("reranker").is_null()) {
      const auto& r = doc.at("reranker");
      RerankerModel rm;
      rm.index = FeatureIndex::from_names(r.at("features").get<std::vector<std::string>>(), r.at("frozen").get<bool>());
      rm.weights = WeightVector(r.at("weights").get<std::vector<double>>());
      if (rm.weights.size() != rm.index.size()) {
        throw FormatError("reranker weight dimension " + std::to_string(rm.weights.size()) +
                          " does not match feature index size " + std::to_string(rm.index.size()));
      }
      m.reranker = std::move(rm);
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file " + path.string());
  out << serialize_model(model);
  if (!out) throw Error("failed writing model file " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace fassist

// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fassist/evaluation.hpp"
#include "fassist/model.hpp"
#include "fassist/pipeline.hpp"
#include "fassist/reranker.hpp"
#include "fassist/service.hpp"
#include "fassist/translation.hpp"
#include "test_support.hpp"

using namespace fassist;
using V = std::vector<std::string>;

namespace tol {
constexpr double kModel1Rel = 1e-10;
constexpr double kEmSlack = 1e-9;
constexpr double kNormalization = 1e-9;
constexpr double kGradientRel = 1e-4;
constexpr double kFiniteDiffStep = 1e-5;
}  // namespace tol

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Model 1 exactness

double enumerate_alignments(const V& x, const V& z, const LexTable& t) {
  V given = z;
  given.insert(given.begin(), std::string(kNullTerm));
  std::vector<std::size_t> a(x.size(), 0);
  double total = 0.0;
  while (true) {
    double prod = 1.0;
    for (std::size_t j = 0; j < x.size(); ++j) prod *= t.prob(x[j], given[a[j]]) / static_cast<double>(given.size());
    total += prod;
    std::size_t j = 0;
    while (j < x.size() && ++a[j] == given.size()) a[j++] = 0;
    if (j == x.size()) break;
  }
  return total;
}

void all_sequences(const V& vocab, std::size_t max_len, std::vector<V>& out) {
  std::vector<V> frontier = {{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<V> next;
    for (const auto& s : frontier) {
      for (const auto& w : vocab) {
        auto e = s;
        e.push_back(w);
        next.push_back(e);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
}

Outcome model1_exactness() {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const V given = {std::string(kNullTerm), "g0", "g1", "g2"};
  const V emitted = {"e0", "e1", "e2", "e3"};
  std::vector<V> xs, zs;
  all_sequences(emitted, 3, xs);
  all_sequences({"g0", "g1", "g2"}, 3, zs);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int table = 0; table < 10; ++table) {
    std::vector<LexTable::Row> rows;
    for (std::size_t g = 0; g < given.size(); ++g) {
      LexTable::Row r;
      for (std::uint32_t e = 0; e < emitted.size(); ++e) {
        // NULL rows are dense so every word has positive mass; others are sparse.
        if (g == 0 || gen() % 3 != 0) r.emplace_back(e, u(gen));
      }
      if (r.empty()) r.emplace_back(0, 1.0);
      double s = 0.0;
      for (auto& [e, p] : r) s += p;
      for (auto& [e, p] : r) p /= s;
      rows.push_back(r);
    }
    const LexTable t(Direction::kTextGivenComponent, given, emitted, rows, true);
    for (const auto& x : xs) {
      for (const auto& z : zs) {
        const double bf = enumerate_alignments(x, z, t);
        const double got = std::exp(likelihood(x, z, t));
        worst = std::max(worst, std::abs(got - bf) / bf);
        ++checked;
      }
    }
  }
  std::ostringstream d;
  d << checked << " (x, z) pairs over 10 random tables, max relative error " << worst;
  return {worst <= tol::kModel1Rel, d.str()};
}

// ---------------------------------------------------------------------------
// EM health

Outcome em_health() {
  std::vector<std::pair<std::string, std::function<Model1Result(Model1Options&)>>> fixtures;
  const std::vector<BitextPair> das = {{{"das", "haus"}, {"the", "house"}}, {{"das"}, {"the"}}};
  std::vector<BitextPair> random_pairs;
  std::mt19937 gen(9);
  for (int i = 0; i < 40; ++i) {
    BitextPair p;
    for (int k = 0, n = 1 + static_cast<int>(gen() % 4); k < n; ++k) p.given.push_back("g" + std::to_string(gen() % 12));
    for (int k = 0, n = 1 + static_cast<int>(gen() % 5); k < n; ++k) p.emitted.push_back("e" + std::to_string(gen() % 15));
    random_pairs.push_back(p);
  }
  const Corpus fig = testing::figure1_corpus();
  const Corpus nltk = load_corpus(testing::bundled_data("nltk/corpus.jsonl"));
  for (Direction d : {Direction::kTextGivenComponent, Direction::kComponentGivenText}) {
    const std::string dn(direction_name(d));
    fixtures.push_back({"das-haus/" + dn, [&, d](Model1Options& o) { return train_model1(das, d, o); }});
    fixtures.push_back({"random/" + dn, [&, d](Model1Options& o) { return train_model1(random_pairs, d, o); }});
    fixtures.push_back({"figure1/" + dn, [&, d](Model1Options& o) { return train_model1(fig, d, o); }});
    fixtures.push_back({"nltk/" + dn, [&, d](Model1Options& o) { return train_model1(nltk, d, o); }});
  }
  bool ok = true;
  double worst_norm = 0.0;
  double worst_drop = 0.0;
  std::string bad;
  for (auto& [name, run] : fixtures) {
    Model1Options o;
    o.iterations = 15;
    o.on_iteration = [&](std::size_t, const LexTable& t) { worst_norm = std::max(worst_norm, t.max_normalization_error()); };
    const auto r = run(o);
    const auto& ll = r.log.log_likelihood;
    for (std::size_t i = 1; i < ll.size(); ++i) {
      const double drop = ll[i - 1] - ll[i];
      worst_drop = std::max(worst_drop, drop);
      if (drop > tol::kEmSlack) {
        ok = false;
        bad = name;
      }
    }
    if (ll.size() != o.iterations) {
      ok = false;
      bad = name + " (log length)";
    }
  }
  ok = ok && worst_norm <= tol::kNormalization;
  std::ostringstream d;
  d << fixtures.size() << " fixtures x 15 iterations, max log-likelihood drop " << worst_drop
    << ", max row-sum error " << worst_norm;
  if (!bad.empty()) d << ", first failure " << bad;
  return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// Reranker gradient

double dense_objective(const std::vector<TrainingExample>& ex, const std::vector<double>& w, double l2) {
  double total = 0.0;
  for (const auto& e : ex) {
    std::vector<double> s;
    for (const auto& c : e.candidates) {
      double v = 0.0;
      for (const auto& [id, x] : c.entries) v += w[id] * x;
      s.push_back(v);
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - mx);
    total += s[e.gold] - mx - std::log(z);
  }
  double norm = 0.0;
  for (double v : w) norm += v * v;
  return total - 0.5 * l2 * norm;
}

Outcome gradient_check() {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t dim = 10;
  double worst = 0.0;
  std::size_t coords = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TrainingExample> ex(4);
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
    const double l2 = trial % 2 ? 1e-5 : 0.3;
    const auto g = conditional_log_likelihood_gradient(ex, w, l2);
    const std::vector<double> base(w.values().begin(), w.values().end());
    for (std::size_t i = 0; i < dim; ++i) {
      auto plus = base, minus = base;
      plus[i] += tol::kFiniteDiffStep;
      minus[i] -= tol::kFiniteDiffStep;
      const double fd = (dense_objective(ex, plus, l2) - dense_objective(ex, minus, l2)) / (2 * tol::kFiniteDiffStep);
      const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
      worst = std::max(worst, std::abs(fd - g[i]) / scale);
      ++coords;
    }
  }
  std::ostringstream d;
  d << coords << " coordinates on 50 random 5-candidate fixtures, max relative error " << worst;
  return {worst < tol::kGradientRel, d.str()};
}

// ---------------------------------------------------------------------------
// Metric oracle

Outcome metric_oracle() {
  std::mt19937_64 gen(77);
  std::vector<Component> universe;
  for (int i = 0; i < 40; ++i) universe.push_back(testing::comp({"m"}, std::nullopt, "f" + std::to_string(i)));
  bool ok = true;
  for (int f = 0; f < 100; ++f) {
    const std::size_t n = 1 + gen() % 20;
    std::vector<std::vector<Component>> rankings;
    std::vector<Component> golds;
    std::size_t a1 = 0, a10 = 0;
    double rr = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
      auto perm = universe;
      std::shuffle(perm.begin(), perm.end(), gen);
      perm.erase(perm.begin() + static_cast<std::ptrdiff_t>(10 + gen() % 20), perm.end());
      rankings.push_back(perm);
      golds.push_back(universe[gen() % universe.size()]);
      for (std::size_t r = 0; r < perm.size(); ++r) {
        if (perm[r].linearized() == golds.back().linearized()) {
          a1 += r == 0;
          a10 += r < 10;
          rr += 1.0 / static_cast<double>(r + 1);
          break;
        }
      }
    }
    const auto m = compute_metrics(rankings, golds);
    const double dn = static_cast<double>(n);
    ok = ok && m.acc_at_1 == a1 / dn && m.acc_at_10 == a10 / dn && m.mrr == rr / dn;
    ok = ok && m.acc_at_1 <= m.acc_at_10 && m.acc_at_1 <= m.mrr;
  }
  return {ok, "100 random fixtures, exact equality with brute-force recomputation"};
}

// ---------------------------------------------------------------------------
// Desk-scale directional replication

Outcome directional() {
  const Corpus c = load_corpus(testing::bundled_data("nltk/corpus.jsonl"), testing::bundled_data("nltk/hierarchy.jsonl"));
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = run_experiment(c, SplitSpec{}, {System::kBow, System::kTermMatch, System::kTranslation, System::kReranker});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto mrr = [&](System s) { return report.find(s)->test.mrr; };
  const double bow = mrr(System::kBow), tm = mrr(System::kTermMatch), tr = mrr(System::kTranslation),
               rk = mrr(System::kReranker);
  const bool rk_ge_tr = rk >= tr;
  const bool tr_gt_tm = tr > tm;
  const bool tm_gt_bow = tm > bow;
  const bool dev_ok = report.find(System::kReranker)->dev.mrr >= report.find(System::kTranslation)->dev.mrr;
  std::ostringstream d;
  d.setf(std::ios::fixed);
  d.precision(1);
  d << c.pairs.size() << " nltk pairs, test MRR BoW " << 100 * bow << " / Term Match " << 100 * tm << " / Translation "
    << 100 * tr << " / Reranker " << 100 * rk << "; dev MRR Translation "
    << 100 * report.find(System::kTranslation)->dev.mrr << " / Reranker " << 100 * report.find(System::kReranker)->dev.mrr
    << "; Reranker>=Translation " << (rk_ge_tr ? "yes" : "NO") << ", Translation>Term Match " << (tr_gt_tm ? "yes" : "NO")
    << ", Term Match>BoW " << (tm_gt_bow ? "yes" : "NO") << ", dev Reranker>=Translation " << (dev_ok ? "yes" : "NO");
  d.precision(0);
  d << "; " << secs << "s";
  return {c.pairs.size() >= 300 && rk_ge_tr && tr_gt_tm && tm_gt_bow && dev_ok && secs < 600, d.str()};
}

// ---------------------------------------------------------------------------
// Memorization sanity

Outcome memorization() {
  Corpus c;
  c.project_name = "synthetic";
  for (int i = 0; i < 50; ++i) {
    const std::string k = std::to_string(i);
    c.pairs.push_back(testing::pair("alpha" + k + " beta" + k + " gamma" + k,
                                    testing::comp({"syn"}, std::nullopt, "op" + k, {"arg" + k})));
  }
  Model m = init_model(c);
  train_translation(m, c, 10);
  std::vector<std::optional<std::size_t>> ranks;
  for (const auto& p : c.pairs) {
    ranks.push_back(gold_rank(m.rank_translation(p.text, m.inventory.size()), *m.inventory.find(p.component)));
  }
  const auto r = compute_metrics(ranks);
  std::ostringstream d;
  d << "50 components, translation Acc@1 on training queries " << r.acc_at_1;
  return {r.acc_at_1 == 1.0, d.str()};
}

// ---------------------------------------------------------------------------
// Determinism

std::string nltk_config(const std::filesystem::path& work) {
  return R"({"project": "nltk", "seed": 13, "work_dir": ")" + work.string() + R"(",
             "tasks": ["load", "split", "train_translation", "build_phrases", "build_features", "train_reranker", "evaluate"],
             "load": {"corpus": ")" + testing::bundled_data("nltk/corpus.jsonl").string() + R"(",
                      "hierarchy": ")" + testing::bundled_data("nltk/hierarchy.jsonl").string() + R"("}})";
}

Outcome determinism() {
  testing::TempDir a, b;
  run_pipeline(parse_config(nltk_config(a / "work")));
  run_pipeline(parse_config(nltk_config(b / "work")));
  bool ok = true;
  std::string diff;
  for (const char* f : {artifacts::kModel, artifacts::kReport, artifacts::kReportText, artifacts::kTrain, artifacts::kDev,
                        artifacts::kTest}) {
    const auto x = testing::read_file(a / "work" / f);
    if (x.empty() || x != testing::read_file(b / "work" / f)) {
      ok = false;
      diff += std::string(" ") + f;
    }
  }
  return {ok, ok ? "two full nltk pipeline runs: model, reports and splits byte-identical" : "differs:" + diff};
}

// ---------------------------------------------------------------------------
// Service contract

Outcome service_contract() {
  const Corpus fig = testing::figure1_corpus();
  const auto splits = split_corpus(fig, SplitSpec{});
  TrainingSettings s;
  s.feature_folds = 2;
  const CorpusSplits all{fig, splits.dev, splits.test};
  auto engine = std::make_shared<QueryEngine>(train_model(fig, all, s), fig);

  std::map<std::string, std::string> expected_url;
  for (const auto& p : fig.pairs) {
    std::string u = *fig.source_url_template;
    u.replace(u.find("{file}"), 6, p.source.file);
    u.replace(u.find("{line}"), 6, std::to_string(p.source.line));
    expected_url.emplace(p.component.key(), u);
  }

  QueryServer server(engine, ServerOptions{.host = "127.0.0.1", .port = 0});
  const int port = server.bind();
  std::thread t([&] { server.listen(); });
  for (int i = 0; i < 400 && !server.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  httplib::Client cli("127.0.0.1", port);

  bool ok = true;
  std::string why;
  std::size_t results = 0;
  for (const char* q : {"add+arc", "Adds+an+arc+from+head+to+dependent", "remove+node+by+address", "tokenize+text",
                        "frequency+of+a+sample", "train+a+tagger"}) {
    for (int k : {1, 3, 10, 50}) {
      auto res = cli.Get("/api/query?q=" + std::string(q) + "&k=" + std::to_string(k));
      if (!res || res->status != 200) {
        ok = false;
        why = "query failed";
        continue;
      }
      const auto j = nlohmann::json::parse(res->body);
      if (j.size() != std::min<std::size_t>(k, engine->model().inventory.size())) ok = false, why = "wrong count";
      for (std::size_t i = 0; i < j.size(); ++i) {
        ++results;
        if (j[i]["rank"].get<std::size_t>() != i + 1) ok = false, why = "ranks not contiguous";
        if (i > 0 && j[i]["score"].get<double>() > j[i - 1]["score"].get<double>()) ok = false, why = "scores increase";
        const auto& cj = j[i]["component"];
        std::optional<std::string> cls;
        if (!cj["class"].is_null()) cls = cj["class"].get<std::string>();
        const Component z(cj["namespace"].get<V>(), cls, cj["function"].get<std::string>(), cj["args"].get<V>());
        if (j[i]["source_url"].get<std::string>() != expected_url.at(z.key())) ok = false, why = "source_url mismatch";
      }
    }
  }
  std::string empty_status;
  for (const char* path : {"/api/query?q=", "/api/query?q=+++", "/api/query"}) {
    auto res = cli.Get(path);
    const bool four = res && res->status >= 400 && res->status < 500;
    if (!four) ok = false, why = std::string("no 4xx for ") + path;
    empty_status += (empty_status.empty() ? "" : ",") + (res ? std::to_string(res->status) : std::string("none"));
  }
  server.stop();
  t.join();
  std::ostringstream d;
  d << results << " results checked over HTTP; empty queries -> " << empty_status;
  if (!why.empty()) d << "; " << why;
  return {ok, d.str()};
}

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"Model 1 exactness", model1_exactness},
      {"EM health", em_health},
      {"Reranker gradient", gradient_check},
      {"Metric oracle", metric_oracle},
      {"Desk-scale directional replication", directional},
      {"Memorization sanity", memorization},
      {"Determinism", determinism},
      {"Service contract", service_contract},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "fassist/evaluation.hpp"
#include "fassist/model.hpp"
#include "fassist/pipeline.hpp"
#include "fassist/service.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

/// Listens until SIGINT/SIGTERM, then shuts the server down cleanly.
void serve_until_signal(fassist::QueryServer& server) {
  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread watcher([&server] {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  });
  server.listen();
  g_stop = true;
  watcher.join();
  std::cerr << "server stopped\n";
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fassist::Error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fassist: natural-language search over API functions"};
  app.require_subcommand(1);

  // extract
  auto* extract = app.add_subcommand("extract", "Run the external extractor over a source tree");
  fassist::ExtractSettings ex;
  std::string ex_corpus, ex_hier, ex_project;
  std::string ex_repo, ex_tpl;
  extract->add_option("--repo", ex_repo, "Source repository")->required();
  extract->add_option("--out-corpus", ex_corpus, "Output corpus file")->required();
  extract->add_option("--out-hierarchy", ex_hier, "Output hierarchy file")->required();
  extract->add_option("--project", ex_project, "Project name");
  extract->add_option("--url-template", ex_tpl, "Source URL template with {file} and {line}");
  extract->add_flag("--include-private", ex.include_private, "Keep private functions");
  extract->add_option("--extractor", ex.command, "Extractor command")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Run a pipeline config");
  std::string config_path;
  fassist::ConfigOverrides overrides;
  std::uint64_t seed = 0;
  run->add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_flag("--baseline", overrides.baseline, "Evaluate baselines only (no reranker)");
  auto* seed_opt = run->add_option("--seed", seed, "Global random seed");
  run->add_option("--set", overrides.sets, "Override a setting: section.key=value")->take_all();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Train and evaluate all systems on a corpus");
  std::string ev_corpus, ev_hier, ev_json, ev_text;
  std::uint64_t ev_seed = 13;
  bool ev_baseline = false;
  evaluate->add_option("--corpus", ev_corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--hierarchy", ev_hier, "Hierarchy file")->check(CLI::ExistingFile);
  evaluate->add_option("--seed", ev_seed, "Split and training seed")->capture_default_str();
  evaluate->add_flag("--baseline", ev_baseline, "Skip the reranker");
  evaluate->add_option("--report-json", ev_json, "Write the structured report here");
  evaluate->add_option("--report-text", ev_text, "Write the text table here");

  // query
  auto* query = app.add_subcommand("query", "Rank components for a description");
  std::string q_model, q_text, q_corpus, q_hier;
  std::size_t q_k = fassist::kDefaultResults;
  bool q_json = false;
  query->add_option("--model", q_model, "Model file")->required()->check(CLI::ExistingFile);
  query->add_option("--text", q_text, "Query text")->required();
  query->add_option("--k", q_k, "Number of results")->capture_default_str();
  query->add_option("--corpus", q_corpus, "Corpus for descriptions and source links")->check(CLI::ExistingFile);
  query->add_option("--hierarchy", q_hier, "Hierarchy file")->check(CLI::ExistingFile);
  query->add_flag("--json", q_json, "Print the JSON served by /api/query");

  // serve
  auto* serve = app.add_subcommand("serve", "Start the HTTP query service");
  std::string s_model, s_corpus, s_hier, s_static;
  fassist::ServerOptions s_opts;
  serve->add_option("--model", s_model, "Model file")->required()->check(CLI::ExistingFile);
  serve->add_option("--corpus", s_corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  serve->add_option("--hierarchy", s_hier, "Hierarchy file")->check(CLI::ExistingFile);
  serve->add_option("--port", s_opts.port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--host", s_opts.host, "Bind address")->capture_default_str();
  serve->add_option("--static", s_static, "Directory served at /")->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  auto load = [](const std::string& corpus, const std::string& hier) {
    return fassist::load_corpus(corpus, hier.empty() ? std::nullopt : std::optional<std::filesystem::path>(hier));
  };

  try {
    if (*extract) {
      ex.repo = ex_repo;
      if (!ex_tpl.empty()) ex.url_template = ex_tpl;
      const auto cmd = fassist::extractor_command(ex, ex_project, ex_corpus, ex_hier);
      const int rc = std::system(cmd.c_str());
      if (rc != 0) {
        std::cerr << "error: extractor exited with status " << rc << "\n";
        return 1;
      }
    } else if (*run) {
      if (*seed_opt) overrides.seed = seed;
      const auto config = fassist::load_config(config_path, overrides);
      fassist::PipelineHooks hooks;
      hooks.log = &std::cerr;
      hooks.serve = [](fassist::QueryServer& server, int) { serve_until_signal(server); };
      const auto result = fassist::run_pipeline(config, hooks);
      if (result.report) std::cout << fassist::report_table(*result.report);
    } else if (*evaluate) {
      const auto corpus = load(ev_corpus, ev_hier);
      fassist::SplitSpec spec;
      spec.seed = ev_seed;
      fassist::TrainingSettings settings;
      settings.reranker.seed = ev_seed;
      settings.bow.seed = ev_seed;
      std::set<fassist::System> systems = {fassist::System::kBow, fassist::System::kTermMatch,
                                           fassist::System::kTranslation};
      if (!ev_baseline) systems.insert(fassist::System::kReranker);
      const auto report = fassist::run_experiment(corpus, spec, systems, settings);
      if (!ev_json.empty()) write_file(ev_json, fassist::report_json(report));
      if (!ev_text.empty()) write_file(ev_text, fassist::report_table(report));
      std::cout << fassist::report_table(report);
    } else if (*query) {
      auto model = fassist::load_model(q_model);
      fassist::Corpus corpus;
      if (!q_corpus.empty()) corpus = load(q_corpus, q_hier);
      const fassist::QueryEngine engine(std::move(model), corpus);
      const auto results = engine.answer_query(q_text, q_k);
      if (q_json) {
        std::cout << fassist::results_json(results) << "\n";
      } else {
        for (const auto& r : results) {
          std::printf("%3zu  %10.4f  %s\n", r.rank, r.score, r.signature.c_str());
          if (!r.description.empty()) std::printf("     %s\n", r.description.c_str());
          if (!r.source_url.empty()) std::printf("     %s\n", r.source_url.c_str());
        }
      }
    } else if (*serve) {
      if (!s_static.empty()) s_opts.static_dir = s_static;
      auto engine = std::make_shared<const fassist::QueryEngine>(fassist::load_model(s_model), load(s_corpus, s_hier));
      fassist::QueryServer server(engine, s_opts);
      const int port = server.bind();
      std::cerr << "serving " << engine->project() << " on http://" << s_opts.host << ":" << port << "\n";
      serve_until_signal(server);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

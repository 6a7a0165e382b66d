#include "fassist/service.hpp"

#include <cctype>
#include <charconv>

#include <httplib.h>
#include <json.hpp>

namespace fassist {

std::string first_sentence(std::string_view text) {
  std::string collapsed;
  bool space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !collapsed.empty();
      continue;
    }
    if (space) collapsed += ' ';
    space = false;
    collapsed += c;
  }
  for (std::size_t i = 0; i < collapsed.size(); ++i) {
    const char c = collapsed[i];
    if ((c == '.' || c == '?' || c == '!') && (i + 1 == collapsed.size() || collapsed[i + 1] == ' ')) {
      return collapsed.substr(0, i + 1);
    }
  }
  return collapsed;
}

std::string format_source_url(std::string_view url_template, const SourceLocation& source) {
  std::string out;
  const std::string line = std::to_string(source.line);
  for (std::size_t i = 0; i < url_template.size();) {
    if (url_template.substr(i, 6) == "{file}") {
      out += source.file;
      i += 6;
    } else if (url_template.substr(i, 6) == "{line}") {
      out += line;
      i += 6;
    } else {
      out += url_template[i++];
    }
  }
  return out;
}

QueryEngine::QueryEngine(Model model, const Corpus& corpus) : model_(std::move(model)), pairs_(corpus.pairs.size()) {
  meta_.resize(model_.inventory.size());
  std::vector<bool> seen(model_.inventory.size(), false);
  for (const Pair& p : corpus.pairs) {
    const auto idx = model_.inventory.find(p.component);
    if (!idx || seen[*idx]) continue;
    seen[*idx] = true;
    meta_[*idx].description = first_sentence(p.description.empty() ? p.text.joined() : p.description);
    if (corpus.source_url_template) meta_[*idx].source_url = format_source_url(*corpus.source_url_template, p.source);
  }
}

std::vector<RankedResult> QueryEngine::answer_query(std::string_view q, std::size_t k) const {
  if (k < 1 || k > kMaxResults) {
    throw QueryError("k must be between 1 and " + std::to_string(kMaxResults));
  }
  const TextSequence x = tokenize_text(q);
  if (x.empty()) throw QueryError("empty query");
  const auto ranking = model_.rank(x);
  std::vector<RankedResult> out;
  for (std::size_t r = 0; r < ranking.size() && r < k; ++r) {
    const auto& c = ranking[r];
    const Component& z = model_.inventory[c.index];
    out.push_back({r + 1, c.score, z, z.signature(), meta_[c.index].description, meta_[c.index].source_url});
  }
  return out;
}

namespace {

nlohmann::json component_json(const Component& z) {
  return {{"namespace", z.namespace_path()},
          {"class", z.class_name() ? nlohmann::json(*z.class_name()) : nlohmann::json(nullptr)},
          {"function", z.function_name()},
          {"args", z.arg_names()}};
}

std::string error_json(const std::string& message) { return nlohmann::json{{"error", message}}.dump(); }

}  // namespace

std::string results_json(const std::vector<RankedResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    arr.push_back({{"rank", r.rank},
                   {"score", r.score},
                   {"component", component_json(r.component)},
                   {"signature", r.signature},
                   {"description", r.description},
                   {"source_url", r.source_url}});
  }
  return arr.dump();
}

// ---------------------------------------------------------------------------

struct QueryServer::Impl {
  httplib::Server server;
  bool bound = false;
};

QueryServer::QueryServer(std::shared_ptr<const QueryEngine> engine, ServerOptions options)
    : impl_(std::make_unique<Impl>()), engine_(std::move(engine)), options_(std::move(options)) {
  if (!engine_) throw InvalidArgument("query server needs an engine");
  auto& svr = impl_->server;
  constexpr const char* kJson = "application/json";
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });

  svr.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    const auto engine = snapshot();
    res.set_content(
        nlohmann::json{{"status", "ok"}, {"project", engine->project()}, {"pairs", engine->pairs()}}.dump(), kJson);
  });

  svr.Get("/api/query", [this](const httplib::Request& req, httplib::Response& res) {
    const auto engine = snapshot();
    std::size_t k = kDefaultResults;
    if (req.has_param("k")) {
      const std::string raw = req.get_param_value("k");
      long long v = 0;
      const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || ptr != raw.data() + raw.size() || v < 1 || v > static_cast<long long>(kMaxResults)) {
        res.status = 400;
        res.set_content(error_json("k must be an integer between 1 and " + std::to_string(kMaxResults)), kJson);
        return;
      }
      k = static_cast<std::size_t>(v);
    }
    try {
      res.set_content(results_json(engine->answer_query(req.get_param_value("q"), k)), kJson);
    } catch (const QueryError& e) {
      res.status = 400;
      res.set_content(error_json(e.what()), kJson);
    }
  });

  if (options_.static_dir) {
    if (!svr.set_mount_point("/", options_.static_dir->string())) {
      throw Error("static directory " + options_.static_dir->string() + " does not exist");
    }
  }

  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(error_json(message), kJson);
  });

  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty() && req.path.rfind("/api/", 0) == 0) {
      res.set_content(error_json(res.status == 404 ? "not found" : "request failed"), kJson);
    }
  });
}

QueryServer::~QueryServer() { stop(); }

int QueryServer::bind() {
  auto& svr = impl_->server;
  int port = options_.port;
  if (port == 0) {
    port = svr.bind_to_any_port(options_.host);
    if (port < 0) throw Error("cannot bind " + options_.host + " to any port");
  } else if (!svr.bind_to_port(options_.host, port)) {
    throw Error("cannot bind " + options_.host + ":" + std::to_string(port) + " (port busy or not permitted)");
  }
  impl_->bound = true;
  return port;
}

void QueryServer::listen() {
  if (!impl_->bound) throw Error("QueryServer::listen called before bind");
  impl_->server.listen_after_bind();
}

void QueryServer::stop() {
  if (impl_) impl_->server.stop();
}

bool QueryServer::running() const { return impl_->server.is_running(); }

void QueryServer::replace(std::shared_ptr<const QueryEngine> engine) {
  if (!engine) throw InvalidArgument("query server needs an engine");
  std::lock_guard lock(mutex_);
  engine_ = std::move(engine);
}

std::shared_ptr<const QueryEngine> QueryServer::snapshot() const {
  std::lock_guard lock(mutex_);
  return engine_;
}

}  // namespace fassist

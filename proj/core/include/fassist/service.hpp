#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fassist/corpus.hpp"
#include "fassist/error.hpp"
#include "fassist/model.hpp"

namespace fassist {

inline constexpr std::size_t kDefaultResults = 10;
inline constexpr std::size_t kMaxResults = 50;

struct RankedResult {
  std::size_t rank = 0;
  double score = 0.0;
  Component component;
  std::string signature;
  std::string description;
  std::string source_url;
};

/// Client-side error (bad query or parameters); maps to HTTP 400.
class QueryError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// First sentence of a docstring with whitespace collapsed.
std::string first_sentence(std::string_view text);

/// template with every {file} and {line} replaced.
std::string format_source_url(std::string_view url_template, const SourceLocation& source);

/// Immutable model plus per-component display metadata.
class QueryEngine {
 public:
  /// Metadata for each inventory component comes from its first pair in
  /// corpus order.
  QueryEngine(Model model, const Corpus& corpus);

  /// Throws QueryError("empty query") when q has no tokens and QueryError
  /// when k is outside [1, kMaxResults].
  std::vector<RankedResult> answer_query(std::string_view q, std::size_t k = kDefaultResults) const;

  const Model& model() const noexcept { return model_; }
  const std::string& project() const noexcept { return model_.project; }
  std::size_t pairs() const noexcept { return pairs_; }

 private:
  struct Meta {
    std::string description;
    std::string source_url;
  };
  Model model_;
  std::vector<Meta> meta_;
  std::size_t pairs_ = 0;
};

/// JSON text of results, as served by /api/query.
std::string results_json(const std::vector<RankedResult>& results);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
};

/// HTTP front end. Every request works on one engine snapshot; replace()
/// swaps snapshots atomically.
class QueryServer {
 public:
  QueryServer(std::shared_ptr<const QueryEngine> engine, ServerOptions options);
  ~QueryServer();
  QueryServer(const QueryServer&) = delete;
  QueryServer& operator=(const QueryServer&) = delete;

  /// Binds the socket; returns the bound port. Throws Error when binding fails.
  int bind();
  /// Serves until stop(). Requires bind().
  void listen();
  void stop();
  bool running() const;

  void replace(std::shared_ptr<const QueryEngine> engine);
  std::shared_ptr<const QueryEngine> snapshot() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  mutable std::mutex mutex_;
  std::shared_ptr<const QueryEngine> engine_;
  ServerOptions options_;
};

}  // namespace fassist

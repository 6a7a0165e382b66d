#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fassist/corpus.hpp"

namespace fassist::testing {

inline std::filesystem::path test_data(const std::string& rel) { return std::filesystem::path(FASSIST_TEST_DATA) / rel; }
inline std::filesystem::path bundled_data(const std::string& rel) { return std::filesystem::path(FASSIST_DATA_DIR) / rel; }

inline Corpus figure1_corpus() {
  return load_corpus(test_data("figure1/corpus.jsonl"), test_data("figure1/hierarchy.jsonl"));
}

inline Component comp(std::vector<std::string> ns, std::optional<std::string> cls, std::string fn,
                      std::vector<std::string> args = {}) {
  return Component(std::move(ns), std::move(cls), std::move(fn), std::move(args));
}

inline TextSequence words(const std::string& text) { return tokenize_text(text); }

inline Pair pair(const std::string& text, Component c) {
  Pair p{text, tokenize_text(text), std::move(c), {}, {"f.py", 1}};
  return p;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fassist_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace fassist::testing

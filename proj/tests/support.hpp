#pragma once

// Shared fixtures for the test binaries.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pcr/corpus.hpp"

namespace pcr::testing {

inline Document doc(std::string id, std::string text, std::set<std::string> cites = {}) {
  Document d;
  d.doc_id = std::move(id);
  d.raw_text = std::move(text);
  d.cited_doc_ids = std::move(cites);
  return d;
}

/// Document whose sentences carry the given roles; raw text is their join.
inline Document annotated(std::string id, const std::vector<std::pair<std::string, RhetoricalRole>>& parts,
                          std::set<std::string> cites = {}) {
  Document d = doc(std::move(id), "", std::move(cites));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    d.sentences.push_back({i, parts[i].first, parts[i].second});
    if (i) d.raw_text += ' ';
    d.raw_text += parts[i].first;
  }
  return d;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pcr_test_" + name + "_" +
                                                       std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string random_word(std::mt19937_64& rng, std::size_t vocab) {
  return "w" + std::to_string(std::uniform_int_distribution<std::size_t>(0, vocab - 1)(rng));
}

inline std::string random_text(std::mt19937_64& rng, std::size_t min_words, std::size_t max_words,
                               std::size_t vocab) {
  const auto n = std::uniform_int_distribution<std::size_t>(min_words, max_words)(rng);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += random_word(rng, vocab);
  }
  return out;
}

}  // namespace pcr::testing

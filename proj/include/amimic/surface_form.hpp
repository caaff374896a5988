#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "amimic/tensor.hpp"

namespace amimic {

struct NgramConfig {
  int n_min = 3;
  int n_max = 5;
  /// Minimum number of distinct training words an n-gram must occur in.
  int min_count = 3;

  friend bool operator==(const NgramConfig&, const NgramConfig&) = default;
};

/// Character n-grams of "<word>" for every n in [n_min, n_max], shortest
/// first, left to right, duplicates kept. Characters are Unicode code points.
std::vector<std::string> extract_ngrams(std::string_view word, const NgramConfig& config);

class NgramVocab {
 public:
  NgramVocab() = default;
  /// Ids are assigned in lexicographic n-gram order.
  static NgramVocab build(std::span<const std::string> training_words, const NgramConfig& config);
  /// Restores a vocabulary from explicit (n-gram, id) pairs; ids must be dense.
  static NgramVocab from_entries(const NgramConfig& config,
                                 std::vector<std::pair<std::string, std::uint32_t>> entries);

  const NgramConfig& config() const { return config_; }
  std::size_t size() const { return ngrams_.size(); }
  std::optional<std::uint32_t> id(std::string_view ngram) const;
  const std::string& ngram(std::uint32_t id) const { return ngrams_[id]; }
  /// Ids of the word's in-vocabulary n-grams, multiplicity preserved.
  std::vector<std::uint32_t> ids_for(std::string_view word) const;

  friend bool operator==(const NgramVocab& a, const NgramVocab& b) {
    return a.config_ == b.config_ && a.ngrams_ == b.ngrams_;
  }

 private:
  NgramConfig config_;
  std::vector<std::string> ngrams_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct FormEmbedding {
  Vector vector;
  /// Set when none of the word's n-grams is in the vocabulary; `vector` is
  /// then all zeros.
  bool formless = false;
  std::vector<std::uint32_t> ngram_ids;
};

/// Mean of the table rows of the given n-gram ids.
FormEmbedding form_embedding(std::span<const std::uint32_t> ngram_ids, const Matrix& table);
FormEmbedding form_embedding(std::string_view word, const NgramVocab& vocab, const Matrix& table);

}  // namespace amimic

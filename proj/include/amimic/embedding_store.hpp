#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "amimic/tensor.hpp"

namespace amimic {

/// Word -> vector table of a fixed dimension.
///
/// Lookups of absent words return nullptr rather than a zero vector, so that
/// callers averaging context words can skip them.
class EmbeddingSpace {
 public:
  EmbeddingSpace() = default;
  explicit EmbeddingSpace(std::size_t dimension, std::string source = {})
      : dimension_(dimension), source_(std::move(source)) {}

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return vectors_.size(); }
  bool empty() const { return vectors_.empty(); }
  const std::string& source() const { return source_; }

  /// Rejects duplicates, wrong dimensions and non-finite components.
  void insert(std::string word, Vector vector);
  const Vector* find(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word) != nullptr; }
  /// Throws ErrorKind::invalid_input for absent words.
  const Vector& at(std::string_view word) const;

  /// All words, lexicographically sorted.
  std::vector<std::string> words() const;

 private:
  std::size_t dimension_ = 0;
  std::string source_;
  std::unordered_map<std::string, Vector> vectors_;
};

/// Reads word2vec text format: an optional "count dim" header, then one
/// "word c1 ... cd" line per word. Without a header the dimension comes from
/// the first line.
EmbeddingSpace load_text(const std::filesystem::path& path);
/// Writes the header and words in lexicographic order, 9 significant digits.
void save_text(const EmbeddingSpace& space, const std::filesystem::path& path);

/// Cosine similarity; throws ErrorKind::numeric on a zero vector.
double cosine(std::span<const double> a, std::span<const double> b);
/// Componentwise mean of a nonempty set of equal-length vectors.
Vector average(std::span<const Vector> vectors);

}  // namespace amimic

#include "amimic/surface_form.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "amimic/error.hpp"

namespace amimic {

namespace {

// Byte offsets of code point starts, plus the end offset.
std::vector<std::size_t> code_point_offsets(std::string_view s) {
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < s.size(); ++i)
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) offsets.push_back(i);
  offsets.push_back(s.size());
  return offsets;
}

}  // namespace

std::vector<std::string> extract_ngrams(std::string_view word, const NgramConfig& config) {
  const std::string marked = "<" + std::string(word) + ">";
  const auto offsets = code_point_offsets(marked);
  const auto chars = offsets.size() - 1;
  std::vector<std::string> out;
  for (int n = config.n_min; n <= config.n_max; ++n) {
    const auto len = static_cast<std::size_t>(n);
    if (len == 0 || len > chars) continue;
    for (std::size_t i = 0; i + len <= chars; ++i)
      out.push_back(marked.substr(offsets[i], offsets[i + len] - offsets[i]));
  }
  return out;
}

NgramVocab NgramVocab::build(std::span<const std::string> training_words, const NgramConfig& config) {
  if (config.n_min < 1 || config.n_max < config.n_min || config.min_count < 1)
    throw Error(ErrorKind::invalid_input, "invalid n-gram configuration");
  std::set<std::string_view> distinct_words(training_words.begin(), training_words.end());
  std::map<std::string, int> word_counts;
  for (const auto word : distinct_words) {
    auto grams = extract_ngrams(word, config);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto& g : grams) ++word_counts[std::move(g)];
  }
  NgramVocab vocab;
  vocab.config_ = config;
  for (auto& [gram, count] : word_counts) {
    if (count < config.min_count) continue;
    vocab.index_.emplace(gram, static_cast<std::uint32_t>(vocab.ngrams_.size()));
    vocab.ngrams_.push_back(gram);
  }
  return vocab;
}

NgramVocab NgramVocab::from_entries(const NgramConfig& config,
                                    std::vector<std::pair<std::string, std::uint32_t>> entries) {
  NgramVocab vocab;
  vocab.config_ = config;
  vocab.ngrams_.resize(entries.size());
  std::vector<bool> filled(entries.size(), false);
  for (auto& [gram, id] : entries) {
    if (id >= entries.size() || filled[id])
      throw Error(ErrorKind::format, "n-gram ids are not dense");
    filled[id] = true;
    vocab.index_.emplace(gram, id);
    vocab.ngrams_[id] = std::move(gram);
  }
  if (vocab.index_.size() != entries.size()) throw Error(ErrorKind::format, "duplicate n-gram in vocabulary");
  return vocab;
}

std::optional<std::uint32_t> NgramVocab::id(std::string_view ngram) const {
  auto it = index_.find(std::string(ngram));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint32_t> NgramVocab::ids_for(std::string_view word) const {
  std::vector<std::uint32_t> ids;
  for (const auto& g : extract_ngrams(word, config_))
    if (const auto i = id(g)) ids.push_back(*i);
  return ids;
}

FormEmbedding form_embedding(std::span<const std::uint32_t> ngram_ids, const Matrix& table) {
  FormEmbedding out;
  out.vector.assign(table.cols(), 0.0);
  out.ngram_ids.assign(ngram_ids.begin(), ngram_ids.end());
  if (ngram_ids.empty()) {
    out.formless = true;
    return out;
  }
  for (const auto id : ngram_ids) axpy(1.0, table.row(id), out.vector);
  const double k = static_cast<double>(ngram_ids.size());
  for (auto& x : out.vector) x /= k;
  return out;
}

FormEmbedding form_embedding(std::string_view word, const NgramVocab& vocab, const Matrix& table) {
  if (table.rows() != vocab.size())
    throw Error(ErrorKind::invalid_input, "n-gram table rows do not match the vocabulary");
  const auto ids = vocab.ids_for(word);
  return form_embedding(ids, table);
}

}  // namespace amimic

#pragma once

#include <string>
#include <vector>

#include "amimic/corpus.hpp"
#include "amimic/embedding_store.hpp"
#include "amimic/random.hpp"
#include "amimic/training.hpp"

namespace fixtures {

/// Small mimicking problem the model can memorize: `words` target words with
/// five single-line contexts each, drawn from a separate context vocabulary.
struct Overfit {
  amimic::Corpus corpus = amimic::Corpus::from_text("");
  amimic::EmbeddingSpace space;
  amimic::TrainOptions options;
  std::vector<std::string> words;
};

inline std::string letters(std::size_t i, std::size_t width) {
  std::string s(width, 'a');
  for (std::size_t k = 0; k < width; ++k, i /= 26) s[width - 1 - k] = static_cast<char>('a' + i % 26);
  return s;
}

inline Overfit overfit(std::uint64_t seed, std::size_t words = 50, std::size_t dim = 16,
                       std::size_t contexts = 5, std::uint32_t epochs = 500) {
  amimic::Rng rng(seed);
  Overfit f;
  f.space = amimic::EmbeddingSpace(dim, "overfit");
  const std::size_t context_vocab = 40;
  for (std::size_t i = 0; i < context_vocab; ++i) {
    amimic::Vector v(dim);
    for (auto& x : v) x = rng.normal();
    f.space.insert("ctx" + letters(i, 2), std::move(v));
  }
  std::string text;
  for (std::size_t w = 0; w < words; ++w) {
    const auto word = "tw" + letters(w, 2);
    f.words.push_back(word);
    amimic::Vector target(dim);
    for (auto& x : target) x = 0.5 * rng.normal();
    f.space.insert(word, std::move(target));
    for (std::size_t c = 0; c < contexts; ++c) {
      for (int k = 0; k < 3; ++k) text += "ctx" + letters(rng.uniform_index(context_vocab), 2) + " ";
      text += word + "\n";
    }
  }
  f.corpus = amimic::Corpus::from_text(text);

  auto& o = f.options;
  o.sampler.min_frequency = 1;
  o.sampler.per_epoch_cap = 1;
  o.sampler.context_min = static_cast<std::uint32_t>(contexts);
  o.sampler.context_max = static_cast<std::uint32_t>(contexts);
  o.sampler.epochs = epochs;
  o.sampler.seed = seed;
  o.ngrams.min_count = 1;
  // Context words are not mimicking targets here.
  for (std::size_t i = 0; i < context_vocab; ++i) o.exclude_words.push_back("ctx" + letters(i, 2));
  return f;
}

}  // namespace fixtures

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "amimic/random.hpp"

namespace amimic {

using WordId = std::uint32_t;

/// Default number of tokens kept on each side of an occurrence.
inline constexpr int kDefaultWindow = 25;

/// Tokens surrounding one occurrence of a word, the occurrence itself removed.
/// Token ids index the vocabulary of the corpus the context came from.
struct Context {
  std::vector<WordId> tokens;

  bool empty() const { return tokens.empty(); }
  friend bool operator==(const Context&, const Context&) = default;
};

struct ContextSet {
  std::string word;
  std::vector<Context> contexts;
};

/// A pre-tokenized corpus held in memory: one sentence per line, tokens
/// separated by spaces. Immutable after construction.
class Corpus {
 public:
  /// Reads and validates a corpus file. Malformed UTF-8 raises a format
  /// error naming the line number.
  static Corpus load(const std::filesystem::path& path);
  /// Same parser over an in-memory string.
  static Corpus from_text(std::string_view text);

  std::size_t token_count() const { return tokens_.size(); }
  std::size_t line_count() const { return line_starts_.size() - 1; }
  std::size_t vocabulary_size() const { return vocab_.size(); }

  std::optional<WordId> id_of(std::string_view word) const;
  const std::string& word(WordId id) const { return vocab_[id]; }
  std::uint64_t frequency(WordId id) const { return occurrence_starts_[id + 1] - occurrence_starts_[id]; }
  /// Zero for words that never occur.
  std::uint64_t frequency(std::string_view word) const;
  /// (word, count) for every word, sorted by word.
  std::vector<std::pair<std::string, std::uint64_t>> frequency_table() const;

  /// Token positions of every occurrence of the word, in corpus order.
  std::span<const std::size_t> occurrences(WordId id) const;
  std::span<const WordId> tokens() const { return tokens_; }
  /// Tokens of one line.
  std::span<const WordId> line(std::size_t index) const;
  std::size_t line_of(std::size_t position) const;

  /// Context around the token at `position`, clipped to `window` tokens on
  /// each side and to the enclosing line.
  Context context_at(std::size_t position, int window = kDefaultWindow) const;
  /// One context per occurrence (possibly empty), in corpus order. Unknown
  /// words yield an empty sequence.
  std::vector<Context> extract_contexts(std::string_view word, int window = kDefaultWindow) const;
  /// Positions of occurrences whose context is nonempty.
  std::vector<std::size_t> usable_occurrences(WordId id) const;

  std::vector<std::string> words(const Context& context) const;

 private:
  Corpus() = default;
  void parse_line(std::string_view line, std::size_t line_number);
  void finish();

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, WordId> index_;
  std::vector<WordId> tokens_;
  std::vector<std::size_t> line_starts_{0};
  std::vector<std::size_t> occurrence_starts_;
  std::vector<std::size_t> occurrence_positions_;
};

/// Counts word frequencies of a corpus file.
inline Corpus count_frequencies(const std::filesystem::path& path) { return Corpus::load(path); }

/// Samples `count` contexts without replacement from the word's nonempty
/// contexts. When fewer are available the result holds all of them, unless
/// `pad` is set, in which case extra draws with replacement fill up to
/// `count`. Raises ErrorKind::unusable when the word has no nonempty context.
ContextSet sample_context_set(const Corpus& corpus, std::string_view word, std::size_t count,
                              Rng& rng, bool pad = false, int window = kDefaultWindow);
ContextSet sample_context_set(const Corpus& corpus, std::string_view word, std::size_t count,
                              std::uint64_t seed, bool pad = false, int window = kDefaultWindow);

bool is_valid_utf8(std::string_view text);
/// Number of Unicode code points; assumes valid UTF-8.
std::size_t utf8_length(std::string_view text);

// ---------------------------------------------------------------------------
// Downsampled benchmark construction

struct DownsampleConfig {
  std::size_t bucket_count = 8;
  std::size_t words_per_bucket = 125;
  std::uint64_t min_occurrences = 1000;
  std::size_t min_length = 2;
};

struct DownsampleEntry {
  std::string word;
  int bucket = 0;
  /// Occurrence indices (0-based, counted in corpus order) that survive.
  std::vector<std::uint64_t> kept;
  /// Frequency in the source corpus; known for freshly built plans only.
  std::optional<std::uint64_t> source_frequency;
};

class DownsamplePlan {
 public:
  DownsamplePlan() = default;
  explicit DownsamplePlan(std::vector<DownsampleEntry> entries);

  const std::vector<DownsampleEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const DownsampleEntry* find(std::string_view word) const;
  std::size_t bucket_count() const;
  std::vector<std::string> bucket_words(int bucket) const;
  std::vector<std::string> words() const;

  /// One "word<TAB>bucket<TAB>i,j,k" line per word.
  void save(const std::filesystem::path& path) const;
  static DownsamplePlan load(const std::filesystem::path& path);

 private:
  std::vector<DownsampleEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// True for words made only of ASCII letters with at least `min_length`
/// characters.
bool is_eligible_word(std::string_view word, std::size_t min_length = 2);

/// Samples words with at least `min_occurrences` occurrences, spreads them
/// evenly over the buckets, and keeps 2^bucket random occurrences of each.
DownsamplePlan build_downsample_plan(const Corpus& corpus, std::uint64_t seed,
                                     const DownsampleConfig& config = {});

struct DownsampleSummary {
  std::vector<std::size_t> bucket_sizes;
  std::uint64_t tokens_in = 0;
  std::uint64_t tokens_removed = 0;
  std::size_t lines = 0;
};

/// Streams `source` into `target`, deleting every occurrence of a plan word
/// that is not in its kept set. Lines are otherwise untouched.
DownsampleSummary apply_downsample(const std::filesystem::path& source, const DownsamplePlan& plan,
                                   const std::filesystem::path& target);

}  // namespace amimic

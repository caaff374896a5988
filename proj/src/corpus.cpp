#include "amimic/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "amimic/error.hpp"

namespace amimic {

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    for (std::size_t k = 1; k <= extra; ++k) {
      if (i + k >= n) return false;
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      return false;
    i += extra + 1;
  }
  return true;
}

std::size_t utf8_length(std::string_view text) {
  return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

namespace {

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <typename Fn>
void for_each_token(std::string_view line, Fn&& fn) {
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    const auto start = i;
    while (i < line.size() && line[i] != ' ') ++i;
    if (i > start) fn(line.substr(start, i - start));
  }
}

}  // namespace

void Corpus::parse_line(std::string_view line, std::size_t line_number) {
  line = strip_cr(line);
  if (!is_valid_utf8(line))
    throw Error(ErrorKind::format, "malformed UTF-8 on line " + std::to_string(line_number));
  for_each_token(line, [&](std::string_view token) {
    std::string key(token);
    auto it = index_.find(key);
    WordId id;
    if (it == index_.end()) {
      id = static_cast<WordId>(vocab_.size());
      vocab_.push_back(key);
      index_.emplace(std::move(key), id);
    } else {
      id = it->second;
    }
    tokens_.push_back(id);
  });
  line_starts_.push_back(tokens_.size());
}

void Corpus::finish() {
  occurrence_starts_.assign(vocab_.size() + 1, 0);
  for (const auto id : tokens_) ++occurrence_starts_[id + 1];
  std::partial_sum(occurrence_starts_.begin(), occurrence_starts_.end(), occurrence_starts_.begin());
  occurrence_positions_.resize(tokens_.size());
  std::vector<std::size_t> cursor(occurrence_starts_.begin(), occurrence_starts_.end() - 1);
  for (std::size_t pos = 0; pos < tokens_.size(); ++pos)
    occurrence_positions_[cursor[tokens_[pos]]++] = pos;
}

Corpus Corpus::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open corpus " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) corpus.parse_line(line, ++number);
  if (in.bad()) throw Error(ErrorKind::io, "read failure in " + path.string());
  corpus.finish();
  return corpus;
}

Corpus Corpus::from_text(std::string_view text) {
  Corpus corpus;
  std::size_t number = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    corpus.parse_line(text.substr(0, nl), ++number);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  corpus.finish();
  return corpus;
}

std::optional<WordId> Corpus::id_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Corpus::frequency(std::string_view word) const {
  const auto id = id_of(word);
  return id ? frequency(*id) : 0;
}

std::vector<std::pair<std::string, std::uint64_t>> Corpus::frequency_table() const {
  std::vector<std::pair<std::string, std::uint64_t>> table;
  table.reserve(vocab_.size());
  for (WordId id = 0; id < vocab_.size(); ++id) table.emplace_back(vocab_[id], frequency(id));
  std::sort(table.begin(), table.end());
  return table;
}

std::span<const std::size_t> Corpus::occurrences(WordId id) const {
  return std::span<const std::size_t>(occurrence_positions_)
      .subspan(occurrence_starts_[id], occurrence_starts_[id + 1] - occurrence_starts_[id]);
}

std::span<const WordId> Corpus::line(std::size_t index) const {
  return std::span<const WordId>(tokens_).subspan(line_starts_[index],
                                                   line_starts_[index + 1] - line_starts_[index]);
}

std::size_t Corpus::line_of(std::size_t position) const {
  const auto it = std::upper_bound(line_starts_.begin(), line_starts_.end(), position);
  return static_cast<std::size_t>(it - line_starts_.begin()) - 1;
}

Context Corpus::context_at(std::size_t position, int window) const {
  if (window < 1) throw Error(ErrorKind::invalid_input, "context window must be at least 1");
  const auto w = static_cast<std::size_t>(window);
  // Lines may be empty, so several starts can coincide; pick the line that
  // actually contains the position.
  const auto ln = line_of(position);
  const auto begin = line_starts_[ln];
  const auto end = line_starts_[ln + 1];
  const auto left = position - begin > w ? position - w : begin;
  const auto right = std::min(end, position + 1 + w);
  Context context;
  context.tokens.reserve(right - left - 1);
  context.tokens.insert(context.tokens.end(), tokens_.begin() + left, tokens_.begin() + position);
  context.tokens.insert(context.tokens.end(), tokens_.begin() + position + 1, tokens_.begin() + right);
  return context;
}

std::vector<Context> Corpus::extract_contexts(std::string_view word, int window) const {
  std::vector<Context> out;
  const auto id = id_of(word);
  if (!id) return out;
  const auto occ = occurrences(*id);
  out.reserve(occ.size());
  for (const auto pos : occ) out.push_back(context_at(pos, window));
  return out;
}

std::vector<std::size_t> Corpus::usable_occurrences(WordId id) const {
  std::vector<std::size_t> out;
  for (const auto pos : occurrences(id)) {
    const auto ln = line_of(pos);
    if (line_starts_[ln + 1] - line_starts_[ln] > 1) out.push_back(pos);
  }
  return out;
}

std::vector<std::string> Corpus::words(const Context& context) const {
  std::vector<std::string> out;
  out.reserve(context.tokens.size());
  for (const auto id : context.tokens) out.push_back(vocab_[id]);
  return out;
}

ContextSet sample_context_set(const Corpus& corpus, std::string_view word, std::size_t count,
                              Rng& rng, bool pad, int window) {
  if (count < 1) throw Error(ErrorKind::invalid_input, "context count must be at least 1");
  const auto unusable = [&] {
    return Error(ErrorKind::unusable, "word '" + std::string(word) + "' has no usable context");
  };
  const auto id = corpus.id_of(word);
  if (!id) throw unusable();
  const auto occ = corpus.occurrences(*id);
  const auto usable = [&](std::size_t pos) { return corpus.line(corpus.line_of(pos)).size() > 1; };

  ContextSet set;
  set.word = std::string(word);
  // Lazy partial Fisher-Yates over the occurrence list. Occurrences with an
  // empty context are drawn and discarded, which leaves the draw uniform over
  // the usable ones without scanning all occurrences of frequent words.
  std::unordered_map<std::size_t, std::size_t> moved;
  const auto slot = [&](std::size_t i) {
    auto it = moved.find(i);
    return it == moved.end() ? i : it->second;
  };
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < occ.size() && chosen.size() < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(occ.size() - i));
    const auto picked = slot(j);
    moved[j] = slot(i);
    const auto pos = occ[picked];
    if (usable(pos)) chosen.push_back(pos);
  }
  if (chosen.empty()) throw unusable();
  if (pad && chosen.size() < count) {
    // every usable occurrence has been drawn at this point
    const auto pool = chosen;
    while (chosen.size() < count) chosen.push_back(pool[static_cast<std::size_t>(rng.uniform_index(pool.size()))]);
  }
  set.contexts.reserve(chosen.size());
  for (const auto pos : chosen) set.contexts.push_back(corpus.context_at(pos, window));
  return set;
}

ContextSet sample_context_set(const Corpus& corpus, std::string_view word, std::size_t count,
                              std::uint64_t seed, bool pad, int window) {
  Rng rng(seed);
  return sample_context_set(corpus, word, count, rng, pad, window);
}

// ---------------------------------------------------------------------------

DownsamplePlan::DownsamplePlan(std::vector<DownsampleEntry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.bucket, a.word) < std::tie(b.bucket, b.word);
  });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& e = entries_[i];
    if (e.bucket < 0 || e.bucket > 62)
      throw Error(ErrorKind::format, "bucket out of range for '" + e.word + "'");
    std::sort(e.kept.begin(), e.kept.end());
    if (std::adjacent_find(e.kept.begin(), e.kept.end()) != e.kept.end())
      throw Error(ErrorKind::format, "duplicate kept occurrence for '" + e.word + "'");
    if (e.kept.size() != (std::size_t{1} << e.bucket))
      throw Error(ErrorKind::format, "word '" + e.word + "' in bucket " + std::to_string(e.bucket) +
                                         " must keep exactly " +
                                         std::to_string(std::size_t{1} << e.bucket) + " occurrences");
    if (!index_.emplace(e.word, i).second)
      throw Error(ErrorKind::format, "duplicate plan word '" + e.word + "'");
  }
}

const DownsampleEntry* DownsamplePlan::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::size_t DownsamplePlan::bucket_count() const {
  int top = -1;
  for (const auto& e : entries_) top = std::max(top, e.bucket);
  return static_cast<std::size_t>(top + 1);
}

std::vector<std::string> DownsamplePlan::bucket_words(int bucket) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.bucket == bucket) out.push_back(e.word);
  return out;
}

std::vector<std::string> DownsamplePlan::words() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.word);
  return out;
}

void DownsamplePlan::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write plan " + path.string());
  for (const auto& e : entries_) {
    out << e.word << '\t' << e.bucket << '\t';
    for (std::size_t i = 0; i < e.kept.size(); ++i) out << (i ? "," : "") << e.kept[i];
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "write failure on " + path.string());
}

DownsamplePlan DownsamplePlan::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open plan " + path.string());
  std::vector<DownsampleEntry> entries;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto where = path.string() + ":" + std::to_string(number);
    std::string_view view = strip_cr(line);
    if (view.empty()) continue;
    const auto t1 = view.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : view.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) throw Error(ErrorKind::format, where + ": expected three fields");
    DownsampleEntry e;
    e.word = std::string(view.substr(0, t1));
    try {
      std::size_t used = 0;
      const auto bucket_text = std::string(view.substr(t1 + 1, t2 - t1 - 1));
      e.bucket = std::stoi(bucket_text, &used);
      if (used != bucket_text.size()) throw std::invalid_argument("bucket");
      std::string rest(view.substr(t2 + 1));
      std::stringstream ss(rest);
      std::string item;
      while (std::getline(ss, item, ',')) {
        std::size_t u = 0;
        e.kept.push_back(std::stoull(item, &u));
        if (u != item.size()) throw std::invalid_argument("index");
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::format, where + ": non-numeric bucket or occurrence index");
    }
    entries.push_back(std::move(e));
  }
  return DownsamplePlan(std::move(entries));
}

bool is_eligible_word(std::string_view word, std::size_t min_length) {
  if (word.size() < min_length) return false;
  return std::all_of(word.begin(), word.end(),
                     [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); });
}

DownsamplePlan build_downsample_plan(const Corpus& corpus, std::uint64_t seed,
                                     const DownsampleConfig& config) {
  if (config.bucket_count == 0 || config.bucket_count > 31 || config.words_per_bucket == 0)
    throw Error(ErrorKind::invalid_input, "invalid bucket layout");
  std::vector<WordId> eligible;
  for (WordId id = 0; id < corpus.vocabulary_size(); ++id) {
    if (corpus.frequency(id) >= config.min_occurrences &&
        is_eligible_word(corpus.word(id), config.min_length))
      eligible.push_back(id);
  }
  // Vocabulary ids follow first appearance; sort by spelling so the plan
  // depends on the word set alone.
  std::sort(eligible.begin(), eligible.end(),
            [&](WordId a, WordId b) { return corpus.word(a) < corpus.word(b); });
  const auto needed = config.bucket_count * config.words_per_bucket;
  if (eligible.size() < needed)
    throw Error(ErrorKind::unusable, "only " + std::to_string(eligible.size()) +
                                         " eligible words, need " + std::to_string(needed) +
                                         " (short by " + std::to_string(needed - eligible.size()) + ")");
  Rng rng(seed);
  rng.shuffle(std::span<WordId>(eligible));
  std::vector<DownsampleEntry> entries;
  for (std::size_t i = 0; i < needed; ++i) {
    const WordId id = eligible[i];
    DownsampleEntry e;
    e.word = corpus.word(id);
    e.bucket = static_cast<int>(i / config.words_per_bucket);
    const auto f = corpus.frequency(id);
    const auto keep = std::uint64_t{1} << e.bucket;
    if (keep > f)
      throw Error(ErrorKind::unusable, "word '" + e.word + "' has fewer than " + std::to_string(keep) +
                                           " occurrences");
    // Floyd's algorithm: `keep` distinct indices from [0, f)
    std::vector<std::uint64_t> chosen;
    for (auto j = f - keep; j < f; ++j) {
      const auto t = rng.uniform_index(j + 1);
      if (std::find(chosen.begin(), chosen.end(), t) == chosen.end())
        chosen.push_back(t);
      else
        chosen.push_back(j);
    }
    e.kept = std::move(chosen);
    e.source_frequency = f;
    entries.push_back(std::move(e));
  }
  return DownsamplePlan(std::move(entries));
}

DownsampleSummary apply_downsample(const std::filesystem::path& source, const DownsamplePlan& plan,
                                   const std::filesystem::path& target) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open corpus " + source.string());
  std::ofstream out(target, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write corpus " + target.string());

  std::unordered_map<std::string, std::size_t> plan_index;
  for (std::size_t i = 0; i < plan.entries().size(); ++i) plan_index.emplace(plan.entries()[i].word, i);
  std::vector<std::uint64_t> seen(plan.entries().size(), 0);
  std::vector<std::size_t> cursor(plan.entries().size(), 0);

  DownsampleSummary summary;
  summary.bucket_sizes.assign(plan.bucket_count(), 0);
  for (const auto& e : plan.entries()) ++summary.bucket_sizes[static_cast<std::size_t>(e.bucket)];

  std::string line;
  std::string emitted;
  while (std::getline(in, line)) {
    ++summary.lines;
    const auto view = strip_cr(line);
    if (!is_valid_utf8(view))
      throw Error(ErrorKind::format, "malformed UTF-8 on line " + std::to_string(summary.lines));
    emitted.clear();
    bool first = true;
    for_each_token(view, [&](std::string_view token) {
      ++summary.tokens_in;
      auto it = plan_index.find(std::string(token));
      if (it != plan_index.end()) {
        const auto i = it->second;
        const auto& kept = plan.entries()[i].kept;
        const auto occurrence = seen[i]++;
        if (cursor[i] < kept.size() && kept[cursor[i]] == occurrence) {
          ++cursor[i];
        } else {
          ++summary.tokens_removed;
          return;
        }
      }
      if (!first) emitted.push_back(' ');
      emitted.append(token);
      first = false;
    });
    emitted.push_back('\n');
    out << emitted;
  }
  if (in.bad()) throw Error(ErrorKind::io, "read failure in " + source.string());
  out.close();
  if (!out) throw Error(ErrorKind::io, "write failure on " + target.string());

  for (std::size_t i = 0; i < plan.entries().size(); ++i) {
    const auto& e = plan.entries()[i];
    const bool frequency_changed = e.source_frequency && *e.source_frequency != seen[i];
    if (frequency_changed || cursor[i] != e.kept.size()) {
      std::error_code ignored;
      std::filesystem::remove(target, ignored);
      throw Error(ErrorKind::invalid_input,
                  "plan does not match corpus: word '" + e.word + "' occurs " + std::to_string(seen[i]) +
                      " times" +
                      (e.source_frequency ? ", plan expects " + std::to_string(*e.source_frequency) : ""));
    }
  }
  return summary;
}

}  // namespace amimic

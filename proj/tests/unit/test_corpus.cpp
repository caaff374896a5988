#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "amimic/corpus.hpp"
#include "amimic/error.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace amimic;

namespace {

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// Random corpus text over `vocab` words named w0, w1, ...
std::string random_corpus(Rng& rng, std::size_t lines, std::size_t max_len, std::size_t vocab) {
  std::string text;
  for (std::size_t l = 0; l < lines; ++l) {
    const auto len = rng.uniform_index(max_len + 1);
    for (std::size_t i = 0; i < len; ++i) {
      if (i) text += ' ';
      text += "w" + std::to_string(rng.uniform_index(vocab));
    }
    text += '\n';
  }
  return text;
}

std::map<std::string, std::uint64_t> naive_counts(const std::string& text) {
  std::map<std::string, std::uint64_t> counts;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    for (const auto& w : split_words(line)) ++counts[w];
  return counts;
}

// Letter-only names so words are downsample-eligible.
std::string letter_name(std::size_t i) {
  std::string s = "aa";
  s[0] = static_cast<char>('a' + i % 26);
  s[1] = static_cast<char>('a' + (i / 26) % 26);
  if (i >= 676) s += static_cast<char>('a' + (i / 676) % 26);
  return s;
}

}  // namespace

TEST_CASE("frequencies of a small corpus") {
  const auto corpus = Corpus::from_text("a b a\nb c");
  CHECK(corpus.frequency("a") == 2);
  CHECK(corpus.frequency("b") == 2);
  CHECK(corpus.frequency("c") == 1);
  CHECK(corpus.frequency("zzz") == 0);
  CHECK(corpus.token_count() == 5);
  CHECK(corpus.line_count() == 2);
}

TEST_CASE("empty corpus file") {
  testing::TempDir dir;
  testing::write_file(dir / "empty.txt", "");
  const auto corpus = count_frequencies(dir / "empty.txt");
  CHECK(corpus.token_count() == 0);
  CHECK(corpus.frequency_table().empty());
}

TEST_CASE("missing corpus file is an io error") {
  try {
    Corpus::load("/nonexistent/corpus.txt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

TEST_CASE("malformed UTF-8 names the line") {
  testing::TempDir dir;
  testing::write_file(dir / "bad.txt", "fine line\nstill fine\nbroken \xC3\x28 here\n");
  try {
    Corpus::load(dir / "bad.txt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::format);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("utf8 validation") {
  CHECK(is_valid_utf8("plain"));
  CHECK(is_valid_utf8("caf\xC3\xA9"));
  CHECK(is_valid_utf8("\xF0\x9F\x98\x80"));
  CHECK_FALSE(is_valid_utf8("\xC0\xAF"));          // overlong
  CHECK_FALSE(is_valid_utf8("\xED\xA0\x80"));      // surrogate
  CHECK_FALSE(is_valid_utf8("\xE2\x82"));          // truncated
  CHECK(utf8_length("caf\xC3\xA9") == 4);
}

TEST_CASE("a word occurring 137 times matches a line-by-line count") {
  Rng rng(11);
  std::string text;
  int planted = 0;
  while (planted < 137) {
    auto line = random_corpus(rng, 1, 12, 30);
    line.pop_back();
    if (rng.uniform_index(2)) {
      line += line.empty() ? "dog" : " dog";
      ++planted;
    }
    text += line + '\n';
  }
  testing::TempDir dir;
  testing::write_file(dir / "c.txt", text);
  const auto corpus = Corpus::load(dir / "c.txt");
  CHECK(corpus.frequency("dog") == 137);
  CHECK(corpus.frequency("dog") == naive_counts(text)["dog"]);
}

TEST_CASE("frequency table sums to the token count and matches a naive count") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto text = random_corpus(rng, 40, 15, 25);
    const auto corpus = Corpus::from_text(text);
    const auto oracle = naive_counts(text);
    std::uint64_t sum = 0;
    for (const auto& [w, f] : corpus.frequency_table()) {
      sum += f;
      CHECK(oracle.at(w) == f);
    }
    CHECK(sum == corpus.token_count());
    CHECK(corpus.frequency_table().size() == oracle.size());
  }
}

TEST_CASE("context extraction removes the target") {
  const auto corpus = Corpus::from_text("x y target z\n");
  const auto contexts = corpus.extract_contexts("target");
  REQUIRE(contexts.size() == 1);
  CHECK(corpus.words(contexts[0]) == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("context windows are clipped") {
  std::string line = "target";
  for (int i = 0; i < 59; ++i) line += " t" + std::to_string(i);
  const auto corpus = Corpus::from_text(line);
  const auto contexts = corpus.extract_contexts("target");
  REQUIRE(contexts.size() == 1);
  const auto words = corpus.words(contexts[0]);
  REQUIRE(words.size() == 25);
  CHECK(words.front() == "t0");
  CHECK(words.back() == "t24");
}

TEST_CASE("contexts keep other occurrences of the word and stay inside the line") {
  const auto corpus = Corpus::from_text("a b\nc w d w e\nf g");
  const auto contexts = corpus.extract_contexts("w", 2);
  REQUIRE(contexts.size() == 2);
  CHECK(corpus.words(contexts[0]) == std::vector<std::string>{"c", "d", "w"});
  CHECK(corpus.words(contexts[1]) == std::vector<std::string>{"w", "d", "e"});
  CHECK(corpus.extract_contexts("unknown").empty());
}

TEST_CASE("extracted contexts agree with a naive re-scan") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto text = random_corpus(rng, 30, 20, 12);
    const auto corpus = Corpus::from_text(text);
    const int window = 1 + static_cast<int>(rng.uniform_index(6));
    for (const auto& [word, f] : corpus.frequency_table()) {
      const auto contexts = corpus.extract_contexts(word, window);
      REQUIRE(contexts.size() == f);
      std::vector<std::vector<std::string>> expected;
      std::istringstream in(text);
      for (std::string line; std::getline(in, line);) {
        const auto tokens = split_words(line);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
          if (tokens[i] != word) continue;
          std::vector<std::string> ctx;
          const auto lo = i >= static_cast<std::size_t>(window) ? i - window : 0;
          const auto hi = std::min(tokens.size(), i + window + 1);
          for (std::size_t j = lo; j < hi; ++j)
            if (j != i) ctx.push_back(tokens[j]);
          expected.push_back(ctx);
        }
      }
      for (std::size_t k = 0; k < contexts.size(); ++k) {
        CHECK(corpus.words(contexts[k]) == expected[k]);
        CHECK(contexts[k].tokens.size() <= 2 * static_cast<std::size_t>(window));
      }
    }
  }
}

TEST_CASE("sampling without replacement") {
  std::string text;
  for (int i = 0; i < 10; ++i) text += "c" + std::to_string(i) + " w\n";
  const auto corpus = Corpus::from_text(text);
  const auto set = sample_context_set(corpus, "w", 4, std::uint64_t{3});
  REQUIRE(set.contexts.size() == 4);
  std::set<WordId> seen;
  for (const auto& c : set.contexts) seen.insert(c.tokens.at(0));
  CHECK(seen.size() == 4);

  const auto again = sample_context_set(corpus, "w", 4, std::uint64_t{3});
  CHECK(again.contexts == set.contexts);
}

TEST_CASE("sampling clamps to what is available unless padding") {
  const auto corpus = Corpus::from_text("a w\nb w\n");
  CHECK(sample_context_set(corpus, "w", 64, std::uint64_t{1}).contexts.size() == 2);
  CHECK(sample_context_set(corpus, "w", 64, std::uint64_t{1}, true).contexts.size() == 64);
}

TEST_CASE("empty contexts are dropped; a word without contexts is unusable") {
  const auto corpus = Corpus::from_text("w\na w\nv\n");
  const auto set = sample_context_set(corpus, "w", 10, std::uint64_t{1});
  REQUIRE(set.contexts.size() == 1);
  CHECK(corpus.words(set.contexts[0]) == std::vector<std::string>{"a"});
  try {
    sample_context_set(corpus, "v", 3, std::uint64_t{1});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unusable);
  }
}

TEST_CASE("downsample plan on a corpus with exactly enough eligible words") {
  // 16 eligible words in 4 buckets of 4; plus ineligible ones that must never be chosen.
  DownsampleConfig cfg{4, 4, 20, 2};
  std::string text;
  Rng rng(2);
  std::vector<std::string> eligible;
  for (std::size_t i = 0; i < 16; ++i) eligible.push_back(letter_name(i));
  for (int rep = 0; rep < 30; ++rep) {
    for (const auto& w : eligible) text += w + " f1 x1 " + w + "\n";
    text += "a b\n";
  }
  const auto corpus = Corpus::from_text(text);
  const auto plan = build_downsample_plan(corpus, 17, cfg);
  CHECK(plan.size() == 16);
  CHECK([&] {
    auto got = plan.words();
    std::sort(got.begin(), got.end());
    return got;
  }() == [&] {
    auto sorted = eligible;
    std::sort(sorted.begin(), sorted.end());
    return sorted;
  }());
  for (const auto& e : plan.entries()) {
    CHECK(e.kept.size() == (std::size_t{1} << e.bucket));
    CHECK(std::is_sorted(e.kept.begin(), e.kept.end()));
    CHECK(e.kept.back() < corpus.frequency(e.word));
  }
  for (int b = 0; b < 4; ++b) CHECK(plan.bucket_words(b).size() == 4);

  SUBCASE("too few eligible words") {
    cfg.words_per_bucket = 5;
    try {
      build_downsample_plan(corpus, 17, cfg);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::unusable);
      CHECK(std::string(e.what()).find("4") != std::string::npos);
    }
  }
}

TEST_CASE("eligibility") {
  CHECK(is_eligible_word("dog"));
  CHECK_FALSE(is_eligible_word("d"));
  CHECK_FALSE(is_eligible_word("dog2"));
  CHECK_FALSE(is_eligible_word("caf\xC3\xA9"));
  CHECK_FALSE(is_eligible_word("re-do"));
}

TEST_CASE("applying a plan keeps exactly 2^bucket occurrences") {
  DownsampleConfig cfg{8, 3, 200, 2};
  Rng rng(21);
  std::string text;
  // 30 words with 200..260 occurrences, a few non-plan words.
  std::vector<std::string> words;
  for (std::size_t i = 0; i < 30; ++i) words.push_back(letter_name(i + 40));
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < words.size(); ++i)
    for (std::size_t k = 0; k < 200 + rng.uniform_index(60); ++k) tokens.push_back(words[i]);
  for (int k = 0; k < 500; ++k) tokens.push_back("n" + std::to_string(k % 7));
  rng.shuffle(std::span<std::string>(tokens));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    text += tokens[i];
    text += (i % 9 == 8) ? "\n" : " ";
  }
  text += "\n\nlast line\n";

  testing::TempDir dir;
  testing::write_file(dir / "src.txt", text);
  const auto source = Corpus::load(dir / "src.txt");
  const auto plan = build_downsample_plan(source, 4, cfg);
  REQUIRE(plan.size() == 24);
  const auto summary = apply_downsample(dir / "src.txt", plan, dir / "out.txt");
  const auto result = Corpus::load(dir / "out.txt");

  std::uint64_t expected_removed = 0;
  for (const auto& e : plan.entries()) {
    CHECK(result.frequency(e.word) == (std::uint64_t{1} << e.bucket));
    expected_removed += source.frequency(e.word) - (std::uint64_t{1} << e.bucket);
  }
  CHECK(summary.tokens_removed == expected_removed);
  CHECK(summary.tokens_in == source.token_count());
  for (const auto& [w, f] : source.frequency_table())
    if (!plan.find(w)) CHECK(result.frequency(w) == f);
  CHECK(result.line_count() == source.line_count());
  CHECK(summary.bucket_sizes == std::vector<std::size_t>(8, 3));

  SUBCASE("the kept occurrences are the planned ones") {
    const auto& e = plan.entries().back();
    const auto kept_positions = result.occurrences(*result.id_of(e.word));
    const auto src_positions = source.occurrences(*source.id_of(e.word));
    // Surviving occurrence k sits on the same line as source occurrence kept[k].
    for (std::size_t k = 0; k < e.kept.size(); ++k)
      CHECK(result.line_of(kept_positions[k]) == source.line_of(src_positions[e.kept[k]]));
  }

  SUBCASE("save and reload the plan, re-apply byte-identically") {
    plan.save(dir / "plan.tsv");
    const auto reloaded = DownsamplePlan::load(dir / "plan.tsv");
    CHECK(reloaded.words() == plan.words());
    apply_downsample(dir / "src.txt", reloaded, dir / "again.txt");
    CHECK(testing::read_file(dir / "again.txt") == testing::read_file(dir / "out.txt"));
  }

  SUBCASE("a plan that does not match the corpus is rejected") {
    try {
      apply_downsample(dir / "out.txt", plan, dir / "bad.txt");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::invalid_input);
    }
    CHECK_FALSE(std::filesystem::exists(dir / "bad.txt"));
  }

  SUBCASE("same seed gives the same plan") {
    const auto other = build_downsample_plan(source, 4, cfg);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      CHECK(other.entries()[i].word == plan.entries()[i].word);
      CHECK(other.entries()[i].kept == plan.entries()[i].kept);
    }
  }
}

TEST_CASE("plan validation") {
  CHECK_THROWS_AS(DownsamplePlan({{"ab", 2, {0, 1, 2}, {}}}), Error);
  CHECK_THROWS_AS(DownsamplePlan({{"ab", 1, {3, 3}, {}}}), Error);
  CHECK_THROWS_AS(DownsamplePlan({{"ab", 0, {0}, {}}, {"ab", 0, {1}, {}}}), Error);
  testing::TempDir dir;
  testing::write_file(dir / "bad.tsv", "ab\t1\t0,x\n");
  CHECK_THROWS_AS(DownsamplePlan::load(dir / "bad.tsv"), Error);
}

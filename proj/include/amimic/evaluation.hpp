#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "amimic/corpus.hpp"
#include "amimic/embedding_store.hpp"
#include "amimic/training.hpp"

namespace amimic {

// ---------------------------------------------------------------------------
// Embedding-space alignment

using Dictionary = std::vector<std::pair<std::string, std::string>>;

/// Orthogonal map from a test space into a gold space.
struct AlignmentMap {
  Matrix W;
  Dictionary dictionary;
  /// Singular values of the cross-covariance, descending.
  std::vector<double> singular_values;
  double condition_number = 0.0;
  bool rank_deficient = false;

  Vector apply(std::span<const double> x) const { return W.apply(x); }
  /// ||W^T W - I||_F
  double orthogonality_defect() const;
};

/// "word<TAB>word" lines (test-space word, gold-space word).
Dictionary load_dictionary(const std::filesystem::path& path);
/// Every word present in both spaces except `exclude`, sorted.
Dictionary shared_vocabulary_dictionary(const EmbeddingSpace& test, const EmbeddingSpace& gold,
                                        std::span<const std::string> exclude = {});

/// W = argmin over orthogonal W of sum ||W x_i - y_i||^2, solved as U V^T
/// from the SVD of sum y_i x_i^T. A rank-deficient cross-covariance still
/// yields an orthogonal W; the diagnostics record it.
AlignmentMap fit_alignment(const EmbeddingSpace& test, const EmbeddingSpace& gold, Dictionary dictionary);

struct BucketScore {
  int bucket = 0;
  std::uint64_t occurrences = 0;
  double mean_cosine = 0.0;
  std::size_t count = 0;
  std::vector<std::string> skipped;
};

struct AlignmentReport {
  std::vector<BucketScore> buckets;
};

/// Per bucket, mean cosine between W * inferred(w) and gold(w). Words with no
/// (or a zero) inferred vector are skipped and listed.
AlignmentReport score_alignment(const EmbeddingSpace& inferred, const EmbeddingSpace& gold,
                                const AlignmentMap& map, const DownsamplePlan& plan);

/// Rows of labelled reports; buckets as columns, scores x100 with one decimal.
std::string format_alignment_table(std::span<const std::pair<std::string, AlignmentReport>> rows);

// ---------------------------------------------------------------------------
// Rank correlation and similarity benchmarks

/// Spearman's rank correlation, average ranks for ties. Undefined (error)
/// when either input is constant.
double spearman(std::span<const double> predicted, std::span<const double> gold);
/// 1-based average ranks.
std::vector<double> average_ranks(std::span<const double> values);

struct SimilarityEntry {
  std::string word_a;
  std::string word_b;
  double gold = 0.0;
};

struct SimilarityBenchmark {
  std::vector<SimilarityEntry> entries;
  /// "word_a<TAB>word_b<TAB>gold_score" lines; at least two entries.
  static SimilarityBenchmark load(const std::filesystem::path& path);
};

/// probe word -> context sentences (tokenized) from "probe_word<TAB>sentence" lines.
std::map<std::string, std::vector<std::vector<std::string>>> load_context_sentences(
    const std::filesystem::path& path);

/// Returns an inferred embedding for a word, or nullopt to fall back to the
/// embedding space.
using InferFn = std::function<std::optional<Vector>(std::string_view word)>;

struct SimilarityResult {
  double rho = 0.0;
  std::vector<double> predicted;
};

/// Spearman between cosine(emb(a), emb(b)) and the gold scores.
SimilarityResult eval_similarity(const SimilarityBenchmark& benchmark, const InferFn& infer,
                                 const EmbeddingSpace& space);

// ---------------------------------------------------------------------------
// Linear probes

struct ProbeExample {
  std::string word;
  std::vector<std::string> labels;
};

struct ProbeDataset {
  std::vector<ProbeExample> rows;

  /// "word<TAB>label[,label...]" lines.
  static ProbeDataset load(const std::filesystem::path& path);
  std::vector<std::string> label_set() const;
  bool single_label() const;
};

struct ProbeConfig {
  AdamConfig adam;
  std::uint32_t epochs = 5;
  std::uint64_t seed = 1;
};

/// One-vs-rest logistic regression over word embeddings.
class LinearProbe {
 public:
  LinearProbe(std::vector<std::string> labels, std::size_t dim, bool single_label);

  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t dim() const { return dim_; }
  bool single_label() const { return single_label_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  /// Per-label sigmoid probabilities.
  std::vector<double> probabilities(std::span<const double> x) const;
  /// Single-label probes predict the arg max; multi-label probes predict
  /// every label with probability >= 0.5, or the arg max when none is.
  std::vector<std::string> predict(std::span<const double> x) const;
  std::optional<std::size_t> label_index(std::string_view label) const;

 private:
  std::vector<std::string> labels_;
  std::size_t dim_;
  bool single_label_;
  /// Row-major [label][dim] weights followed by one bias per label.
  std::vector<double> params_;
};

using EmbeddingLookup = std::function<const Vector*(std::string_view word)>;

EmbeddingLookup lookup_in(const EmbeddingSpace& space);

/// Trains with the shared Adam routine (mean binary cross-entropy over labels
/// and batch). Rejects datasets with fewer than two labels and rows whose
/// word has no embedding.
LinearProbe train_probe(const ProbeDataset& dataset, const EmbeddingLookup& embeddings, const ProbeConfig& config);

struct FrequencyBin {
  std::string name;
  /// [lo, hi)
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
};

struct ProbeScores {
  std::string name;
  std::size_t count = 0;
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

struct ProbeMetrics {
  ProbeScores overall;
  std::vector<ProbeScores> bins;
  std::vector<std::string> missing;
};

/// Accuracy is exact label-set match; micro-F1 pools label decisions over all
/// rows. Test labels unknown to the probe raise ErrorKind::invalid_input;
/// words without an embedding are listed in `missing` and not scored.
ProbeMetrics eval_probe(const LinearProbe& probe, const ProbeDataset& test, const EmbeddingLookup& embeddings,
                        std::span<const FrequencyBin> bins = {},
                        const std::function<std::uint64_t(std::string_view)>& frequency = {});

// ---------------------------------------------------------------------------
// Significance

/// Two-sided exact binomial test of wins vs losses under p = 1/2.
double sign_test(std::uint64_t wins, std::uint64_t losses);

struct BucketComparison {
  int bucket = 0;
  std::uint64_t occurrences = 0;
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  std::size_t skipped = 0;
  /// nullopt when every comparison tied ("no evidence").
  std::optional<double> p_value;
};

/// Per bucket: how often model a's mapped embedding is closer (cosine) to the
/// gold embedding than model b's. Ties are dropped before the sign test.
std::vector<BucketComparison> compare_models(const EmbeddingSpace& a, const EmbeddingSpace& b,
                                             const EmbeddingSpace& gold, const AlignmentMap& map_a,
                                             const AlignmentMap& map_b, const DownsamplePlan& plan);
std::vector<BucketComparison> compare_models(const EmbeddingSpace& a, const EmbeddingSpace& b,
                                             const EmbeddingSpace& gold, const AlignmentMap& map,
                                             const DownsamplePlan& plan);

std::string format_comparison_table(std::span<const BucketComparison> rows);

}  // namespace amimic

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amimic/corpus.hpp"
#include "amimic/embedding_store.hpp"
#include "amimic/surface_form.hpp"
#include "amimic/tensor.hpp"

namespace amimic {

enum class InferenceMode { full, context_only, form_only };

std::string_view to_string(InferenceMode mode);
std::optional<InferenceMode> parse_inference_mode(std::string_view text);

/// Every learnable tensor of the form-context model.
struct ModelParams {
  std::size_t dim = 0;
  /// One row per n-gram of the vocabulary.
  Matrix ngram_table;
  /// Applied to the context embedding before combination (d x d).
  Matrix A;
  /// Gate weights over [context; form] (2d).
  Vector u;
  double b = 0.0;
  /// Projection used by the context similarity (d x d).
  Matrix M;
  /// false: plain averaging over contexts (FCM); true: reliability weighting.
  bool attention_enabled = true;

  /// A = M = identity, u = 0, b = 0, n-gram rows ~ N(0, ngram_stddev^2).
  static ModelParams initial(std::size_t dim, std::size_t ngram_count, bool attention,
                             std::uint64_t seed, double ngram_stddev = 0.01);

  /// Throws ErrorKind::invalid_input on inconsistent shapes and
  /// ErrorKind::numeric on non-finite entries.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Everything computed during one forward pass, kept for inspection and for
/// the backward pass.
struct ForwardTrace {
  /// Mode that actually ran after degradation (see FormContextModel::forward).
  InferenceMode mode = InferenceMode::full;
  std::vector<Vector> context_vectors;
  /// M v_C for each context; empty unless the attention path ran.
  std::vector<Vector> projected;
  std::vector<double> weights;
  /// Sum of all pairwise similarities; NaN when not computed.
  double normalizer = 0.0;
  bool uniform_fallback = false;
  Vector context_embedding;
  Vector form_embedding;
  std::vector<std::uint32_t> ngram_ids;
  bool formless = false;
  double alpha = 0.0;
  Vector output;
};

/// Maps words of one corpus to their vectors in one embedding space, so
/// contexts can be averaged without string lookups.
class ContextEncoder {
 public:
  ContextEncoder(const Corpus& corpus, const EmbeddingSpace& space);

  /// Mean embedding of the context words present in the space; nullopt when
  /// none is.
  std::optional<Vector> encode(const Context& context) const;
  std::vector<Vector> encode_all(std::span<const Context> contexts) const;

 private:
  std::size_t dim_;
  std::vector<const Vector*> lookup_;
};

/// v_C for a context given as words. Words missing from the space are
/// skipped; nullopt when every word is missing.
std::optional<Vector> context_vector(std::span<const std::string> words, const EmbeddingSpace& space);

/// s(C1, C2) = (M v1) . (M v2) / sqrt(d)
double context_similarity(std::span<const double> v1, std::span<const double> v2, const Matrix& M);

struct Reliability {
  std::vector<double> weights;
  std::vector<Vector> projected;
  double normalizer = 0.0;
  bool uniform_fallback = false;
};

/// Weight of context j: sum_i s(C_j, C_i) / Z with Z = sum_i sum_j s(C_i, C_j),
/// self-similarity included. Falls back to 1/m when |Z| < 1e-8 m^2.
Reliability compute_reliability(std::span<const Vector> context_vectors, const Matrix& M);
std::vector<double> reliability_weights(std::span<const Vector> context_vectors, const Matrix& M);

/// sum_i weights[i] * context_vectors[i]
Vector context_embedding(std::span<const Vector> context_vectors, std::span<const double> weights);

/// sigmoid(u . [v_context; v_form] + b)
double gate(std::span<const double> v_context, std::span<const double> v_form,
            std::span<const double> u, double b);

/// alpha * A v_context + (1 - alpha) * v_form
Vector combine(std::span<const double> v_context, std::span<const double> v_form, double alpha,
               const Matrix& A);

/// beta(f) * inferred + (1 - beta(f)) * original with beta(f) = max(0, 1 - f / f_cap).
/// `original` may be null only when beta(f) = 1.
Vector combine_with_original(std::span<const double> inferred, const Vector* original, double frequency,
                             double f_cap = 32.0);

/// An n-gram vocabulary with its parameters.
class FormContextModel {
 public:
  FormContextModel() = default;
  FormContextModel(NgramVocab vocab, ModelParams params);

  const NgramVocab& vocab() const { return vocab_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  std::size_t dim() const { return params_.dim; }

  /// Runs the model. `full` degrades to `form_only` when no context is given
  /// and to `context_only` when the word is formless; a formless word without
  /// contexts raises ErrorKind::unusable, as does `context_only` without
  /// contexts and `form_only` for a formless word.
  ForwardTrace forward(std::string_view word, std::vector<Vector> context_vectors,
                       InferenceMode mode = InferenceMode::full) const;
  ForwardTrace forward(std::span<const std::uint32_t> ngram_ids, std::vector<Vector> context_vectors,
                       InferenceMode mode = InferenceMode::full) const;

  /// Encodes raw context sentences through `space` (unusable contexts are
  /// dropped) and runs forward().
  ForwardTrace infer(std::string_view word, std::span<const std::vector<std::string>> contexts,
                     const EmbeddingSpace& space, InferenceMode mode = InferenceMode::full) const;

 private:
  NgramVocab vocab_;
  ModelParams params_;
};

/// One "context_index<TAB>weight" line per context.
void write_attention_trace(std::ostream& out, const ForwardTrace& trace);

}  // namespace amimic

#include "amimic/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "amimic/error.hpp"
#include "amimic/random.hpp"

namespace amimic {

std::string_view to_string(InferenceMode mode) {
  switch (mode) {
    case InferenceMode::full: return "full";
    case InferenceMode::context_only: return "context-only";
    case InferenceMode::form_only: return "form-only";
  }
  return "unknown";
}

std::optional<InferenceMode> parse_inference_mode(std::string_view text) {
  if (text == "full") return InferenceMode::full;
  if (text == "context-only") return InferenceMode::context_only;
  if (text == "form-only") return InferenceMode::form_only;
  return std::nullopt;
}

ModelParams ModelParams::initial(std::size_t dim, std::size_t ngram_count, bool attention,
                                 std::uint64_t seed, double ngram_stddev) {
  if (dim == 0) throw Error(ErrorKind::invalid_input, "model dimension must be positive");
  ModelParams p;
  p.dim = dim;
  p.ngram_table = Matrix(ngram_count, dim);
  Rng rng(seed);
  for (auto& x : p.ngram_table.data()) x = ngram_stddev * rng.normal();
  p.A = Matrix::identity(dim);
  p.u.assign(2 * dim, 0.0);
  p.b = 0.0;
  p.M = Matrix::identity(dim);
  p.attention_enabled = attention;
  return p;
}

void ModelParams::validate() const {
  const auto square = [&](const Matrix& m) { return m.rows() == dim && m.cols() == dim; };
  if (dim == 0 || !square(A) || !square(M) || u.size() != 2 * dim ||
      (ngram_table.rows() > 0 && ngram_table.cols() != dim))
    throw Error(ErrorKind::invalid_input, "model parameter shapes are inconsistent");
  if (!all_finite(ngram_table.data()) || !all_finite(A.data()) || !all_finite(M.data()) ||
      !all_finite(u) || !std::isfinite(b))
    throw Error(ErrorKind::numeric, "model parameters contain non-finite values");
}

// ---------------------------------------------------------------------------

ContextEncoder::ContextEncoder(const Corpus& corpus, const EmbeddingSpace& space)
    : dim_(space.dimension()), lookup_(corpus.vocabulary_size(), nullptr) {
  for (WordId id = 0; id < corpus.vocabulary_size(); ++id) lookup_[id] = space.find(corpus.word(id));
}

std::optional<Vector> ContextEncoder::encode(const Context& context) const {
  Vector sum(dim_, 0.0);
  std::size_t found = 0;
  for (const auto id : context.tokens) {
    if (const auto* v = lookup_[id]) {
      axpy(1.0, *v, sum);
      ++found;
    }
  }
  if (found == 0) return std::nullopt;
  const double n = static_cast<double>(found);
  for (auto& x : sum) x /= n;
  return sum;
}

std::vector<Vector> ContextEncoder::encode_all(std::span<const Context> contexts) const {
  std::vector<Vector> out;
  out.reserve(contexts.size());
  for (const auto& c : contexts)
    if (auto v = encode(c)) out.push_back(std::move(*v));
  return out;
}

std::optional<Vector> context_vector(std::span<const std::string> words, const EmbeddingSpace& space) {
  Vector sum(space.dimension(), 0.0);
  std::size_t found = 0;
  for (const auto& w : words) {
    if (const auto* v = space.find(w)) {
      axpy(1.0, *v, sum);
      ++found;
    }
  }
  if (found == 0) return std::nullopt;
  const double n = static_cast<double>(found);
  for (auto& x : sum) x /= n;
  return sum;
}

double context_similarity(std::span<const double> v1, std::span<const double> v2, const Matrix& M) {
  const auto p1 = M.apply(v1);
  const auto p2 = M.apply(v2);
  return dot(p1, p2) / std::sqrt(static_cast<double>(v1.size()));
}

Reliability compute_reliability(std::span<const Vector> context_vectors, const Matrix& M) {
  const auto m = context_vectors.size();
  if (m == 0) throw Error(ErrorKind::invalid_input, "reliability of an empty context set");
  Reliability r;
  if (m == 1) {
    r.weights = {1.0};
    r.projected = {M.apply(context_vectors[0])};
    r.normalizer = dot(r.projected[0], r.projected[0]) / std::sqrt(static_cast<double>(M.rows()));
    return r;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(M.rows()));
  r.projected.reserve(m);
  Vector total(M.rows(), 0.0);
  for (const auto& v : context_vectors) {
    r.projected.push_back(M.apply(v));
    axpy(1.0, r.projected.back(), total);
  }
  // sum_i s(C_j, C_i) = p_j . (sum_i p_i) / sqrt(d)
  std::vector<double> row_sums(m);
  for (std::size_t j = 0; j < m; ++j) row_sums[j] = dot(r.projected[j], total) * scale;
  r.normalizer = dot(total, total) * scale;
  const double md = static_cast<double>(m);
  if (!(std::abs(r.normalizer) >= 1e-8 * md * md)) {
    r.uniform_fallback = true;
    r.weights.assign(m, 1.0 / md);
    return r;
  }
  r.weights.resize(m);
  for (std::size_t j = 0; j < m; ++j) r.weights[j] = row_sums[j] / r.normalizer;
  return r;
}

std::vector<double> reliability_weights(std::span<const Vector> context_vectors, const Matrix& M) {
  return compute_reliability(context_vectors, M).weights;
}

Vector context_embedding(std::span<const Vector> context_vectors, std::span<const double> weights) {
  if (context_vectors.size() != weights.size())
    throw Error(ErrorKind::invalid_input, "context vectors and weights differ in length");
  if (context_vectors.empty()) throw Error(ErrorKind::invalid_input, "context embedding of no contexts");
  Vector out(context_vectors.front().size(), 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) axpy(weights[i], context_vectors[i], out);
  return out;
}

double gate(std::span<const double> v_context, std::span<const double> v_form, std::span<const double> u,
            double b) {
  if (u.size() != v_context.size() + v_form.size())
    throw Error(ErrorKind::invalid_input, "gate weights must cover [context; form]");
  const double z = dot(u.first(v_context.size()), v_context) + dot(u.subspan(v_context.size()), v_form) + b;
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Vector combine(std::span<const double> v_context, std::span<const double> v_form, double alpha,
               const Matrix& A) {
  if (v_context.size() != v_form.size() || A.cols() != v_context.size() || A.rows() != v_form.size())
    throw Error(ErrorKind::invalid_input, "combine: inconsistent shapes");
  auto out = A.apply(v_context);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * out[i] + (1.0 - alpha) * v_form[i];
  return out;
}

Vector combine_with_original(std::span<const double> inferred, const Vector* original, double frequency,
                             double f_cap) {
  if (frequency < 0) throw Error(ErrorKind::invalid_input, "frequency must be nonnegative");
  if (!(f_cap > 0)) throw Error(ErrorKind::invalid_input, "f_cap must be positive");
  const double beta = std::max(0.0, 1.0 - frequency / f_cap);
  if (beta == 1.0) return Vector(inferred.begin(), inferred.end());
  if (original == nullptr)
    throw Error(ErrorKind::invalid_input, "original embedding required for frequency " + std::to_string(frequency));
  if (original->size() != inferred.size())
    throw Error(ErrorKind::invalid_input, "inferred and original embeddings differ in size");
  if (beta == 0.0) return *original;
  Vector out(inferred.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = beta * inferred[i] + (1.0 - beta) * (*original)[i];
  return out;
}

// ---------------------------------------------------------------------------

FormContextModel::FormContextModel(NgramVocab vocab, ModelParams params)
    : vocab_(std::move(vocab)), params_(std::move(params)) {
  if (params_.ngram_table.rows() != vocab_.size())
    throw Error(ErrorKind::invalid_input, "n-gram table rows do not match the vocabulary");
  params_.validate();
}

ForwardTrace FormContextModel::forward(std::string_view word, std::vector<Vector> context_vectors,
                                       InferenceMode mode) const {
  const auto ids = vocab_.ids_for(word);
  return forward(ids, std::move(context_vectors), mode);
}

ForwardTrace FormContextModel::forward(std::span<const std::uint32_t> ngram_ids,
                                       std::vector<Vector> context_vectors, InferenceMode mode) const {
  const auto& p = params_;
  for (const auto& v : context_vectors)
    if (v.size() != p.dim) throw Error(ErrorKind::invalid_input, "context vector has the wrong dimension");

  ForwardTrace t;
  auto form = form_embedding(ngram_ids, p.ngram_table);
  t.form_embedding = std::move(form.vector);
  t.formless = form.formless;
  t.ngram_ids = std::move(form.ngram_ids);
  t.context_vectors = std::move(context_vectors);
  const bool has_context = !t.context_vectors.empty();

  if (mode == InferenceMode::full) {
    if (!has_context && t.formless)
      throw Error(ErrorKind::unusable, "word is formless and has no usable context");
    if (!has_context) mode = InferenceMode::form_only;
    else if (t.formless) mode = InferenceMode::context_only;
  }
  if (mode == InferenceMode::context_only && !has_context)
    throw Error(ErrorKind::unusable, "context-only inference needs at least one usable context");
  if (mode == InferenceMode::form_only && t.formless)
    throw Error(ErrorKind::unusable, "form-only inference of a formless word");
  t.mode = mode;

  if (mode == InferenceMode::form_only) {
    t.alpha = 0.0;
    t.output = t.form_embedding;
    return t;
  }

  const auto m = t.context_vectors.size();
  if (p.attention_enabled) {
    auto r = compute_reliability(t.context_vectors, p.M);
    t.weights = std::move(r.weights);
    t.projected = std::move(r.projected);
    t.normalizer = r.normalizer;
    t.uniform_fallback = r.uniform_fallback;
  } else {
    t.weights.assign(m, 1.0 / static_cast<double>(m));
    t.normalizer = std::nan("");
  }
  t.context_embedding = context_embedding(t.context_vectors, t.weights);

  if (mode == InferenceMode::context_only) {
    t.alpha = 1.0;
    t.output = p.A.apply(t.context_embedding);
    return t;
  }
  t.alpha = gate(t.context_embedding, t.form_embedding, p.u, p.b);
  t.output = combine(t.context_embedding, t.form_embedding, t.alpha, p.A);
  return t;
}

ForwardTrace FormContextModel::infer(std::string_view word, std::span<const std::vector<std::string>> contexts,
                                     const EmbeddingSpace& space, InferenceMode mode) const {
  if (space.dimension() != params_.dim)
    throw Error(ErrorKind::invalid_input, "embedding space dimension differs from the model");
  std::vector<Vector> vectors;
  for (const auto& c : contexts) {
    // Drop the occurrence the sentence was collected for; further
    // occurrences stay, as in corpus-extracted contexts.
    std::vector<std::string> words(c.begin(), c.end());
    if (auto it = std::find(words.begin(), words.end(), word); it != words.end()) words.erase(it);
    if (auto v = context_vector(words, space)) vectors.push_back(std::move(*v));
  }
  return forward(word, std::move(vectors), mode);
}

void write_attention_trace(std::ostream& out, const ForwardTrace& trace) {
  char buf[64];
  for (std::size_t i = 0; i < trace.weights.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\n", i, trace.weights[i]);
    out << buf;
  }
}

}  // namespace amimic

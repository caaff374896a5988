#include "amimic/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "amimic/error.hpp"

namespace amimic {

void SamplerConfig::validate() const {
  if (min_frequency < 1) throw Error(ErrorKind::invalid_input, "min_frequency must be at least 1");
  if (context_min < 1 || context_min > context_max)
    throw Error(ErrorKind::invalid_input, "need 1 <= context_min <= context_max");
  if (window < 1) throw Error(ErrorKind::invalid_input, "context window must be at least 1");
}

std::uint32_t repetitions_per_epoch(std::uint64_t frequency, const SamplerConfig& config) {
  const auto n = frequency / config.min_frequency;
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(n, config.per_epoch_cap));
}

std::vector<ScheduleEntry> epoch_schedule(const Corpus& corpus, const EmbeddingSpace& space,
                                          const SamplerConfig& config, std::span<const std::string> exclude) {
  config.validate();
  const std::set<std::string_view> excluded(exclude.begin(), exclude.end());
  std::vector<ScheduleEntry> schedule;
  for (WordId id = 0; id < corpus.vocabulary_size(); ++id) {
    const auto& w = corpus.word(id);
    const auto n = repetitions_per_epoch(corpus.frequency(id), config);
    if (n == 0 || !space.contains(w) || excluded.contains(w)) continue;
    schedule.push_back({w, n});
  }
  if (schedule.empty()) throw Error(ErrorKind::unusable, "no word qualifies for training");
  std::sort(schedule.begin(), schedule.end(), [](const auto& a, const auto& b) { return a.word < b.word; });
  return schedule;
}

std::vector<ScheduleEntry> augment_with_targets(std::vector<ScheduleEntry> schedule,
                                                std::span<const std::string> target_words,
                                                const EmbeddingSpace& space, std::uint32_t pairs_per_word) {
  for (const auto& t : target_words) {
    if (!space.contains(t))
      throw Error(ErrorKind::invalid_input, "target word '" + t + "' has no original embedding");
    auto it = std::lower_bound(schedule.begin(), schedule.end(), t,
                               [](const ScheduleEntry& e, const std::string& w) { return e.word < w; });
    if (it != schedule.end() && it->word == t)
      it->repetitions += pairs_per_word;
    else
      schedule.insert(it, ScheduleEntry{t, pairs_per_word});
  }
  return schedule;
}

std::size_t instances_per_epoch(std::span<const ScheduleEntry> schedule) {
  std::size_t n = 0;
  for (const auto& e : schedule) n += e.repetitions;
  return n;
}

std::vector<std::string> expand_epoch(std::span<const ScheduleEntry> schedule, Rng& rng) {
  std::vector<std::string> words;
  words.reserve(instances_per_epoch(schedule));
  for (const auto& e : schedule)
    for (std::uint32_t i = 0; i < e.repetitions; ++i) words.push_back(e.word);
  rng.shuffle(std::span<std::string>(words));
  return words;
}

std::uint32_t draw_context_count(const SamplerConfig& config, Rng& rng) {
  return static_cast<std::uint32_t>(rng.uniform_int(config.context_min, config.context_max));
}

TrainingInstance make_instance(std::string_view word, const Corpus& corpus, const ContextEncoder& encoder,
                               const EmbeddingSpace& space, const SamplerConfig& config, Rng& rng) {
  const auto* target = space.find(word);
  if (target == nullptr)
    throw Error(ErrorKind::invalid_input, "no original embedding for '" + std::string(word) + "'");
  TrainingInstance instance;
  instance.word = std::string(word);
  instance.target = *target;
  const auto count = draw_context_count(config, rng);
  instance.contexts = sample_context_set(corpus, word, count, rng, false, config.window);
  instance.context_vectors = encoder.encode_all(instance.contexts.contexts);
  return instance;
}

// ---------------------------------------------------------------------------

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  g.ngram_table = Matrix(params.ngram_table.rows(), params.dim);
  g.A = Matrix(params.dim, params.dim);
  g.u.assign(2 * params.dim, 0.0);
  g.b = 0.0;
  g.M = Matrix(params.dim, params.dim);
  return g;
}

void Gradients::set_zero() {
  std::fill(ngram_table.data().begin(), ngram_table.data().end(), 0.0);
  std::fill(A.data().begin(), A.data().end(), 0.0);
  std::fill(u.begin(), u.end(), 0.0);
  b = 0.0;
  std::fill(M.data().begin(), M.data().end(), 0.0);
}

bool Gradients::finite() const {
  return all_finite(ngram_table.data()) && all_finite(A.data()) && all_finite(u) && std::isfinite(b) &&
         all_finite(M.data());
}

double loss(const TrainingInstance& instance, const FormContextModel& model) {
  const auto trace = model.forward(instance.word, instance.context_vectors);
  double l = 0.0;
  for (std::size_t i = 0; i < trace.output.size(); ++i) {
    const double diff = trace.output[i] - instance.target[i];
    l += diff * diff;
  }
  return l;
}

double accumulate_gradients(const ForwardTrace& t, std::span<const double> target, const ModelParams& p,
                            Gradients& into, double scale) {
  const auto d = p.dim;
  Vector g(d);
  double l = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = t.output[i] - target[i];
    l += diff * diff;
    g[i] = 2.0 * diff * scale;
  }

  Vector d_context;  // d loss / d v_context
  Vector d_form;     // d loss / d v_form
  const auto outer_into = [d](Matrix& m, double s, std::span<const double> left, std::span<const double> right) {
    for (std::size_t r = 0; r < d; ++r) axpy(s * left[r], right, m.row(r));
  };

  switch (t.mode) {
    case InferenceMode::form_only:
      d_form = g;
      break;
    case InferenceMode::context_only:
      outer_into(into.A, 1.0, g, t.context_embedding);
      d_context = p.A.apply_transposed(g);
      break;
    case InferenceMode::full: {
      const double alpha = t.alpha;
      const auto a_context = p.A.apply(t.context_embedding);
      outer_into(into.A, alpha, g, t.context_embedding);
      double d_alpha = 0.0;
      for (std::size_t i = 0; i < d; ++i) d_alpha += g[i] * (a_context[i] - t.form_embedding[i]);
      const double dz = d_alpha * alpha * (1.0 - alpha);
      axpy(dz, t.context_embedding, std::span<double>(into.u).first(d));
      axpy(dz, t.form_embedding, std::span<double>(into.u).subspan(d));
      into.b += dz;
      d_context = p.A.apply_transposed(g);
      for (auto& x : d_context) x *= alpha;
      axpy(dz, std::span<const double>(p.u).first(d), d_context);
      d_form.assign(d, 0.0);
      axpy(1.0 - alpha, g, d_form);
      axpy(dz, std::span<const double>(p.u).subspan(d), d_form);
      break;
    }
  }

  if (!d_form.empty() && !t.ngram_ids.empty()) {
    const double share = 1.0 / static_cast<double>(t.ngram_ids.size());
    for (const auto id : t.ngram_ids) axpy(share, d_form, into.ngram_table.row(id));
  }

  // Attention: v_context = sum_j rho_j v_j with rho_j = S_j / Z,
  // S_j = p_j . P / sqrt(d), P = sum_i p_i, p_i = M v_i.
  const auto m = t.context_vectors.size();
  if (!d_context.empty() && p.attention_enabled && m > 1 && !t.uniform_fallback) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> d_rho(m);
    double mean_term = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      d_rho[j] = dot(d_context, t.context_vectors[j]);
      mean_term += d_rho[j] * t.weights[j];
    }
    Vector total(d, 0.0);
    for (const auto& pj : t.projected) axpy(1.0, pj, total);
    Vector shared(d, 0.0);  // sum_j gamma_j p_j
    std::vector<double> gamma(m);
    for (std::size_t j = 0; j < m; ++j) {
      gamma[j] = (d_rho[j] - mean_term) / t.normalizer;
      axpy(gamma[j], t.projected[j], shared);
    }
    for (std::size_t i = 0; i < m; ++i) {
      Vector d_p(d);
      for (std::size_t k = 0; k < d; ++k) d_p[k] = (gamma[i] * total[k] + shared[k]) * inv_sqrt_d;
      outer_into(into.M, 1.0, d_p, t.context_vectors[i]);
    }
  }
  return l;
}

double accumulate_gradients(const TrainingInstance& instance, const FormContextModel& model, Gradients& into,
                            double scale) {
  const auto trace = model.forward(instance.word, instance.context_vectors);
  return accumulate_gradients(trace, instance.target, model.params(), into, scale);
}

Gradients backward(const TrainingInstance& instance, const FormContextModel& model) {
  auto g = Gradients::zeros_like(model.params());
  accumulate_gradients(instance, model, g);
  return g;
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_params(const ModelParams& params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  s.first = Gradients::zeros_like(params);
  s.second = Gradients::zeros_like(params);
  return s;
}

namespace {

struct AdamCoefficients {
  double beta1, beta2, step_size, epsilon, correction2;
};

AdamCoefficients coefficients(const AdamConfig& c, std::uint64_t step) {
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(c.beta1, t);
  const double c2 = 1.0 - std::pow(c.beta2, t);
  return {c.beta1, c.beta2, c.learning_rate / c1, c.epsilon, c2};
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& k) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = k.beta1 * m[i] + (1.0 - k.beta1) * grad[i];
    v[i] = k.beta2 * v[i] + (1.0 - k.beta2) * grad[i] * grad[i];
    param[i] -= k.step_size * m[i] / (std::sqrt(v[i] / k.correction2) + k.epsilon);
  }
}

void require_finite(std::span<const double> values, const char* name) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << "non-finite gradient in " << name << " at index " << i << " (value " << values[i] << ")";
      throw Error(ErrorKind::numeric, msg.str());
    }
}

}  // namespace

void adam_step(ModelParams& params, const Gradients& g, AdamState& state) {
  if (g.ngram_table.rows() != params.ngram_table.rows() || g.A.rows() != params.dim ||
      g.u.size() != params.u.size() || g.M.rows() != params.dim || state.first.u.size() != params.u.size())
    throw Error(ErrorKind::invalid_input, "gradient shapes do not match the parameters");
  require_finite(g.ngram_table.data(), "ngram_table");
  require_finite(g.A.data(), "A");
  require_finite(g.u, "u");
  require_finite(std::span<const double>(&g.b, 1), "b");
  require_finite(g.M.data(), "M");

  ++state.step;
  const auto k = coefficients(state.config, state.step);
  adam_update(params.ngram_table.data(), g.ngram_table.data(), state.first.ngram_table.data(),
              state.second.ngram_table.data(), k);
  adam_update(params.A.data(), g.A.data(), state.first.A.data(), state.second.A.data(), k);
  adam_update(params.u, g.u, state.first.u, state.second.u, k);
  adam_update(std::span<double>(&params.b, 1), std::span<const double>(&g.b, 1),
              std::span<double>(&state.first.b, 1), std::span<double>(&state.second.b, 1), k);
  adam_update(params.M.data(), g.M.data(), state.first.M.data(), state.second.M.data(), k);
}

VectorAdam::VectorAdam(std::size_t size, const AdamConfig& config)
    : config_(config), first_(size, 0.0), second_(size, 0.0) {}

void VectorAdam::step(std::span<double> params, std::span<const double> gradients) {
  if (params.size() != first_.size() || gradients.size() != first_.size())
    throw Error(ErrorKind::invalid_input, "Adam: size mismatch");
  require_finite(gradients, "gradient");
  ++step_;
  adam_update(params, gradients, first_, second_, coefficients(config_, step_));
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kMagic[4] = {'A', 'M', 'C', 'K'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void vec(std::span<const double> v) {
    u64(v.size());
    for (const double x : v) f64(x);
  }
  void mat(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (const double x : m.data()) f64(x);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) throw Error(ErrorKind::format, "checkpoint is truncated");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (static_cast<std::uint32_t>(in_.gcount()) != n) throw Error(ErrorKind::format, "checkpoint is truncated");
    return s;
  }
  Vector vec() {
    const auto n = bounded(u64());
    Vector v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  Matrix mat() {
    const auto r = bounded(u64());
    const auto c = bounded(u64());
    Matrix m(r, bounded(c));
    for (auto& x : m.data()) x = f64();
    return m;
  }

 private:
  static std::size_t bounded(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 32)) throw Error(ErrorKind::format, "implausible tensor size in checkpoint");
    return static_cast<std::size_t>(n);
  }
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write checkpoint " + path.string());
  Writer w(out);
  out.write(kMagic, 4);
  w.u32(kCheckpointVersion);
  const auto& p = ck.model.params();
  const auto& vocab = ck.model.vocab();
  w.u64(p.dim);
  w.u8(p.attention_enabled ? 1 : 0);
  w.i32(vocab.config().n_min);
  w.i32(vocab.config().n_max);
  w.i32(vocab.config().min_count);
  w.u64(vocab.size());
  for (std::uint32_t id = 0; id < vocab.size(); ++id) {
    w.str(vocab.ngram(id));
    w.u32(id);
  }
  w.mat(p.ngram_table);
  w.mat(p.A);
  w.vec(p.u);
  w.f64(p.b);
  w.mat(p.M);
  const auto& s = ck.sampler;
  w.u64(s.min_frequency);
  w.u32(s.per_epoch_cap);
  w.u32(s.context_min);
  w.u32(s.context_max);
  w.u32(s.epochs);
  w.u64(s.seed);
  w.i32(s.window);
  const auto& a = ck.adam;
  w.f64(a.learning_rate);
  w.f64(a.beta1);
  w.f64(a.beta2);
  w.f64(a.epsilon);
  w.u32(a.batch_size);
  w.u32(ck.metadata.epochs_completed);
  w.u64(ck.metadata.seed);
  out.close();
  if (!out) throw Error(ErrorKind::io, "write failure on " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kMagic))
    throw Error(ErrorKind::format, path.string() + " is not a checkpoint (bad magic)");
  Reader r(in);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::format, "unsupported checkpoint version " + std::to_string(version));

  ModelParams p;
  p.dim = static_cast<std::size_t>(r.u64());
  p.attention_enabled = r.u8() != 0;
  NgramConfig nc;
  nc.n_min = r.i32();
  nc.n_max = r.i32();
  nc.min_count = r.i32();
  const auto vocab_size = r.u64();
  std::vector<std::pair<std::string, std::uint32_t>> entries;
  entries.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(vocab_size, 1u << 24)));
  for (std::uint64_t i = 0; i < vocab_size; ++i) {
    auto gram = r.str();
    const auto id = r.u32();
    entries.emplace_back(std::move(gram), id);
  }
  auto vocab = NgramVocab::from_entries(nc, std::move(entries));
  p.ngram_table = r.mat();
  p.A = r.mat();
  p.u = r.vec();
  p.b = r.f64();
  p.M = r.mat();
  if (p.ngram_table.rows() == 0) p.ngram_table = Matrix(0, p.dim);

  Checkpoint ck;
  auto& s = ck.sampler;
  s.min_frequency = r.u64();
  s.per_epoch_cap = r.u32();
  s.context_min = r.u32();
  s.context_max = r.u32();
  s.epochs = r.u32();
  s.seed = r.u64();
  s.window = r.i32();
  auto& a = ck.adam;
  a.learning_rate = r.f64();
  a.beta1 = r.f64();
  a.beta2 = r.f64();
  a.epsilon = r.f64();
  a.batch_size = r.u32();
  ck.metadata.epochs_completed = r.u32();
  ck.metadata.seed = r.u64();
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(ErrorKind::format, "trailing bytes after checkpoint payload");
  ck.model = FormContextModel(std::move(vocab), std::move(p));
  return ck;
}

// ---------------------------------------------------------------------------

Checkpoint train(const Corpus& corpus, const EmbeddingSpace& space, const TrainOptions& options) {
  const auto& sc = options.sampler;
  sc.validate();
  if (options.adam.batch_size == 0) throw Error(ErrorKind::invalid_input, "batch size must be positive");
  if (space.dimension() == 0) throw Error(ErrorKind::invalid_input, "embedding space has no dimension");

  auto schedule = epoch_schedule(corpus, space, sc, options.exclude_words);
  if (!options.target_words.empty())
    schedule = augment_with_targets(std::move(schedule), options.target_words, space, options.pairs_per_target);

  std::vector<std::string> training_words;
  for (const auto& e : schedule) training_words.push_back(e.word);
  auto vocab = NgramVocab::build(training_words, options.ngrams);
  auto params = ModelParams::initial(space.dimension(), vocab.size(), options.attention, Rng::mix(sc.seed, 0),
                                     options.ngram_init_stddev);
  FormContextModel model(std::move(vocab), std::move(params));

  const ContextEncoder encoder(corpus, space);
  auto state = AdamState::for_params(model.params(), options.adam);
  auto grads = Gradients::zeros_like(model.params());

  std::vector<TrainingInstance> batch;
  for (std::uint32_t epoch = 0; epoch < sc.epochs; ++epoch) {
    Rng order_rng(Rng::mix(sc.seed, 2 * epoch + 1));
    Rng sample_rng(Rng::mix(sc.seed, 2 * epoch + 2));
    const auto words = expand_epoch(schedule, order_rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < words.size(); start += options.adam.batch_size) {
      const auto end = std::min(words.size(), start + options.adam.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) {
        try {
          batch.push_back(make_instance(words[i], corpus, encoder, space, sc, sample_rng));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::unusable) throw;
          if (options.warnings) *options.warnings << "warning: skipping instance: " << e.what() << '\n';
        }
      }
      if (batch.empty()) continue;
      grads.set_zero();
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (const auto& inst : batch) {
        loss_sum += accumulate_gradients(inst, model, grads, scale);
        ++loss_count;
      }
      adam_step(model.params(), grads, state);
      if (!state.first.finite() || !state.second.finite())
        throw Error(ErrorKind::numeric, "Adam moments diverged at epoch " + std::to_string(epoch + 1));
      model.params().validate();
    }
    if (options.on_epoch)
      options.on_epoch(epoch + 1, loss_count ? loss_sum / static_cast<double>(loss_count) : std::nan(""));
  }

  Checkpoint ck;
  ck.model = std::move(model);
  ck.sampler = sc;
  ck.adam = options.adam;
  ck.metadata.epochs_completed = sc.epochs;
  ck.metadata.seed = sc.seed;
  return ck;
}

}  // namespace amimic

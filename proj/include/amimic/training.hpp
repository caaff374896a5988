#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amimic/corpus.hpp"
#include "amimic/embedding_store.hpp"
#include "amimic/model.hpp"
#include "amimic/random.hpp"
#include "amimic/surface_form.hpp"

namespace amimic {

/// How training words and their contexts are drawn.
struct SamplerConfig {
  /// Words below this frequency are never trained on; also the divisor in
  /// the per-epoch repetition count min(floor(f / min_frequency), cap).
  std::uint64_t min_frequency = 100;
  std::uint32_t per_epoch_cap = 5;
  std::uint32_t context_min = 1;
  std::uint32_t context_max = 64;
  std::uint32_t epochs = 5;
  std::uint64_t seed = 1;
  int window = kDefaultWindow;

  void validate() const;
  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint32_t batch_size = 64;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct ScheduleEntry {
  std::string word;
  std::uint32_t repetitions = 0;

  friend bool operator==(const ScheduleEntry&, const ScheduleEntry&) = default;
};

/// min(floor(f / min_frequency), per_epoch_cap); zero below min_frequency.
std::uint32_t repetitions_per_epoch(std::uint64_t frequency, const SamplerConfig& config);

/// Words with f >= min_frequency and an embedding in `space`, with their
/// per-epoch repetition counts, sorted by word. Words in `exclude` are left
/// out. Raises ErrorKind::unusable when nothing is schedulable.
std::vector<ScheduleEntry> epoch_schedule(const Corpus& corpus, const EmbeddingSpace& space,
                                          const SamplerConfig& config,
                                          std::span<const std::string> exclude = {});

/// Adds `pairs_per_word` instances per epoch for each target word. Targets
/// need an embedding in `space` (ErrorKind::invalid_input otherwise).
std::vector<ScheduleEntry> augment_with_targets(std::vector<ScheduleEntry> schedule,
                                                std::span<const std::string> target_words,
                                                const EmbeddingSpace& space,
                                                std::uint32_t pairs_per_word = 5);

std::size_t instances_per_epoch(std::span<const ScheduleEntry> schedule);

/// The schedule expanded to one word per instance and shuffled.
std::vector<std::string> expand_epoch(std::span<const ScheduleEntry> schedule, Rng& rng);

struct TrainingInstance {
  std::string word;
  ContextSet contexts;
  /// Encoded contexts (contexts with no word in the space are dropped).
  std::vector<Vector> context_vectors;
  /// Original embedding of `word`.
  Vector target;
};

/// Uniform draw from [context_min, context_max].
std::uint32_t draw_context_count(const SamplerConfig& config, Rng& rng);

/// Draws a context count, samples that many contexts and attaches the
/// word's original embedding. Raises ErrorKind::unusable when the word has
/// no nonempty context and ErrorKind::invalid_input when it has no embedding.
TrainingInstance make_instance(std::string_view word, const Corpus& corpus, const ContextEncoder& encoder,
                               const EmbeddingSpace& space, const SamplerConfig& config, Rng& rng);

/// Gradients of the loss, one tensor per parameter group.
struct Gradients {
  Matrix ngram_table;
  Matrix A;
  Vector u;
  double b = 0.0;
  Matrix M;

  static Gradients zeros_like(const ModelParams& params);
  void set_zero();
  bool finite() const;
};

/// Squared Euclidean distance between the model output and the target.
double loss(const TrainingInstance& instance, const FormContextModel& model);

/// Adds scale * d(loss)/d(params) into `into` and returns the loss. Context
/// word embeddings are inputs and receive no gradient.
double accumulate_gradients(const TrainingInstance& instance, const FormContextModel& model,
                            Gradients& into, double scale = 1.0);
double accumulate_gradients(const ForwardTrace& trace, std::span<const double> target,
                            const ModelParams& params, Gradients& into, double scale = 1.0);
Gradients backward(const TrainingInstance& instance, const FormContextModel& model);

/// Moment estimates for every parameter tensor.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  Gradients first;
  Gradients second;

  static AdamState for_params(const ModelParams& params, const AdamConfig& config);
};

/// One bias-corrected Adam update. Raises ErrorKind::numeric (naming the
/// tensor) on a non-finite gradient, before anything is modified.
void adam_step(ModelParams& params, const Gradients& gradients, AdamState& state);

/// Plain Adam over a flat parameter vector; shared by the linear probe.
class VectorAdam {
 public:
  VectorAdam(std::size_t size, const AdamConfig& config);
  void step(std::span<double> params, std::span<const double> gradients);
  std::uint64_t steps() const { return step_; }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<double> first_;
  std::vector<double> second_;
};

struct TrainingMetadata {
  std::uint32_t epochs_completed = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct Checkpoint {
  FormContextModel model;
  SamplerConfig sampler;
  AdamConfig adam;
  TrainingMetadata metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary, little-endian, doubles stored bit-exactly.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainOptions {
  SamplerConfig sampler;
  AdamConfig adam;
  NgramConfig ngrams;
  bool attention = true;
  double ngram_init_stddev = 0.01;
  /// Never used as training words (the downsampled benchmark words).
  std::vector<std::string> exclude_words;
  /// Mimicked `pairs_per_target` times per epoch regardless of frequency.
  std::vector<std::string> target_words;
  std::uint32_t pairs_per_target = 5;
  /// Called after each epoch with its mean instance loss.
  std::function<void(std::uint32_t epoch, double mean_loss)> on_epoch;
  /// Receives warnings about skipped instances; may be null.
  std::ostream* warnings = nullptr;
};

/// Mimicking training: per epoch, every scheduled word is instantiated its
/// repetition count times in shuffled order, processed in mini-batches whose
/// gradient is the mean over instances, each followed by an Adam step.
Checkpoint train(const Corpus& corpus, const EmbeddingSpace& space, const TrainOptions& options);

}  // namespace amimic

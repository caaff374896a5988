// Command-line front end: corpus preparation, training, inference and every
// evaluation. Each subcommand reads a flat key=value config (--config) whose
// keys are option names; flags given on the command line win.

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "amimic/corpus.hpp"
#include "amimic/embedding_store.hpp"
#include "amimic/error.hpp"
#include "amimic/evaluation.hpp"
#include "amimic/model.hpp"
#include "amimic/training.hpp"

#ifndef AMIMIC_VERSION
#define AMIMIC_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace amimic;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_of(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char byte[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

/// Records what a run consumed and produced.
class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)) {}

  void input(const std::string& role, const fs::path& path) { inputs_.emplace_back(role, path); }
  void output(const fs::path& path) { outputs_.push_back(path); }
  void setting(const std::string& key, const std::string& value) { settings_.emplace_back(key, value); }

  void write(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << "command\t" << command_ << "\nversion\t" << AMIMIC_VERSION << '\n';
    for (const auto& [k, v] : settings_) out << "setting\t" << k << '\t' << v << '\n';
    for (const auto& [role, p] : inputs_) out << "input\t" << role << '\t' << p.string() << '\t' << sha256_of(p) << '\n';
    for (const auto& p : outputs_) out << "output\t" << p.string() << '\t' << sha256_of(p) << '\n';
  }

 private:
  std::string command_;
  std::vector<std::pair<std::string, fs::path>> inputs_;
  std::vector<fs::path> outputs_;
  std::vector<std::pair<std::string, std::string>> settings_;
};

fs::path manifest_path(const fs::path& output) { return fs::path(output.string() + ".manifest"); }

void require_inputs(std::initializer_list<std::pair<const char*, const fs::path*>> inputs) {
  for (const auto& [name, path] : inputs)
    if (path && !path->empty() && !fs::is_regular_file(*path))
      throw Error(ErrorKind::io, std::string("missing input for ") + name + ": " + path->string());
}

std::vector<std::string> read_word_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::vector<std::string> words;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

std::vector<std::vector<std::string>> read_sentences(const fs::path& path) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : read_word_list(path)) {
    std::istringstream in(line);
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(t);
    out.push_back(std::move(tokens));
  }
  return out;
}

std::string format_vector(std::string_view word, const Vector& v) {
  std::string line(word);
  char buf[32];
  for (double x : v) {
    std::snprintf(buf, sizeof buf, " %.9g", x);
    line += buf;
  }
  return line;
}

/// Writes to a file when `path` is set, to stdout otherwise.
class Output {
 public:
  explicit Output(const fs::path& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw Error(ErrorKind::io, "cannot write " + path.string());
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string format_probe_scores(const ProbeScores& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s\t%zu\t%.4f\t%.4f\n", s.name.c_str(), s.count, s.accuracy, s.micro_f1);
  return buf;
}

std::vector<FrequencyBin> parse_bins(const std::string& spec) {
  // "name:lo:hi,name:lo:hi"
  std::vector<FrequencyBin> bins;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto a = item.find(':'), b = item.rfind(':');
    if (a == std::string::npos || a == b) throw UsageError("bad frequency bin '" + item + "', expected name:lo:hi");
    try {
      bins.push_back({item.substr(0, a), std::stoull(item.substr(a + 1, b - a - 1)), std::stoull(item.substr(b + 1))});
    } catch (const std::logic_error&) {
      throw UsageError("bad frequency bin '" + item + "'");
    }
  }
  return bins;
}

// ---------------------------------------------------------------------------
// Options shared by several subcommands

struct SamplerFlags {
  std::uint64_t seed = 1;
  std::uint32_t epochs = 5;
  std::uint32_t contexts_min = 1;
  std::uint32_t contexts_max = 64;
  std::uint64_t min_frequency = 100;
  std::uint32_t per_epoch_cap = 5;
  int window = kDefaultWindow;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--contexts-min", contexts_min, "Fewest contexts per instance")->capture_default_str();
    app->add_option("--contexts-max", contexts_max, "Most contexts per instance")->capture_default_str();
    app->add_option("--min-frequency", min_frequency, "Minimum frequency of training words")->capture_default_str();
    app->add_option("--per-epoch-cap", per_epoch_cap, "Most instances per word and epoch")->capture_default_str();
    app->add_option("--window", window, "Context tokens on each side")->capture_default_str();
  }
  SamplerConfig config() const {
    SamplerConfig c;
    c.seed = seed;
    c.epochs = epochs;
    c.context_min = contexts_min;
    c.context_max = contexts_max;
    c.min_frequency = min_frequency;
    c.per_epoch_cap = per_epoch_cap;
    c.window = window;
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Subcommands

struct CountCmd {
  fs::path corpus, out;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("count", "Word frequencies of a corpus");
    c->add_option("--corpus", corpus)->required();
    c->add_option("--out", out, "Frequency table (default: stdout)");
  }
  void run() {
    require_inputs({{"--corpus", &corpus}});
    const auto c = Corpus::load(corpus);
    {
      Output o(out);
      o.stream() << "#tokens\t" << c.token_count() << '\n';
      for (const auto& [w, f] : c.frequency_table()) o.stream() << w << '\t' << f << '\n';
    }
    if (!out.empty()) {
      Manifest m("count");
      m.input("corpus", corpus);
      m.output(out);
      m.write(manifest_path(out));
    }
  }
};

struct DownsampleCmd {
  fs::path corpus, out_dir, plan_in;
  std::uint64_t seed = 1;
  DownsampleConfig config;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("downsample", "Build a frequency-bucket benchmark corpus");
    c->add_option("--corpus", corpus)->required();
    c->add_option("--out-dir", out_dir)->required();
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--plan", plan_in, "Reuse an existing plan instead of sampling one");
    c->add_option("--buckets", config.bucket_count)->capture_default_str();
    c->add_option("--words-per-bucket", config.words_per_bucket)->capture_default_str();
    c->add_option("--min-occurrences", config.min_occurrences)->capture_default_str();
    c->add_option("--min-length", config.min_length)->capture_default_str();
  }
  void run() {
    require_inputs({{"--corpus", &corpus}, {"--plan", &plan_in}});
    fs::create_directories(out_dir);
    const auto plan_path = out_dir / "plan.tsv";
    const auto corpus_path = out_dir / "corpus.txt";
    const auto summary_path = out_dir / "summary.tsv";
    DownsamplePlan plan;
    if (plan_in.empty()) {
      plan = build_downsample_plan(Corpus::load(corpus), seed, config);
    } else {
      plan = DownsamplePlan::load(plan_in);
    }
    plan.save(plan_path);
    const auto summary = apply_downsample(corpus, plan, corpus_path);
    {
      Output o(summary_path);
      auto& s = o.stream();
      s << "bucket\toccurrences\twords\n";
      for (std::size_t b = 0; b < summary.bucket_sizes.size(); ++b)
        s << b << '\t' << (std::uint64_t{1} << b) << '\t' << summary.bucket_sizes[b] << '\n';
      s << "tokens_in\t" << summary.tokens_in << "\ntokens_removed\t" << summary.tokens_removed << "\nlines\t"
        << summary.lines << '\n';
    }
    std::cout << "buckets\t" << summary.bucket_sizes.size() << "\twords\t" << plan.size() << "\ttokens_removed\t"
              << summary.tokens_removed << '\n';
    Manifest m("downsample");
    m.setting("seed", std::to_string(seed));
    m.input("corpus", corpus);
    if (!plan_in.empty()) m.input("plan", plan_in);
    for (const auto& p : {plan_path, corpus_path, summary_path}) m.output(p);
    m.write(out_dir / "manifest.tsv");
  }
};

struct TrainCmd {
  fs::path corpus, embeddings, out, plan, log;
  SamplerFlags sampler;
  AdamConfig adam;
  NgramConfig ngrams;
  bool no_attention = false;
  bool include_targets = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train a mimicking model");
    c->add_option("--corpus", corpus)->required();
    c->add_option("--embeddings", embeddings, "Embeddings to mimic")->required();
    c->add_option("--out", out, "Checkpoint path")->required();
    c->add_option("--plan", plan, "Downsample plan; its words are not used as training words");
    c->add_flag("--include-targets", include_targets, "Add the plan words as extra targets (5 pairs each per epoch)");
    c->add_flag("--no-attention", no_attention, "Average contexts uniformly (FCM)");
    c->add_option("--log", log, "Epoch log (default: stdout)");
    sampler.add(c);
    c->add_option("--learning-rate", adam.learning_rate)->capture_default_str();
    c->add_option("--batch-size", adam.batch_size)->capture_default_str();
    c->add_option("--ngram-min", ngrams.n_min)->capture_default_str();
    c->add_option("--ngram-max", ngrams.n_max)->capture_default_str();
    c->add_option("--ngram-min-count", ngrams.min_count)->capture_default_str();
  }
  void run() {
    require_inputs({{"--corpus", &corpus}, {"--embeddings", &embeddings}, {"--plan", &plan}});
    if (include_targets && plan.empty()) throw UsageError("--include-targets needs --plan");
    TrainOptions options;
    options.sampler = sampler.config();
    options.adam = adam;
    options.ngrams = ngrams;
    options.attention = !no_attention;
    options.warnings = &std::cerr;
    if (!plan.empty()) {
      options.exclude_words = DownsamplePlan::load(plan).words();
      if (include_targets) options.target_words = options.exclude_words;
    }
    const auto space = load_text(embeddings);
    const auto c = Corpus::load(corpus);
    Output o(log);
    options.on_epoch = [&](std::uint32_t epoch, double mean_loss) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%u\t%.9g\n", epoch, mean_loss);
      o.stream() << buf << std::flush;
    };
    const auto checkpoint = amimic::train(c, space, options);
    save_checkpoint(checkpoint, out);

    Manifest m("train");
    m.setting("seed", std::to_string(sampler.seed));
    m.setting("epochs", std::to_string(sampler.epochs));
    m.setting("attention", no_attention ? "off" : "on");
    m.setting("include_targets", include_targets ? "yes" : "no");
    m.input("corpus", corpus);
    m.input("embeddings", embeddings);
    if (!plan.empty()) m.input("plan", plan);
    m.output(out);
    if (!log.empty()) m.output(log);
    m.write(manifest_path(out));
  }
};

struct InferCmd {
  fs::path checkpoint, embeddings, contexts, trace, out;
  fs::path corpus, plan, words;
  std::string word;
  std::string mode_text = "full";
  std::optional<double> f_cap;
  std::optional<std::uint64_t> frequency;
  int window = kDefaultWindow;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("infer", "Infer embeddings with a trained model");
    c->add_option("--checkpoint", checkpoint)->required();
    c->add_option("--embeddings", embeddings, "Space the contexts are encoded with")->required();
    c->add_option("--mode", mode_text, "full, context-only or form-only")->capture_default_str();
    c->add_option("--word", word, "Single word to infer");
    c->add_option("--contexts", contexts, "Context sentences for --word, one per line");
    c->add_option("--trace", trace, "Attention weights for --word");
    c->add_option("--corpus", corpus, "Corpus to take contexts from (batch mode)");
    c->add_option("--plan", plan, "Infer every plan word (batch mode)");
    c->add_option("--words", words, "Infer every listed word (batch mode)");
    c->add_option("--window", window)->capture_default_str();
    c->add_option("--f-cap", f_cap, "Blend with the original embedding, weight linear in frequency up to this cap");
    c->add_option("--frequency", frequency, "Frequency of --word for --f-cap");
    c->add_option("--out", out, "Output (default: stdout)");
  }

  Vector finish(const EmbeddingSpace& space, const std::string& w, const Vector& inferred, std::uint64_t f) const {
    if (!f_cap) return inferred;
    return combine_with_original(inferred, space.find(w), static_cast<double>(f), *f_cap);
  }

  void run() {
    require_inputs({{"--checkpoint", &checkpoint},
                    {"--embeddings", &embeddings},
                    {"--contexts", &contexts},
                    {"--corpus", &corpus},
                    {"--plan", &plan},
                    {"--words", &words}});
    const auto mode = parse_inference_mode(mode_text);
    if (!mode) throw UsageError("unknown --mode '" + mode_text + "'");
    const bool batch = !corpus.empty();
    if (batch == !word.empty()) throw UsageError("give either --word or --corpus with --plan/--words");
    if (batch && plan.empty() == words.empty()) throw UsageError("batch mode needs exactly one of --plan, --words");
    const auto ck = load_checkpoint(checkpoint);
    const auto space = load_text(embeddings);
    Manifest m("infer");
    m.setting("mode", mode_text);
    if (f_cap) m.setting("f_cap", std::to_string(*f_cap));
    m.input("checkpoint", checkpoint);
    m.input("embeddings", embeddings);

    if (!batch) {
      const auto sentences = contexts.empty() ? std::vector<std::vector<std::string>>{} : read_sentences(contexts);
      const auto t = ck.model.infer(word, sentences, space, *mode);
      if (f_cap && !frequency) throw UsageError("--f-cap needs --frequency in single-word mode");
      {
        Output o(out);
        o.stream() << format_vector(word, finish(space, word, t.output, frequency.value_or(0))) << '\n';
      }
      if (!trace.empty()) {
        Output o(trace);
        write_attention_trace(o.stream(), t);
      }
      if (!contexts.empty()) m.input("contexts", contexts);
    } else {
      const auto c = Corpus::load(corpus);
      const auto targets = plan.empty() ? read_word_list(words) : DownsamplePlan::load(plan).words();
      const ContextEncoder encoder(c, space);
      EmbeddingSpace result(space.dimension(), "inferred");
      for (const auto& w : targets) {
        const auto vectors = encoder.encode_all(c.extract_contexts(w, window));
        try {
          const auto t = ck.model.forward(w, vectors, *mode);
          result.insert(w, finish(space, w, t.output, c.frequency(w)));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::unusable) throw;
          std::cerr << "warning: no embedding for '" << w << "': " << e.what() << '\n';
        }
      }
      if (out.empty()) throw UsageError("batch mode needs --out");
      save_text(result, out);
      m.input("corpus", corpus);
      m.input(plan.empty() ? "words" : "plan", plan.empty() ? words : plan);
    }
    if (!out.empty()) {
      m.output(out);
      if (!trace.empty()) m.output(trace);
      m.write(manifest_path(out));
    }
  }
};

struct EvalVecmapCmd {
  fs::path space_path, gold_path, plan_path, dictionary, out;
  std::vector<std::string> models;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval-vecmap", "Bucketed cosine similarity to gold embeddings after alignment");
    c->add_option("--space", space_path, "Space the evaluated embeddings live in (alignment source)")->required();
    c->add_option("--gold", gold_path, "Gold embeddings")->required();
    c->add_option("--plan", plan_path)->required();
    c->add_option("--model", models, "label=embeddings; the --space itself is scored as 'skipgram' when omitted");
    c->add_option("--dictionary", dictionary, "Alignment dictionary (default: shared words minus plan words)");
    c->add_option("--out", out, "Report (default: stdout)");
  }
  void run() {
    require_inputs({{"--space", &space_path}, {"--gold", &gold_path}, {"--plan", &plan_path}, {"--dictionary", &dictionary}});
    const auto space = load_text(space_path);
    const auto gold = load_text(gold_path);
    const auto plan = DownsamplePlan::load(plan_path);
    const auto plan_words = plan.words();
    const auto map = fit_alignment(space, gold,
                                   dictionary.empty() ? shared_vocabulary_dictionary(space, gold, plan_words)
                                                      : load_dictionary(dictionary));
    Manifest m("eval-vecmap");
    m.input("space", space_path);
    m.input("gold", gold_path);
    m.input("plan", plan_path);
    std::vector<std::pair<std::string, AlignmentReport>> rows;
    if (models.empty()) rows.emplace_back("skipgram", score_alignment(space, gold, map, plan));
    for (const auto& spec : models) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--model expects label=path, got '" + spec + "'");
      const fs::path path = spec.substr(eq + 1);
      require_inputs({{"--model", &path}});
      rows.emplace_back(spec.substr(0, eq), score_alignment(load_text(path), gold, map, plan));
      m.input("model", path);
    }
    {
      Output o(out);
      o.stream() << format_alignment_table(rows);
      for (const auto& [label, report] : rows)
        for (const auto& b : report.buckets)
          for (const auto& w : b.skipped) o.stream() << "# skipped\t" << label << '\t' << w << '\n';
      if (map.rank_deficient) o.stream() << "# warning\trank-deficient cross-covariance\n";
    }
    if (!out.empty()) {
      m.output(out);
      m.write(manifest_path(out));
    }
  }
};

struct EvalSimCmd {
  fs::path benchmark, embeddings, checkpoint, contexts, out;
  std::string mode_text = "context-only";
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval-sim", "Spearman correlation with gold similarity scores");
    c->add_option("--benchmark", benchmark)->required();
    c->add_option("--embeddings", embeddings)->required();
    c->add_option("--checkpoint", checkpoint, "Model used for words that have context sentences");
    c->add_option("--contexts", contexts, "probe_word<TAB>sentence lines");
    c->add_option("--mode", mode_text)->capture_default_str();
    c->add_option("--out", out);
  }
  void run() {
    require_inputs({{"--benchmark", &benchmark}, {"--embeddings", &embeddings}, {"--checkpoint", &checkpoint},
                    {"--contexts", &contexts}});
    if (checkpoint.empty() != contexts.empty()) throw UsageError("--checkpoint and --contexts go together");
    const auto mode = parse_inference_mode(mode_text);
    if (!mode) throw UsageError("unknown --mode '" + mode_text + "'");
    const auto bench = SimilarityBenchmark::load(benchmark);
    const auto space = load_text(embeddings);
    InferFn infer;
    std::optional<Checkpoint> ck;
    std::map<std::string, std::vector<std::vector<std::string>>> sentences;
    if (!checkpoint.empty()) {
      ck = load_checkpoint(checkpoint);
      sentences = load_context_sentences(contexts);
      infer = [&](std::string_view w) -> std::optional<Vector> {
        const auto it = sentences.find(std::string(w));
        if (it == sentences.end()) return std::nullopt;
        return ck->model.infer(w, it->second, space, *mode).output;
      };
    }
    const auto result = eval_similarity(bench, infer, space);
    {
      Output o(out);
      char buf[64];
      std::snprintf(buf, sizeof buf, "spearman\t%.6f\npairs\t%zu\n", result.rho, bench.entries.size());
      o.stream() << buf;
    }
    if (!out.empty()) {
      Manifest m("eval-sim");
      m.setting("mode", mode_text);
      m.input("benchmark", benchmark);
      m.input("embeddings", embeddings);
      if (!checkpoint.empty()) {
        m.input("checkpoint", checkpoint);
        m.input("contexts", contexts);
      }
      m.output(out);
      m.write(manifest_path(out));
    }
  }
};

struct ProbeCmd {
  fs::path train_path, test_path, embeddings, corpus, out;
  std::string bins;
  ProbeConfig config;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("probe", "Logistic-regression probe over embeddings");
    c->add_option("--train", train_path)->required();
    c->add_option("--test", test_path)->required();
    c->add_option("--embeddings", embeddings)->required();
    c->add_option("--epochs", config.epochs)->capture_default_str();
    c->add_option("--seed", config.seed)->capture_default_str();
    c->add_option("--learning-rate", config.adam.learning_rate)->capture_default_str();
    c->add_option("--batch-size", config.adam.batch_size)->capture_default_str();
    c->add_option("--bins", bins, "Frequency bins name:lo:hi,... (half-open), frequencies from --corpus");
    c->add_option("--corpus", corpus);
    c->add_option("--out", out);
  }
  void run() {
    require_inputs({{"--train", &train_path}, {"--test", &test_path}, {"--embeddings", &embeddings}, {"--corpus", &corpus}});
    const auto bin_list = bins.empty() ? std::vector<FrequencyBin>{} : parse_bins(bins);
    if (!bin_list.empty() && corpus.empty()) throw UsageError("--bins needs --corpus");
    const auto space = load_text(embeddings);
    const auto probe = train_probe(ProbeDataset::load(train_path), lookup_in(space), config);
    std::optional<Corpus> c;
    std::function<std::uint64_t(std::string_view)> freq;
    if (!corpus.empty()) {
      c = Corpus::load(corpus);
      freq = [&](std::string_view w) { return c->frequency(w); };
    }
    const auto metrics = eval_probe(probe, ProbeDataset::load(test_path), lookup_in(space), bin_list, freq);
    {
      Output o(out);
      o.stream() << "subset\tcount\taccuracy\tmicro_f1\n" << format_probe_scores(metrics.overall);
      for (const auto& b : metrics.bins) o.stream() << format_probe_scores(b);
      for (const auto& w : metrics.missing) o.stream() << "# missing\t" << w << '\n';
    }
    if (!out.empty()) {
      Manifest m("probe");
      m.setting("seed", std::to_string(config.seed));
      m.input("train", train_path);
      m.input("test", test_path);
      m.input("embeddings", embeddings);
      if (!corpus.empty()) m.input("corpus", corpus);
      m.output(out);
      m.write(manifest_path(out));
    }
  }
};

struct CompareCmd {
  fs::path a, b, space_a, space_b, gold, plan, out;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("compare", "Per-bucket sign test between two models");
    c->add_option("--a", a, "Embeddings of model a")->required();
    c->add_option("--b", b, "Embeddings of model b")->required();
    c->add_option("--space", space_a, "Space both models live in (alignment source)")->required();
    c->add_option("--space-b", space_b, "Separate alignment source for model b");
    c->add_option("--gold", gold)->required();
    c->add_option("--plan", plan)->required();
    c->add_option("--out", out);
  }
  void run() {
    require_inputs({{"--a", &a}, {"--b", &b}, {"--space", &space_a}, {"--space-b", &space_b}, {"--gold", &gold},
                    {"--plan", &plan}});
    const auto g = load_text(gold);
    const auto p = DownsamplePlan::load(plan);
    const auto words = p.words();
    const auto fit = [&](const fs::path& s) {
      const auto space = load_text(s);
      return fit_alignment(space, g, shared_vocabulary_dictionary(space, g, words));
    };
    const auto map_a = fit(space_a);
    const auto map_b = space_b.empty() ? map_a : fit(space_b);
    const auto rows = compare_models(load_text(a), load_text(b), g, map_a, map_b, p);
    {
      Output o(out);
      o.stream() << format_comparison_table(rows);
    }
    if (!out.empty()) {
      Manifest m("compare");
      m.input("a", a);
      m.input("b", b);
      m.input("space", space_a);
      if (!space_b.empty()) m.input("space_b", space_b);
      m.input("gold", gold);
      m.input("plan", plan);
      m.output(out);
      m.write(manifest_path(out));
    }
  }
};

/// Reads "key = value" lines into "--key=value" arguments. Blank lines and
/// lines starting with '#' are ignored.
std::vector<std::string> config_arguments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config " + path.string());
  std::vector<std::string> args;
  std::size_t number = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  for (std::string line; std::getline(in, line);) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::format, path.string() + ":" + std::to_string(number) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty() || key == "config")
      throw Error(ErrorKind::format, path.string() + ":" + std::to_string(number) + ": invalid key");
    args.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return args;
}

int run(int argc, char** argv) {
  CLI::App app{"Rare-word embeddings by attentive mimicking"};
  app.set_version_flag("--version", AMIMIC_VERSION);
  app.require_subcommand(1);
  fs::path config;
  app.add_option("--config", config, "key=value file of default options for the subcommand");

  CountCmd count;
  DownsampleCmd downsample;
  TrainCmd train;
  InferCmd infer;
  EvalVecmapCmd vecmap;
  EvalSimCmd sim;
  ProbeCmd probe;
  CompareCmd compare;
  count.add(app);
  downsample.add(app);
  train.add(app);
  infer.add(app);
  vecmap.add(app);
  sim.add(app);
  probe.add(app);
  compare.add(app);
  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    for (auto* opt : sub->get_options())
      if (opt->get_expected_max() <= 1 && !opt->get_name().empty())
        opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // Config values go first so that command-line flags take precedence.
  std::vector<std::string> args(argv + 1, argv + argc);
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string cfg;
    if (args[i] == "--config" && i + 1 < args.size()) {
      cfg = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      cfg = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      continue;
    }
    const auto extra = config_arguments(cfg);
    // Insert right after the subcommand name.
    auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) { return a.rfind("-", 0) != 0; });
    if (sub == args.end()) throw UsageError("--config needs a subcommand");
    args.insert(sub + 1, extra.begin(), extra.end());
    break;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  const auto* selected = app.get_subcommands().front();
  const auto& name = selected->get_name();
  if (name == "count") count.run();
  else if (name == "downsample") downsample.run();
  else if (name == "train") train.run();
  else if (name == "infer") infer.run();
  else if (name == "eval-vecmap") vecmap.run();
  else if (name == "eval-sim") sim.run();
  else if (name == "probe") probe.run();
  else if (name == "compare") compare.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error\t" << to_string(e.kind()) << '\t' << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error\tusage\t" << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error\tinternal\t" << e.what() << '\n';
    return 3;
  }
}

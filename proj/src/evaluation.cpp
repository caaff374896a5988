#include "amimic/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "amimic/error.hpp"
#include "amimic/linalg.hpp"

namespace amimic {

namespace {

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  for (auto& t : split(sentence, ' '))
    if (!t.empty()) out.push_back(std::move(t));
  return out;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, const char* what, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, std::string("cannot open ") + what + " " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto view = strip_cr(line);
    if (view.empty()) continue;
    fn(view, path.string() + ":" + std::to_string(number));
  }
  if (in.bad()) throw Error(ErrorKind::io, "read failure in " + path.string());
}

}  // namespace

// ---------------------------------------------------------------------------

double AlignmentMap::orthogonality_defect() const {
  return frobenius_distance(W.transposed() * W, Matrix::identity(W.rows()));
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  Dictionary dict;
  for_each_line(path, "dictionary", [&](std::string_view line, const std::string& where) {
    const auto fields = split(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw Error(ErrorKind::format, where + ": expected 'word<TAB>word'");
    dict.emplace_back(fields[0], fields[1]);
  });
  return dict;
}

Dictionary shared_vocabulary_dictionary(const EmbeddingSpace& test, const EmbeddingSpace& gold,
                                        std::span<const std::string> exclude) {
  const std::set<std::string_view> excluded(exclude.begin(), exclude.end());
  Dictionary dict;
  for (const auto& w : test.words())
    if (gold.contains(w) && !excluded.contains(w)) dict.emplace_back(w, w);
  return dict;
}

AlignmentMap fit_alignment(const EmbeddingSpace& test, const EmbeddingSpace& gold, Dictionary dictionary) {
  const auto d = test.dimension();
  if (gold.dimension() != d)
    throw Error(ErrorKind::invalid_input, "alignment needs spaces of equal dimension");
  if (dictionary.empty()) throw Error(ErrorKind::invalid_input, "alignment dictionary is empty");
  Matrix cross(d, d);
  for (const auto& [x_word, y_word] : dictionary) {
    const auto* x = test.find(x_word);
    const auto* y = gold.find(y_word);
    if (!x || !y)
      throw Error(ErrorKind::invalid_input, "dictionary pair (" + x_word + ", " + y_word + ") is not in both spaces");
    for (std::size_t r = 0; r < d; ++r) axpy((*y)[r], *x, cross.row(r));
  }
  const auto dec = svd(cross);
  if (!dec.converged) throw Error(ErrorKind::numeric, "SVD of the cross-covariance did not converge");

  AlignmentMap map;
  map.W = dec.U * dec.V.transposed();
  map.dictionary = std::move(dictionary);
  map.singular_values = dec.singular_values;
  const double top = dec.singular_values.front();
  const double bottom = dec.singular_values.back();
  map.condition_number = bottom > 0 ? top / bottom : std::numeric_limits<double>::infinity();
  map.rank_deficient = !(bottom > top * 1e-12);
  return map;
}

AlignmentReport score_alignment(const EmbeddingSpace& inferred, const EmbeddingSpace& gold, const AlignmentMap& map,
                                const DownsamplePlan& plan) {
  AlignmentReport report;
  const auto buckets = plan.bucket_count();
  for (std::size_t b = 0; b < buckets; ++b) {
    BucketScore score;
    score.bucket = static_cast<int>(b);
    score.occurrences = std::uint64_t{1} << b;
    double sum = 0.0;
    for (const auto& word : plan.bucket_words(static_cast<int>(b))) {
      const auto* g = gold.find(word);
      if (!g) throw Error(ErrorKind::invalid_input, "plan word '" + word + "' has no gold embedding");
      const auto* v = inferred.find(word);
      if (!v || norm(*v) == 0.0) {
        score.skipped.push_back(word);
        continue;
      }
      sum += cosine(map.apply(*v), *g);
      ++score.count;
    }
    if (score.count == 0)
      throw Error(ErrorKind::unusable, "bucket " + std::to_string(score.occurrences) + " is empty after skips");
    score.mean_cosine = sum / static_cast<double>(score.count);
    report.buckets.push_back(std::move(score));
  }
  return report;
}

std::string format_alignment_table(std::span<const std::pair<std::string, AlignmentReport>> rows) {
  std::size_t label_width = 5;
  std::size_t columns = 0;
  for (const auto& [label, report] : rows) {
    label_width = std::max(label_width, label.size());
    columns = std::max(columns, report.buckets.size());
  }
  std::ostringstream out;
  char cell[32];
  out << "model" << std::string(label_width - 5, ' ');
  for (std::size_t b = 0; b < columns; ++b) {
    std::snprintf(cell, sizeof cell, " %7llu", static_cast<unsigned long long>(1ULL << b));
    out << cell;
  }
  out << '\n';
  for (const auto& [label, report] : rows) {
    out << label << std::string(label_width - label.size(), ' ');
    for (const auto& s : report.buckets) {
      std::snprintf(cell, sizeof cell, " %7.1f", 100.0 * s.mean_cosine);
      out << cell;
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

std::vector<double> average_ranks(std::span<const double> values) {
  const auto n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> predicted, std::span<const double> gold) {
  if (predicted.size() != gold.size()) throw Error(ErrorKind::invalid_input, "spearman: length mismatch");
  if (predicted.size() < 2) throw Error(ErrorKind::invalid_input, "spearman needs at least two pairs");
  if (!all_finite(predicted) || !all_finite(gold)) throw Error(ErrorKind::numeric, "spearman: non-finite input");
  const auto rp = average_ranks(predicted);
  const auto rg = average_ranks(gold);
  const double n = static_cast<double>(rp.size());
  const double mean = (n + 1.0) / 2.0;  // average ranks always sum to n(n+1)/2
  double cov = 0.0, vp = 0.0, vg = 0.0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    cov += (rp[i] - mean) * (rg[i] - mean);
    vp += (rp[i] - mean) * (rp[i] - mean);
    vg += (rg[i] - mean) * (rg[i] - mean);
  }
  if (vp == 0.0 || vg == 0.0) throw Error(ErrorKind::numeric, "spearman is undefined for a constant sequence");
  return std::clamp(cov / std::sqrt(vp * vg), -1.0, 1.0);
}

SimilarityBenchmark SimilarityBenchmark::load(const std::filesystem::path& path) {
  SimilarityBenchmark bench;
  for_each_line(path, "benchmark", [&](std::string_view line, const std::string& where) {
    const auto fields = split(line, '\t');
    if (fields.size() != 3) throw Error(ErrorKind::format, where + ": expected 'word_a<TAB>word_b<TAB>score'");
    double score = 0.0;
    std::size_t used = 0;
    try {
      score = std::stod(fields[2], &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != fields[2].size() || !std::isfinite(score))
      throw Error(ErrorKind::format, where + ": gold score is not a real number");
    bench.entries.push_back({fields[0], fields[1], score});
  });
  if (bench.entries.size() < 2) throw Error(ErrorKind::format, path.string() + ": need at least two entries");
  return bench;
}

std::map<std::string, std::vector<std::vector<std::string>>> load_context_sentences(
    const std::filesystem::path& path) {
  std::map<std::string, std::vector<std::vector<std::string>>> out;
  for_each_line(path, "context file", [&](std::string_view line, const std::string& where) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0)
      throw Error(ErrorKind::format, where + ": expected 'word<TAB>sentence'");
    out[std::string(line.substr(0, tab))].push_back(tokenize(line.substr(tab + 1)));
  });
  return out;
}

SimilarityResult eval_similarity(const SimilarityBenchmark& benchmark, const InferFn& infer,
                                 const EmbeddingSpace& space) {
  std::map<std::string, Vector, std::less<>> cache;
  const auto embed = [&](const std::string& w) -> const Vector& {
    if (auto it = cache.find(w); it != cache.end()) return it->second;
    std::optional<Vector> v;
    if (infer) v = infer(w);
    if (!v) {
      const auto* known = space.find(w);
      if (!known) throw Error(ErrorKind::invalid_input, "no embedding for benchmark word '" + w + "'");
      v = *known;
    }
    return cache.emplace(w, std::move(*v)).first->second;
  };
  SimilarityResult result;
  std::vector<double> gold;
  for (const auto& e : benchmark.entries) {
    result.predicted.push_back(cosine(embed(e.word_a), embed(e.word_b)));
    gold.push_back(e.gold);
  }
  result.rho = spearman(result.predicted, gold);
  return result;
}

// ---------------------------------------------------------------------------

ProbeDataset ProbeDataset::load(const std::filesystem::path& path) {
  ProbeDataset data;
  for_each_line(path, "probe dataset", [&](std::string_view line, const std::string& where) {
    const auto fields = split(line, '\t');
    if (fields.size() != 2 || fields[0].empty())
      throw Error(ErrorKind::format, where + ": expected 'word<TAB>label[,label...]'");
    ProbeExample ex;
    ex.word = fields[0];
    for (auto& l : split(fields[1], ','))
      if (!l.empty()) ex.labels.push_back(std::move(l));
    if (ex.labels.empty()) throw Error(ErrorKind::format, where + ": no label");
    std::sort(ex.labels.begin(), ex.labels.end());
    ex.labels.erase(std::unique(ex.labels.begin(), ex.labels.end()), ex.labels.end());
    data.rows.push_back(std::move(ex));
  });
  return data;
}

std::vector<std::string> ProbeDataset::label_set() const {
  std::set<std::string> labels;
  for (const auto& r : rows) labels.insert(r.labels.begin(), r.labels.end());
  return {labels.begin(), labels.end()};
}

bool ProbeDataset::single_label() const {
  return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.labels.size() == 1; });
}

LinearProbe::LinearProbe(std::vector<std::string> labels, std::size_t dim, bool single_label)
    : labels_(std::move(labels)), dim_(dim), single_label_(single_label),
      params_(labels_.size() * (dim + 1), 0.0) {}

std::vector<double> LinearProbe::probabilities(std::span<const double> x) const {
  if (x.size() != dim_) throw Error(ErrorKind::invalid_input, "probe input has the wrong dimension");
  std::vector<double> p(labels_.size());
  const auto bias_offset = labels_.size() * dim_;
  for (std::size_t l = 0; l < labels_.size(); ++l) {
    const double z =
        dot(std::span<const double>(params_).subspan(l * dim_, dim_), x) + params_[bias_offset + l];
    p[l] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return p;
}

std::vector<std::string> LinearProbe::predict(std::span<const double> x) const {
  const auto p = probabilities(x);
  const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  if (single_label_) return {labels_[best]};
  std::vector<std::string> out;
  for (std::size_t l = 0; l < p.size(); ++l)
    if (p[l] >= 0.5) out.push_back(labels_[l]);
  if (out.empty()) out.push_back(labels_[best]);
  return out;
}

std::optional<std::size_t> LinearProbe::label_index(std::string_view label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

EmbeddingLookup lookup_in(const EmbeddingSpace& space) {
  return [&space](std::string_view w) { return space.find(w); };
}

LinearProbe train_probe(const ProbeDataset& dataset, const EmbeddingLookup& embeddings, const ProbeConfig& config) {
  const auto labels = dataset.label_set();
  if (labels.size() < 2)
    throw Error(ErrorKind::invalid_input, "probe training needs at least two distinct labels");
  std::vector<const Vector*> inputs;
  for (const auto& r : dataset.rows) {
    const auto* v = embeddings(r.word);
    if (!v) throw Error(ErrorKind::invalid_input, "probe training word '" + r.word + "' has no embedding");
    inputs.push_back(v);
  }
  const auto dim = inputs.front()->size();
  LinearProbe probe(labels, dim, dataset.single_label());
  const auto L = labels.size();
  std::vector<std::vector<double>> targets(dataset.rows.size(), std::vector<double>(L, 0.0));
  for (std::size_t i = 0; i < dataset.rows.size(); ++i)
    for (const auto& l : dataset.rows[i].labels) targets[i][*probe.label_index(l)] = 1.0;

  VectorAdam adam(probe.params().size(), config.adam);
  std::vector<double> grad(probe.params().size());
  std::vector<std::size_t> order(dataset.rows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.seed);
  const auto batch = std::max<std::size_t>(1, config.adam.batch_size);
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto end = std::min(order.size(), start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto i = order[k];
        const auto& x = *inputs[i];
        const auto p = probe.probabilities(x);
        for (std::size_t l = 0; l < L; ++l) {
          const double err = (p[l] - targets[i][l]) * scale;
          axpy(err, x, std::span<double>(grad).subspan(l * dim, dim));
          grad[L * dim + l] += err;
        }
      }
      adam.step(probe.params(), grad);
    }
  }
  return probe;
}

namespace {

void add_row(ProbeScores& s, const std::vector<std::string>& predicted, const std::vector<std::string>& gold) {
  ++s.count;
  std::size_t tp = 0;
  for (const auto& l : predicted)
    if (std::find(gold.begin(), gold.end(), l) != gold.end()) ++tp;
  s.true_positives += tp;
  s.false_positives += predicted.size() - tp;
  s.false_negatives += gold.size() - tp;
  if (tp == predicted.size() && tp == gold.size()) s.accuracy += 1.0;  // count now, normalized later
}

void finish(ProbeScores& s) {
  if (s.count) s.accuracy /= static_cast<double>(s.count);
  const auto denom = 2 * s.true_positives + s.false_positives + s.false_negatives;
  s.micro_f1 = denom ? 2.0 * static_cast<double>(s.true_positives) / static_cast<double>(denom) : 0.0;
}

}  // namespace

ProbeMetrics eval_probe(const LinearProbe& probe, const ProbeDataset& test, const EmbeddingLookup& embeddings,
                        std::span<const FrequencyBin> bins,
                        const std::function<std::uint64_t(std::string_view)>& frequency) {
  if (!bins.empty() && !frequency)
    throw Error(ErrorKind::invalid_input, "frequency bins need a frequency source");
  ProbeMetrics metrics;
  metrics.overall.name = "all";
  for (const auto& b : bins) metrics.bins.push_back(ProbeScores{b.name});
  for (const auto& row : test.rows) {
    for (const auto& l : row.labels)
      if (!probe.label_index(l))
        throw Error(ErrorKind::invalid_input, "test label '" + l + "' was never seen in training");
    const auto* v = embeddings(row.word);
    if (!v) {
      metrics.missing.push_back(row.word);
      continue;
    }
    auto predicted = probe.predict(*v);
    std::sort(predicted.begin(), predicted.end());
    add_row(metrics.overall, predicted, row.labels);
    if (!bins.empty()) {
      const auto f = frequency(row.word);
      for (std::size_t i = 0; i < bins.size(); ++i)
        if (f >= bins[i].lo && f < bins[i].hi) add_row(metrics.bins[i], predicted, row.labels);
    }
  }
  finish(metrics.overall);
  for (auto& b : metrics.bins) finish(b);
  return metrics;
}

// ---------------------------------------------------------------------------

double sign_test(std::uint64_t wins, std::uint64_t losses) {
  const auto n = wins + losses;
  if (n == 0) throw Error(ErrorKind::invalid_input, "sign test needs at least one non-tied comparison");
  const auto k = std::min(wins, losses);
  // P(X <= k) for X ~ Binomial(n, 1/2), summed in log space from the largest term down.
  const long double nn = static_cast<long double>(n);
  const auto log_pmf = [&](std::uint64_t i) {
    const long double ii = static_cast<long double>(i);
    return std::lgamma(nn + 1) - std::lgamma(ii + 1) - std::lgamma(nn - ii + 1) - nn * std::log(2.0L);
  };
  const long double top = log_pmf(k);
  long double sum = 0.0L;
  for (std::uint64_t i = 0; i <= k; ++i) sum += std::exp(log_pmf(i) - top);
  const long double tail = std::exp(top) * sum;
  return static_cast<double>(std::min(1.0L, 2.0L * tail));
}

std::vector<BucketComparison> compare_models(const EmbeddingSpace& a, const EmbeddingSpace& b,
                                             const EmbeddingSpace& gold, const AlignmentMap& map_a,
                                             const AlignmentMap& map_b, const DownsamplePlan& plan) {
  std::vector<BucketComparison> out;
  std::size_t compared = 0;
  for (std::size_t bucket = 0; bucket < plan.bucket_count(); ++bucket) {
    BucketComparison c;
    c.bucket = static_cast<int>(bucket);
    c.occurrences = std::uint64_t{1} << bucket;
    for (const auto& word : plan.bucket_words(c.bucket)) {
      const auto* g = gold.find(word);
      const auto* va = a.find(word);
      const auto* vb = b.find(word);
      if (!g || !va || !vb || norm(*va) == 0.0 || norm(*vb) == 0.0) {
        ++c.skipped;
        continue;
      }
      const double ca = cosine(map_a.apply(*va), *g);
      const double cb = cosine(map_b.apply(*vb), *g);
      if (ca > cb) ++c.wins;
      else if (cb > ca) ++c.losses;
      else ++c.ties;
      ++compared;
    }
    if (c.wins + c.losses > 0) c.p_value = sign_test(c.wins, c.losses);
    out.push_back(c);
  }
  if (compared == 0) throw Error(ErrorKind::unusable, "no plan word is covered by both models and the gold space");
  return out;
}

std::vector<BucketComparison> compare_models(const EmbeddingSpace& a, const EmbeddingSpace& b,
                                             const EmbeddingSpace& gold, const AlignmentMap& map,
                                             const DownsamplePlan& plan) {
  return compare_models(a, b, gold, map, map, plan);
}

std::string format_comparison_table(std::span<const BucketComparison> rows) {
  std::ostringstream out;
  char line[128];
  out << "occurrences    wins  losses    ties  p_value\n";
  for (const auto& r : rows) {
    if (r.p_value)
      std::snprintf(line, sizeof line, "%11llu %7zu %7zu %7zu  %.3g\n", static_cast<unsigned long long>(r.occurrences),
                    r.wins, r.losses, r.ties, *r.p_value);
    else
      std::snprintf(line, sizeof line, "%11llu %7zu %7zu %7zu  no evidence\n",
                    static_cast<unsigned long long>(r.occurrences), r.wins, r.losses, r.ties);
    out << line;
  }
  return out.str();
}

}  // namespace amimic

#include "amimic/embedding_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "amimic/error.hpp"

namespace amimic {

void EmbeddingSpace::insert(std::string word, Vector vector) {
  if (vector.size() != dimension_)
    throw Error(ErrorKind::format, "vector for '" + word + "' has " + std::to_string(vector.size()) +
                                       " components, expected " + std::to_string(dimension_));
  if (!all_finite(vector)) throw Error(ErrorKind::format, "non-finite component for '" + word + "'");
  if (vectors_.contains(word)) throw Error(ErrorKind::format, "duplicate word '" + word + "'");
  vectors_.emplace(std::move(word), std::move(vector));
}

const Vector* EmbeddingSpace::find(std::string_view word) const {
  auto it = vectors_.find(std::string(word));
  return it == vectors_.end() ? nullptr : &it->second;
}

const Vector& EmbeddingSpace::at(std::string_view word) const {
  if (const auto* v = find(word)) return *v;
  throw Error(ErrorKind::invalid_input, "no embedding for '" + std::string(word) + "'");
}

std::vector<std::string> EmbeddingSpace::words() const {
  std::vector<std::string> out;
  out.reserve(vectors_.size());
  for (const auto& [w, v] : vectors_) out.push_back(w);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

bool parse_double(std::string_view text, double& out) {
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_size(std::string_view text, std::size_t& out) {
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

EmbeddingSpace load_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open embeddings " + path.string());
  std::string line;
  std::size_t number = 0;
  std::optional<EmbeddingSpace> space;
  std::optional<std::size_t> declared_count;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view(line);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    const auto fields = split_spaces(view);
    if (fields.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(number);
    std::size_t count = 0, dim = 0;
    if (!space && fields.size() == 2 && parse_size(fields[0], count) && parse_size(fields[1], dim)) {
      if (dim == 0) throw Error(ErrorKind::format, where + ": dimension must be positive");
      space.emplace(dim, path.filename().string());
      declared_count = count;
      continue;
    }
    if (!space) space.emplace(fields.size() - 1, path.filename().string());
    if (fields.size() - 1 != space->dimension())
      throw Error(ErrorKind::format, where + ": expected " + std::to_string(space->dimension()) +
                                         " components, found " + std::to_string(fields.size() - 1));
    Vector v(space->dimension());
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!parse_double(fields[i + 1], v[i]))
        throw Error(ErrorKind::format, where + ": non-numeric component '" + std::string(fields[i + 1]) + "'");
    try {
      space->insert(std::string(fields[0]), std::move(v));
    } catch (const Error& e) {
      throw Error(ErrorKind::format, where + ": " + e.what());
    }
  }
  if (in.bad()) throw Error(ErrorKind::io, "read failure in " + path.string());
  if (!space) throw Error(ErrorKind::format, path.string() + ": no header and no vectors");
  if (declared_count && *declared_count != space->size())
    throw Error(ErrorKind::format, path.string() + ": header declares " + std::to_string(*declared_count) +
                                       " words, found " + std::to_string(space->size()));
  return std::move(*space);
}

void save_text(const EmbeddingSpace& space, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write embeddings " + path.string());
  out << space.size() << ' ' << space.dimension() << '\n';
  char buf[32];
  for (const auto& word : space.words()) {
    out << word;
    for (const double x : *space.find(word)) {
      std::snprintf(buf, sizeof buf, " %.9g", x);
      out << buf;
    }
    out << '\n';
  }
  out.close();
  if (!out) throw Error(ErrorKind::io, "write failure on " + path.string());
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::invalid_input, "cosine of vectors with different sizes");
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::numeric, "cosine of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vector average(std::span<const Vector> vectors) {
  if (vectors.empty()) throw Error(ErrorKind::invalid_input, "average of an empty set");
  Vector mean(vectors.front().size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != mean.size()) throw Error(ErrorKind::invalid_input, "average of vectors with different sizes");
    for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (auto& x : mean) x /= n;
  return mean;
}

}  // namespace amimic

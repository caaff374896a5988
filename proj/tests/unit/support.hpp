#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <iterator>
#include <string>

#include <unistd.h>

#include "amimic/embedding_store.hpp"
#include "amimic/error.hpp"
#include "amimic/random.hpp"
#include "amimic/tensor.hpp"

namespace testing {

/// Fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("amimic-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Kind of the amimic::Error thrown by `fn`, nullopt when nothing is thrown.
inline std::optional<amimic::ErrorKind> error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const amimic::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline amimic::Vector random_vector(amimic::Rng& rng, std::size_t d, double scale = 1.0) {
  amimic::Vector v(d);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

inline amimic::Matrix random_matrix(amimic::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  amimic::Matrix m(r, c);
  for (auto& x : m.data()) x = scale * rng.normal();
  return m;
}

}  // namespace testing

#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dualplay/rng.hpp"

namespace dualplay::testing {

// Hand-rolled generators for property tests.
inline std::string random_word(Rng& rng, std::string_view alphabet, std::size_t max_len) {
  std::string w;
  const std::size_t len = 1 + rng.uniform_index(max_len);
  for (std::size_t i = 0; i < len; ++i) w += alphabet[rng.uniform_index(alphabet.size())];
  return w;
}

inline std::string random_sentence(Rng& rng, std::size_t max_words, std::string_view alphabet = "abcdef") {
  std::string s;
  const std::size_t n = rng.uniform_index(max_words + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += rng.bernoulli(0.2) ? ", " : " ";
    s += random_word(rng, alphabet, 3);
  }
  return s;
}

inline std::string random_bytes(Rng& rng, std::size_t max_len, std::string_view alphabet) {
  std::string s;
  const std::size_t len = rng.uniform_index(max_len + 1);
  for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.uniform_index(alphabet.size())];
  return s;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dualplay_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

inline void write_file(const std::filesystem::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace dualplay::testing

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lidm {

using Tokens = std::vector<std::string>;
using TokenIds = std::vector<int>;

// Lowercases, splits on whitespace and peels punctuation off token boundaries.
// Punctuation inside a token ("c.b", "i'm") is kept.
Tokens tokenize(std::string_view text);

std::string join(std::span<const std::string> tokens, std::string_view sep = " ");

class Vocabulary {
 public:
  static constexpr std::string_view kBos = "<s>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr std::string_view kUnk = "<unk>";

  // Reserved tokens first (bos, eos, unk, then `reserved`), followed by `words` in order.
  Vocabulary(std::span<const std::string> reserved, std::span<const std::string> words);

  std::size_t size() const { return tokens_.size(); }
  int bos() const { return 0; }
  int eos() const { return 1; }
  int unk() const { return 2; }

  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;

  TokenIds encode(std::span<const std::string> tokens) const;
  // Stops at end-of-sentence; begin-of-sentence ids are dropped.
  Tokens decode(std::span<const int> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary from_tokens(std::span<const std::string> all_tokens);

 private:
  Vocabulary() = default;
  void index();
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace lidm

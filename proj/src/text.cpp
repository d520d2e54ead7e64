#include "lidm/text.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lidm {

namespace {

bool is_boundary_punct(char c) {
  switch (c) {
    case '.': case ',': case '?': case '!': case ';': case ':':
    case '(': case ')': case '"':
      return true;
    default:
      return false;
  }
}

void split_word(const std::string& word, Tokens& out) {
  std::size_t begin = 0;
  std::size_t end = word.size();
  Tokens trailing;
  while (begin < end && is_boundary_punct(word[begin])) out.emplace_back(1, word[begin++]);
  while (end > begin && is_boundary_punct(word[end - 1])) trailing.emplace_back(1, word[--end]);
  if (end > begin) out.push_back(word.substr(begin, end - begin));
  out.insert(out.end(), trailing.rbegin(), trailing.rend());
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string word;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      if (!word.empty()) {
        split_word(word, out);
        word.clear();
      }
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!word.empty()) split_word(word, out);
  return out;
}

std::string join(std::span<const std::string> tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary(std::span<const std::string> reserved, std::span<const std::string> words) {
  tokens_ = {std::string(kBos), std::string(kEos), std::string(kUnk)};
  for (const auto& r : reserved) tokens_.push_back(r);
  for (const auto& w : words) tokens_.push_back(w);
  index();
}

void Vocabulary::index() {
  ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? unk() : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenIds Vocabulary::encode(std::span<const std::string> tokens) const {
  TokenIds out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Tokens Vocabulary::decode(std::span<const int> ids) const {
  Tokens out;
  for (int i : ids) {
    if (i == eos()) break;
    if (i == bos()) continue;
    out.push_back(token(i));
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw std::runtime_error("malformed vocabulary line: " + line);
    const int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(tokens.size())) throw std::runtime_error("vocabulary ids must be dense and ordered");
    tokens.push_back(line.substr(0, tab));
  }
  return from_tokens(tokens);
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> all_tokens) {
  if (all_tokens.size() < 3 || all_tokens[0] != kBos || all_tokens[1] != kEos || all_tokens[2] != kUnk) {
    throw std::invalid_argument("vocabulary must start with <s>, </s>, <unk>");
  }
  Vocabulary v;
  v.tokens_.assign(all_tokens.begin(), all_tokens.end());
  v.index();
  return v;
}

}  // namespace lidm

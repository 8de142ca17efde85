#include "pbl/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include "pbl/error.hpp"
#include "pbl/reserved_tokens.hpp"
#include "pbl/sha256.hpp"

namespace pbl {

namespace {

constexpr std::array<std::string_view, 6> kReserved = {"<bos>", "<pad>", "<unk>", "negative", "neutral", "positive"};

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '\'' || c >= 0x80;
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

Tokenizer::Tokenizer(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      fail(ErrorKind::format, "duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
}

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      word.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
    } else {
      flush();
      if (!is_space(c)) out.emplace_back(1, ch);
    }
  }
  flush();
  return out;
}

Tokenizer Tokenizer::build(std::span<const std::string> corpus, int vocab_cap) {
  if (corpus.empty()) fail(ErrorKind::data, "tokenizer corpus is empty");
  if (vocab_cap < static_cast<int>(kReserved.size())) {
    fail(ErrorKind::config, "vocab cap must be at least " + std::to_string(kReserved.size()));
  }
  std::map<std::string, long> counts;
  for (const auto& line : corpus) {
    for (auto& w : split(line)) ++counts[std::move(w)];
  }
  for (auto r : kReserved) counts.erase(std::string(r));

  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens(kReserved.begin(), kReserved.end());
  for (auto& [w, _] : ranked) {
    if (static_cast<int>(tokens.size()) >= vocab_cap) break;
    tokens.push_back(w);
  }
  return Tokenizer(std::move(tokens));
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::data, "cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  if (tokens.size() < kReserved.size()) fail(ErrorKind::format, path.string() + ": vocabulary too short");
  for (std::size_t i = 0; i < kReserved.size(); ++i) {
    if (tokens[i] != kReserved[i]) {
      fail(ErrorKind::format, path.string() + ": line " + std::to_string(i + 1) + " must be reserved token '" +
                                  std::string(kReserved[i]) + "'");
    }
  }
  return Tokenizer(std::move(tokens));
}

std::string Tokenizer::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Tokenizer::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::data, "cannot write " + path.string());
  out << serialize();
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split(text)) ids.push_back(id_of(w));
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

int Tokenizer::id_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= size()) fail(ErrorKind::vocabulary, "token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Tokenizer::fingerprint() const { return sha256_hex(serialize()); }

}  // namespace pbl

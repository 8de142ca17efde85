#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pbl {

/// Lowercased word-level tokenizer. A word is a maximal run of ASCII letters,
/// digits, apostrophes or non-ASCII bytes; every other non-space character is
/// its own token. Reserved tokens occupy ids 0-5: <bos>, <pad>, <unk>,
/// negative, neutral, positive.
class Tokenizer {
 public:
  static constexpr int kDefaultVocabCap = 8192;

  /// Keeps the most frequent words up to `vocab_cap` entries (reserved included),
  /// ordered by descending frequency then lexicographically.
  static Tokenizer build(std::span<const std::string> corpus, int vocab_cap = kDefaultVocabCap);

  /// Reads a vocabulary file: one token per line, line number = id.
  static Tokenizer load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;

  static std::vector<std::string> split(std::string_view text);

  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int id_of(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// SHA-256 of the serialized vocabulary file.
  std::string fingerprint() const;

 private:
  explicit Tokenizer(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace pbl

#pragma once

// Whitespace/punctuation tokenizer and the toy vocabulary.
//
// Words are lower-cased, every digit and punctuation mark is its own token,
// and `<Rj>` region placeholders map to reserved ids. Reserved tokens occupy
// the first ids in a fixed order: <pad>, <eos>, <unk>, <R0> ... <R15>.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tgvlm {

std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kFirstRegion = 3;
  static constexpr int kMaxRegions = 16;
  static constexpr int kNumReserved = kFirstRegion + kMaxRegions;

  Vocabulary();  // reserved tokens only

  // Reserved tokens followed by every other token of `texts` in sorted order.
  static Vocabulary build(std::span<const std::string> texts);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const;  // kUnk when unknown
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  const std::string& token(int id) const;

  static int region_token(int j);
  static bool is_region_token(int id) { return id >= kFirstRegion && id < kNumReserved; }

  std::vector<int> encode(std::string_view text) const;
  // Stops at <eos>; numbers are re-joined ("5 . 0 0" -> "5.00").
  std::string decode(std::span<const int> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace tgvlm

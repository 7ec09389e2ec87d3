#include "tgvlm/vocab.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "tgvlm/errors.hpp"
#include "tgvlm/io.hpp"

namespace tgvlm {

namespace {

bool is_digit_token(const std::string& t) { return t.size() == 1 && std::isdigit(static_cast<unsigned char>(t[0])); }

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens = [] {
    std::vector<std::string> t{"<pad>", "<eos>", "<unk>"};
    for (int j = 0; j < Vocabulary::kMaxRegions; ++j) t.push_back("<R" + std::to_string(j) + ">");
    return t;
  }();
  return tokens;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (c == '<') {
      const std::size_t close = text.find('>', i);
      const std::string_view inner =
          close == std::string_view::npos ? std::string_view{} : text.substr(i + 1, close - i - 1);
      const bool placeholder = inner.size() >= 2 && inner[0] == 'R' &&
                               inner.find_first_not_of("0123456789", 1) == std::string_view::npos;
      if (placeholder) {
        out.emplace_back(text.substr(i, close - i + 1));
        i = close + 1;
      } else {
        out.emplace_back(1, '<');
        ++i;
      }
    } else if (std::isdigit(c)) {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    } else if (std::isalpha(c) || c == '_') {
      std::string word;
      while (i < text.size() && (std::isalpha(static_cast<unsigned char>(text[i])) || text[i] == '_')) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        ++i;
      }
      out.push_back(std::move(word));
    } else {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const std::string& t : reserved_tokens()) add(t);
}

void Vocabulary::add(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  std::set<std::string> seen;
  for (const std::string& text : texts)
    for (std::string& t : tokenize(text)) seen.insert(std::move(t));
  Vocabulary v;
  for (const std::string& t : seen) {
    if (!v.contains(t)) v.add(t);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  const auto& reserved = reserved_tokens();
  if (lines.size() < reserved.size()) throw FormatError("vocabulary " + path.string() + " is missing reserved tokens");
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (lines[i] != reserved[i]) {
      throw FormatError("vocabulary " + path.string() + ": line " + std::to_string(i + 1) + " should be " + reserved[i]);
    }
  }
  Vocabulary v;
  for (std::size_t i = reserved.size(); i < lines.size(); ++i) {
    if (v.contains(lines[i])) throw FormatError("vocabulary " + path.string() + ": duplicate token " + lines[i]);
    v.add(lines[i]);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (const std::string& t : tokens_) {
    out += t;
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::region_token(int j) {
  if (j < 0 || j >= kMaxRegions) {
    throw InjectionError("region index " + std::to_string(j) + " exceeds the " + std::to_string(kMaxRegions) +
                         " placeholder slots");
  }
  return kFirstRegion + j;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> out;
  for (const std::string& t : tokenize(text)) out.push_back(id(t));
  return out;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> toks;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad) continue;
    toks.push_back(token(id));
  }
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string& t = toks[i];
    bool glue = false;
    if (i > 0) {
      const std::string& prev = toks[i - 1];
      if (is_digit_token(t)) {
        glue = is_digit_token(prev) || (prev == "." && i >= 2 && is_digit_token(toks[i - 2]));
      } else if (t == ".") {
        glue = is_digit_token(prev) && i + 1 < toks.size() && is_digit_token(toks[i + 1]);
      }
    }
    if (i > 0 && !glue) out += ' ';
    out += t;
  }
  return out;
}

}  // namespace tgvlm

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cbias/error.hpp"
#include "cbias/unicode.hpp"

namespace cbias {

/// One unit of a tokenized transcript: either a single character or a whole
/// biased word from the lexicon.
struct TokenUnit {
  enum class Kind : std::uint8_t { Character, BiasedWord };

  Kind kind = Kind::Character;
  char32_t ch = 0;         // Character only
  std::size_t word = 0;    // BiasedWord only
  std::u32string surface;

  static TokenUnit character(char32_t c) { return {Kind::Character, c, 0, std::u32string(1, c)}; }
  static TokenUnit biased(std::size_t index, std::u32string text) {
    return {Kind::BiasedWord, 0, index, std::move(text)};
  }

  bool is_biased() const noexcept { return kind == Kind::BiasedWord; }

  friend bool operator==(const TokenUnit& a, const TokenUnit& b) {
    if (a.kind != b.kind) return false;
    return a.kind == Kind::Character ? a.ch == b.ch : a.word == b.word;
  }
};

using TokenSequence = std::vector<TokenUnit>;

inline std::u32string join_surfaces(const TokenSequence& units) {
  std::u32string out;
  for (const auto& u : units) out += u.surface;
  return out;
}

using SynonymEntry = std::pair<std::string, std::string>;  // (class id, word)

/// Immutable biased-word inventory with a character trie for longest-match
/// lookup. Words are stored NFC-normalized.
class BiasedLexicon {
 public:
  static constexpr int kNoClass = -1;

  BiasedLexicon() { nodes_.emplace_back(); }

  static BiasedLexicon build(const std::vector<std::string>& words,
                             const std::vector<SynonymEntry>& synonyms = {}) {
    BiasedLexicon lex;
    for (const auto& raw : words) {
      std::u32string w = to_nfc_u32(trim(raw));
      if (w.empty()) fail(ErrorKind::EmptyWord, "biased word is empty after trimming");
      if (lex.find(w)) fail(ErrorKind::DuplicateWord, to_utf8(w));
      lex.insert(std::move(w));
    }
    lex.class_of_.assign(lex.words_.size(), kNoClass);
    for (const auto& [cls, raw] : synonyms) {
      auto idx = lex.find(to_nfc_u32(trim(raw)));
      if (!idx) fail(ErrorKind::UnknownSynonymWord, std::string(trim(raw)));
      auto it = std::find(lex.class_names_.begin(), lex.class_names_.end(), cls);
      int id = static_cast<int>(it - lex.class_names_.begin());
      if (it == lex.class_names_.end()) lex.class_names_.push_back(cls);
      if (lex.class_of_[*idx] != kNoClass && lex.class_of_[*idx] != id)
        fail(ErrorKind::ConfigError, "word assigned to two synonym classes: " + std::string(trim(raw)));
      lex.class_of_[*idx] = id;
    }
    return lex;
  }

  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }
  const std::u32string& word(std::size_t k) const { return words_.at(k); }
  std::string word_utf8(std::size_t k) const { return to_utf8(words_.at(k)); }
  const std::vector<std::u32string>& words() const noexcept { return words_; }

  int synonym_class(std::size_t k) const {
    return k < class_of_.size() ? class_of_[k] : kNoClass;
  }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  bool equivalent(std::size_t a, std::size_t b) const {
    if (a == b) return true;
    int ca = synonym_class(a);
    return ca != kNoClass && ca == synonym_class(b);
  }

  std::optional<std::size_t> find(std::u32string_view w) const {
    std::uint32_t node = 0;
    for (char32_t c : w) {
      auto it = nodes_[node].next.find(c);
      if (it == nodes_[node].next.end()) return std::nullopt;
      node = it->second;
    }
    return nodes_[node].word;
  }

  /// Longest lexicon word starting at `pos`: (word index, length).
  std::optional<std::pair<std::size_t, std::size_t>> longest_match(std::u32string_view text,
                                                                   std::size_t pos) const {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    std::uint32_t node = 0;
    for (std::size_t i = pos; i < text.size(); ++i) {
      auto it = nodes_[node].next.find(text[i]);
      if (it == nodes_[node].next.end()) break;
      node = it->second;
      if (nodes_[node].word) best = std::pair{*nodes_[node].word, i - pos + 1};
    }
    return best;
  }

  std::size_t trie_depth() const noexcept {
    std::size_t d = 0;
    for (const auto& w : words_) d = std::max(d, w.size());
    return d;
  }

 private:
  struct Node {
    std::map<char32_t, std::uint32_t> next;
    std::optional<std::size_t> word;
  };

  void insert(std::u32string w) {
    std::uint32_t node = 0;
    for (char32_t c : w) {
      auto it = nodes_[node].next.find(c);
      if (it == nodes_[node].next.end()) {
        auto id = static_cast<std::uint32_t>(nodes_.size());
        nodes_[node].next.emplace(c, id);
        nodes_.emplace_back();
        node = id;
      } else {
        node = it->second;
      }
    }
    nodes_[node].word = words_.size();
    words_.push_back(std::move(w));
  }

  std::vector<std::u32string> words_;
  std::vector<int> class_of_;
  std::vector<std::string> class_names_;
  std::vector<Node> nodes_;
};

/// Leftmost-longest segmentation: at each position emit the longest biased
/// word starting there, otherwise a single character.
inline TokenSequence tokenize(std::u32string_view text, const BiasedLexicon& lexicon) {
  std::u32string normalized = nfc(text);
  TokenSequence out;
  std::size_t pos = 0;
  while (pos < normalized.size()) {
    if (auto m = lexicon.longest_match(normalized, pos)) {
      out.push_back(TokenUnit::biased(m->first, normalized.substr(pos, m->second)));
      pos += m->second;
    } else {
      out.push_back(TokenUnit::character(normalized[pos]));
      ++pos;
    }
  }
  return out;
}

inline TokenSequence tokenize(std::string_view utf8, const BiasedLexicon& lexicon) {
  return tokenize(std::u32string_view(to_nfc_u32(utf8)), lexicon);
}

inline TokenSequence tokenize(const char* utf8, const BiasedLexicon& lexicon) {
  return tokenize(std::string_view(utf8), lexicon);
}

// One word per line; '#' lines are comments; blank lines skipped.
inline std::vector<std::string> parse_word_list(std::istream& in) {
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    words.emplace_back(t);
  }
  return words;
}

// class_id<TAB>word rows.
inline std::vector<SynonymEntry> parse_synonyms(std::istream& in) {
  std::vector<SynonymEntry> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto tab = t.find('\t');
    if (tab == std::string_view::npos)
      fail(ErrorKind::ParseError, "synonym line " + std::to_string(lineno) + " lacks a TAB");
    rows.emplace_back(std::string(trim(t.substr(0, tab))), std::string(trim(t.substr(tab + 1))));
  }
  return rows;
}

}  // namespace cbias

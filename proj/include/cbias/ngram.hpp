#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cbias/error.hpp"
#include "cbias/unicode.hpp"

namespace cbias {

using TokenId = std::int32_t;
using NGram = std::vector<TokenId>;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kNoToken = -1;
inline constexpr double kUnknownFloor = -20.0;  // log10
inline constexpr double kArpaNeverProb = -99.0;
inline constexpr double kDefaultDiscount = 0.5;

struct NGramEntry {
  double logprob = 0.0;            // log10 P(last | prefix)
  std::optional<double> backoff;   // log10 backoff weight of this n-gram as a context
};

struct NGramLess {
  using is_transparent = void;
  template <class A, class B>
  bool operator()(const A& a, const B& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }
};

/// Character token spelling inside ARPA files. Whitespace has no literal
/// spelling there, so it gets a bracketed name.
inline std::string char_token(char32_t c) {
  if (c == U' ') return "<space>";
  if (c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v') {
    char buf[16];
    std::snprintf(buf, sizeof buf, "<U+%04X>", static_cast<unsigned>(c));
    return buf;
  }
  return to_utf8(c);
}

/// Backoff n-gram model over string tokens. Ids 0 and 1 are always <s> and
/// </s>; a token is "modeled" when it has a unigram entry.
class NGramLM {
 public:
  explicit NGramLM(int order = 1) : order_(order), by_order_(static_cast<std::size_t>(order)) {
    intern("<s>");
    intern("</s>");
  }

  int order() const noexcept { return order_; }

  TokenId intern(std::string_view tok) {
    auto it = ids_.find(std::string(tok));
    if (it != ids_.end()) return it->second;
    auto id = static_cast<TokenId>(tokens_.size());
    tokens_.emplace_back(tok);
    ids_.emplace(tokens_.back(), id);
    return id;
  }

  TokenId token_id(std::string_view tok) const {
    auto it = ids_.find(std::string(tok));
    return it == ids_.end() ? kNoToken : it->second;
  }
  TokenId char_id(char32_t c) const { return token_id(char_token(c)); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t token_count() const noexcept { return tokens_.size(); }

  void set(const NGram& ngram, NGramEntry entry) {
    if (ngram.empty() || static_cast<int>(ngram.size()) > order_)
      fail(ErrorKind::InvalidOrder, "n-gram length outside model order");
    by_order_[ngram.size() - 1][ngram] = entry;
  }

  const NGramEntry* find(std::span<const TokenId> ngram) const {
    if (ngram.empty() || static_cast<int>(ngram.size()) > order_) return nullptr;
    const auto& m = by_order_[ngram.size() - 1];
    auto it = m.find(ngram);
    return it == m.end() ? nullptr : &it->second;
  }
  NGramEntry* find_mutable(std::span<const TokenId> ngram) {
    return const_cast<NGramEntry*>(std::as_const(*this).find(ngram));
  }

  const std::map<NGram, NGramEntry, NGramLess>& ngrams(int n) const {
    return by_order_.at(static_cast<std::size_t>(n - 1));
  }

  bool models(TokenId id) const {
    if (id < 0) return false;
    TokenId key[1] = {id};
    return find(key) != nullptr;
  }

  /// Tokens that can be predicted: every modeled unigram except <s>.
  std::vector<TokenId> predictable() const {
    std::vector<TokenId> out;
    for (const auto& [g, e] : ngrams(1))
      if (g[0] != kBos) out.push_back(g[0]);
    return out;
  }

 private:
  int order_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::map<NGram, NGramEntry, NGramLess>> by_order_;
};

/// log10 P(word | context) with standard backoff. The context is truncated to
/// the last order-1 tokens; unmodeled words score the unknown floor.
inline double score_word(const NGramLM& lm, std::span<const TokenId> context, TokenId word) {
  if (!lm.models(word)) return kUnknownFloor;
  auto max_ctx = static_cast<std::size_t>(lm.order() - 1);
  if (context.size() > max_ctx) context = context.subspan(context.size() - max_ctx);
  NGram key;
  double backoff = 0.0;
  for (std::size_t start = 0; start <= context.size(); ++start) {
    auto ctx = context.subspan(start);
    key.assign(ctx.begin(), ctx.end());
    key.push_back(word);
    if (const NGramEntry* e = lm.find(key)) return backoff + e->logprob;
    if (const NGramEntry* c = lm.find(ctx); c && c->backoff) backoff += *c->backoff;
  }
  return kUnknownFloor;  // unreachable while the unigram exists
}

inline std::vector<TokenId> char_ids(const NGramLM& lm, std::u32string_view chars) {
  std::vector<TokenId> ids;
  ids.reserve(chars.size());
  for (char32_t c : chars) ids.push_back(lm.char_id(c));
  return ids;
}

inline double score_word(const NGramLM& lm, std::u32string_view context, char32_t word) {
  auto ctx = char_ids(lm, context);
  return score_word(lm, ctx, lm.char_id(word));
}

/// Sum of per-character scores from the sentence-start context, plus </s>
/// when the model has it. <s> opens the context only when it is modeled.
inline double sentence_score(const NGramLM& lm, std::u32string_view sentence) {
  std::vector<TokenId> ctx;
  if (lm.models(kBos)) ctx.push_back(kBos);
  double total = 0.0;
  for (char32_t c : sentence) {
    TokenId id = lm.char_id(c);
    total += score_word(lm, ctx, id);
    ctx.push_back(id);
  }
  if (lm.models(kEos)) total += score_word(lm, ctx, kEos);
  return total;
}

/// Absolute-discounting character n-gram. Interpolated estimates
///   P(w|h) = (c(h,w) - D) / c(h) + lambda(h) * P(w|h'),  lambda(h) = D * N1+(h) / c(h)
/// are stored in backoff form with backoff(h) = log10 lambda(h); the unigram
/// level interpolates with the uniform distribution.
inline NGramLM train_char_ngram(const std::vector<std::string>& corpus, int order,
                                double discount = kDefaultDiscount) {
  if (corpus.empty()) fail(ErrorKind::EmptyCorpus, "LM training corpus is empty");
  if (order < 1 || order > 5) fail(ErrorKind::InvalidOrder, "order must be in [1,5], got " + std::to_string(order));
  if (!(discount > 0.0 && discount < 1.0)) fail(ErrorKind::InvalidDiscount, "discount must be in (0,1)");

  std::vector<std::u32string> sentences;
  std::set<char32_t> chars;
  for (const auto& s : corpus) {
    sentences.push_back(to_nfc_u32(s));
    chars.insert(sentences.back().begin(), sentences.back().end());
  }

  NGramLM lm(order);
  for (char32_t c : chars) lm.intern(char_token(c));

  // counts[k-1][ngram]
  std::vector<std::map<NGram, double, NGramLess>> counts(static_cast<std::size_t>(order));
  for (const auto& s : sentences) {
    NGram padded{kBos};
    for (char32_t c : s) padded.push_back(lm.char_id(c));
    padded.push_back(kEos);
    for (std::size_t i = 1; i < padded.size(); ++i)
      for (int k = 1; k <= order && static_cast<std::size_t>(k) <= i + 1; ++k)
        counts[k - 1][NGram(padded.begin() + static_cast<std::ptrdiff_t>(i + 1 - k),
                            padded.begin() + static_cast<std::ptrdiff_t>(i + 1))] += 1.0;
  }

  {
    double total = 0.0;
    for (const auto& [g, c] : counts[0]) total += c;
    const double types = static_cast<double>(counts[0].size());
    const double lambda = discount * types / total;
    for (const auto& [g, c] : counts[0])
      lm.set(g, {std::log10((c - discount) / total + lambda / types), std::nullopt});
    lm.set({kBos}, {kArpaNeverProb, std::nullopt});
  }

  for (int k = 2; k <= order; ++k) {
    std::map<NGram, std::pair<double, double>, NGramLess> ctx_stats;  // total, distinct followers
    for (const auto& [g, c] : counts[k - 1]) {
      auto& st = ctx_stats[NGram(g.begin(), g.end() - 1)];
      st.first += c;
      st.second += 1.0;
    }
    for (const auto& [h, st] : ctx_stats) {
      NGramEntry* ctx = lm.find_mutable(h);
      if (!ctx) fail(ErrorKind::InvalidOrder, "internal: missing context n-gram");
      ctx->backoff = std::log10(discount * st.second / st.first);
    }
    for (const auto& [g, c] : counts[k - 1]) {
      NGram h(g.begin(), g.end() - 1);
      const auto& st = ctx_stats[h];
      double lambda = discount * st.second / st.first;
      std::span<const TokenId> shorter(h.data() + 1, h.size() - 1);
      double lower = std::pow(10.0, score_word(lm, shorter, g.back()));
      lm.set(g, {std::log10((c - discount) / st.first + lambda * lower), std::nullopt});
    }
  }
  return lm;
}

namespace detail {

inline std::string_view next_field(std::string_view& s) {
  constexpr std::string_view ws = " \t\r";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) {
    s = {};
    return {};
  }
  auto e = s.find_first_of(ws, b);
  auto f = s.substr(b, e == std::string_view::npos ? std::string_view::npos : e - b);
  s = e == std::string_view::npos ? std::string_view{} : s.substr(e);
  return f;
}

inline std::optional<double> parse_double(std::string_view f) {
  std::string tmp(f);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace detail

inline NGramLM parse_arpa(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= text.size();) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }

  std::size_t i = 0;
  while (i < lines.size() && trim(lines[i]) != "\\data\\") ++i;
  if (i == lines.size()) fail(ErrorKind::MalformedHeader, "missing \\data\\ marker");
  ++i;

  std::vector<std::size_t> declared;
  for (; i < lines.size(); ++i) {
    auto t = trim(lines[i]);
    if (t.empty()) {
      if (declared.empty()) continue;
      break;
    }
    if (t.front() == '\\') break;
    if (t.substr(0, 6) != "ngram ") fail(ErrorKind::MalformedHeader, "bad header line: " + std::string(t));
    auto eq = t.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::MalformedHeader, "bad header line: " + std::string(t));
    auto n = detail::parse_double(trim(t.substr(6, eq - 6)));
    auto c = detail::parse_double(trim(t.substr(eq + 1)));
    if (!n || !c || *n != static_cast<double>(declared.size() + 1) || *c < 0)
      fail(ErrorKind::MalformedHeader, "bad header line: " + std::string(t));
    declared.push_back(static_cast<std::size_t>(*c));
  }
  if (declared.empty()) fail(ErrorKind::MalformedHeader, "no ngram counts declared");
  if (declared.size() > 5) fail(ErrorKind::MalformedHeader, "orders above 5 are not supported");

  const int order = static_cast<int>(declared.size());
  NGramLM lm(order);
  std::vector<std::size_t> seen(declared.size(), 0);
  bool ended = false;
  int section = 0;
  for (; i < lines.size(); ++i) {
    auto t = trim(lines[i]);
    if (t.empty()) continue;
    if (t == "\\end\\") {
      ended = true;
      break;
    }
    if (t.front() == '\\') {
      int n = 0;
      if (std::sscanf(std::string(t).c_str(), "\\%d-grams:", &n) != 1 || n < 1 || n > order)
        fail(ErrorKind::MalformedHeader, "bad section marker: " + std::string(t));
      section = n;
      continue;
    }
    if (section == 0) fail(ErrorKind::MalformedHeader, "n-gram entry outside a section");
    std::string_view rest = t;
    auto prob_f = detail::next_field(rest);
    auto prob = detail::parse_double(prob_f);
    if (!prob || *prob > 0.0) fail(ErrorKind::BadLogProb, "bad log probability '" + std::string(prob_f) + "'");
    NGram g;
    for (int k = 0; k < section; ++k) {
      auto tok = detail::next_field(rest);
      if (tok.empty()) fail(ErrorKind::ParseError, "short n-gram line: " + std::string(t));
      g.push_back(lm.intern(tok));
    }
    NGramEntry e{*prob, std::nullopt};
    if (auto bo_f = detail::next_field(rest); !bo_f.empty()) {
      auto bo = detail::parse_double(bo_f);
      if (!bo) fail(ErrorKind::BadLogProb, "bad backoff weight '" + std::string(bo_f) + "'");
      e.backoff = *bo;
    }
    if (!detail::next_field(rest).empty()) fail(ErrorKind::ParseError, "trailing fields: " + std::string(t));
    lm.set(g, e);
    ++seen[static_cast<std::size_t>(section - 1)];
  }
  if (!ended) fail(ErrorKind::MalformedHeader, "missing \\end\\ marker");
  for (std::size_t n = 0; n < declared.size(); ++n) {
    if (seen[n] != declared[n] || lm.ngrams(static_cast<int>(n) + 1).size() != declared[n])
      fail(ErrorKind::CountMismatch, std::to_string(n + 1) + "-grams: header says " + std::to_string(declared[n]) +
                                         ", found " + std::to_string(seen[n]));
  }
  return lm;
}

inline std::string format_arpa(const NGramLM& lm) {
  std::ostringstream out;
  out << "\\data\\\n";
  for (int n = 1; n <= lm.order(); ++n) out << "ngram " << n << "=" << lm.ngrams(n).size() << "\n";
  for (int n = 1; n <= lm.order(); ++n) {
    out << "\n\\" << n << "-grams:\n";
    for (const auto& [g, e] : lm.ngrams(n)) {
      out << detail::format_double(e.logprob) << '\t';
      for (std::size_t k = 0; k < g.size(); ++k) out << (k ? " " : "") << lm.token(g[k]);
      if (e.backoff) out << '\t' << detail::format_double(*e.backoff);
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
  return out.str();
}

}  // namespace cbias

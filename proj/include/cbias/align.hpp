#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "cbias/error.hpp"
#include "cbias/lexicon.hpp"
#include "cbias/unicode.hpp"

namespace cbias {

enum class EditOp : std::uint8_t { Match, Substitute, Insert, Delete };

struct AlignStep {
  EditOp op;
  std::optional<TokenUnit> ref;
  std::optional<TokenUnit> hyp;
};

struct Alignment {
  std::vector<AlignStep> steps;
  std::size_t cost = 0;
};

/// Unit equality used by the aligner: same character, same biased word, or
/// two biased words from one synonym class (when a lexicon is supplied).
inline bool units_equivalent(const TokenUnit& a, const TokenUnit& b, const BiasedLexicon* synonyms) {
  if (a.kind != b.kind) return false;
  if (!a.is_biased()) return a.ch == b.ch;
  return synonyms ? synonyms->equivalent(a.word, b.word) : a.word == b.word;
}

/// Minimal edit-distance alignment with unit costs. Among co-optimal paths the
/// backtrace prefers Match, then Substitute, then Delete, then Insert.
inline Alignment align(const TokenSequence& ref, const TokenSequence& hyp,
                       const BiasedLexicon* synonyms = nullptr) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t diag = at(i - 1, j - 1) + (units_equivalent(ref[i - 1], hyp[j - 1], synonyms) ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  Alignment out;
  out.cost = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      bool eq = units_equivalent(ref[i - 1], hyp[j - 1], synonyms);
      if (eq && at(i - 1, j - 1) == at(i, j)) {
        out.steps.push_back({EditOp::Match, ref[i - 1], hyp[j - 1]});
        --i, --j;
        continue;
      }
      if (!eq && at(i - 1, j - 1) + 1 == at(i, j)) {
        out.steps.push_back({EditOp::Substitute, ref[i - 1], hyp[j - 1]});
        --i, --j;
        continue;
      }
    }
    if (i > 0 && at(i - 1, j) + 1 == at(i, j)) {
      out.steps.push_back({EditOp::Delete, ref[i - 1], std::nullopt});
      --i;
    } else {
      out.steps.push_back({EditOp::Insert, std::nullopt, hyp[j - 1]});
      --j;
    }
  }
  std::reverse(out.steps.begin(), out.steps.end());
  return out;
}

struct WordCounts {
  std::size_t matched = 0;      // M_k
  std::size_t reference = 0;    // L_k
  std::size_t hypothesis = 0;   // R_k

  /// alpha_k = M_k / R_k, absent when R_k = 0.
  std::optional<double> precision() const {
    if (hypothesis == 0) return std::nullopt;
    return static_cast<double>(matched) / static_cast<double>(hypothesis);
  }
  /// beta_k = M_k / L_k, absent when L_k = 0.
  std::optional<double> recall() const {
    if (reference == 0) return std::nullopt;
    return static_cast<double>(matched) / static_cast<double>(reference);
  }

  WordCounts& operator+=(const WordCounts& o) {
    matched += o.matched;
    reference += o.reference;
    hypothesis += o.hypothesis;
    return *this;
  }
};

struct BiasStats {
  std::map<std::size_t, WordCounts> per_word;
  WordCounts total;

  std::optional<double> precision() const { return total.precision(); }
  std::optional<double> recall() const { return total.recall(); }

  BiasStats& operator+=(const BiasStats& o) {
    for (const auto& [k, c] : o.per_word) per_word[k] += c;
    total += o.total;
    return *this;
  }
};

/// Counts biased-word units at aligned positions. A synonym-class Match maps
/// the hypothesis word onto the reference word, so it is credited (M, L and R)
/// to the reference word's index.
inline BiasStats bias_stats(const Alignment& alignment, const BiasedLexicon&) {
  BiasStats s;
  for (const auto& step : alignment.steps) {
    bool ref_b = step.ref && step.ref->is_biased();
    bool hyp_b = step.hyp && step.hyp->is_biased();
    if (step.op == EditOp::Match && ref_b) {
      auto& c = s.per_word[step.ref->word];
      ++c.matched;
      ++c.reference;
      ++c.hypothesis;
      continue;
    }
    if (ref_b) ++s.per_word[step.ref->word].reference;
    if (hyp_b) ++s.per_word[step.hyp->word].hypothesis;
  }
  for (const auto& [k, c] : s.per_word) s.total += c;
  return s;
}

inline std::size_t char_edit_distance(std::u32string_view a, std::u32string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1), prev[j] + 1, cur[j - 1] + 1});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Character error rate: code-point Levenshtein distance over the reference
/// length, both sides NFC-normalized.
inline double cer(std::string_view ref_text, std::string_view hyp_text) {
  auto ref = to_nfc_u32(ref_text);
  if (ref.empty()) fail(ErrorKind::EmptyReference, "CER needs a non-empty reference");
  auto hyp = to_nfc_u32(hyp_text);
  return static_cast<double>(char_edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

inline double f1(double precision, double recall) {
  double s = precision + recall;
  return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

}  // namespace cbias

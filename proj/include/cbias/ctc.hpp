#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbias/emission.hpp"
#include "cbias/error.hpp"
#include "cbias/ngram.hpp"
#include "cbias/wfst.hpp"

namespace cbias {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr std::size_t kUnboundedBeam = std::numeric_limits<std::size_t>::max();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

struct DecodeOptions {
  std::size_t beam = 10;
  double lm_weight = 0.3;
  double bias_weight = 1.0;
  std::size_t nbest = 1;
};

/// One prefix in the beam. CTC probabilities are natural-log; LM, bias and
/// fused scores are log10.
struct Hypothesis {
  std::u32string text;
  double log_blank = kNegInf;
  double log_nonblank = kNegInf;
  double lm_score = 0.0;
  StateId lm_state = 0;
  BiasCursor bias;
  double bias_score = 0.0;
  double fused = kNegInf;

  double ctc_log10() const { return log_add(log_blank, log_nonblank) / std::log(10.0); }
};

namespace detail {

inline void check_vocab(const EmissionMatrix& em, std::span<const char32_t> vocab) {
  if (vocab.size() != em.vocab_size)
    fail(ErrorKind::ShapeMismatch, em.utt_id + ": vocab has " + std::to_string(vocab.size()) +
                                       " characters but emissions have V=" + std::to_string(em.vocab_size));
  if (em.probs.size() != em.frames * em.columns() || em.blank > em.vocab_size)
    fail(ErrorKind::ShapeMismatch, em.utt_id + ": emission matrix shape is inconsistent");
}

inline bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.fused != b.fused) return a.fused > b.fused;
  return a.text < b.text;
}

}  // namespace detail

/// Per-frame argmax, collapse repeats, drop blanks.
inline std::u32string greedy_decode(const EmissionMatrix& em, std::span<const char32_t> vocab) {
  detail::check_vocab(em, vocab);
  std::u32string out;
  std::size_t prev = em.blank;
  for (std::size_t t = 0; t < em.frames; ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < em.columns(); ++c)
      if (em.at(t, c) > em.at(t, best)) best = c;
    if (best != em.blank && best != prev) out.push_back(vocab[em.column_symbol(best)]);
    prev = best;
  }
  return out;
}

inline std::u32string greedy_decode(const EmissionMatrix& em) { return greedy_decode(em, em.vocab); }

/// CTC prefix beam search with shallow fusion:
///   fused = log10(p_blank + p_nonblank) + lm_weight * lm + bias_weight * bias.
/// End-of-sentence LM score and bias settlement are applied before ranking the
/// n-best list. Ties rank lexicographically by prefix.
inline std::vector<Hypothesis> prefix_beam_search(const EmissionMatrix& em, std::span<const char32_t> vocab,
                                                  const DecodeOptions& opt, const Wfst* lm = nullptr,
                                                  const BiasFst* bias = nullptr) {
  detail::check_vocab(em, vocab);
  if (opt.beam < 1) fail(ErrorKind::InvalidBeam, "beam must be >= 1");
  if (opt.nbest < 1) fail(ErrorKind::ConfigError, "nbest must be >= 1");
  if (opt.lm_weight < 0.0 || opt.bias_weight < 0.0) fail(ErrorKind::ConfigError, "fusion weights must be >= 0");
  if (opt.lm_weight == 0.0) lm = nullptr;
  if (opt.bias_weight == 0.0) bias = nullptr;

  auto refresh = [&](Hypothesis& h) {
    h.bias_score = bias ? h.bias.value(*bias) : 0.0;
    h.fused = h.ctc_log10() + (lm ? opt.lm_weight * h.lm_score : 0.0) + (bias ? opt.bias_weight * h.bias_score : 0.0);
  };

  Hypothesis root;
  root.log_blank = 0.0;
  if (lm) root.lm_state = lm->start();
  if (bias) root.bias = BiasCursor{bias->fst.start(), 0.0};
  refresh(root);
  std::vector<Hypothesis> beam{root};

  std::vector<double> logp(em.columns());
  std::vector<Hypothesis> next;
  std::unordered_map<std::u32string, std::size_t> index;
  for (std::size_t t = 0; t < em.frames; ++t) {
    for (std::size_t c = 0; c < em.columns(); ++c) {
      double p = em.at(t, c);
      logp[c] = p > 0.0 ? std::log(p) : kNegInf;
    }
    next.clear();
    index.clear();
    auto slot = [&](const Hypothesis& parent, const std::u32string& text, bool extended) -> Hypothesis& {
      auto [it, inserted] = index.try_emplace(text, next.size());
      if (inserted) {
        Hypothesis h;
        h.text = text;
        h.lm_score = parent.lm_score;
        h.lm_state = parent.lm_state;
        h.bias = parent.bias;
        if (extended) {
          char32_t ch = text.back();
          if (lm) {
            auto st = lm->step(parent.lm_state, ch);
            h.lm_score += st.weight;
            h.lm_state = st.next;
          }
          if (bias) h.bias = bias_advance(*bias, parent.bias, ch);
        }
        next.push_back(std::move(h));
      }
      return next[it->second];
    };

    for (const auto& h : beam) {
      const double total = log_add(h.log_blank, h.log_nonblank);
      for (std::size_t c = 0; c < em.columns(); ++c) {
        if (logp[c] == kNegInf) continue;
        if (c == em.blank) {
          auto& s = slot(h, h.text, false);
          s.log_blank = log_add(s.log_blank, total + logp[c]);
          continue;
        }
        char32_t ch = vocab[em.column_symbol(c)];
        std::u32string ext = h.text + ch;
        if (!h.text.empty() && h.text.back() == ch) {
          auto& same = slot(h, h.text, false);
          same.log_nonblank = log_add(same.log_nonblank, h.log_nonblank + logp[c]);
          auto& grown = slot(h, ext, true);
          grown.log_nonblank = log_add(grown.log_nonblank, h.log_blank + logp[c]);
        } else {
          auto& grown = slot(h, ext, true);
          grown.log_nonblank = log_add(grown.log_nonblank, total + logp[c]);
        }
      }
    }
    std::erase_if(next, [](const Hypothesis& h) { return log_add(h.log_blank, h.log_nonblank) == kNegInf; });
    for (auto& h : next) refresh(h);
    std::sort(next.begin(), next.end(), detail::better);
    if (next.size() > opt.beam) next.resize(opt.beam);
    std::swap(beam, next);
  }

  for (auto& h : beam) {
    if (lm) h.lm_score += lm->final_weight(h.lm_state);
    h.bias_score = bias ? h.bias.final_value(*bias) : 0.0;
    h.fused = h.ctc_log10() + (lm ? opt.lm_weight * h.lm_score : 0.0) + (bias ? opt.bias_weight * h.bias_score : 0.0);
  }
  std::sort(beam.begin(), beam.end(), detail::better);
  if (beam.size() > opt.nbest) beam.resize(opt.nbest);
  return beam;
}

inline std::vector<Hypothesis> prefix_beam_search(const EmissionMatrix& em, const DecodeOptions& opt,
                                                  const Wfst* lm = nullptr, const BiasFst* bias = nullptr) {
  return prefix_beam_search(em, em.vocab, opt, lm, bias);
}

}  // namespace cbias

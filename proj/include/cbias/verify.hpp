#pragma once

// Independent reference computations and the randomized suites built on
// them. Nothing here shares code paths with the decoder, aligner or WFST
// compiler it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cbias/align.hpp"
#include "cbias/cbm.hpp"
#include "cbias/ctc.hpp"
#include "cbias/lexicon.hpp"
#include "cbias/ngram.hpp"
#include "cbias/wfst.hpp"

namespace cbias::verify {

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  double worst = 0.0;  // suite-specific worst observed deviation
  std::string detail;
};

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

// ---------------------------------------------------------------------------
// CTC

/// Sums every alignment path's probability into its collapsed output string.
/// Exponential in T; meant for T, V <= 4.
inline std::map<std::u32string, double> brute_force_ctc(const EmissionMatrix& em) {
  std::map<std::u32string, double> mass;
  const std::size_t cols = em.columns();
  std::vector<std::size_t> path(em.frames, 0);
  for (;;) {
    double p = 1.0;
    std::u32string out;
    std::size_t prev = em.blank;
    for (std::size_t t = 0; t < em.frames; ++t) {
      p *= em.at(t, path[t]);
      if (path[t] != em.blank && path[t] != prev) out.push_back(em.vocab[path[t] < em.blank ? path[t] : path[t] - 1]);
      prev = path[t];
    }
    mass[out] += p;
    std::size_t t = 0;
    while (t < em.frames && ++path[t] == cols) path[t++] = 0;
    if (t == em.frames) break;
  }
  return mass;
}

inline EmissionMatrix random_emissions(std::mt19937_64& rng, std::size_t frames, std::size_t vocab_size) {
  EmissionMatrix em;
  em.utt_id = "random";
  em.frames = frames;
  em.vocab_size = vocab_size;
  em.blank = pick(rng, vocab_size + 1);
  for (std::size_t v = 0; v < vocab_size; ++v) em.vocab.push_back(U'a' + static_cast<char32_t>(v));
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<double> row(vocab_size + 1);
    double sum = 0.0;
    for (auto& x : row) sum += (x = 0.05 + uniform01(rng));
    for (auto x : row) em.probs.push_back(x / sum);
  }
  return em;
}

/// Unbounded-beam prefix search versus path enumeration, probability domain.
inline SuiteResult decoder_oracle_suite(std::uint64_t seed, std::size_t cases = 200, double tol = 1e-10) {
  SuiteResult r;
  r.name = "decoder_oracle";
  std::mt19937_64 rng(seed);
  DecodeOptions opt;
  opt.beam = kUnboundedBeam;
  opt.nbest = kUnboundedBeam;
  opt.lm_weight = 0.0;
  opt.bias_weight = 0.0;
  for (std::size_t c = 0; c < cases; ++c) {
    auto em = random_emissions(rng, 1 + pick(rng, 4), 1 + pick(rng, 4));
    auto oracle = brute_force_ctc(em);
    auto hyps = prefix_beam_search(em, opt);
    std::map<std::u32string, double> got;
    for (const auto& h : hyps) got[h.text] = std::exp(log_add(h.log_blank, h.log_nonblank));
    for (const auto& [text, p] : oracle) {
      auto it = got.find(text);
      double diff = std::abs((it == got.end() ? 0.0 : it->second) - p);
      r.worst = std::max(r.worst, diff);
    }
    for (const auto& [text, p] : got)
      if (!oracle.count(text)) r.worst = std::max(r.worst, p);
    ++r.cases;
  }
  r.passed = r.worst <= tol;
  std::ostringstream d;
  d << r.cases << " random matrices (T<=4, V<=4), max |dP| = " << r.worst << " (tol " << tol << ")";
  r.detail = d.str();
  return r;
}

// ---------------------------------------------------------------------------
// WFST versus backoff scoring

inline std::u32string random_text(std::mt19937_64& rng, std::u32string_view alphabet, std::size_t len) {
  std::u32string s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[pick(rng, alphabet.size())]);
  return s;
}

inline SuiteResult wfst_equivalence_suite(std::uint64_t seed, std::size_t sentences = 100, double tol = 1e-9) {
  SuiteResult r;
  r.name = "wfst_backoff_equivalence";
  std::mt19937_64 rng(seed);
  const std::u32string alphabet = U"abcdefg";
  std::vector<std::string> corpus;
  for (int i = 0; i < 60; ++i) corpus.push_back(to_utf8(random_text(rng, U"abcdef", 3 + pick(rng, 8))));
  NGramLM lm = train_char_ngram(corpus, 3, 0.5);
  Wfst fst = compile_lm_wfst(lm);
  for (std::size_t i = 0; i < sentences; ++i) {
    auto s = random_text(rng, alphabet, 10);
    // Reference: per-position backoff lookups straight from the n-gram table.
    std::vector<TokenId> ctx{kBos};
    double oracle = 0.0;
    for (char32_t c : s) {
      TokenId id = lm.char_id(c);
      oracle += score_word(lm, ctx, id);
      ctx.push_back(id);
    }
    oracle += score_word(lm, ctx, kEos);
    r.worst = std::max(r.worst, std::abs(wfst_score(fst, s) - oracle));
    ++r.cases;
  }
  r.passed = r.worst <= tol;
  std::ostringstream d;
  d << r.cases << " random 10-char sentences on an order-3 LM, max |d| = " << r.worst << " (tol " << tol << ")";
  r.detail = d.str();
  return r;
}

// ---------------------------------------------------------------------------
// Bias FST cancellation

inline bool contains_any(std::u32string_view s, const BiasedLexicon& lex) {
  for (const auto& w : lex.words())
    if (s.find(w) != std::u32string_view::npos) return true;
  return false;
}

inline SuiteResult bias_cancellation_suite(std::uint64_t seed, std::size_t strings = 1000) {
  SuiteResult r;
  r.name = "bias_cancellation";
  std::mt19937_64 rng(seed);
  auto lex = BiasedLexicon::build({"abc", "abd", "bca", "cd", "dab"});
  // Dyadic weights keep k * w_j exactly representable.
  BiasWeights w;
  const double values[] = {1.5, 0.75, 2.25, -0.5, 3.125};
  for (std::size_t k = 0; k < lex.size(); ++k) w.set(k, values[k]);
  BiasFst fst = build_bias_fst(lex, w);

  std::size_t negatives = 0, positives = 0, failures = 0;
  while (negatives < strings) {
    auto s = random_text(rng, U"abcde", 1 + pick(rng, 12));
    if (contains_any(s, lex)) continue;
    double net = bias_net_weight(fst, s);
    if (net != 0.0) ++failures;
    r.worst = std::max(r.worst, std::abs(net));
    r.worst = std::max(r.worst, std::abs(wfst_score(fst.fst, s)) > 1e-12 ? std::abs(wfst_score(fst.fst, s)) : 0.0);
    ++negatives;
  }
  // k occurrences of word j separated by filler outside every word's alphabet.
  for (std::size_t i = 0; i < strings; ++i) {
    std::size_t j = pick(rng, lex.size());
    std::size_t k = pick(rng, 5);
    std::u32string s = random_text(rng, U"xyz", pick(rng, 3));
    for (std::size_t n = 0; n < k; ++n) s += lex.word(j) + random_text(rng, U"xyz", 1 + pick(rng, 3));
    double net = bias_net_weight(fst, s);
    double expected = static_cast<double>(k) * w.get(j);
    if (net != expected) ++failures;
    r.worst = std::max(r.worst, std::abs(net - expected));
    ++positives;
  }
  r.cases = negatives + positives;
  r.passed = failures == 0 && r.worst == 0.0;
  std::ostringstream d;
  d << negatives << " strings without a biased word net 0, " << positives
    << " strings with k occurrences net k*w_j; mismatches = " << failures;
  r.detail = d.str();
  return r;
}

// ---------------------------------------------------------------------------
// Alignment metrics

/// Plain Levenshtein over integer-coded units.
inline std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
  return d[a.size()][b.size()];
}

inline int unit_code(const TokenUnit& u) {
  return u.is_biased() ? -1 - static_cast<int>(u.word) : static_cast<int>(u.ch);
}

inline TokenSequence random_units(std::mt19937_64& rng, const BiasedLexicon& lex, std::size_t len) {
  TokenSequence s;
  for (std::size_t i = 0; i < len; ++i) {
    if (pick(rng, 3) == 0) {
      std::size_t k = pick(rng, lex.size());
      s.push_back(TokenUnit::biased(k, lex.word(k)));
    } else {
      s.push_back(TokenUnit::character(U'a' + static_cast<char32_t>(pick(rng, 4))));
    }
  }
  return s;
}

inline SuiteResult metric_oracle_suite(std::uint64_t seed, std::size_t pairs = 500) {
  SuiteResult r;
  r.name = "metric_oracle";
  std::mt19937_64 rng(seed);
  auto lex = BiasedLexicon::build({"曹操", "项羽", "孔子"});
  std::size_t failures = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    auto ref = random_units(rng, lex, pick(rng, 13));
    auto hyp = random_units(rng, lex, pick(rng, 13));
    Alignment a = align(ref, hyp);
    std::vector<int> ra, ha;
    for (const auto& u : ref) ra.push_back(unit_code(u));
    for (const auto& u : hyp) ha.push_back(unit_code(u));
    bool ok = a.cost == levenshtein(ra, ha);
    std::size_t non_match = 0;
    TokenSequence rp, hp;
    for (const auto& st : a.steps) {
      non_match += st.op != EditOp::Match;
      if (st.ref) rp.push_back(*st.ref);
      if (st.hyp) hp.push_back(*st.hyp);
    }
    ok = ok && non_match == a.cost && rp == ref && hp == hyp;
    BiasStats s = bias_stats(a, lex);
    for (const auto& [k, c] : s.per_word) ok = ok && c.matched <= std::min(c.reference, c.hypothesis);
    ok = ok && s.total.matched <= std::min(s.total.reference, s.total.hypothesis);
    for (auto v : {s.precision(), s.recall()}) ok = ok && (!v || (*v >= 0.0 && *v <= 1.0));
    failures += !ok;
    ++r.cases;
  }
  double f = f1(0.997, 0.277);
  r.worst = std::abs(f - 0.434);
  r.passed = failures == 0 && r.worst <= 0.001;
  std::ostringstream d;
  d << r.cases << " random unit-sequence pairs (len<=12), violations = " << failures << "; F1(0.997, 0.277) = " << f;
  r.detail = d.str();
  return r;
}

// ---------------------------------------------------------------------------
// Contextual biasing module

inline SuiteResult cbm_suite(std::uint64_t first_seed = 0, std::size_t seeds = 20, double eps = 1e-5,
                             double tol = 1e-4) {
  SuiteResult r;
  r.name = "cbm_gradients";
  std::size_t failures = 0;
  double worst_row = 0.0;
  for (std::uint64_t seed = first_seed; seed < first_seed + seeds; ++seed) {
    cbm::Dims dims{4, 3, 2};
    auto p = cbm::init_params(dims, seed);
    std::mt19937_64 rng(seed + 1000);
    cbm::Matrix x = cbm::uniform_matrix(rng, 5, dims.d_model, -1.0, 1.0);
    auto g = cbm::grad_check(p, x, eps);
    r.worst = std::max(r.worst, g.max_rel_error);
    auto f = cbm::forward(p, x);
    for (Eigen::Index t = 0; t < f.attention.rows(); ++t) {
      worst_row = std::max(worst_row, std::abs(f.attention.row(t).sum() - 1.0));
      failures += (f.attention.row(t).array() < 0.0).any() || (f.attention.row(t).array() > 1.0).any();
    }
    failures += f.out.rows() != x.rows() || f.out.cols() != x.cols();
    ++r.cases;
  }
  const std::size_t count = cbm::param_count(256, 64, 73);
  r.passed = failures == 0 && r.worst < tol && worst_row <= 1e-9 && count == 37504 && count < 40000;
  std::ostringstream d;
  d << r.cases << " seeds, max grad rel error = " << r.worst << " (tol " << tol << "), max |row sum - 1| = " << worst_row
    << ", param_count(256,64,73) = " << count;
  r.detail = d.str();
  return r;
}

}  // namespace cbias::verify

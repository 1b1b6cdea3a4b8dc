#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cbias/ctc.hpp"
#include "cbias/verify.hpp"

using namespace cbias;

namespace {

// Blank in column 0, vocab a, b, ...
EmissionMatrix make(std::vector<std::vector<double>> rows, std::u32string vocab) {
  EmissionMatrix em;
  em.utt_id = "u";
  em.frames = rows.size();
  em.vocab_size = vocab.size();
  em.vocab.assign(vocab.begin(), vocab.end());
  for (const auto& r : rows) em.probs.insert(em.probs.end(), r.begin(), r.end());
  return em;
}

EmissionMatrix one_hot(const std::vector<std::size_t>& path, std::size_t vocab_size) {
  std::vector<std::vector<double>> rows;
  for (auto c : path) {
    std::vector<double> r(vocab_size + 1, 0.0);
    r[c] = 1.0;
    rows.push_back(r);
  }
  std::u32string vocab;
  for (std::size_t v = 0; v < vocab_size; ++v) vocab.push_back(U'a' + static_cast<char32_t>(v));
  return make(rows, vocab);
}

DecodeOptions exhaustive() {
  DecodeOptions o;
  o.beam = kUnboundedBeam;
  o.nbest = kUnboundedBeam;
  o.lm_weight = 0.0;
  o.bias_weight = 0.0;
  return o;
}

std::size_t occurrences(std::u32string_view text, std::u32string_view word) {
  std::size_t n = 0;
  for (auto pos = text.find(word); pos != std::u32string_view::npos; pos = text.find(word, pos + word.size())) ++n;
  return n;
}

}  // namespace

TEST(Greedy, CollapseRules) {
  EXPECT_EQ(greedy_decode(one_hot({1, 1, 0, 2}, 2)), U"ab");
  EXPECT_EQ(greedy_decode(one_hot({0, 0, 0}, 2)), U"");
  EXPECT_EQ(greedy_decode(one_hot({1, 0, 1}, 2)), U"aa");
  EXPECT_EQ(greedy_decode(one_hot({1, 1, 1}, 2)), U"a");
}

TEST(PrefixBeam, TwoFrameExample) {
  auto em = make({{0.6, 0.4}, {0.6, 0.4}}, U"a");
  auto oracle = verify::brute_force_ctc(em);
  EXPECT_NEAR(oracle[U"a"], 0.64, 1e-15);
  EXPECT_NEAR(oracle[U""], 0.36, 1e-15);

  DecodeOptions opt;
  opt.nbest = 5;
  auto hyps = prefix_beam_search(em, opt);
  ASSERT_EQ(hyps.size(), 2u);
  EXPECT_EQ(hyps[0].text, U"a");
  EXPECT_NEAR(std::exp(log_add(hyps[0].log_blank, hyps[0].log_nonblank)), 0.64, 1e-12);
  EXPECT_EQ(hyps[1].text, U"");
  EXPECT_NEAR(std::exp(log_add(hyps[1].log_blank, hyps[1].log_nonblank)), 0.36, 1e-12);
}

TEST(PrefixBeam, BiasAddsExactlyWeightTimesLambda) {
  auto em = make({{0.6, 0.4}, {0.6, 0.4}}, U"a");
  auto lex = BiasedLexicon::build({"a"});
  BiasWeights w;
  w.set(0, 3.0);
  auto fst = build_bias_fst(lex, w);
  DecodeOptions opt;
  opt.bias_weight = 1.5;
  auto plain = prefix_beam_search(em, opt);
  auto biased = prefix_beam_search(em, opt, nullptr, &fst);
  ASSERT_EQ(biased[0].text, U"a");
  EXPECT_NEAR(biased[0].fused - plain[0].fused, 1.5 * 3.0, 1e-12);
}

TEST(PrefixBeam, BeamOneEqualsGreedyOnOneHot) {
  std::mt19937_64 rng(4);
  DecodeOptions opt;
  opt.beam = 1;
  for (int i = 0; i < 200; ++i) {
    std::size_t v = 1 + rng() % 4;
    std::vector<std::size_t> path(1 + rng() % 12);
    for (auto& c : path) c = rng() % (v + 1);
    auto em = one_hot(path, v);
    auto hyps = prefix_beam_search(em, opt);
    ASSERT_EQ(hyps.size(), 1u);
    EXPECT_EQ(hyps[0].text, greedy_decode(em));
  }
}

TEST(PrefixBeam, MatchesPathEnumeration) {
  auto r = verify::decoder_oracle_suite(21, 200);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(PrefixBeam, ZeroProbabilityEntries) {
  auto em = make({{0.0, 1.0, 0.0}, {0.5, 0.0, 0.5}}, U"ab");
  auto oracle = verify::brute_force_ctc(em);
  auto hyps = prefix_beam_search(em, exhaustive());
  for (const auto& h : hyps)
    EXPECT_NEAR(std::exp(log_add(h.log_blank, h.log_nonblank)), oracle[h.text], 1e-12) << to_utf8(h.text);
  EXPECT_EQ(hyps.size(), 2u);
}

TEST(PrefixBeam, LmFusionUsesWfstScore) {
  std::mt19937_64 rng(31);
  auto lm = train_char_ngram({"abc", "cab", "bca", "aa"}, 3);
  auto fst = compile_lm_wfst(lm);
  DecodeOptions opt = exhaustive();
  opt.lm_weight = 0.7;
  for (int i = 0; i < 50; ++i) {
    auto em = verify::random_emissions(rng, 1 + rng() % 4, 3);
    for (const auto& h : prefix_beam_search(em, opt, &fst)) {
      EXPECT_NEAR(h.lm_score, sentence_score(lm, h.text), 1e-9);
      EXPECT_NEAR(h.fused, h.ctc_log10() + 0.7 * h.lm_score, 1e-9);
    }
  }
}

TEST(PrefixBeam, FusionAdditivityInBiasWeight) {
  std::mt19937_64 rng(17);
  auto lex = BiasedLexicon::build({"ab", "c"});
  for (int i = 0; i < 60; ++i) {
    auto em = verify::random_emissions(rng, 1 + rng() % 4, 3);
    BiasWeights w;
    w.set(0, 1.0);
    w.set(1, 0.5);
    auto lo = build_bias_fst(lex, w);
    w.set(0, 1.75);
    auto hi = build_bias_fst(lex, w);
    DecodeOptions opt = exhaustive();
    opt.bias_weight = 2.0;
    auto a = prefix_beam_search(em, opt, nullptr, &lo);
    auto b = prefix_beam_search(em, opt, nullptr, &hi);
    std::map<std::u32string, double> before;
    for (const auto& h : a) before[h.text] = h.fused;
    ASSERT_EQ(a.size(), b.size());
    for (const auto& h : b) {
      double n = static_cast<double>(occurrences(h.text, U"ab"));
      EXPECT_NEAR(h.fused - before.at(h.text), n * 2.0 * 0.75, 1e-9) << to_utf8(h.text);
    }
  }
}

TEST(PrefixBeam, MonotoneInBiasWeight) {
  std::mt19937_64 rng(19);
  auto lex = BiasedLexicon::build({"ab"});
  for (int i = 0; i < 60; ++i) {
    auto em = verify::random_emissions(rng, 2 + rng() % 3, 3);
    DecodeOptions opt = exhaustive();
    opt.bias_weight = 1.0;
    opt.nbest = 1;
    std::size_t prev = 0;
    for (double wk = -2.0; wk <= 6.0; wk += 0.5) {
      BiasWeights w;
      w.set(0, wk);
      auto fst = build_bias_fst(lex, w);
      auto best = prefix_beam_search(em, opt, nullptr, &fst);
      std::size_t n = occurrences(best[0].text, U"ab");
      EXPECT_GE(n, prev) << "w=" << wk;
      prev = n;
    }
  }
}

TEST(PrefixBeam, NBestSortedAndDeterministic) {
  std::mt19937_64 rng(23);
  auto lm = train_char_ngram({"abcd", "dcba"}, 2);
  auto lmf = compile_lm_wfst(lm);
  auto lex = BiasedLexicon::build({"bc"});
  BiasWeights w;
  w.set(0, 2.0);
  auto bf = build_bias_fst(lex, w);
  DecodeOptions opt;
  opt.beam = 6;
  opt.nbest = 6;
  for (int i = 0; i < 50; ++i) {
    auto em = verify::random_emissions(rng, 3 + rng() % 8, 4);
    auto h = prefix_beam_search(em, opt, &lmf, &bf);
    for (std::size_t k = 1; k < h.size(); ++k) EXPECT_GE(h[k - 1].fused, h[k].fused);
    auto again = prefix_beam_search(em, opt, &lmf, &bf);
    ASSERT_EQ(h.size(), again.size());
    for (std::size_t k = 0; k < h.size(); ++k) {
      EXPECT_EQ(h[k].text, again[k].text);
      EXPECT_EQ(h[k].fused, again[k].fused);
    }
  }
}

TEST(PrefixBeam, Errors) {
  auto em = make({{0.6, 0.4}}, U"a");
  DecodeOptions opt;
  opt.beam = 0;
  try {
    prefix_beam_search(em, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidBeam);
  }
  std::vector<char32_t> wrong{U'a', U'b'};
  try {
    prefix_beam_search(em, wrong, DecodeOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
  opt.beam = 1;
  opt.nbest = 0;
  EXPECT_THROW(prefix_beam_search(em, opt), Error);
}

TEST(Emissions, TextAndBinaryRoundTrip) {
  std::mt19937_64 rng(2);
  auto em = verify::random_emissions(rng, 5, 3);
  em.utt_id = "x1";
  std::stringstream text;
  write_emissions(text, em, EmissionEncoding::Text);
  auto back = read_emissions(text);
  EXPECT_EQ(back.probs, em.probs);
  EXPECT_EQ(back.blank, em.blank);
  EXPECT_EQ(back.vocab, em.vocab);

  std::stringstream bin;
  write_emissions(bin, em, EmissionEncoding::F32le);
  auto fb = read_emissions(bin);
  ASSERT_EQ(fb.probs.size(), em.probs.size());
  for (std::size_t i = 0; i < em.probs.size(); ++i) EXPECT_NEAR(fb.probs[i], em.probs[i], 1e-7);
}

TEST(Emissions, HeaderVocabMismatch) {
  std::stringstream in;
  in << R"({"utt_id":"u7","T":1,"V":3,"blank_id":0,"vocab":["a","b"]})" << "\n0.25 0.25 0.25 0.25\n";
  try {
    read_emissions(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    EXPECT_NE(std::string(e.what()).find("u7"), std::string::npos);
  }
}

TEST(Emissions, RowValidation) {
  std::stringstream in;
  in << R"({"utt_id":"u8","T":1,"V":1,"blank_id":0,"vocab":["a"]})" << "\n0.5 0.6\n";
  try {
    read_emissions(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidEmission);
  }
}

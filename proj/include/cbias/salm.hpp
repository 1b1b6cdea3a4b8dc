#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cbias/ctc.hpp"
#include "cbias/emission.hpp"
#include "cbias/error.hpp"
#include "cbias/lexicon.hpp"
#include "cbias/scoring.hpp"
#include "cbias/wfst.hpp"

namespace cbias {

enum class TargetMode { MatchRecall, ConstantTarget };

struct AdaptationConfig {
  double lr0 = 1.0;
  double eta = 0.9;
  double delta = 1.0;
  TargetMode mode = TargetMode::MatchRecall;
  double beta_target = 0.98;
  double epsilon = 0.02;
  std::size_t max_iters = 30;
  double lr_floor = 0.05;
  DecodeOptions decode{};
  std::size_t jobs = 1;
};

struct Utterance {
  std::string utt_id;
  EmissionMatrix emissions;
  std::string reference;
};

/// lr_i = eta * lr_{i-1}
inline double update_lr(double lr_prev, double eta) {
  if (!(lr_prev > 0.0)) fail(ErrorKind::NonPositiveRate, "learning rate must be positive");
  if (!(eta > 0.0 && eta < 1.0)) fail(ErrorKind::InvalidEta, "eta must be in (0,1)");
  return eta * lr_prev;
}

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Pre-clamp step sgn(alpha - beta) * lr * delta. A word never hypothesized
/// has no false positives, so an absent alpha counts as 1.
inline double weight_step(std::optional<double> alpha, double beta, double lr, double delta) {
  return sgn(alpha.value_or(1.0) - beta) * lr * delta;
}

inline double update_weight(double w_prev, std::optional<double> alpha, double beta, double lr, double delta) {
  return BiasWeights::clamp(w_prev + weight_step(alpha, beta, lr, delta));
}

struct WordRecord {
  std::size_t word = 0;
  WordCounts counts;
  double weight = 0.0;  // weight in force during this decode pass
  double step = 0.0;    // pre-clamp change that produced `weight`
  bool updatable = false;

  std::optional<double> alpha() const { return counts.precision(); }
  std::optional<double> beta() const { return counts.recall(); }
};

struct IterationRecord {
  std::size_t iteration = 0;
  double lr = 0.0;
  std::vector<WordRecord> words;
  double cer = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  double f1 = 0.0;
};

enum class StopReason { NotStarted, Converged, MaxIters, LrFloor };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::NotStarted: return "not_started";
    case StopReason::Converged: return "converged";
    case StopReason::MaxIters: return "max_iters";
    case StopReason::LrFloor: return "lr_floor";
  }
  return "unknown";
}

struct AdaptationState {
  std::size_t iteration = 0;
  double lr = 1.0;
  BiasWeights weights;
  std::vector<IterationRecord> history;
  StopReason stop = StopReason::NotStarted;
};

/// Decodes every utterance, fanning out over `jobs` threads. Results keep
/// corpus order.
inline std::vector<std::vector<Hypothesis>> decode_corpus(const std::vector<Utterance>& corpus,
                                                          const DecodeOptions& opt, const Wfst* lm,
                                                          const BiasFst* bias, std::size_t jobs = 1) {
  std::vector<std::vector<Hypothesis>> out(corpus.size());
  std::vector<std::exception_ptr> errors(corpus.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (std::size_t i = cursor++; i < corpus.size(); i = cursor++) {
      try {
        out[i] = prefix_beam_search(corpus[i].emissions, opt, lm, bias);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, corpus.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      fail(ErrorKind::DecodeFailure, corpus[i].utt_id + ": " + e.what());
    }
  }
  return out;
}

namespace detail {

inline double comparison_target(const WordCounts& c, const AdaptationConfig& cfg) {
  if (cfg.mode == TargetMode::ConstantTarget) return cfg.beta_target;
  // Recall is vacuously 1 for a word with no reference occurrences.
  return c.recall().value_or(1.0);
}

inline IterationRecord evaluate(const std::vector<Utterance>& corpus, const BiasedLexicon& lexicon,
                                const Wfst* lm, const BiasWeights& weights, const AdaptationConfig& cfg,
                                std::size_t iteration, double lr) {
  BiasFst bias = build_bias_fst(lexicon, weights);
  DecodeOptions opt = cfg.decode;
  opt.nbest = 1;
  auto hyps = decode_corpus(corpus, opt, lm, &bias, cfg.jobs);

  CorpusScore score;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    score.add(corpus[i].reference, hyps[i].empty() ? std::string{} : to_utf8(hyps[i].front().text), lexicon);

  IterationRecord rec;
  rec.iteration = iteration;
  rec.lr = lr;
  rec.cer = score.cer();
  rec.precision = score.precision();
  rec.recall = score.recall();
  rec.f1 = score.f1_score();
  for (std::size_t k = 0; k < lexicon.size(); ++k) {
    WordRecord w;
    w.word = k;
    if (auto it = score.bias.per_word.find(k); it != score.bias.per_word.end()) w.counts = it->second;
    w.weight = weights.get(k);
    w.updatable = w.counts.reference > 0 || w.counts.hypothesis > 0;
    rec.words.push_back(w);
  }
  return rec;
}

inline bool converged(const IterationRecord& rec, const AdaptationConfig& cfg) {
  // Slack absorbs representation error in quantities like 1.0 - 0.98.
  constexpr double kSlack = 1e-12;
  for (const auto& w : rec.words) {
    if (!w.updatable) continue;
    if (std::abs(w.alpha().value_or(1.0) - comparison_target(w.counts, cfg)) > cfg.epsilon + kSlack) return false;
  }
  return true;
}

}  // namespace detail

/// Self-adaptive bias loop: decode with the current weights, measure
/// per-word precision and recall, and step each weight by
/// sgn(alpha - target) * lr_i * delta until precision meets the target, the
/// iteration budget runs out, or lr drops below the floor. max_iters counts
/// weight updates; history entry i records the decode made with w_i.
inline AdaptationState adapt(const std::vector<Utterance>& corpus, const BiasedLexicon& lexicon, const Wfst* lm,
                             const BiasWeights& initial, const AdaptationConfig& cfg) {
  if (corpus.empty()) fail(ErrorKind::EmptyCorpus, "adaptation corpus is empty");
  AdaptationState state;
  state.lr = cfg.lr0;
  state.weights = initial;
  if (cfg.max_iters == 0) {
    state.stop = StopReason::MaxIters;
    return state;
  }

  state.history.push_back(detail::evaluate(corpus, lexicon, lm, state.weights, cfg, 0, state.lr));
  for (;;) {
    const IterationRecord& last = state.history.back();
    if (detail::converged(last, cfg)) {
      state.stop = StopReason::Converged;
      break;
    }
    if (state.iteration == cfg.max_iters) {
      state.stop = StopReason::MaxIters;
      break;
    }
    double lr = update_lr(state.lr, cfg.eta);
    if (lr < cfg.lr_floor) {
      state.stop = StopReason::LrFloor;
      break;
    }
    BiasWeights next = state.weights;
    std::vector<double> steps(lexicon.size(), 0.0);
    for (const auto& w : last.words) {
      if (!w.updatable) continue;
      double target = detail::comparison_target(w.counts, cfg);
      steps[w.word] = weight_step(w.alpha(), target, lr, cfg.delta);
      next.set(w.word, update_weight(state.weights.get(w.word), w.alpha(), target, lr, cfg.delta));
    }
    state.lr = lr;
    ++state.iteration;
    state.weights = std::move(next);
    IterationRecord rec = detail::evaluate(corpus, lexicon, lm, state.weights, cfg, state.iteration, state.lr);
    for (auto& w : rec.words) w.step = steps[w.word];
    state.history.push_back(std::move(rec));
  }
  return state;
}

}  // namespace cbias

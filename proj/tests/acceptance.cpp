// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "fixture.hpp"
#include "pipeline.hpp"

using namespace cbias;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Outcome from_suite(const verify::SuiteResult& r) { return {r.passed, r.detail}; }

const fixture::Corpus& corpus() {
  static const fixture::Corpus c = fixture::build(7);
  return c;
}

AdaptationState match_recall_run() {
  AdaptationConfig cfg;
  cfg.max_iters = 15;
  return adapt(corpus().utterances, corpus().lexicon, &corpus().lm_fst, BiasWeights{}, cfg);
}

AdaptationConfig constant_config(double epsilon) {
  AdaptationConfig cfg;
  cfg.mode = TargetMode::ConstantTarget;
  cfg.beta_target = 0.98;
  cfg.epsilon = epsilon;
  cfg.max_iters = 1000;  // large, so only convergence or the lr floor can stop the loop
  return cfg;
}

// Checks lr recurrence and step law on a history; counts violations.
std::size_t law_violations(const AdaptationState& st, const AdaptationConfig& cfg, double& worst_closed_form) {
  std::size_t bad = 0;
  double lr = 1.0;
  for (std::size_t i = 0; i < st.history.size(); ++i) {
    const auto& rec = st.history[i];
    if (i > 0) lr = 0.9 * lr;
    bad += rec.lr != lr;
    double closed = std::pow(0.9, static_cast<double>(i));
    worst_closed_form = std::max(worst_closed_form, std::abs(rec.lr - closed) / closed);
    if (i == 0) continue;
    for (std::size_t k = 0; k < rec.words.size(); ++k) {
      const double step = rec.words[k].step;
      bad += !(step == 0.0 || step == rec.lr * cfg.delta || step == -rec.lr * cfg.delta);
      bad += rec.words[k].weight != BiasWeights::clamp(st.history[i - 1].words[k].weight + step);
    }
  }
  return bad;
}

Outcome ac1() {
  auto t0 = std::chrono::steady_clock::now();
  auto r = verify::decoder_oracle_suite(1, 200, 1e-10);
  double s = seconds_since(t0);
  std::ostringstream d;
  d << r.detail << ", " << s << " s (limit 10 s)";
  return {r.passed && s < 10.0, d.str()};
}

Outcome ac2() { return from_suite(verify::wfst_equivalence_suite(2, 100, 1e-9)); }
Outcome ac3() { return from_suite(verify::bias_cancellation_suite(3, 1000)); }
Outcome ac4() { return from_suite(verify::metric_oracle_suite(4, 500)); }

Outcome ac5() {
  AdaptationConfig mr;
  mr.max_iters = 15;
  auto a = match_recall_run();
  auto cc = constant_config(0.0);
  auto b = adapt(corpus().utterances, corpus().lexicon, &corpus().lm_fst, BiasWeights{}, cc);
  double worst = 0.0;
  std::size_t bad = law_violations(a, mr, worst) + law_violations(b, cc, worst);
  const bool defaults = mr.lr0 == 1.0 && mr.eta == 0.9 && mr.delta == 1.0 && mr.beta_target == 0.98;
  std::ostringstream d;
  d << a.history.size() + b.history.size() << " history entries, violations = " << bad
    << ", lr_i == 0.9*lr_{i-1} bit-exact from lr_0 = 1, max rel |lr_i - 0.9^i| = " << worst;
  return {bad == 0 && defaults && worst < 1e-14 && b.history.size() > 1, d.str()};
}

Outcome ac6() {
  auto t0 = std::chrono::steady_clock::now();
  auto st = match_recall_run();
  double s = seconds_since(t0);
  const auto& first = st.history.front();
  const auto& last = st.history.back();
  double d_recall = last.recall.value_or(0.0) - first.recall.value_or(0.0);
  double d_cer = last.cer - first.cer;
  std::ostringstream d;
  d << "recall " << first.recall.value_or(0.0) << " -> " << last.recall.value_or(0.0) << " (delta " << d_recall
    << " >= 0.2), CER " << first.cer << " -> " << last.cer << " (delta " << d_cer << " <= 0.01), " << st.iteration
    << " updates, stop " << to_string(st.stop) << ", " << s << " s (limit 60 s)";
  return {d_recall >= 0.2 && d_cer <= 0.01 && st.iteration <= 15 && s < 60.0, d.str()};
}

Outcome ac7() {
  auto cfg = constant_config(0.02);
  auto st = adapt(corpus().utterances, corpus().lexicon, &corpus().lm_fst, BiasWeights{}, cfg);
  bool within = true;
  for (const auto& w : st.history.back().words)
    if (w.updatable) within = within && std::abs(w.alpha().value_or(1.0) - 0.98) <= 0.02 + 1e-12;
  bool ok = (st.stop == StopReason::Converged && within) || st.stop == StopReason::LrFloor;
  ok = ok && st.iteration <= 29;

  auto floor_cfg = constant_config(0.0);
  auto fl = adapt(corpus().utterances, corpus().lexicon, &corpus().lm_fst, BiasWeights{}, floor_cfg);
  ok = ok && fl.stop == StopReason::LrFloor && fl.iteration <= 29;
  std::ostringstream d;
  d << "epsilon 0.02: stop " << to_string(st.stop) << " after " << st.iteration << " updates, alpha within band = "
    << (within ? "yes" : "no") << "; epsilon 0: stop " << to_string(fl.stop) << " after " << fl.iteration
    << " updates (bound 29)";
  return {ok, d.str()};
}

Outcome ac8() { return from_suite(verify::cbm_suite(0, 20, 1e-5, 1e-4)); }

Outcome ac9() {
  auto base = std::filesystem::path(CBIAS_TEST_TMP) / "acceptance";
  std::map<std::string, std::string> a, b;
  try {
    a = pipeline::run_all(base / "run_a", 4);
    b = pipeline::run_all(base / "run_b", 4);
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) differing += !b.count(name) || b.at(name) != bytes;
  differing += a.size() != b.size();
  const bool core = a.count("decode.tsv") && a.count("history.json") && a.at("decode.tsv") == b.at("decode.tsv") &&
                    a.at("history.json") == b.at("history.json");
  std::ostringstream d;
  d << a.size() << " output files compared byte for byte, " << differing
    << " differ (decode.tsv " << a.at("decode.tsv").size() << " B, history.json " << a.at("history.json").size()
    << " B)";
  return {core && differing == 0, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 decoder oracle", ac1},
      {"AC2 WFST backoff equivalence", ac2},
      {"AC3 bias FST cancellation", ac3},
      {"AC4 metric oracle", ac4},
      {"AC5 learning-rate and step exactness", ac5},
      {"AC6 adaptation efficacy", ac6},
      {"AC7 constant-target mode", ac7},
      {"AC8 biasing module correctness", ac8},
      {"AC9 end-to-end determinism", ac9},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.passed;
    std::printf("%s %s: %s\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}

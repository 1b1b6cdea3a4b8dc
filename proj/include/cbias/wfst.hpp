#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cbias/error.hpp"
#include "cbias/lexicon.hpp"
#include "cbias/ngram.hpp"
#include "cbias/unicode.hpp"

namespace cbias {

using Label = char32_t;
using StateId = std::uint32_t;

inline constexpr Label kEpsilon = 0;

struct Arc {
  Label label = kEpsilon;
  double weight = 0.0;  // log10
  StateId next = 0;
};

/// Deterministic acceptor with failure (epsilon) arcs. Consuming a label at a
/// state without a matching arc follows the failure arc and retries; at a
/// state without one, the label is absorbed into `unmatched`.
class Wfst {
 public:
  struct Step {
    StateId next;
    double weight;
  };

  StateId add_state() {
    states_.emplace_back();
    return static_cast<StateId>(states_.size() - 1);
  }

  void add_arc(StateId from, Arc arc) {
    auto& arcs = states_.at(from).arcs;
    auto it = std::lower_bound(arcs.begin(), arcs.end(), arc.label,
                               [](const Arc& a, Label l) { return a.label < l; });
    if (it != arcs.end() && it->label == arc.label)
      fail(ErrorKind::ConfigError, "non-deterministic arc label");
    arcs.insert(it, arc);
  }

  void set_failure(StateId from, double weight, StateId next) {
    states_.at(from).failure = Arc{kEpsilon, weight, next};
  }
  void set_final(StateId s, double weight) { states_.at(s).final_weight = weight; }
  void set_start(StateId s) { start_ = s; }
  /// With `replace_fallback`, an unmatched label scores exactly `weight`; the
  /// failure weights walked while looking for it are dropped.
  void set_unmatched(StateId next, double weight, bool replace_fallback = false) {
    unmatched_ = {next, weight};
    unmatched_replaces_ = replace_fallback;
  }

  StateId start() const noexcept { return start_; }
  std::size_t num_states() const noexcept { return states_.size(); }
  Step unmatched() const noexcept { return unmatched_; }

  std::span<const Arc> arcs(StateId s) const { return states_.at(s).arcs; }
  const std::optional<Arc>& failure(StateId s) const { return states_.at(s).failure; }
  double final_weight(StateId s) const { return states_.at(s).final_weight; }

  const Arc* find_arc(StateId s, Label label) const {
    const auto& arcs = states_[s].arcs;
    auto it = std::lower_bound(arcs.begin(), arcs.end(), label,
                               [](const Arc& a, Label l) { return a.label < l; });
    return it != arcs.end() && it->label == label ? &*it : nullptr;
  }

  Step step(StateId s, Label label) const {
    double w = 0.0;
    for (;;) {
      if (const Arc* a = find_arc(s, label)) return {a->next, w + a->weight};
      const auto& f = states_[s].failure;
      if (!f) return {unmatched_.next, (unmatched_replaces_ ? 0.0 : w) + unmatched_.weight};
      w += f->weight;
      s = f->next;
    }
  }

  /// Every arc as (source, label, weight, destination); failure arcs carry kEpsilon.
  std::vector<std::tuple<StateId, Label, double, StateId>> all_arcs() const {
    std::vector<std::tuple<StateId, Label, double, StateId>> out;
    for (StateId s = 0; s < states_.size(); ++s) {
      for (const auto& a : states_[s].arcs) out.emplace_back(s, a.label, a.weight, a.next);
      if (const auto& f = states_[s].failure) out.emplace_back(s, kEpsilon, f->weight, f->next);
    }
    return out;
  }

 private:
  struct State {
    std::vector<Arc> arcs;  // sorted by label
    std::optional<Arc> failure;
    double final_weight = 0.0;
  };

  std::vector<State> states_;
  StateId start_ = 0;
  Step unmatched_{0, 0.0};
  bool unmatched_replaces_ = false;
};

/// Path weight of `sentence` from the start state, including the final weight.
inline double wfst_score(const Wfst& fst, std::u32string_view sentence) {
  StateId s = fst.start();
  double total = 0.0;
  for (Label c : sentence) {
    auto st = fst.step(s, c);
    total += st.weight;
    s = st.next;
  }
  return total + fst.final_weight(s);
}

// ---------------------------------------------------------------------------
// N-gram LM as a WFST

inline std::optional<char32_t> token_char(std::string_view tok) {
  if (tok == "<space>") return U' ';
  if (tok.size() == 8 && tok.substr(0, 3) == "<U+" && tok.back() == '>') {
    return static_cast<char32_t>(std::stoul(std::string(tok.substr(3, 4)), nullptr, 16));
  }
  auto cps = to_nfc_u32(tok);
  if (cps.size() == 1 && to_utf8(cps) == tok) return cps[0];
  return std::nullopt;
}

/// One state per history n-gram (plus the empty history), word arcs weighted
/// by log10 probability, failure arcs weighted by backoff. Final weights hold
/// the end-of-sentence score when </s> is modeled. Tokens that are not single
/// characters get no arcs.
inline Wfst compile_lm_wfst(const NGramLM& lm) {
  const auto max_hist = static_cast<std::size_t>(lm.order() - 1);
  std::map<NGram, StateId, NGramLess> state_of;

  std::vector<NGram> histories{NGram{}};
  auto consider = [&](const NGram& h) {
    if (h.size() > max_hist || (!h.empty() && h.back() == kEos)) return;
    histories.push_back(h);
  };
  for (int n = 1; n <= lm.order(); ++n) {
    for (const auto& [g, e] : lm.ngrams(n)) {
      consider(g);
      for (std::size_t len = 1; len < g.size(); ++len) consider(NGram(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(len)));
    }
  }
  std::sort(histories.begin(), histories.end(), [](const NGram& a, const NGram& b) {
    return a.size() != b.size() ? a.size() < b.size() : NGramLess{}(a, b);
  });
  histories.erase(std::unique(histories.begin(), histories.end()), histories.end());

  Wfst fst;
  for (const auto& h : histories) state_of.emplace(h, fst.add_state());
  const StateId root = state_of.at(NGram{});

  auto suffix_state = [&](std::span<const TokenId> g) {
    if (g.size() > max_hist) g = g.subspan(g.size() - max_hist);
    for (std::size_t s = 0;; ++s) {
      auto it = state_of.find(g.subspan(s));
      if (it != state_of.end()) return it->second;
    }
  };

  std::vector<std::optional<char32_t>> chars(lm.token_count());
  for (std::size_t t = 2; t < lm.token_count(); ++t) chars[t] = token_char(lm.token(static_cast<TokenId>(t)));

  for (int n = 1; n <= lm.order(); ++n) {
    for (const auto& [g, e] : lm.ngrams(n)) {
      TokenId w = g.back();
      if (w == kBos || w == kEos || !chars[static_cast<std::size_t>(w)]) continue;
      auto from = state_of.find(std::span<const TokenId>(g.data(), g.size() - 1));
      if (from == state_of.end()) continue;
      fst.add_arc(from->second, Arc{*chars[static_cast<std::size_t>(w)], e.logprob, suffix_state(g)});
    }
  }

  for (const auto& [h, s] : state_of) {
    if (h.empty()) continue;
    const NGramEntry* e = lm.find(h);
    double bo = e && e->backoff ? *e->backoff : 0.0;
    fst.set_failure(s, bo, suffix_state(std::span<const TokenId>(h.data() + 1, h.size() - 1)));
  }

  if (lm.models(kEos)) {
    for (const auto& [h, s] : state_of) {
      double cost = 0.0;
      NGram ctx = h, key;
      for (;;) {
        key = ctx;
        key.push_back(kEos);
        if (const NGramEntry* e = lm.find(key)) {
          cost += e->logprob;
          break;
        }
        if (const NGramEntry* c = lm.find(ctx); c && c->backoff) cost += *c->backoff;
        ctx.erase(ctx.begin());
      }
      fst.set_final(s, cost);
    }
  }

  auto bos = state_of.find(NGram{kBos});
  fst.set_start(bos != state_of.end() ? bos->second : root);
  fst.set_unmatched(root, kUnknownFloor, true);
  return fst;
}

// ---------------------------------------------------------------------------
// Biasing FST

inline constexpr double kMaxBiasWeight = 10.0;

/// Per-word log10 bias offsets; unlisted words weigh 0. Values are clamped
/// to [-kMaxBiasWeight, kMaxBiasWeight].
class BiasWeights {
 public:
  static double clamp(double w) { return std::clamp(w, -kMaxBiasWeight, kMaxBiasWeight); }

  double get(std::size_t k) const {
    auto it = w_.find(k);
    return it == w_.end() ? 0.0 : it->second;
  }
  void set(std::size_t k, double w) {
    if (!std::isfinite(w)) fail(ErrorKind::ConfigError, "bias weight must be finite");
    w_[k] = clamp(w);
  }
  const std::map<std::size_t, double>& values() const noexcept { return w_; }

  friend bool operator==(const BiasWeights&, const BiasWeights&) = default;

 private:
  std::map<std::size_t, double> w_;
};

/// Character trie of the biased words. `accumulated[s]` is the bonus awarded
/// on the way into state s, `credit[s]` the amount kept when the path leaves s
/// through its failure arc (w_k if s completes word k, else 0). Failure arcs
/// therefore weigh credit - accumulated, and so do final weights.
struct BiasFst {
  Wfst fst;
  std::vector<double> accumulated;
  std::vector<double> credit;
  std::vector<std::optional<std::size_t>> completes;
};

/// Exact bias bookkeeping for one hypothesis. The running value is
/// committed + accumulated[state], so cancelled partial matches contribute
/// exactly zero.
struct BiasCursor {
  StateId state = 0;
  double committed = 0.0;

  double value(const BiasFst& b) const { return committed + b.accumulated[state]; }
  double final_value(const BiasFst& b) const { return committed + b.credit[state]; }

  bool operator==(const BiasCursor&) const = default;
};

inline BiasCursor bias_advance(const BiasFst& b, BiasCursor cur, Label c) {
  const StateId start = b.fst.start();
  for (;;) {
    if (const Arc* a = b.fst.find_arc(cur.state, c)) {
      cur.state = a->next;
      return cur;
    }
    if (cur.state == start) return cur;
    cur.committed += b.credit[cur.state];
    cur.state = start;
  }
}

inline double bias_net_weight(const BiasFst& b, std::u32string_view text) {
  BiasCursor cur{b.fst.start(), 0.0};
  for (char32_t c : text) cur = bias_advance(b, cur, c);
  return cur.final_value(b);
}

/// Words credited along `text`, in order.
inline std::vector<std::size_t> bias_completions(const BiasFst& b, std::u32string_view text) {
  std::vector<std::size_t> out;
  const StateId start = b.fst.start();
  StateId s = start;
  auto leave = [&] {
    if (b.completes[s]) out.push_back(*b.completes[s]);
    s = start;
  };
  for (char32_t c : text) {
    for (;;) {
      if (const Arc* a = b.fst.find_arc(s, c)) {
        s = a->next;
        break;
      }
      if (s == start) break;
      leave();
    }
  }
  if (s != start) leave();
  return out;
}

/// Per-character bonus is w_k / len(z_k). A trie state at depth d carries
/// d * max(per-character bonus of the words through it), so shared prefixes
/// take the larger bonus and the divergent arc settles the difference.
inline BiasFst build_bias_fst(const BiasedLexicon& lexicon, const BiasWeights& weights) {
  BiasFst b;
  struct Node {
    std::map<char32_t, StateId> next;
    std::size_t depth = 0;
    double max_bonus = -kMaxBiasWeight - 1.0;
  };
  std::vector<Node> nodes(1);
  b.completes.emplace_back();
  for (std::size_t k = 0; k < lexicon.size(); ++k) {
    const auto& word = lexicon.word(k);
    const double bonus = weights.get(k) / static_cast<double>(word.size());
    StateId s = 0;
    for (char32_t c : word) {
      auto it = nodes[s].next.find(c);
      StateId n;
      if (it == nodes[s].next.end()) {
        n = static_cast<StateId>(nodes.size());
        nodes[s].next.emplace(c, n);
        nodes.push_back(Node{{}, nodes[s].depth + 1, bonus});
        b.completes.emplace_back();
      } else {
        n = it->second;
        nodes[n].max_bonus = std::max(nodes[n].max_bonus, bonus);
      }
      s = n;
    }
    b.completes[s] = k;
  }

  b.accumulated.resize(nodes.size());
  b.credit.assign(nodes.size(), 0.0);
  for (StateId s = 0; s < nodes.size(); ++s) {
    b.fst.add_state();
    b.accumulated[s] = s == 0 ? 0.0 : static_cast<double>(nodes[s].depth) * nodes[s].max_bonus;
    if (b.completes[s]) b.credit[s] = weights.get(*b.completes[s]);
  }
  for (StateId s = 0; s < nodes.size(); ++s) {
    for (const auto& [c, n] : nodes[s].next)
      b.fst.add_arc(s, Arc{c, b.accumulated[n] - b.accumulated[s], n});
    if (s != 0) {
      b.fst.set_failure(s, b.credit[s] - b.accumulated[s], 0);
      b.fst.set_final(s, b.credit[s] - b.accumulated[s]);
    }
  }
  b.fst.set_start(0);
  b.fst.set_unmatched(0, 0.0);
  return b;
}

}  // namespace cbias

#pragma once

// Synthetic biased corpus: 50 utterances of filler + person name + filler.
// Every name character after the surname has homophones it is confused with;
// the surname is never confused, so each name stays identifiable.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cbias/cbias.hpp"

namespace fixture {

inline const std::vector<std::string>& biased_words() {
  static const std::vector<std::string> w{"曹操", "项羽", "孔子", "诸葛亮", "刘备"};
  return w;
}

inline const std::map<char32_t, std::u32string>& confusions() {
  static const std::map<char32_t, std::u32string> c{
      {U'操', U"糙"}, {U'羽', U"雨语"}, {U'子', U"紫字"}, {U'葛', U"格"}, {U'亮', U"量谅"}, {U'备', U"被贝"},
  };
  return c;
}

inline const std::vector<std::string>& prefixes() {
  static const std::vector<std::string> p{"今天我们讲", "大家都知道", "历史上的", "我很喜欢", "他们说起"};
  return p;
}

inline const std::vector<std::string>& suffixes() {
  static const std::vector<std::string> s{"的故事", "是名人", "很有名", "的时候", "在这里"};
  return s;
}

struct Corpus {
  cbias::BiasedLexicon lexicon;
  cbias::SynthConfig synth;
  std::vector<std::pair<std::string, std::string>> transcripts;
  std::vector<cbias::Utterance> utterances;
  std::vector<std::string> lm_text;
  cbias::NGramLM lm;
  cbias::Wfst lm_fst;
};

inline std::vector<char32_t> vocabulary() {
  std::set<char32_t> chars;
  auto add = [&](const std::string& s) {
    for (char32_t c : cbias::to_nfc_u32(s)) chars.insert(c);
  };
  for (const auto& w : biased_words()) add(w);
  for (const auto& p : prefixes()) add(p);
  for (const auto& s : suffixes()) add(s);
  for (const auto& [c, alts] : confusions()) {
    chars.insert(c);
    chars.insert(alts.begin(), alts.end());
  }
  return {chars.begin(), chars.end()};
}

/// Transcripts cycle through the five names; filler is drawn from `seed`.
inline std::vector<std::pair<std::string, std::string>> transcripts(std::uint64_t seed, std::size_t n = 50) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = prefixes()[rng() % prefixes().size()];
    const auto& s = suffixes()[rng() % suffixes().size()];
    std::string id = std::to_string(i);
    out.emplace_back("utt" + std::string(3 - std::min<std::size_t>(3, id.size()), '0') + id, p + biased_words()[i % biased_words().size()] + s);
  }
  return out;
}

/// LM text: the filler frames around unrelated names, plus one line per
/// vocabulary character so every character has unigram mass.
inline std::vector<std::string> lm_text() {
  static const std::vector<std::string> others{"张三", "李四", "王五", "赵六", "孙七", "周八"};
  std::vector<std::string> lines;
  for (const auto& p : prefixes())
    for (const auto& o : others)
      for (const auto& s : suffixes()) lines.push_back(p + o + s);
  for (char32_t c : vocabulary()) lines.push_back(cbias::to_utf8(c));
  return lines;
}

inline cbias::SynthConfig synth_config(std::uint64_t seed) {
  cbias::SynthConfig cfg;
  cfg.vocab = vocabulary();
  cfg.blank_rate = 0.2;
  cfg.confusion_rate = 0.6;
  cfg.frames_per_char = 1;
  cfg.peak = 0.8;
  cfg.seed = seed;
  for (const auto& [c, alts] : confusions()) cfg.confusion_sets[c] = std::vector<char32_t>(alts.begin(), alts.end());
  return cfg;
}

inline Corpus build(std::uint64_t seed = 7) {
  Corpus c;
  c.lexicon = cbias::BiasedLexicon::build(biased_words());
  c.synth = synth_config(seed);
  c.transcripts = transcripts(seed);
  for (std::size_t i = 0; i < c.transcripts.size(); ++i) {
    cbias::SynthConfig local = c.synth;
    local.seed = cbias::utterance_seed(seed, i);
    const auto& [utt, text] = c.transcripts[i];
    c.utterances.push_back({utt, cbias::synth_emissions(std::string_view(text), local, utt), text});
  }
  c.lm_text = lm_text();
  c.lm = cbias::train_char_ngram(c.lm_text, 3);
  c.lm_fst = cbias::compile_lm_wfst(c.lm);
  return c;
}

}  // namespace fixture

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbias/ctc.hpp"
#include "cbias/error.hpp"
#include "cbias/lexicon.hpp"
#include "cbias/salm.hpp"
#include "cbias/scoring.hpp"
#include "cbias/synth.hpp"
#include "cbias/wfst.hpp"

namespace cbias::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IOFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IOFailure, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorKind::IOFailure, "write failed: " + path.string());
}

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    auto tab = line.find('\t', pos);
    out.emplace_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
    if (tab == std::string_view::npos) break;
    pos = tab + 1;
  }
  return out;
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IOFailure, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

using Transcript = std::pair<std::string, std::string>;  // (utt_id, text)

/// `utt_id<TAB>text`. Manifest rows (three columns) yield their reference,
/// decode output (four columns) yields its rank-1 text.
inline std::vector<Transcript> read_transcripts(const fs::path& path) {
  std::vector<Transcript> rows;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_tabs(line);
    if (f.size() == 2) {
      rows.emplace_back(f[0], f[1]);
    } else if (f.size() == 3) {
      rows.emplace_back(f[0], f[2]);
    } else if (f.size() == 4) {
      if (f[1] == "1") rows.emplace_back(f[0], f[3]);
    } else {
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected utt_id<TAB>text");
    }
  }
  return rows;
}

inline std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::vector<ManifestRow> rows;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(path)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 3)
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected utt_id<TAB>path<TAB>reference");
    rows.push_back({f[0], f[1], f[2]});
  }
  return rows;
}

inline EmissionMatrix load_emissions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IOFailure, "cannot open " + path.string());
  return read_emissions(in);
}

/// Loads every utterance of a manifest; emission paths resolve against the
/// manifest's directory. Errors name the utterance.
inline std::vector<Utterance> load_corpus(const fs::path& manifest) {
  std::vector<Utterance> corpus;
  for (const auto& row : read_manifest(manifest)) {
    fs::path p = row.path;
    if (p.is_relative()) p = manifest.parent_path() / p;
    try {
      EmissionMatrix em = load_emissions(p);
      if (em.utt_id.empty()) em.utt_id = row.utt_id;
      corpus.push_back({row.utt_id, std::move(em), row.reference});
    } catch (const Error& e) {
      fail(e.kind(), "utterance " + row.utt_id + ": " + e.what());
    }
  }
  return corpus;
}

inline BiasedLexicon load_lexicon(const fs::path& words, const fs::path& synonyms = {}) {
  std::ifstream in(words, std::ios::binary);
  if (!in) fail(ErrorKind::IOFailure, "cannot open " + words.string());
  auto list = parse_word_list(in);
  std::vector<SynonymEntry> syn;
  if (!synonyms.empty()) {
    std::ifstream sin(synonyms, std::ios::binary);
    if (!sin) fail(ErrorKind::IOFailure, "cannot open " + synonyms.string());
    syn = parse_synonyms(sin);
  }
  return BiasedLexicon::build(list, syn);
}

// ---------------------------------------------------------------------------
// Bias weights: {"iteration": i, "lr": lr, "weights": {word: w}}

inline json weights_to_json(const BiasedLexicon& lex, const BiasWeights& w, std::size_t iteration, double lr) {
  json words = json::object();
  for (std::size_t k = 0; k < lex.size(); ++k) words[lex.word_utf8(k)] = w.get(k);
  return {{"iteration", iteration}, {"lr", lr}, {"weights", words}};
}

inline BiasWeights weights_from_json(const json& j, const BiasedLexicon& lex) {
  BiasWeights w;
  try {
    for (const auto& [word, value] : j.at("weights").items()) {
      auto k = lex.find(to_nfc_u32(word));
      if (!k) fail(ErrorKind::ConfigError, "weights file names unknown biased word '" + word + "'");
      w.set(*k, value.get<double>());
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("weights file: ") + e.what());
  }
  return w;
}

inline BiasWeights load_weights(const fs::path& path, const BiasedLexicon& lex) {
  try {
    return weights_from_json(json::parse(read_file(path)), lex);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// ---------------------------------------------------------------------------
// Reports

inline json score_report(const CorpusScore& s, const BiasedLexicon& lex) {
  json per_word = json::array();
  for (std::size_t k = 0; k < lex.size(); ++k) {
    WordCounts c;
    if (auto it = s.bias.per_word.find(k); it != s.bias.per_word.end()) c = it->second;
    per_word.push_back({{"word", lex.word_utf8(k)},
                        {"M", c.matched},
                        {"L", c.reference},
                        {"R", c.hypothesis},
                        {"alpha", optional_number(c.precision())},
                        {"beta", optional_number(c.recall())}});
  }
  return {{"utterances", s.utterances},
          {"cer", s.cer()},
          {"precision", optional_number(s.precision())},
          {"recall", optional_number(s.recall())},
          {"f1", s.f1_score()},
          {"M", s.bias.total.matched},
          {"L", s.bias.total.reference},
          {"R", s.bias.total.hypothesis},
          {"per_word", per_word}};
}

inline std::string mode_name(TargetMode m) { return m == TargetMode::MatchRecall ? "match-recall" : "constant"; }

inline json history_to_json(const AdaptationState& st, const BiasedLexicon& lex, const AdaptationConfig& cfg) {
  json hist = json::array();
  for (const auto& rec : st.history) {
    json words = json::array();
    for (const auto& w : rec.words) {
      words.push_back({{"word", lex.word_utf8(w.word)},
                       {"M", w.counts.matched},
                       {"L", w.counts.reference},
                       {"R", w.counts.hypothesis},
                       {"alpha", optional_number(w.alpha())},
                       {"beta", optional_number(w.beta())},
                       {"weight", w.weight},
                       {"step", w.step},
                       {"updatable", w.updatable}});
    }
    hist.push_back({{"iteration", rec.iteration},
                    {"lr", rec.lr},
                    {"cer", rec.cer},
                    {"precision", optional_number(rec.precision)},
                    {"recall", optional_number(rec.recall)},
                    {"f1", rec.f1},
                    {"words", words}});
  }
  return {{"config",
           {{"lr0", cfg.lr0},
            {"eta", cfg.eta},
            {"delta", cfg.delta},
            {"mode", mode_name(cfg.mode)},
            {"beta_target", cfg.beta_target},
            {"epsilon", cfg.epsilon},
            {"max_iters", cfg.max_iters},
            {"lr_floor", cfg.lr_floor},
            {"beam", cfg.decode.beam},
            {"lm_weight", cfg.decode.lm_weight},
            {"bias_weight", cfg.decode.bias_weight}}},
          {"stop_reason", to_string(st.stop)},
          {"history", hist}};
}

inline std::string format_score(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// `utt_id<TAB>rank<TAB>fused_score<TAB>text`, ranks from 1.
inline void write_hypotheses(std::ostream& out, const std::string& utt_id, const std::vector<Hypothesis>& hyps) {
  for (std::size_t r = 0; r < hyps.size(); ++r)
    out << utt_id << '\t' << (r + 1) << '\t' << format_score(hyps[r].fused) << '\t' << to_utf8(hyps[r].text) << '\n';
}

}  // namespace cbias::io

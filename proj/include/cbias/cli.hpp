#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cbias/ctc.hpp"
#include "cbias/error.hpp"
#include "cbias/io.hpp"
#include "cbias/lexicon.hpp"
#include "cbias/ngram.hpp"
#include "cbias/salm.hpp"
#include "cbias/scoring.hpp"
#include "cbias/synth.hpp"
#include "cbias/verify.hpp"
#include "cbias/wfst.hpp"

namespace cbias::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"lm-build", "synth", "decode", "score", "adapt", "cbm-check", "verify"};
  return names;
}

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) fail(ErrorKind::ConfigError, field + ": " + rule);
}

inline void require_input(const std::string& path, const std::string& field) {
  if (path.empty()) return;
  std::error_code ec;
  require(fs::is_regular_file(path, ec), field, "no such file '" + path + "'");
}

inline void require_output(const std::string& path, const std::string& field) {
  if (path.empty()) return;
  fs::path parent = fs::path(path).parent_path();
  std::error_code ec;
  require(parent.empty() || fs::is_directory(parent, ec), field, "directory '" + parent.string() + "' does not exist");
}

/// Writes to `path`, or to `out` when the path is empty.
inline void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty())
    out << content;
  else
    io::write_file(path, content);
}

struct DecodeFlags {
  std::size_t beam = 10;
  double lm_weight = 0.3;
  double bias_weight = 1.0;
  std::size_t nbest = 1;

  void add_to(CLI::App& app, bool with_nbest) {
    app.add_option("--beam", beam, "Beam width")->capture_default_str();
    app.add_option("--lm-weight", lm_weight, "LM fusion weight")->capture_default_str();
    app.add_option("--bias-weight", bias_weight, "Bias fusion weight")->capture_default_str();
    if (with_nbest) app.add_option("--nbest", nbest, "Hypotheses written per utterance")->capture_default_str();
  }
  DecodeOptions options() const {
    require(beam >= 1, "--beam", "must be >= 1");
    require(lm_weight >= 0.0, "--lm-weight", "must be >= 0");
    require(bias_weight >= 0.0, "--bias-weight", "must be >= 0");
    require(nbest >= 1, "--nbest", "must be >= 1");
    return {beam, lm_weight, bias_weight, nbest};
  }
};

struct BiasFlags {
  std::string lexicon, synonyms, weights;
  double init_weight = 0.0;

  void add_to(CLI::App& app) {
    app.add_option("--lexicon", lexicon, "Biased-word list, one per line");
    app.add_option("--synonyms", synonyms, "Synonym classes, class<TAB>word per line");
    app.add_option("--weights", weights, "Bias weights JSON");
    app.add_option("--init-weight", init_weight, "Weight for words absent from --weights")->capture_default_str();
  }
  void validate() const {
    require_input(lexicon, "--lexicon");
    require_input(synonyms, "--synonyms");
    require_input(weights, "--weights");
    require(lexicon.empty() <= (synonyms.empty() && weights.empty()), "--lexicon",
            "required with --synonyms or --weights");
    require(std::isfinite(init_weight) && std::abs(init_weight) <= kMaxBiasWeight, "--init-weight",
            "must be within [-10, 10]");
  }
  BiasedLexicon lexicon_or_empty() const {
    return lexicon.empty() ? BiasedLexicon() : io::load_lexicon(lexicon, synonyms);
  }
  BiasWeights initial(const BiasedLexicon& lex) const {
    BiasWeights w;
    for (std::size_t k = 0; k < lex.size(); ++k) w.set(k, init_weight);
    if (!weights.empty()) {
      BiasWeights given = io::load_weights(weights, lex);
      for (const auto& [k, v] : given.values()) w.set(k, v);
    }
    return w;
  }
};

inline std::optional<Wfst> load_lm(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return compile_lm_wfst(parse_arpa(io::read_file(path)));
}

inline std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string opt_fixed(const std::optional<double>& v, int digits) { return v ? fixed(*v, digits) : "-"; }

/// Iteration-by-iteration weight and recall table.
inline std::string history_table(const AdaptationState& st, const BiasedLexicon& lex) {
  std::ostringstream t;
  t << "iter\tlr\tcer\tprecision\trecall";
  for (std::size_t k = 0; k < lex.size(); ++k) t << '\t' << lex.word_utf8(k) << " w/beta";
  t << '\n';
  for (const auto& rec : st.history) {
    t << rec.iteration << '\t' << fixed(rec.lr, 6) << '\t' << fixed(rec.cer, 4) << '\t' << opt_fixed(rec.precision, 4)
      << '\t' << opt_fixed(rec.recall, 4);
    for (const auto& w : rec.words) t << '\t' << fixed(w.weight, 4) << '/' << opt_fixed(w.beta(), 3);
    t << '\n';
  }
  t << "stop: " << to_string(st.stop) << '\n';
  return t.str();
}

inline std::vector<std::string> read_corpus_text(const std::string& path) {
  std::vector<std::string> lines;
  for (const auto& line : io::read_lines(path)) {
    auto text = trim(line);
    if (text.empty()) continue;
    if (auto tab = text.rfind('\t'); tab != std::string_view::npos) text = text.substr(tab + 1);
    lines.emplace_back(text);
  }
  return lines;
}

/// Characters of a vocabulary file in first-seen order, whitespace skipped.
inline std::vector<char32_t> read_vocab(const std::string& path) {
  std::vector<char32_t> vocab;
  std::set<char32_t> seen;
  for (char32_t c : to_nfc_u32(io::read_file(path)))
    if (std::u32string_view(U" \t\r\n").find(c) == std::u32string_view::npos && seen.insert(c).second)
      vocab.push_back(c);
  return vocab;
}

/// `char<TAB>alternatives` per line; alternatives is a run of characters.
inline std::map<char32_t, std::vector<char32_t>> read_confusions(const std::string& path) {
  std::map<char32_t, std::vector<char32_t>> sets;
  std::size_t lineno = 0;
  for (const auto& line : io::read_lines(path)) {
    ++lineno;
    if (trim(line).empty() || line.front() == '#') continue;
    auto f = io::split_tabs(line);
    auto key = to_nfc_u32(trim(f[0]));
    if (f.size() != 2 || key.size() != 1)
      fail(ErrorKind::ParseError, path + ":" + std::to_string(lineno) + ": expected char<TAB>alternatives");
    for (char32_t c : to_nfc_u32(trim(f[1]))) sets[key[0]].push_back(c);
  }
  return sets;
}

// ---------------------------------------------------------------------------

inline int lm_build(const std::string& corpus, int order, double discount, const std::string& output,
                    std::ostream& out) {
  require_input(corpus, "--corpus");
  require(order >= 1 && order <= 5, "--order", "must be in [1, 5]");
  require(discount > 0.0 && discount < 1.0, "--discount", "must be in (0, 1)");
  require_output(output, "--output");
  NGramLM lm = train_char_ngram(read_corpus_text(corpus), order, discount);
  emit(output, format_arpa(lm), out);
  return 0;
}

struct SynthFlags {
  std::string transcripts, out_dir, vocab, confusions, encoding = "text";
  double blank_rate = 0.1, confusion_rate = 0.0, peak = 0.9;
  std::size_t frames_per_char = 1;
  std::uint64_t seed = 0;
};

inline int synth(const SynthFlags& f, std::ostream& out) {
  require_input(f.transcripts, "--transcripts");
  require_input(f.vocab, "--vocab");
  require_input(f.confusions, "--confusions");
  require(!f.out_dir.empty(), "--out-dir", "is required");
  require(f.encoding == "text" || f.encoding == "f32le", "--encoding", "must be text or f32le");
  require(f.blank_rate >= 0.0 && f.blank_rate < 1.0, "--blank-rate", "must be in [0, 1)");
  require(f.confusion_rate >= 0.0 && f.confusion_rate <= 1.0, "--confusion-rate", "must be in [0, 1]");
  require(f.peak > 0.5 && f.peak <= 1.0, "--peak", "must be in (0.5, 1]");
  require(f.frames_per_char >= 1, "--frames-per-char", "must be >= 1");

  auto transcripts = io::read_transcripts(f.transcripts);
  SynthConfig cfg;
  cfg.blank_rate = f.blank_rate;
  cfg.confusion_rate = f.confusion_rate;
  cfg.peak = f.peak;
  cfg.frames_per_char = f.frames_per_char;
  cfg.seed = f.seed;
  if (!f.confusions.empty()) cfg.confusion_sets = read_confusions(f.confusions);
  if (!f.vocab.empty()) {
    cfg.vocab = read_vocab(f.vocab);
  } else {
    std::set<char32_t> chars;
    for (const auto& [utt, text] : transcripts)
      for (char32_t c : to_nfc_u32(text)) chars.insert(c);
    for (const auto& [c, alts] : cfg.confusion_sets) {
      chars.insert(c);
      chars.insert(alts.begin(), alts.end());
    }
    cfg.vocab.assign(chars.begin(), chars.end());
  }
  auto rows = make_corpus(transcripts, cfg, f.out_dir,
                          f.encoding == "f32le" ? EmissionEncoding::F32le : EmissionEncoding::Text);
  out << "wrote " << rows.size() << " utterances to " << (fs::path(f.out_dir) / "manifest.tsv").string() << '\n';
  return 0;
}

inline int decode(const std::string& manifest, const std::string& lm_path, const BiasFlags& bias,
                  const DecodeFlags& dec, std::size_t jobs, const std::string& output, std::ostream& out) {
  require_input(manifest, "--manifest");
  require_input(lm_path, "--lm");
  bias.validate();
  require(jobs >= 1, "--jobs", "must be >= 1");
  require_output(output, "--output");
  DecodeOptions opt = dec.options();

  auto lm = load_lm(lm_path);
  auto lex = bias.lexicon_or_empty();
  auto fst = build_bias_fst(lex, bias.initial(lex));
  auto corpus = io::load_corpus(manifest);
  auto hyps = decode_corpus(corpus, opt, lm ? &*lm : nullptr, lex.size() ? &fst : nullptr, jobs);
  std::ostringstream tsv;
  for (std::size_t i = 0; i < corpus.size(); ++i) io::write_hypotheses(tsv, corpus[i].utt_id, hyps[i]);
  emit(output, tsv.str(), out);
  return 0;
}

inline int score(const std::string& ref, const std::string& hyp, const std::string& lexicon,
                 const std::string& synonyms, const std::string& output, std::ostream& out) {
  require_input(ref, "--ref");
  require_input(hyp, "--hyp");
  require_input(lexicon, "--lexicon");
  require_input(synonyms, "--synonyms");
  require_output(output, "--output");
  auto lex = lexicon.empty() ? BiasedLexicon() : io::load_lexicon(lexicon, synonyms);
  auto refs = io::read_transcripts(ref);
  std::map<std::string, std::string> by_id;
  for (auto& [utt, text] : io::read_transcripts(hyp))
    if (!by_id.emplace(utt, text).second) fail(ErrorKind::ConfigError, "--hyp: duplicate utterance " + utt);
  CorpusScore s;
  for (const auto& [utt, text] : refs) {
    auto it = by_id.find(utt);
    if (it == by_id.end()) fail(ErrorKind::ConfigError, "--hyp: no hypothesis for utterance " + utt);
    s.add(text, it->second, lex);
    by_id.erase(it);
  }
  if (!by_id.empty()) fail(ErrorKind::ConfigError, "--hyp: utterance " + by_id.begin()->first + " has no reference");
  emit(output, io::score_report(s, lex).dump(2) + "\n", out);
  return 0;
}

struct AdaptFlags {
  std::string manifest, lm, output, history, mode = "match-recall";
  double lr0 = 1.0, eta = 0.9, delta = 1.0, beta_target = 0.98, epsilon = 0.02;
  std::size_t max_iters = 30, jobs = 1;
};

inline int adapt(const AdaptFlags& f, const BiasFlags& bias, const DecodeFlags& dec, std::ostream& out) {
  require_input(f.manifest, "--manifest");
  require_input(f.lm, "--lm");
  bias.validate();
  require(!bias.lexicon.empty(), "--lexicon", "is required");
  require(!f.output.empty(), "--output", "is required");
  require_output(f.output, "--output");
  require_output(f.history, "--history");
  require(f.lr0 > 0.0, "--lr0", "must be > 0");
  require(f.eta > 0.0 && f.eta < 1.0, "--eta", "must be in (0, 1)");
  require(f.delta > 0.0, "--delta", "must be > 0");
  require(f.mode == "match-recall" || f.mode == "constant", "--mode", "must be match-recall or constant");
  require(f.beta_target > 0.0 && f.beta_target <= 1.0, "--beta-target", "must be in (0, 1]");
  require(f.epsilon >= 0.0, "--epsilon", "must be >= 0");
  require(f.jobs >= 1, "--jobs", "must be >= 1");

  AdaptationConfig cfg;
  cfg.lr0 = f.lr0;
  cfg.eta = f.eta;
  cfg.delta = f.delta;
  cfg.mode = f.mode == "constant" ? TargetMode::ConstantTarget : TargetMode::MatchRecall;
  cfg.beta_target = f.beta_target;
  cfg.epsilon = f.epsilon;
  cfg.max_iters = f.max_iters;
  cfg.decode = dec.options();
  cfg.jobs = f.jobs;

  auto lm = load_lm(f.lm);
  auto lex = bias.lexicon_or_empty();
  auto initial = bias.initial(lex);
  auto corpus = io::load_corpus(f.manifest);
  AdaptationState st = cbias::adapt(corpus, lex, lm ? &*lm : nullptr, initial, cfg);
  io::write_file(f.output, io::weights_to_json(lex, st.weights, st.iteration, st.lr).dump(2) + "\n");
  if (!f.history.empty()) io::write_file(f.history, io::history_to_json(st, lex, cfg).dump(2) + "\n");
  out << history_table(st, lex);
  return 0;
}

inline int report_suites(const std::vector<verify::SuiteResult>& results, const std::string& output,
                         std::ostream& out) {
  bool ok = true;
  json j = json::array();
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    j.push_back({{"suite", r.name}, {"passed", r.passed}, {"cases", r.cases}, {"worst", r.worst}, {"detail", r.detail}});
    ok = ok && r.passed;
  }
  if (!output.empty()) io::write_file(output, j.dump(2) + "\n");
  return ok ? 0 : 1;
}

}  // namespace detail

/// Runs one subcommand. `args` excludes the program name. Returns the exit
/// status; diagnostics go to `err`.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contextual biasing toolkit: LM building, synthesis, decoding, scoring and adaptation", "cbias"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;

  auto* lm_cmd = app.add_subcommand("lm-build", "Train a character n-gram LM and write ARPA");
  std::string lm_corpus, lm_output;
  int lm_order = 3;
  double lm_discount = kDefaultDiscount;
  lm_cmd->add_option("--corpus", lm_corpus, "Text corpus, one sentence per line")->required();
  lm_cmd->add_option("--order", lm_order, "n-gram order")->capture_default_str();
  lm_cmd->add_option("--discount", lm_discount, "Absolute discount")->capture_default_str();
  lm_cmd->add_option("--output,-o", lm_output, "ARPA output (stdout if omitted)");

  auto* synth_cmd = app.add_subcommand("synth", "Synthesize CTC emissions from transcripts");
  detail::SynthFlags sf;
  synth_cmd->add_option("--transcripts", sf.transcripts, "utt_id<TAB>text per line")->required();
  synth_cmd->add_option("--out-dir", sf.out_dir, "Directory for emission files and manifest.tsv")->required();
  synth_cmd->add_option("--vocab", sf.vocab, "Vocabulary characters (default: characters of the inputs)");
  synth_cmd->add_option("--confusions", sf.confusions, "char<TAB>alternatives per line");
  synth_cmd->add_option("--blank-rate", sf.blank_rate, "Probability of a blank row after a character")
      ->capture_default_str();
  synth_cmd->add_option("--confusion-rate", sf.confusion_rate, "Probability of moving the peak to a confusable")
      ->capture_default_str();
  synth_cmd->add_option("--frames-per-char", sf.frames_per_char, "Rows per character")->capture_default_str();
  synth_cmd->add_option("--peak", sf.peak, "Peak posterior mass")->capture_default_str();
  synth_cmd->add_option("--encoding", sf.encoding, "text or f32le")->capture_default_str();
  synth_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();

  auto* dec_cmd = app.add_subcommand("decode", "Prefix beam search with LM and bias fusion");
  std::string dec_manifest, dec_lm, dec_output;
  std::size_t dec_jobs = 1;
  detail::BiasFlags dec_bias;
  detail::DecodeFlags dec_flags;
  dec_cmd->add_option("--manifest", dec_manifest, "utt_id<TAB>emission path<TAB>reference")->required();
  dec_cmd->add_option("--lm", dec_lm, "ARPA language model");
  dec_bias.add_to(*dec_cmd);
  dec_flags.add_to(*dec_cmd, true);
  dec_cmd->add_option("--jobs", dec_jobs, "Parallel decode workers")->capture_default_str();
  dec_cmd->add_option("--output,-o", dec_output, "Hypotheses TSV (stdout if omitted)");
  dec_cmd->add_option("--seed", seed, "Random seed (decoding is deterministic)");

  auto* score_cmd = app.add_subcommand("score", "CER and biased-word precision/recall report");
  std::string sc_ref, sc_hyp, sc_lex, sc_syn, sc_output;
  score_cmd->add_option("--ref", sc_ref, "Reference transcripts")->required();
  score_cmd->add_option("--hyp", sc_hyp, "Hypotheses (transcripts or decode output)")->required();
  score_cmd->add_option("--lexicon", sc_lex, "Biased-word list");
  score_cmd->add_option("--synonyms", sc_syn, "Synonym classes");
  score_cmd->add_option("--output,-o", sc_output, "Report JSON (stdout if omitted)");

  auto* adapt_cmd = app.add_subcommand("adapt", "Self-adaptive bias weight estimation");
  detail::AdaptFlags af;
  detail::BiasFlags ad_bias;
  detail::DecodeFlags ad_flags;
  adapt_cmd->add_option("--manifest", af.manifest, "Adaptation corpus manifest")->required();
  adapt_cmd->add_option("--lm", af.lm, "ARPA language model");
  ad_bias.add_to(*adapt_cmd);
  ad_flags.add_to(*adapt_cmd, false);
  adapt_cmd->add_option("--lr0", af.lr0, "Initial learning rate")->capture_default_str();
  adapt_cmd->add_option("--eta", af.eta, "Learning-rate decay")->capture_default_str();
  adapt_cmd->add_option("--delta", af.delta, "Weight step")->capture_default_str();
  adapt_cmd->add_option("--mode", af.mode, "match-recall or constant")->capture_default_str();
  adapt_cmd->add_option("--beta-target", af.beta_target, "Precision target in constant mode")->capture_default_str();
  adapt_cmd->add_option("--epsilon", af.epsilon, "Convergence tolerance")->capture_default_str();
  adapt_cmd->add_option("--max-iters", af.max_iters, "Maximum weight updates")->capture_default_str();
  adapt_cmd->add_option("--jobs", af.jobs, "Parallel decode workers")->capture_default_str();
  adapt_cmd->add_option("--output,-o", af.output, "Adapted weights JSON")->required();
  adapt_cmd->add_option("--history", af.history, "Adaptation history JSON");
  adapt_cmd->add_option("--seed", seed, "Random seed (adaptation is deterministic)");

  auto* cbm_cmd = app.add_subcommand("cbm-check", "Gradient and shape checks for the biasing module");
  std::size_t cbm_seeds = 20;
  double cbm_eps = 1e-5;
  std::string cbm_output;
  cbm_cmd->add_option("--seed", seed, "First seed")->capture_default_str();
  cbm_cmd->add_option("--seeds", cbm_seeds, "Number of seeds")->capture_default_str();
  cbm_cmd->add_option("--eps", cbm_eps, "Finite-difference step")->capture_default_str();
  cbm_cmd->add_option("--output,-o", cbm_output, "Suite results JSON");

  auto* ver_cmd = app.add_subcommand("verify", "Decoder, WFST, bias and metric oracle suites");
  std::string ver_suite = "all", ver_output;
  ver_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
  ver_cmd->add_option("--suite", ver_suite, "all, decoder, wfst, bias or metric")->capture_default_str();
  ver_cmd->add_option("--output,-o", ver_output, "Suite results JSON");

  if (args.empty()) {
    err << "ConfigError: missing subcommand\n" << app.help();
    return 2;
  }
  const bool is_flag = !args.front().empty() && args.front().front() == '-';
  if (!is_flag && std::find(subcommands().begin(), subcommands().end(), args.front()) == subcommands().end()) {
    err << to_string(ErrorKind::UnknownSubcommand) << ": " << args.front() << '\n';
    return 2;
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << to_string(ErrorKind::ConfigError) << ": " << e.what() << '\n';
    return 2;
  }

  try {
    if (*lm_cmd) return detail::lm_build(lm_corpus, lm_order, lm_discount, lm_output, out);
    if (*synth_cmd) {
      sf.seed = seed;
      return detail::synth(sf, out);
    }
    if (*dec_cmd) return detail::decode(dec_manifest, dec_lm, dec_bias, dec_flags, dec_jobs, dec_output, out);
    if (*score_cmd) return detail::score(sc_ref, sc_hyp, sc_lex, sc_syn, sc_output, out);
    if (*adapt_cmd) return detail::adapt(af, ad_bias, ad_flags, out);
    if (*cbm_cmd) {
      detail::require(cbm_seeds >= 1, "--seeds", "must be >= 1");
      detail::require(cbm_eps >= 1e-7 && cbm_eps <= 1e-3, "--eps", "must be in [1e-7, 1e-3]");
      detail::require_output(cbm_output, "--output");
      return detail::report_suites({verify::cbm_suite(seed, cbm_seeds, cbm_eps)}, cbm_output, out);
    }
    if (*ver_cmd) {
      static const std::vector<std::string> suites{"all", "decoder", "wfst", "bias", "metric"};
      detail::require(std::find(suites.begin(), suites.end(), ver_suite) != suites.end(), "--suite",
                      "must be one of all, decoder, wfst, bias, metric");
      detail::require_output(ver_output, "--output");
      std::vector<verify::SuiteResult> results;
      auto want = [&](const char* s) { return ver_suite == "all" || ver_suite == s; };
      if (want("decoder")) results.push_back(verify::decoder_oracle_suite(seed));
      if (want("wfst")) results.push_back(verify::wfst_equivalence_suite(seed));
      if (want("bias")) results.push_back(verify::bias_cancellation_suite(seed));
      if (want("metric")) results.push_back(verify::metric_oracle_suite(seed));
      return detail::report_suites(results, ver_output, out);
    }
  } catch (const Error& e) {
    err << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << to_string(ErrorKind::UnknownSubcommand) << '\n';
  return 2;
}

}  // namespace cbias::cli

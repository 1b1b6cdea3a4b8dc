#pragma once

// Runs the command-line pipeline over the fixture corpus in a scratch
// directory: lm-build, synth, decode, score, adapt.

#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbias/cli.hpp"
#include "fixture.hpp"

namespace pipeline {

namespace fs = std::filesystem;

struct Result {
  int status = 0;
  std::string out, err;
};

inline Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.status = cbias::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

inline fs::path fresh_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Fixture inputs as files: transcripts.tsv, lexicon.txt, vocab.txt,
/// confusions.tsv and lm.txt.
inline void write_inputs(const fs::path& dir, std::uint64_t seed = 7) {
  std::string tsv, lex, vocab, conf, lm;
  for (const auto& [utt, text] : fixture::transcripts(seed)) tsv += utt + "\t" + text + "\n";
  for (const auto& w : fixture::biased_words()) lex += w + "\n";
  for (char32_t c : fixture::vocabulary()) vocab += cbias::to_utf8(c);
  for (const auto& [c, alts] : fixture::confusions()) conf += cbias::to_utf8(c) + "\t" + cbias::to_utf8(alts) + "\n";
  for (const auto& line : fixture::lm_text()) lm += line + "\n";
  cbias::io::write_file(dir / "transcripts.tsv", tsv);
  cbias::io::write_file(dir / "lexicon.txt", lex);
  cbias::io::write_file(dir / "vocab.txt", vocab + "\n");
  cbias::io::write_file(dir / "confusions.tsv", conf);
  cbias::io::write_file(dir / "lm.txt", lm);
}

inline void check(const Result& r, const std::string& step) {
  if (r.status != 0) throw std::runtime_error(step + " exited " + std::to_string(r.status) + ": " + r.err);
}

/// Every step's output, keyed by file name. Throws if a step fails.
inline std::map<std::string, std::string> run_all(const fs::path& dir, std::size_t max_iters = 4,
                                                  std::size_t jobs = 1) {
  fresh_dir(dir);
  write_inputs(dir);
  auto p = [&](const char* name) { return (dir / name).string(); };
  check(invoke({"lm-build", "--corpus", p("lm.txt"), "--order", "3", "-o", p("lm.arpa")}), "lm-build");
  check(invoke({"synth", "--transcripts", p("transcripts.tsv"), "--out-dir", p("emis"), "--vocab", p("vocab.txt"),
             "--confusions", p("confusions.tsv"), "--blank-rate", "0.2", "--confusion-rate", "0.6", "--peak", "0.8",
             "--seed", "7"}),
        "synth");
  check(invoke({"decode", "--manifest", p("emis/manifest.tsv"), "--lm", p("lm.arpa"), "--lexicon", p("lexicon.txt"),
             "--jobs", std::to_string(jobs), "-o", p("decode.tsv")}),
        "decode");
  check(invoke({"score", "--ref", p("transcripts.tsv"), "--hyp", p("decode.tsv"), "--lexicon", p("lexicon.txt"), "-o",
             p("score.json")}),
        "score");
  auto adapt = invoke({"adapt", "--manifest", p("emis/manifest.tsv"), "--lm", p("lm.arpa"), "--lexicon",
                    p("lexicon.txt"), "--max-iters", std::to_string(max_iters), "--jobs", std::to_string(jobs), "-o",
                    p("weights.json"), "--history", p("history.json")});
  check(adapt, "adapt");

  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = cbias::io::read_file(e.path());
  files["adapt.stdout"] = adapt.out;
  return files;
}

}  // namespace pipeline

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cbias/emission.hpp"
#include "cbias/error.hpp"
#include "cbias/unicode.hpp"

namespace cbias {

struct SynthConfig {
  std::vector<char32_t> vocab;
  double blank_rate = 0.0;
  double confusion_rate = 0.0;
  std::map<char32_t, std::vector<char32_t>> confusion_sets;
  std::size_t frames_per_char = 1;
  double peak = 1.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t vocab_column(const SynthConfig& cfg, char32_t c) {
  auto it = std::find(cfg.vocab.begin(), cfg.vocab.end(), c);
  if (it == cfg.vocab.end()) fail(ErrorKind::OOVCharacter, to_utf8(c));
  return static_cast<std::size_t>(it - cfg.vocab.begin()) + 1;  // blank is column 0
}

inline void validate(const SynthConfig& cfg) {
  if (cfg.vocab.empty()) fail(ErrorKind::ConfigError, "synth vocab is empty");
  if (!(cfg.blank_rate >= 0.0 && cfg.blank_rate < 1.0)) fail(ErrorKind::ConfigError, "blank rate must be in [0,1)");
  if (!(cfg.confusion_rate >= 0.0 && cfg.confusion_rate <= 1.0))
    fail(ErrorKind::ConfigError, "confusion rate must be in [0,1]");
  if (cfg.frames_per_char < 1) fail(ErrorKind::ConfigError, "frames per character must be >= 1");
  if (!(cfg.peak > 0.5 && cfg.peak <= 1.0)) fail(ErrorKind::ConfigError, "peak must be in (0.5,1]");
  for (const auto& [c, alts] : cfg.confusion_sets) {
    vocab_column(cfg, c);
    if (alts.empty()) fail(ErrorKind::ConfigError, "empty confusion set for " + to_utf8(c));
    for (char32_t a : alts) vocab_column(cfg, a);
  }
}

}  // namespace detail

/// Peaked CTC posteriors for `text`: `frames_per_char` rows per character,
/// optionally moved to a confusable character, blanks between repeated
/// targets and at `blank_rate` after each character. The residual 1 - peak is
/// spread evenly over the other columns. Column 0 is blank.
inline EmissionMatrix synth_emissions(std::u32string_view text, const SynthConfig& cfg, std::string utt_id = {}) {
  detail::validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  EmissionMatrix em;
  em.utt_id = std::move(utt_id);
  em.vocab = cfg.vocab;
  em.vocab_size = cfg.vocab.size();
  em.blank = 0;
  const std::size_t cols = em.columns();
  const double rest = (1.0 - cfg.peak) / static_cast<double>(cols - 1);

  auto emit = [&](std::size_t col) {
    for (std::size_t c = 0; c < cols; ++c) em.probs.push_back(c == col ? cfg.peak : rest);
    ++em.frames;
  };

  std::optional<std::size_t> prev;
  for (char32_t ch : text) {
    std::size_t target = detail::vocab_column(cfg, ch);
    if (auto it = cfg.confusion_sets.find(ch); it != cfg.confusion_sets.end()) {
      if (detail::uniform01(rng) < cfg.confusion_rate) {
        const auto& alts = it->second;
        char32_t alt = alts[static_cast<std::size_t>(rng() % alts.size())];
        target = detail::vocab_column(cfg, alt);
      }
    }
    if (prev && *prev == target) emit(0);
    for (std::size_t f = 0; f < cfg.frames_per_char; ++f) emit(target);
    prev = target;
    if (cfg.blank_rate > 0.0 && detail::uniform01(rng) < cfg.blank_rate) {
      emit(0);
      prev = 0;
    }
  }
  return em;
}

inline EmissionMatrix synth_emissions(std::string_view text, const SynthConfig& cfg, std::string utt_id = {}) {
  return synth_emissions(std::u32string_view(to_nfc_u32(text)), cfg, std::move(utt_id));
}

struct ManifestRow {
  std::string utt_id;
  std::string path;  // relative to the manifest directory
  std::string reference;
};

/// Per-utterance seed, so each file is reproducible on its own.
inline std::uint64_t utterance_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IOFailure, "cannot write " + path.string());
  for (const auto& r : rows) out << r.utt_id << '\t' << r.path << '\t' << r.reference << '\n';
  if (!out) fail(ErrorKind::IOFailure, "write failed: " + path.string());
}

/// Writes <out_dir>/<utt_id>.emis for each transcript plus <out_dir>/manifest.tsv.
inline std::vector<ManifestRow> make_corpus(const std::vector<std::pair<std::string, std::string>>& transcripts,
                                            const SynthConfig& cfg, const std::filesystem::path& out_dir,
                                            EmissionEncoding enc = EmissionEncoding::Text) {
  if (transcripts.empty()) fail(ErrorKind::EmptyCorpus, "no transcripts to synthesize");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::IOFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    const auto& [utt, text] = transcripts[i];
    SynthConfig local = cfg;
    local.seed = utterance_seed(cfg.seed, i);
    EmissionMatrix em = synth_emissions(std::string_view(text), local, utt);
    std::string name = utt + ".emis";
    std::ofstream out(out_dir / name, std::ios::binary);
    if (!out) fail(ErrorKind::IOFailure, "cannot write " + (out_dir / name).string());
    write_emissions(out, em, enc);
    if (!out) fail(ErrorKind::IOFailure, "write failed: " + (out_dir / name).string());
    rows.push_back({utt, name, text});
  }
  write_manifest(out_dir / "manifest.tsv", rows);
  return rows;
}

}  // namespace cbias

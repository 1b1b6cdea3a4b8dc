#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbias/error.hpp"
#include "cbias/unicode.hpp"

namespace cbias {

inline constexpr double kRowSumTolerance = 1e-5;

/// T x (V+1) CTC posteriors, row-major, blank included. Column `blank` is the
/// blank; the remaining columns map to `vocab` in order.
struct EmissionMatrix {
  std::string utt_id;
  std::size_t frames = 0;   // T
  std::size_t vocab_size = 0;  // V
  std::size_t blank = 0;
  std::vector<char32_t> vocab;
  std::vector<double> probs;

  std::size_t columns() const noexcept { return vocab_size + 1; }
  double at(std::size_t t, std::size_t col) const { return probs[t * columns() + col]; }
  double& at(std::size_t t, std::size_t col) { return probs[t * columns() + col]; }

  /// Vocabulary index of a non-blank column.
  std::size_t column_symbol(std::size_t col) const { return col < blank ? col : col - 1; }
  std::size_t symbol_column(std::size_t sym) const { return sym < blank ? sym : sym + 1; }
  char32_t column_char(std::size_t col) const { return vocab[column_symbol(col)]; }

  void validate() const {
    if (vocab.size() != vocab_size)
      fail(ErrorKind::ShapeMismatch, utt_id + ": vocab has " + std::to_string(vocab.size()) +
                                         " entries but V=" + std::to_string(vocab_size));
    if (blank > vocab_size) fail(ErrorKind::ShapeMismatch, utt_id + ": blank id out of range");
    if (probs.size() != frames * columns())
      fail(ErrorKind::ShapeMismatch, utt_id + ": matrix size does not match T x (V+1)");
    for (std::size_t t = 0; t < frames; ++t) {
      double sum = 0.0;
      for (std::size_t c = 0; c < columns(); ++c) {
        double p = at(t, c);
        if (!(p >= 0.0) || !std::isfinite(p))
          fail(ErrorKind::InvalidEmission, utt_id + ": negative or non-finite entry at frame " + std::to_string(t));
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowSumTolerance)
        fail(ErrorKind::InvalidEmission, utt_id + ": row " + std::to_string(t) + " sums to " + std::to_string(sum));
    }
  }
};

enum class EmissionEncoding { Text, F32le };

inline std::string format_probability(double p) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

/// Header line is JSON; the body is T text rows or packed little-endian f32.
inline void write_emissions(std::ostream& out, const EmissionMatrix& em,
                            EmissionEncoding enc = EmissionEncoding::Text) {
  nlohmann::ordered_json header;
  header["utt_id"] = em.utt_id;
  header["T"] = em.frames;
  header["V"] = em.vocab_size;
  header["blank_id"] = em.blank;
  auto& v = header["vocab"] = nlohmann::ordered_json::array();
  for (char32_t c : em.vocab) v.push_back(to_utf8(c));
  header["encoding"] = enc == EmissionEncoding::Text ? "text" : "f32le";
  out << header.dump() << '\n';
  if (enc == EmissionEncoding::Text) {
    for (std::size_t t = 0; t < em.frames; ++t) {
      for (std::size_t c = 0; c < em.columns(); ++c) out << (c ? " " : "") << format_probability(em.at(t, c));
      out << '\n';
    }
    return;
  }
  for (double p : em.probs) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(p));
    unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                          static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
}

inline EmissionMatrix read_emissions(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::ParseError, "emission file is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("emission header: ") + e.what());
  }
  EmissionMatrix em;
  try {
    em.utt_id = header.value("utt_id", std::string{});
    em.frames = header.at("T").get<std::size_t>();
    em.vocab_size = header.at("V").get<std::size_t>();
    em.blank = header.at("blank_id").get<std::size_t>();
    for (const auto& s : header.at("vocab")) {
      auto cps = to_nfc_u32(s.get<std::string>());
      if (cps.size() != 1)
        fail(ErrorKind::ShapeMismatch, em.utt_id + ": vocab entry '" + s.get<std::string>() + "' is not one character");
      em.vocab.push_back(cps[0]);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, em.utt_id + ": emission header: " + e.what());
  }
  if (em.vocab.size() != em.vocab_size)
    fail(ErrorKind::ShapeMismatch, em.utt_id + ": header V=" + std::to_string(em.vocab_size) + " but vocab lists " +
                                       std::to_string(em.vocab.size()) + " characters");

  std::string enc = header.value("encoding", std::string("text"));
  const std::size_t n = em.frames * em.columns();
  em.probs.reserve(n);
  if (enc == "text") {
    for (std::size_t t = 0; t < em.frames; ++t) {
      if (!std::getline(in, line))
        fail(ErrorKind::ShapeMismatch, em.utt_id + ": expected " + std::to_string(em.frames) + " rows, got " + std::to_string(t));
      std::istringstream row(line);
      std::size_t count = 0;
      double p;
      while (row >> p) {
        em.probs.push_back(p);
        ++count;
      }
      if (!row.eof() || count != em.columns())
        fail(ErrorKind::ShapeMismatch, em.utt_id + ": row " + std::to_string(t) + " has " + std::to_string(count) +
                                           " values, expected " + std::to_string(em.columns()));
    }
  } else if (enc == "f32le") {
    std::vector<unsigned char> raw(n * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
      fail(ErrorKind::ShapeMismatch, em.utt_id + ": truncated f32le body");
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = std::uint32_t(raw[4 * i]) | std::uint32_t(raw[4 * i + 1]) << 8 |
                           std::uint32_t(raw[4 * i + 2]) << 16 | std::uint32_t(raw[4 * i + 3]) << 24;
      em.probs.push_back(static_cast<double>(std::bit_cast<float>(bits)));
    }
  } else {
    fail(ErrorKind::ParseError, em.utt_id + ": unknown encoding '" + enc + "'");
  }
  em.validate();
  return em;
}

}  // namespace cbias

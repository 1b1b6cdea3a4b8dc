#pragma once

#include <string>
#include <string_view>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "cbias/error.hpp"

namespace cbias {

/// UTF-8 -> NFC-normalized code points. Ill-formed input bytes become U+FFFD.
inline std::u32string to_nfc_u32(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) fail(ErrorKind::ConfigError, "ICU NFC normalizer unavailable");
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString normalized = nfc->normalize(src, status);
  if (U_FAILURE(status)) fail(ErrorKind::ConfigError, "NFC normalization failed");

  std::u32string out;
  out.reserve(static_cast<std::size_t>(normalized.length()));
  for (int32_t i = 0; i < normalized.length();) {
    UChar32 cp = normalized.char32At(i);
    out.push_back(static_cast<char32_t>(cp));
    i += U16_LENGTH(cp);
  }
  return out;
}

inline std::u32string nfc(std::u32string_view text) {
  std::string utf8;
  icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(text.data()),
                                static_cast<int32_t>(text.size()))
      .toUTF8String(utf8);
  return to_nfc_u32(utf8);
}

inline std::string to_utf8(std::u32string_view text) {
  std::string out;
  icu::UnicodeString::fromUTF32(reinterpret_cast<const UChar32*>(text.data()),
                                static_cast<int32_t>(text.size()))
      .toUTF8String(out);
  return out;
}

inline std::string to_utf8(char32_t ch) { return to_utf8(std::u32string_view(&ch, 1)); }

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace cbias

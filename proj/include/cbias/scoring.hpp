#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "cbias/align.hpp"
#include "cbias/lexicon.hpp"

namespace cbias {

/// Corpus-level accumulator: CER is total edits over total reference
/// characters; biased-word counts are summed over utterances.
struct CorpusScore {
  std::size_t utterances = 0;
  std::size_t char_errors = 0;
  std::size_t ref_chars = 0;
  BiasStats bias;

  void add(std::string_view ref_text, std::string_view hyp_text, const BiasedLexicon& lexicon) {
    auto ref = to_nfc_u32(ref_text);
    auto hyp = to_nfc_u32(hyp_text);
    ++utterances;
    char_errors += char_edit_distance(ref, hyp);
    ref_chars += ref.size();
    auto alignment = align(tokenize(std::u32string_view(ref), lexicon),
                           tokenize(std::u32string_view(hyp), lexicon), &lexicon);
    bias += bias_stats(alignment, lexicon);
  }

  CorpusScore& operator+=(const CorpusScore& o) {
    utterances += o.utterances;
    char_errors += o.char_errors;
    ref_chars += o.ref_chars;
    bias += o.bias;
    return *this;
  }

  double cer() const {
    if (ref_chars == 0) fail(ErrorKind::EmptyReference, "corpus has no reference characters");
    return static_cast<double>(char_errors) / static_cast<double>(ref_chars);
  }
  std::optional<double> precision() const { return bias.precision(); }
  std::optional<double> recall() const { return bias.recall(); }
  double f1_score() const { return f1(precision().value_or(0.0), recall().value_or(0.0)); }
};

}  // namespace cbias

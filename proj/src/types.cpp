#include "inteval/types.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "inteval/error.hpp"

namespace inteval {

namespace {

template <class E, std::size_t N>
std::string_view lookup(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
  for (const auto& [e, name] : table)
    if (e == value) return name;
  throw ContractViolation("enum value without a name");
}

template <class E, std::size_t N>
E reverse_lookup(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s,
                 const char* what) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  throw ValidationError(std::string("unknown ") + what + ": '" + std::string(s) + "'");
}

constexpr std::array<std::pair<LabelValue, std::string_view>, 3> kLabelNames{{
    {LabelValue::kViolation, "VIOLATION"},
    {LabelValue::kNoViolation, "NO_VIOLATION"},
    {LabelValue::kExcluded, "EXCLUDED"},
}};

constexpr std::array<std::pair<ExclusionReason, std::string_view>, 7> kReasonNames{{
    {ExclusionReason::kInadmissible, "INADMISSIBLE"},
    {ExclusionReason::kStruckOut, "STRUCK_OUT"},
    {ExclusionReason::kLackOfJurisdiction, "LACK_OF_JURISDICTION"},
    {ExclusionReason::kPreliminaryObjectionAllowed, "PRELIMINARY_OBJECTION_ALLOWED"},
    {ExclusionReason::kSameArticleConflict, "SAME_ARTICLE_CONFLICT"},
    {ExclusionReason::kNonEnglish, "NON_ENGLISH"},
    {ExclusionReason::kCorruptMetadata, "CORRUPT_METADATA"},
}};

constexpr std::array<std::pair<Outcome, std::string_view>, 3> kOutcomeNames{{
    {Outcome::kViolated, "violated"},
    {Outcome::kNotViolated, "not-violated"},
    {Outcome::kNotExamined, "not-examined"},
}};

constexpr std::array<std::pair<Technique, std::string_view>, 4> kTechniqueNames{{
    {Technique::kIsr, "ISR"},
    {Technique::kMarc, "MARC"},
    {Technique::kExpert, "EXPERT"},
    {Technique::kRandom, "RANDOM"},
}};

}  // namespace

std::string_view to_string(LabelValue v) { return lookup(kLabelNames, v); }
std::string_view to_string(ExclusionReason r) { return lookup(kReasonNames, r); }
std::string_view to_string(Outcome o) { return lookup(kOutcomeNames, o); }
std::string_view to_string(Technique t) { return lookup(kTechniqueNames, t); }

LabelValue label_value_from_string(std::string_view s) {
  return reverse_lookup(kLabelNames, s, "label");
}
ExclusionReason exclusion_reason_from_string(std::string_view s) {
  return reverse_lookup(kReasonNames, s, "exclusion reason");
}
Outcome outcome_from_string(std::string_view s) {
  return reverse_lookup(kOutcomeNames, s, "article outcome");
}
Technique technique_from_string(std::string_view s) {
  return reverse_lookup(kTechniqueNames, s, "technique");
}

void normalize_spans(std::vector<Span>& spans, std::size_t token_count) {
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const Span& s = spans[i];
    if (s.start >= s.end || s.end > token_count)
      throw ContractViolation("span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                              ") outside document of " + std::to_string(token_count) + " tokens");
    if (i > 0 && spans[i - 1].end > s.start)
      throw ContractViolation("overlapping spans at token " + std::to_string(s.start));
  }
}

}  // namespace inteval

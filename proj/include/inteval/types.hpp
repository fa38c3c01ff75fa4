#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace inteval {

enum class Outcome { kViolated, kNotViolated, kNotExamined };

enum class LabelValue { kNoViolation = 0, kViolation = 1, kExcluded = 2 };

enum class ExclusionReason {
  kInadmissible,
  kStruckOut,
  kLackOfJurisdiction,
  kPreliminaryObjectionAllowed,
  kSameArticleConflict,
  kNonEnglish,
  kCorruptMetadata,
};

struct Label {
  LabelValue value = LabelValue::kNoViolation;
  std::optional<ExclusionReason> exclusion_reason;

  static Label violation() { return {LabelValue::kViolation, std::nullopt}; }
  static Label no_violation() { return {LabelValue::kNoViolation, std::nullopt}; }
  static Label excluded(ExclusionReason r) { return {LabelValue::kExcluded, r}; }

  bool operator==(const Label&) const = default;
};

// Binary class index used by the classifier: 0 = NO_VIOLATION, 1 = VIOLATION.
using ClassId = int;
inline constexpr ClassId kNoViolationClass = 0;
inline constexpr ClassId kViolationClass = 1;

struct Date {
  int year = 0;
  int month = 1;
  int day = 1;
  bool operator==(const Date&) const = default;
};

struct CaseDocument {
  std::string case_id;
  std::vector<std::string> facts;  // token sequence, facts section only
  std::string conclusion;
  std::map<std::string, Outcome> articles;
  std::optional<Date> decision_date;
  std::string language = "en";
  // Token offsets where a new paragraph begins (optional rendering metadata).
  std::vector<std::size_t> paragraph_starts;
  // Gold label as stored with the record, if already known.
  std::optional<LabelValue> gold;
};

// Half-open token range [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool contains(std::size_t i) const { return i >= start && i < end; }
  auto operator<=>(const Span&) const = default;
};

// (p(NO_VIOLATION), p(VIOLATION)).
using Probs = std::array<double, 2>;

enum class Technique { kIsr, kMarc, kExpert, kRandom };

struct RationaleSet {
  std::string case_id;
  Technique technique = Technique::kIsr;
  std::vector<Span> spans;  // sorted, pairwise disjoint
  double selection_divergence = 0.0;
  std::string chosen_method;

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& s : spans) n += s.length();
    return n;
  }
};

std::string_view to_string(LabelValue v);
std::string_view to_string(ExclusionReason r);
std::string_view to_string(Outcome o);
std::string_view to_string(Technique t);
LabelValue label_value_from_string(std::string_view s);
ExclusionReason exclusion_reason_from_string(std::string_view s);
Outcome outcome_from_string(std::string_view s);
Technique technique_from_string(std::string_view s);

// Sorts spans and checks they are in-bounds and pairwise disjoint.
void normalize_spans(std::vector<Span>& spans, std::size_t token_count);

}  // namespace inteval

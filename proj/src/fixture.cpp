#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "inteval/corpus.hpp"
#include "inteval/error.hpp"

namespace inteval::corpus {

namespace {
constexpr std::string_view kCuePrefix = "cue";
}

bool is_cue_token(const std::string& token) {
  if (token.size() <= kCuePrefix.size() || token.compare(0, kCuePrefix.size(), kCuePrefix) != 0)
    return false;
  return std::all_of(token.begin() + static_cast<long>(kCuePrefix.size()), token.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

LabelValue fixture_label(const std::vector<std::string>& tokens) {
  return std::any_of(tokens.begin(), tokens.end(), is_cue_token) ? LabelValue::kViolation
                                                                  : LabelValue::kNoViolation;
}

std::vector<FixtureDoc> make_fixture_corpus(const FixtureSpec& spec, std::uint64_t seed) {
  if (spec.num_docs < 1 || spec.filler_vocab < 1 || spec.cue_vocab < 1)
    throw ConfigError("fixture spec needs documents and non-empty vocabularies");
  if (spec.min_len < 1 || spec.max_len < spec.min_len)
    throw ConfigError("fixture length range is empty");
  if (spec.cue_len < 1 || spec.cue_len > spec.min_len)
    throw ConfigError(fmt::format("cue length {} does not fit a {}-token document", spec.cue_len,
                                  spec.min_len));
  if (spec.first_year > spec.last_year) throw ConfigError("fixture year range is empty");

  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::size_t>(spec.num_docs);
  const auto n_pos = static_cast<std::size_t>(
      std::llround(spec.positive_fraction * static_cast<double>(spec.num_docs)));
  std::vector<bool> positive(n, false);
  std::fill(positive.begin(), positive.begin() + static_cast<long>(std::min(n_pos, n)), true);
  std::shuffle(positive.begin(), positive.end(), rng);

  std::uniform_int_distribution<int> length(spec.min_len, spec.max_len);
  std::uniform_int_distribution<int> filler(0, spec.filler_vocab - 1);
  std::uniform_int_distribution<int> cue(0, spec.cue_vocab - 1);
  std::uniform_int_distribution<int> year(spec.first_year, spec.last_year);
  std::uniform_int_distribution<int> month(1, 12);
  std::uniform_int_distribution<int> day(1, 28);
  std::bernoulli_distribution article_six(0.5);

  std::vector<FixtureDoc> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FixtureDoc fd;
    CaseDocument& d = fd.doc;
    d.case_id = fmt::format("fx-{:04d}", i);
    const int len = length(rng);
    d.facts.reserve(static_cast<std::size_t>(len));
    for (int t = 0; t < len; ++t) d.facts.push_back(fmt::format("w{:03d}", filler(rng)));
    if (positive[i]) {
      std::uniform_int_distribution<int> start(0, len - spec.cue_len);
      const auto s = static_cast<std::size_t>(start(rng));
      for (std::size_t t = 0; t < static_cast<std::size_t>(spec.cue_len); ++t)
        d.facts[s + t] = fmt::format("{}{:02d}", kCuePrefix, cue(rng));
      fd.cue = Span{s, s + static_cast<std::size_t>(spec.cue_len)};
    }
    const std::string article = article_six(rng) ? "6" : "8";
    d.decision_date = Date{year(rng), month(rng), day(rng)};
    d.paragraph_starts = {0};
    if (positive[i]) {
      d.conclusion = fmt::format("Violation of Article {} \xC2\xA7 1; Non-pecuniary damage - award",
                                 article);
      d.articles[article] = Outcome::kViolated;
    } else {
      d.conclusion = fmt::format("No violation of Article {}", article);
      d.articles[article] = Outcome::kNotViolated;
    }
    d.gold = fixture_label(d.facts);
    out.push_back(std::move(fd));
  }
  return out;
}

}  // namespace inteval::corpus

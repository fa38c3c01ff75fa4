#pragma once
// Brute-force reference for contiguous rationale selection, written without
// the library's window kernels so it can serve as an oracle.
#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>
#include <vector>

#include "inteval/divergence.hpp"
#include "inteval/model.hpp"
#include "inteval/types.hpp"

namespace inteval::testkit {

struct OracleCandidate {
  Span span;
  double score = 0.0;
};

// Enumerates every window explicitly, keeps those strictly above the mean and
// merges chains of overlapping survivors, averaging their sums.
inline std::vector<OracleCandidate> oracle_candidates(const std::vector<double>& scores,
                                                      std::size_t l) {
  const std::size_t n = scores.size();
  if (l == 0 || l > n) return {};
  std::vector<double> sums;
  for (std::size_t s = 0; s + l <= n; ++s) {
    double total = 0;
    for (std::size_t k = s; k < s + l; ++k) total += scores[k];
    sums.push_back(total);
  }
  double mean = 0;
  for (double v : sums) mean += v;
  mean /= static_cast<double>(sums.size());

  std::vector<std::size_t> kept;
  for (std::size_t s = 0; s < sums.size(); ++s)
    if (sums[s] > mean) kept.push_back(s);

  // Group surviving windows into connected components of the overlap graph.
  std::vector<int> group(kept.size(), -1);
  int groups = 0;
  for (std::size_t a = 0; a < kept.size(); ++a) {
    if (group[a] >= 0) continue;
    group[a] = groups;
    bool grew = true;
    while (grew) {
      grew = false;
      for (std::size_t b = 0; b < kept.size(); ++b) {
        if (group[b] >= 0) continue;
        for (std::size_t c = 0; c < kept.size(); ++c) {
          if (group[c] != groups) continue;
          const bool overlap = kept[b] < kept[c] + l && kept[c] < kept[b] + l;
          if (overlap) {
            group[b] = groups;
            grew = true;
            break;
          }
        }
      }
    }
    ++groups;
  }
  std::vector<OracleCandidate> out;
  for (int g = 0; g < groups; ++g) {
    std::size_t lo = scores.size(), hi = 0, count = 0;
    double total = 0;
    for (std::size_t a = 0; a < kept.size(); ++a) {
      if (group[a] != g) continue;
      lo = std::min(lo, kept[a]);
      hi = std::max(hi, kept[a] + l);
      total += sums[kept[a]];
      ++count;
    }
    out.push_back({Span{lo, hi}, total / static_cast<double>(count)});
  }
  std::sort(out.begin(), out.end(),
            [](const OracleCandidate& a, const OracleCandidate& b) { return a.span < b.span; });
  return out;
}

struct OracleChoice {
  std::size_t method = 0;
  std::size_t window = 0;
  std::vector<Span> spans;
  double divergence = 0.0;
};

// Evaluates every (method, length) configuration with single predictions and
// returns the preferred one: best divergence, then fewer tokens, then span
// order, method position and window length.
inline std::optional<OracleChoice> oracle_select(const model::Classifier& model,
                                                 const model::ChunkedInput& input,
                                                 const std::vector<std::vector<double>>& scores,
                                                 std::size_t min_length, std::size_t max_length,
                                                 std::size_t budget, bool sufficiency) {
  const Probs original = model.predict(input).probs;
  std::vector<OracleChoice> all;
  for (std::size_t m = 0; m < scores.size(); ++m) {
    for (std::size_t l = min_length; l <= max_length; ++l) {
      auto cands = oracle_candidates(scores[m], l);
      std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
        return a.score != b.score ? a.score > b.score : a.span.start < b.span.start;
      });
      std::vector<Span> spans;
      std::size_t used = 0;
      for (const auto& c : cands) {
        if (budget > 0 && used + c.span.length() > budget) continue;
        spans.push_back(c.span);
        used += c.span.length();
      }
      if (spans.empty()) continue;
      std::sort(spans.begin(), spans.end());
      const auto mask = sufficiency ? model::MaskSpec::keep_only(spans) : model::MaskSpec::remove(spans);
      all.push_back({m, l, spans, jsd(original, model.predict(input, &mask).probs)});
    }
  }
  if (all.empty()) return std::nullopt;
  auto tokens = [](const OracleChoice& c) {
    std::size_t t = 0;
    for (const auto& s : c.spans) t += s.length();
    return t;
  };
  auto key = [&](const OracleChoice& c) {
    return std::make_tuple(sufficiency ? c.divergence : -c.divergence, tokens(c), c.spans, c.method,
                           c.window);
  };
  return *std::min_element(all.begin(), all.end(),
                           [&](const auto& a, const auto& b) { return key(a) < key(b); });
}

}  // namespace inteval::testkit

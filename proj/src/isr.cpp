#include "inteval/isr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "inteval/divergence.hpp"
#include "inteval/error.hpp"

namespace inteval::isr {

using attribution::Method;

std::vector<Candidate> generate_candidates(std::span<const double> scores, std::size_t l,
                                           Method method, ExecutionPolicy policy) {
  INTEVAL_EXPECT(l >= 1, "window length must be at least 1");
  for (double s : scores) INTEVAL_EXPECT(std::isfinite(s), "token scores must be finite");
  const std::vector<double> sums = kernels::window_sums(scores, l, policy);
  if (sums.empty()) return {};
  const double mean =
      std::accumulate(sums.begin(), sums.end(), 0.0) / static_cast<double>(sums.size());

  std::vector<Candidate> out;
  std::size_t members = 0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (!(sums[i] > mean)) continue;
    if (!out.empty() && i < out.back().span.end) {
      Candidate& c = out.back();
      c.span.end = i + l;
      c.score += sums[i];
      ++members;
      continue;
    }
    if (!out.empty()) out.back().score /= static_cast<double>(members);
    out.push_back({Span{i, i + l}, l, sums[i], method});
    members = 1;
  }
  if (!out.empty()) out.back().score /= static_cast<double>(members);
  return out;
}

std::size_t max_window(std::size_t tokens, double fraction, std::size_t min_length) {
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(tokens) - 1e-12));
  return std::max(n, min_length);
}

std::string_view to_string(SelectionMode m) {
  return m == SelectionMode::kSufficiency ? "sufficiency" : "comprehensiveness";
}

SelectionMode selection_mode_from_string(std::string_view s) {
  if (s == "sufficiency") return SelectionMode::kSufficiency;
  if (s == "comprehensiveness") return SelectionMode::kComprehensiveness;
  throw ValidationError("unknown selection mode '" + std::string(s) + "'");
}

std::size_t Configuration::token_count() const {
  std::size_t n = 0;
  for (const auto& s : spans) n += s.length();
  return n;
}

std::vector<Span> take_within_budget(const std::vector<Candidate>& candidates,
                                     std::size_t budget) {
  std::vector<const Candidate*> ranked;
  for (const auto& c : candidates) ranked.push_back(&c);
  std::stable_sort(ranked.begin(), ranked.end(), [](const Candidate* a, const Candidate* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->span.start < b->span.start;
  });
  std::vector<Span> spans;
  std::size_t used = 0;
  for (const Candidate* c : ranked) {
    if (budget > 0 && used + c->span.length() > budget) continue;
    spans.push_back(c->span);
    used += c->span.length();
  }
  std::sort(spans.begin(), spans.end());
  return spans;
}

bool better(const Configuration& a, const Configuration& b, SelectionMode mode) {
  if (a.divergence != b.divergence)
    return mode == SelectionMode::kSufficiency ? a.divergence < b.divergence
                                               : a.divergence > b.divergence;
  if (a.token_count() != b.token_count()) return a.token_count() < b.token_count();
  if (a.spans != b.spans) return a.spans < b.spans;
  if (a.method_rank != b.method_rank) return a.method_rank < b.method_rank;
  return a.window < b.window;
}

namespace {

void evaluate(const model::Classifier& model, const model::ChunkedInput& input,
              const Probs& original, SelectionMode mode, ExecutionPolicy policy,
              std::vector<Configuration>& configs) {
  const std::size_t batch = std::max<std::size_t>(1, input.chunk_count());
  for (std::size_t b0 = 0; b0 < configs.size(); b0 += batch) {
    const std::size_t b1 = std::min(configs.size(), b0 + batch);
    std::vector<model::MaskSpec> masks;
    for (std::size_t i = b0; i < b1; ++i) {
      masks.push_back(mode == SelectionMode::kSufficiency
                          ? model::MaskSpec::keep_only(configs[i].spans)
                          : model::MaskSpec::remove(configs[i].spans));
    }
    const auto outputs = model::predict_batch(model, input, masks, policy);
    for (std::size_t i = b0; i < b1; ++i) configs[i].divergence = jsd(original, outputs[i - b0].probs);
  }
}

std::vector<double> weighted_scores(const attribution::TokenScores& ts,
                                    const model::ChunkedInput& input,
                                    const std::vector<double>& chunk_attn) {
  std::vector<double> out = ts.scores;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] *= chunk_attn[static_cast<std::size_t>(input.token_map[i].chunk)];
  return out;
}

}  // namespace

Selection select_rationales(const model::Classifier& model, const model::ChunkedInput& input,
                            const std::vector<attribution::TokenScores>& scores,
                            const IsrConfig& cfg) {
  INTEVAL_EXPECT(!scores.empty(), "ISR needs at least one score vector");
  const std::size_t n = input.token_count();
  for (const auto& ts : scores)
    INTEVAL_EXPECT(ts.scores.size() == n, "score vector length does not match the document");

  const model::ClassifierOutput base = model.predict(input);
  const std::size_t top = max_window(n, cfg.max_length_fraction, cfg.min_length);
  const auto budget = cfg.budget_fraction > 0
                          ? std::max(cfg.min_length, static_cast<std::size_t>(std::floor(
                                                         cfg.budget_fraction * static_cast<double>(n))))
                          : std::size_t{0};

  Selection sel;
  for (std::size_t m = 0; m < scores.size(); ++m) {
    const std::vector<double> s = cfg.weight_by_chunk_attention
                                      ? weighted_scores(scores[m], input, base.chunk_attn)
                                      : scores[m].scores;
    for (std::size_t l = cfg.min_length; l <= top; ++l) {
      const auto candidates = generate_candidates(s, l, scores[m].method, cfg.policy);
      std::vector<Span> spans = take_within_budget(candidates, budget);
      if (spans.empty()) continue;
      sel.evaluated.push_back({scores[m].method, m, l, std::move(spans), 0.0});
    }
  }

  if (sel.evaluated.empty()) {
    sel.fallback = true;
    spdlog::info("isr: no candidate survived for {}; using best length-{} window per method",
                 input.case_id, cfg.min_length);
    const std::size_t l = std::min(cfg.min_length, n);
    for (std::size_t m = 0; m < scores.size(); ++m) {
      const auto sums = kernels::window_sums(scores[m].scores, l, ExecutionPolicy::kSerial);
      const auto best = static_cast<std::size_t>(std::max_element(sums.begin(), sums.end()) - sums.begin());
      sel.evaluated.push_back({scores[m].method, m, l, {Span{best, best + l}}, 0.0});
    }
  }

  evaluate(model, input, base.probs, cfg.mode, cfg.policy, sel.evaluated);
  const Configuration* best = &sel.evaluated.front();
  for (const auto& c : sel.evaluated)
    if (better(c, *best, cfg.mode)) best = &c;

  sel.rationale.case_id = input.case_id;
  sel.rationale.technique = Technique::kIsr;
  sel.rationale.spans = best->spans;
  sel.rationale.selection_divergence = best->divergence;
  sel.rationale.chosen_method = std::string(attribution::to_string(best->method));
  return sel;
}

}  // namespace inteval::isr

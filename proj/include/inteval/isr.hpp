#pragma once

// Instance-specific rationale selection over contiguous windows.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "inteval/attribution.hpp"
#include "inteval/kernels.hpp"
#include "inteval/model.hpp"
#include "inteval/types.hpp"

namespace inteval::isr {

struct Candidate {
  Span span;
  std::size_t window = 0;  // window length l that produced it
  double score = 0.0;      // window sum, averaged over merged windows
  attribution::Method method = attribution::Method::kRandom;
};

// Windows of length l at stride 1 whose sum is strictly above the mean window
// sum; overlapping survivors are merged into one candidate. Empty when l
// exceeds the score count. Throws ContractViolation for l < 1.
std::vector<Candidate> generate_candidates(std::span<const double> scores, std::size_t l,
                                           attribution::Method method,
                                           ExecutionPolicy policy = ExecutionPolicy::kSerial);

// N = ceil(fraction * tokens), raised to min_length when smaller.
std::size_t max_window(std::size_t tokens, double fraction, std::size_t min_length);

enum class SelectionMode { kSufficiency, kComprehensiveness };
std::string_view to_string(SelectionMode m);
SelectionMode selection_mode_from_string(std::string_view s);

struct IsrConfig {
  SelectionMode mode = SelectionMode::kSufficiency;
  double max_length_fraction = 0.025;
  std::size_t min_length = 5;
  // Token budget per document as a fraction of its length; candidates are
  // taken best-first until the budget is spent. 0 disables the budget.
  double budget_fraction = 0.15;
  // When set, token scores are scaled by the chunk's cross-attention weight
  // before windowing.
  bool weight_by_chunk_attention = false;
  ExecutionPolicy policy = ExecutionPolicy::kParallel;
};

// One evaluated (method, l) configuration.
struct Configuration {
  attribution::Method method = attribution::Method::kRandom;
  std::size_t method_rank = 0;  // position in the caller's score list
  std::size_t window = 0;
  std::vector<Span> spans;      // sorted, disjoint
  double divergence = 0.0;

  std::size_t token_count() const;
};

// Candidates of one length taken best-first (score descending, then start)
// while they fit `budget` tokens; returned sorted by start. budget 0 = all.
std::vector<Span> take_within_budget(const std::vector<Candidate>& candidates,
                                     std::size_t budget);

// Orders configurations by preference under `mode`: divergence first, then
// smaller total length, lexicographic spans, method rank, window.
bool better(const Configuration& a, const Configuration& b, SelectionMode mode);

struct Selection {
  RationaleSet rationale;
  std::vector<Configuration> evaluated;
  bool fallback = false;
};

// Picks the configuration with the best JSD between masked and original
// predictions. Masked predictions run in batches of the document's chunk
// count. When no candidate survives, falls back to the best length-5 window
// per method.
Selection select_rationales(const model::Classifier& model, const model::ChunkedInput& input,
                            const std::vector<attribution::TokenScores>& scores,
                            const IsrConfig& cfg);

}  // namespace inteval::isr

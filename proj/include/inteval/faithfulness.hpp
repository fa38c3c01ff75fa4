#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "inteval/kernels.hpp"
#include "inteval/model.hpp"
#include "inteval/types.hpp"

namespace inteval::faithfulness {

// Suff = 1 - max(0, p(y|x) - p(y|R)).
double sufficiency(double p_full, double p_keep);
// Comp = max(0, p(y|x) - p(y|x \ R)).
double comprehensiveness(double p_full, double p_removed);

struct Normalized {
  double value = 0.0;   // clamped to [0, 1]; raw score when degenerate
  double raw = 0.0;     // before clamping
  bool clamped = false;
  bool degenerate = false;  // baseline leaves the normalization undefined
};

// (Suff - Suff0) / (1 - Suff0).
Normalized normalize_sufficiency(double suff, double suff0);
// Comp / Comp0 with Comp0 = 1 - Suff0.
Normalized normalize_comprehensiveness(double comp, double suff0);

struct DocumentRow {
  std::string case_id;
  std::string technique;
  ClassId predicted = kNoViolationClass;
  double p_full = 0.0;     // p(y_hat | x)
  double p_keep = 0.0;     // p(y_hat | R)
  double p_removed = 0.0;  // p(y_hat | x \ R)
  double p_empty = 0.0;    // p(y_hat | all masked)
  double suff0 = 0.0;
  double comp0 = 0.0;
  Normalized norm_suff;
  Normalized norm_comp;
  std::size_t rationale_tokens = 0;
};

DocumentRow score_document(const model::Classifier& model, const model::ChunkedInput& input,
                           const RationaleSet& rationale, const std::string& technique);

// Spans with the same lengths as `reference`, placed uniformly at random
// without overlap.
RationaleSet random_control(const RationaleSet& reference, std::size_t tokens,
                            std::uint64_t seed);

struct EvalDoc {
  const model::ChunkedInput* input = nullptr;
  ClassId gold = kNoViolationClass;
};

struct F1Result {
  double f1_suff = 0.0;
  double f1_comp = 0.0;
  int evaluated = 0;
  std::vector<std::string> missing;  // documents without rationales
};

F1Result f1_metrics(const model::Classifier& model, const std::vector<EvalDoc>& docs,
                    const std::map<std::string, RationaleSet>& rationales,
                    ExecutionPolicy policy = ExecutionPolicy::kParallel);

struct Summary {
  std::string technique;
  int n = 0;
  double mean_norm_suff = 0.0;
  double mean_norm_comp = 0.0;
  double f1_suff = 0.0;
  double f1_comp = 0.0;
  int clamp_events = 0;
  int degenerate = 0;
};

Summary summarize(const std::string& technique, const std::vector<DocumentRow>& rows);

struct MetricReport {
  std::vector<DocumentRow> rows;  // technique rows then control rows
  Summary technique;
  Summary control;
  std::uint64_t control_seed = 0;
};

// Scores every document with the technique's rationales and with a
// budget-matched RANDOM control. Throws ValidationError naming documents that
// have no rationale in the archive.
MetricReport evaluate_technique(const model::Classifier& model, const std::string& technique,
                                const std::vector<EvalDoc>& docs,
                                const std::map<std::string, RationaleSet>& archive,
                                std::uint64_t control_seed,
                                ExecutionPolicy policy = ExecutionPolicy::kParallel);

// Counts sampled (R, R plus extra tokens) pairs where NormSuff drops by more
// than eps.
int superset_violations(const model::Classifier& model, const model::ChunkedInput& input,
                        const RationaleSet& rationale, int samples, double eps,
                        std::uint64_t seed);

// Tab-separated rows plus a JSON sidecar (<path>.json) with the summaries.
void write_report(const MetricReport& report, const std::filesystem::path& path);

}  // namespace inteval::faithfulness

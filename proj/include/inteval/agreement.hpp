#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "inteval/kernels.hpp"

namespace inteval::agreement {

// Binary judgments of one judge, aligned by key ("case_id|source").
struct JudgmentVector {
  std::string judge_id;
  std::string criterion;
  std::string mode;
  std::vector<std::string> keys;
  std::vector<int> labels;  // 1 = SUPPORT / SUFFICIENT
};

struct AgreementResult {
  std::optional<double> kappa;  // unset when p_e = 1
  double p_o = 0.0;
  double p_e = 0.0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  int n = 0;
  int resamples = 0;
  int skipped = 0;  // resamples with undefined kappa
};

// Point estimate. Throws ContractViolation on misaligned or too-short input.
AgreementResult cohen_kappa(const JudgmentVector& a, const JudgmentVector& b);

// Percentile 95% interval over item resampling; each resample draws from its
// own seed derived from (seed, index), so serial and parallel runs agree.
void bootstrap_ci(const JudgmentVector& a, const JudgmentVector& b, int resamples,
                  std::uint64_t seed, AgreementResult& result,
                  ExecutionPolicy policy = ExecutionPolicy::kParallel);

struct PairResult {
  std::string a;
  std::string b;
  AgreementResult result;
};

// Upper triangle of the pairwise matrix, in input order.
std::vector<PairResult> agreement_matrix(const std::vector<JudgmentVector>& vectors,
                                         int resamples, std::uint64_t seed,
                                         ExecutionPolicy policy = ExecutionPolicy::kParallel);

// Reads a judgment table (tab-separated; columns source, case_id, then one
// column per judge, optional article) into one vector per judge column.
std::vector<JudgmentVector> read_judgment_table(const std::filesystem::path& path,
                                                const std::string& criterion,
                                                const std::string& mode);

// Restricts both vectors to their shared keys, in a's order.
std::pair<JudgmentVector, JudgmentVector> align(const JudgmentVector& a, const JudgmentVector& b);

}  // namespace inteval::agreement

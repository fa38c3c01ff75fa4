#pragma once
// Line-delimited JSON archives shared by the extraction, evaluation and
// annotation stages.
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "inteval/attribution.hpp"
#include "inteval/types.hpp"

namespace inteval::archive {

// One record per (case_id, method).
void write_scores(const std::vector<attribution::TokenScores>& scores,
                  const std::filesystem::path& path);
std::vector<attribution::TokenScores> read_scores(const std::filesystem::path& path);

// Groups scores by case, keeping the file order of methods within a case.
std::map<std::string, std::vector<attribution::TokenScores>> scores_by_case(
    const std::vector<attribution::TokenScores>& scores);

// One record per (case_id, technique).
void write_rationales(const std::vector<RationaleSet>& sets, const std::filesystem::path& path);
std::vector<RationaleSet> read_rationales(const std::filesystem::path& path);

// Throws ValidationError when a case appears twice for the same technique.
std::map<std::string, RationaleSet> rationales_by_case(const std::vector<RationaleSet>& sets,
                                                       Technique technique);

}  // namespace inteval::archive

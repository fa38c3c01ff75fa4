#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "inteval/kernels.hpp"
#include "inteval/types.hpp"

namespace inteval::corpus {

enum class RuleEffect {
  kPositive,
  kNegative,  // "No violation ..." clauses: record outcome, never trigger
  kExclude,
  kIgnoreArticle,
  kIgnorePhrase,
};

struct FilterRule {
  std::string phrase;
  RuleEffect effect = RuleEffect::kPositive;
  int priority = 0;
  // Required for kExclude rules.
  std::optional<ExclusionReason> reason;
};

// Sorted by priority; throws ValidationError on empty phrases, duplicate
// priorities or exclude rules without a reason.
std::vector<FilterRule> validate_rules(std::vector<FilterRule> rules);

// The shipped phrase families (violation, award, finding of violation
// sufficient, struck out, lack of jurisdiction, not necessary to examine,
// government strike-out request rejected, preliminary objection allowed,
// inadmissible) plus the negative "no violation" family.
std::vector<FilterRule> default_rules();
std::vector<FilterRule> load_rules(const std::filesystem::path& path);
void save_rules(const std::vector<FilterRule>& rules,
                const std::filesystem::path& path);

bool is_known_article(const std::string& id);

// Article identifiers mentioned in a conclusion clause, e.g.
// "Violation of Article 6 § 1" -> {"6"}, "Article 1 of Protocol No. 1" ->
// {"P1-1"}, "Article 14+8" -> {"14", "8"}. Throws ValidationError on an
// identifier outside the Convention/Protocol article set.
std::vector<std::string> parse_article_ids(const std::string& clause);

// Labels one case from its conclusion. Rules must come from validate_rules.
// Throws LabelingError when the conclusion is missing.
Label label_case(const CaseDocument& doc, const std::vector<FilterRule>& rules);

// Ingestion screening: non-English or corrupt metadata. nullopt = keep.
std::optional<Label> screen_document(const CaseDocument& doc);

// screen_document then label_case, for every document.
std::vector<Label> label_corpus(const std::vector<CaseDocument>& docs,
                                const std::vector<FilterRule>& rules,
                                ExecutionPolicy policy = ExecutionPolicy::kParallel);

struct BalanceConfig {
  std::uint64_t seed = 13;
  double tolerance_pp = 2.0;
  double train_fraction = 0.8;
  double dev_fraction = 0.1;
};

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
  std::map<std::string, int> per_article_counts;  // over the balanced corpus
  std::map<int, int> per_year_counts;
  int positives = 0;
  int negatives = 0;
  std::vector<std::string> warnings;

  std::vector<std::string> all_ids() const;
};

struct LabeledDoc {
  const CaseDocument* doc;
  LabelValue label;
};

// Downsamples the majority class to the minority size, stratified jointly by
// article group and decision year, then splits into train/dev/test.
// Throws CorpusError on an empty class or on excluded inputs.
CorpusSplit balance_corpus(const std::vector<LabeledDoc>& labeled,
                           const BalanceConfig& cfg);

// Share (percent) of docs in `ids` mentioning each article / in each year.
std::map<std::string, double> article_shares(const std::vector<const CaseDocument*>& docs);
std::map<int, double> year_shares(const std::vector<const CaseDocument*>& docs);

// Line-delimited JSON, one case per line.
std::vector<CaseDocument> read_cases(const std::filesystem::path& path);
void write_cases(const std::vector<CaseDocument>& docs,
                 const std::filesystem::path& path);
// Reads every *.json / *.jsonl file in a directory.
std::vector<CaseDocument> read_case_directory(const std::filesystem::path& dir);

struct Manifest {
  std::filesystem::path cases_file;  // relative to the manifest directory
  CorpusSplit split;
  BalanceConfig config;
  std::map<std::string, LabelValue> labels;
};

void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

struct LoadedCorpus {
  Manifest manifest;
  std::vector<CaseDocument> docs;
  std::map<std::string, std::size_t> index;  // case_id -> docs position

  const CaseDocument& at(const std::string& case_id) const;
  std::vector<const CaseDocument*> select(const std::vector<std::string>& ids) const;
};

LoadedCorpus load_corpus(const std::filesystem::path& manifest_path);

// --- desk-scale fixture corpus ---------------------------------------------

struct FixtureSpec {
  int num_docs = 100;
  int filler_vocab = 200;
  int cue_vocab = 12;
  int min_len = 300;
  int max_len = 420;
  int cue_len = 8;
  int first_year = 2005;
  int last_year = 2023;
  // Share of documents that are positive.
  double positive_fraction = 0.5;
};

struct FixtureDoc {
  CaseDocument doc;
  std::optional<Span> cue;  // planted span, positives only
};

std::vector<FixtureDoc> make_fixture_corpus(const FixtureSpec& spec,
                                            std::uint64_t seed);

// Label function of the fixture: VIOLATION iff any cue token is present.
LabelValue fixture_label(const std::vector<std::string>& tokens);
bool is_cue_token(const std::string& token);

}  // namespace inteval::corpus

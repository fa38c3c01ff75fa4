#pragma once
// Stage runner for corpus -> fit -> attribute -> extract -> evaluate -> judge
// -> agree. Every stage writes flat files under the run directory and records
// a content hash, so an unchanged rerun skips it.
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "inteval/corpus.hpp"
#include "inteval/model.hpp"
#include "inteval/transformer.hpp"

namespace inteval::pipeline {

// Known stage names, in default execution order.
const std::vector<std::string>& known_stages();

struct StageSpec {
  std::string name;
  std::vector<std::string> needs;  // defaults to the built-in dependencies
  nlohmann::json params = nlohmann::json::object();
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "runs/default";
  std::vector<StageSpec> stages;  // enabled stages

  // Parses {"seed", "out", "stages": [{"name", "needs"?, ...params}]}. A stage
  // given as a plain string takes default parameters. Relative paths in
  // parameters stay relative to the working directory.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  // Every stage with desk-scale fixture settings.
  static PipelineConfig fixture(const std::filesystem::path& out_dir, std::uint64_t seed);
  // Keeps only the named stages (in config order).
  void restrict_to(const std::vector<std::string>& names);
  const StageSpec* find(const std::string& name) const;
};

// Topological order of the enabled stages. Throws ConfigError on an unknown
// stage, a duplicate or a dependency cycle.
std::vector<std::string> stage_order(const PipelineConfig& config);

// Files a stage writes, relative to the run directory.
std::vector<std::string> stage_outputs(const std::string& stage, const nlohmann::json& params);
// Stage that writes the given relative artifact path, or "" if none does.
std::string producer_of(const std::string& artifact);

std::string content_hash(const std::filesystem::path& file);

struct StageRecord {
  std::string name;
  std::string hash;
  bool skipped = false;
  double seconds = 0.0;
  std::map<std::string, std::string> artifacts;  // relative path -> content hash
  std::string log;                               // relative path of the stage log
};

struct RunManifest {
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;
  nlohmann::json to_json() const;
};

// Runs the enabled stages in dependency order and writes run_manifest.json.
// Throws ConfigError when an input is missing and its producing stage is not
// enabled, and Error naming the stage log when a stage fails.
RunManifest run_pipeline(const PipelineConfig& config);

// --- pieces shared with the CLI and tests ---------------------------------

// Test-split documents the model predicts as VIOLATION, chunked.
struct PreparedDoc {
  const CaseDocument* doc = nullptr;
  model::ChunkedInput input;
  ClassId gold = kNoViolationClass;
  ClassId predicted = kNoViolationClass;
};
std::vector<PreparedDoc> prepare_documents(const corpus::LoadedCorpus& corpus,
                                           const model::Checkpoint& checkpoint,
                                           const std::vector<std::string>& ids,
                                           bool violation_only);

std::vector<model::Example> make_examples(const corpus::LoadedCorpus& corpus,
                                          const Vocabulary& vocab,
                                          const std::vector<std::string>& ids,
                                          std::size_t max_chunk_len);

}  // namespace inteval::pipeline

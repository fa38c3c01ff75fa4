#pragma once
// Helpers shared by the test binaries: temporary directories, the small
// fixture corpus and a classifier trained on it.
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "inteval/corpus.hpp"
#include "inteval/transformer.hpp"

namespace inteval::testkit {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path data_dir();

// Fixture corpus plus a transformer trained on its train split, with the test
// split prepared for evaluation.
struct TrainedFixture {
  std::vector<corpus::FixtureDoc> docs;
  Vocabulary vocab;
  std::unique_ptr<model::TransformerClassifier> model;
  model::FitReport report;
  std::vector<std::size_t> train;  // indices into docs
  std::vector<std::size_t> test;
  std::vector<model::Example> test_examples;
  model::ChunkedInput input(std::size_t doc) const;
};

struct FixtureOptions {
  int num_docs = 200;
  std::uint64_t seed = 7;
  int epochs = 12;
  bool shuffle_labels = false;
};

// Trains once per distinct options value within a process.
const TrainedFixture& trained_fixture(const FixtureOptions& options = {});

// Small untrained transformer for gradient checks.
model::TransformerClassifier tiny_transformer(int vocab_size, std::uint64_t seed);

// Token ids 2..vocab-1 drawn uniformly.
std::vector<int> random_ids(std::size_t n, int vocab_size, std::uint64_t seed);

}  // namespace inteval::testkit

#include "support.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <random>
#include <tuple>

#include <fmt/format.h>

namespace inteval::testkit {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  path_ = fs::temp_directory_path() / fmt::format("inteval-{}-{:08x}", tag, rng() & 0xffffffffu);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path data_dir() {
  if (const char* env = std::getenv("INTEVAL_DATA_DIR")) return env;
  return INTEVAL_DATA_DIR;
}

model::ChunkedInput TrainedFixture::input(std::size_t doc) const {
  return model::chunk_document(docs[doc].doc, vocab,
                               static_cast<std::size_t>(model->config().max_chunk_len));
}

const TrainedFixture& trained_fixture(const FixtureOptions& o) {
  static std::mutex mu;
  static std::map<std::tuple<int, std::uint64_t, int, bool>, std::unique_ptr<TrainedFixture>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{o.num_docs, o.seed, o.epochs, o.shuffle_labels}];
  if (slot) return *slot;

  auto f = std::make_unique<TrainedFixture>();
  corpus::FixtureSpec spec;
  spec.num_docs = o.num_docs;
  f->docs = corpus::make_fixture_corpus(spec, o.seed);
  // Deterministic 80/20 split in generation order (the generator already
  // shuffles which documents are positive).
  for (std::size_t i = 0; i < f->docs.size(); ++i) (i % 5 == 4 ? f->test : f->train).push_back(i);

  std::vector<std::vector<std::string>> texts;
  for (auto i : f->train) texts.push_back(f->docs[i].doc.facts);
  f->vocab = Vocabulary::build(texts);

  model::TransformerConfig mc;
  mc.vocab_size = f->vocab.size();
  mc.seed = o.seed;
  f->model = std::make_unique<model::TransformerClassifier>(mc);

  std::mt19937_64 rng(o.seed + 1);
  auto label = [&](std::size_t i) {
    return *f->docs[i].doc.gold == LabelValue::kViolation ? kViolationClass : kNoViolationClass;
  };
  std::vector<model::Example> train;
  for (auto i : f->train) train.push_back({f->input(i), label(i), ""});
  for (auto i : f->test) f->test_examples.push_back({f->input(i), label(i), ""});
  if (o.shuffle_labels) {
    std::vector<ClassId> labels;
    for (const auto& e : train) labels.push_back(e.label);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t k = 0; k < train.size(); ++k) train[k].label = labels[k];
  }
  model::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.seed = o.seed + 2;
  f->report = f->model->fit(train, f->test_examples, tc);
  slot = std::move(f);
  return *slot;
}

model::TransformerClassifier tiny_transformer(int vocab_size, std::uint64_t seed) {
  model::TransformerConfig c;
  c.vocab_size = vocab_size;
  c.d_model = 4;
  c.heads = 2;
  c.max_chunk_len = 16;
  c.seed = seed;
  return model::TransformerClassifier(c);
}

std::vector<int> random_ids(std::size_t n, int vocab_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(2, vocab_size - 1);
  std::vector<int> ids(n);
  for (auto& id : ids) id = u(rng);
  return ids;
}

}  // namespace inteval::testkit

#include "inteval/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "inteval/error.hpp"

namespace inteval::model {

using ad::Tape;
using ad::Var;
using json = nlohmann::json;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                              double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return m;
}

struct AttentionOut {
  Var out;
  std::vector<Var> weights;  // one row-stochastic matrix per head
};

AttentionOut multi_head_attention(Var x, Var wq, Var wk, Var wv, Var wo, int heads) {
  const Eigen::Index d = x.cols();
  const Eigen::Index dh = d / heads;
  Var q = ad::matmul(x, wq);
  Var k = ad::matmul(x, wk);
  Var v = ad::matmul(x, wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionOut res;
  std::vector<Var> per_head;
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::col_slice(q, h * dh, dh);
    Var kh = ad::col_slice(k, h * dh, dh);
    Var vh = ad::col_slice(v, h * dh, dh);
    Var a = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), scale));
    res.weights.push_back(a);
    per_head.push_back(ad::matmul(a, vh));
  }
  res.out = ad::add(x, ad::matmul(ad::concat_cols(per_head), wo));
  return res;
}

}  // namespace

struct TransformerClassifier::Graph {
  Var input;
  Var logits;
  std::vector<Var> pooling;      // 1 x len per chunk
  std::vector<Var> cross_heads;  // K x K per head
};

TransformerClassifier::TransformerClassifier(const TransformerConfig& cfg) : cfg_(cfg) {
  INTEVAL_EXPECT(cfg.vocab_size >= 2, "vocab_size must cover pad and unk");
  INTEVAL_EXPECT(cfg.heads >= 1 && cfg.d_model % cfg.heads == 0, "d_model must divide by heads");
  std::mt19937_64 rng(cfg.seed);
  const Eigen::Index d = cfg.d_model;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  embedding_ = random_matrix(rng, cfg.vocab_size, d, 1.0);
  embedding_.row(Vocabulary::kPadId).setZero();
  wq_ = random_matrix(rng, d, d, s);
  wk_ = random_matrix(rng, d, d, s);
  wv_ = random_matrix(rng, d, d, s);
  wo_ = random_matrix(rng, d, d, s);
  w1_ = random_matrix(rng, d, d, s);
  b1_ = Eigen::MatrixXd::Zero(1, d);
  pool_ = random_matrix(rng, d, 1, s);
  cq_ = random_matrix(rng, d, d, s);
  ck_ = random_matrix(rng, d, d, s);
  cv_ = random_matrix(rng, d, d, s);
  co_ = random_matrix(rng, d, d, s);
  head_ = random_matrix(rng, d, 2, s);
  head_bias_ = Eigen::MatrixXd::Zero(1, 2);
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> TransformerClassifier::parameters() {
  return {{"embedding", &embedding_}, {"wq", &wq_}, {"wk", &wk_},     {"wv", &wv_},
          {"wo", &wo_},               {"w1", &w1_}, {"b1", &b1_},     {"pool", &pool_},
          {"cq", &cq_},               {"ck", &ck_}, {"cv", &cv_},     {"co", &co_},
          {"head", &head_},           {"head_bias", &head_bias_}};
}

std::vector<std::pair<std::string, const Eigen::MatrixXd*>> TransformerClassifier::parameters()
    const {
  auto* self = const_cast<TransformerClassifier*>(this);
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> out;
  for (auto& [name, ptr] : self->parameters()) out.emplace_back(name, ptr);
  return out;
}

Eigen::MatrixXd TransformerClassifier::embed(const ChunkedInput& input) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input.token_count()), cfg_.d_model);
  for (std::size_t i = 0; i < input.token_count(); ++i) {
    int id = input.token_at(i);
    if (id < 0 || id >= cfg_.vocab_size) id = Vocabulary::kUnkId;
    x.row(static_cast<Eigen::Index>(i)) = embedding_.row(id);
  }
  return x;
}

TransformerClassifier::Graph TransformerClassifier::build(Tape& tape, const ChunkedInput& layout,
                                                          const Eigen::MatrixXd& embeddings,
                                                          bool params_trainable) const {
  INTEVAL_EXPECT(embeddings.rows() == static_cast<Eigen::Index>(layout.token_count()) &&
                     embeddings.cols() == cfg_.d_model,
                 "embedding shape does not match layout");
  auto param = [&](const Eigen::MatrixXd& m) {
    return params_trainable ? tape.variable(m) : tape.constant(m);
  };
  Graph g;
  g.input = tape.variable(embeddings);
  Var wq = param(wq_), wk = param(wk_), wv = param(wv_), wo = param(wo_);
  Var w1 = param(w1_), b1 = param(b1_), pool = param(pool_);
  Var cq = param(cq_), ck = param(ck_), cv = param(cv_), co = param(co_);
  Var head = param(head_), head_bias = param(head_bias_);

  std::vector<Var> chunk_vectors;
  Eigen::Index start = 0;
  for (const auto& chunk : layout.chunks) {
    const auto len = static_cast<Eigen::Index>(chunk.size());
    Var xk = ad::row_slice(g.input, start, len);
    start += len;
    Var h1 = multi_head_attention(xk, wq, wk, wv, wo, cfg_.heads).out;
    Var h2 = ad::tanh(ad::add_row(ad::matmul(h1, w1), b1));
    Var beta = ad::softmax_rows(ad::transpose(ad::matmul(h2, pool)));
    g.pooling.push_back(beta);
    chunk_vectors.push_back(ad::matmul(beta, h2));
  }
  AttentionOut cross = multi_head_attention(ad::concat_rows(chunk_vectors), cq, ck, cv, co,
                                            cfg_.heads);
  g.cross_heads = cross.weights;
  g.logits = ad::add_row(ad::matmul(ad::mean_rows(cross.out), head), head_bias);
  return g;
}

ForwardResult TransformerClassifier::forward(const ChunkedInput& layout,
                                             const Eigen::MatrixXd& embeddings,
                                             const ForwardOptions& options) const {
  Tape tape;
  Tape reference;
  if (options.grad == GradMode::kDeepLift) {
    INTEVAL_EXPECT(options.reference != nullptr, "DeepLift needs reference embeddings");
    build(reference, layout, *options.reference, false);
    tape.set_reference(&reference);
  }
  Graph g = build(tape, layout, embeddings, false);

  ForwardResult r;
  r.logits = Eigen::Vector2d(g.logits.value()(0, 0), g.logits.value()(0, 1));
  r.probs = softmax2(r.logits);

  const std::size_t chunks = layout.chunk_count();
  r.chunk_attn.assign(chunks, 0.0);
  for (const Var& a : g.cross_heads) {
    const Eigen::RowVectorXd received = a.value().colwise().mean();
    for (std::size_t k = 0; k < chunks; ++k)
      r.chunk_attn[k] += received(static_cast<Eigen::Index>(k)) / cfg_.heads;
  }
  r.token_attn.reserve(layout.token_count());
  for (std::size_t k = 0; k < chunks; ++k) {
    const Eigen::MatrixXd& beta = g.pooling[k].value();
    for (Eigen::Index t = 0; t < beta.cols(); ++t) r.token_attn.push_back(beta(0, t) * r.chunk_attn[k]);
  }

  Var objective = options.objective == Objective::kLogit
                      ? ad::element(g.logits, 0, options.target)
                      : ad::element(ad::log_softmax_rows(g.logits), 0, options.target);
  r.objective = objective.value()(0, 0);
  if (options.grad == GradMode::kNone) return r;

  tape.backward(objective);
  r.input_grad = g.input.grad();
  r.attn_grad.reserve(layout.token_count());
  for (const Var& beta : g.pooling)
    for (Eigen::Index t = 0; t < beta.cols(); ++t) r.attn_grad.push_back(beta.grad()(0, t));
  return r;
}

FitReport TransformerClassifier::fit(const std::vector<Example>& train,
                                     const std::vector<Example>& test, const TrainConfig& cfg) {
  if (train.empty()) throw TrainingError("empty training set");
  auto params = parameters();
  const std::size_t np = params.size();
  std::vector<Eigen::MatrixXd> m(np), v(np);
  for (std::size_t p = 0; p < np; ++p) {
    m[p] = Eigen::MatrixXd::Zero(params[p].second->rows(), params[p].second->cols());
    v[p] = m[p];
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(cfg.seed);
  FitReport report;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t bs = b1 - b0;
      std::vector<std::vector<Eigen::MatrixXd>> grads(bs);
      std::vector<double> losses(bs, 0.0);

      for_each_index(bs, cfg.policy, [&](std::size_t i) {
        const Example& ex = train[order[b0 + i]];
        ChunkedInput input = ex.input;
        std::mt19937_64 rng(splitmix64(cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 32) ^
                                       (order[b0 + i] + 1)));
        std::bernoulli_distribution drop(cfg.token_dropout);
        for (auto& chunk : input.chunks)
          for (int& id : chunk)
            if (cfg.token_dropout > 0 && drop(rng)) id = input.pad_id;

        Tape tape;
        Graph g = build(tape, input, embed(input), true);
        Var loss = ad::scale(ad::element(ad::log_softmax_rows(g.logits), 0, ex.label), -1.0);
        losses[i] = loss.value()(0, 0);
        tape.backward(loss);

        // Parameter leaves were pushed in parameters() order after the input.
        std::vector<Eigen::MatrixXd>& out = grads[i];
        out.resize(np);
        Eigen::MatrixXd emb_grad = Eigen::MatrixXd::Zero(embedding_.rows(), embedding_.cols());
        const Eigen::MatrixXd& gx = tape.node(g.input.id).grad;
        for (std::size_t t = 0; t < input.token_count(); ++t) {
          const int id = input.token_at(t);
          if (id != input.pad_id) emb_grad.row(id) += gx.row(static_cast<Eigen::Index>(t));
        }
        out[0] = std::move(emb_grad);
        for (std::size_t p = 1; p < np; ++p)
          out[p] = tape.node(g.input.id + static_cast<int>(p)).grad;
      });

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                            std::to_string(b0) + " (lr=" + std::to_string(cfg.learning_rate) + ")");
      }
      epoch_loss += batch_loss;

      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < np; ++p) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m[p].rows(), m[p].cols());
        for (std::size_t i = 0; i < bs; ++i) g += grads[i][p];
        g /= static_cast<double>(bs);
        if (cfg.weight_decay > 0) g += cfg.weight_decay * *params[p].second;
        m[p] = beta1 * m[p] + (1 - beta1) * g;
        v[p] = beta2 * v[p] + (1 - beta2) * g.cwiseProduct(g);
        *params[p].second -= (cfg.learning_rate * (m[p] / c1).array() /
                              ((v[p] / c2).array().sqrt() + eps))
                                 .matrix();
      }
      embedding_.row(Vocabulary::kPadId).setZero();
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    spdlog::debug("epoch {} loss {:.5f}", epoch, report.epoch_loss.back());
  }
  if (!test.empty()) report.test = evaluate_classifier(*this, test, cfg.policy);
  return report;
}

double macro_f1(const std::vector<ClassId>& gold, const std::vector<ClassId>& predicted) {
  INTEVAL_EXPECT(gold.size() == predicted.size(), "macro_f1 length mismatch");
  if (gold.empty()) return 0.0;
  double sum = 0.0;
  for (ClassId c : {kNoViolationClass, kViolationClass}) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (predicted[i] == c && gold[i] == c) ++tp;
      if (predicted[i] == c && gold[i] != c) ++fp;
      if (predicted[i] != c && gold[i] == c) ++fn;
    }
    const double denom = 2.0 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * tp / denom;
  }
  return sum / 2.0;
}

EvalReport evaluate_classifier(const Classifier& model, const std::vector<Example>& data,
                               ExecutionPolicy policy) {
  std::vector<ClassId> pred(data.size());
  for_each_index(data.size(), policy,
                 [&](std::size_t i) { pred[i] = model.predict(data[i].input).predicted; });
  std::vector<ClassId> gold;
  std::map<std::string, std::pair<std::vector<ClassId>, std::vector<ClassId>>> by_article;
  int correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    gold.push_back(data[i].label);
    correct += pred[i] == data[i].label;
    if (!data[i].article.empty()) {
      by_article[data[i].article].first.push_back(data[i].label);
      by_article[data[i].article].second.push_back(pred[i]);
    }
  }
  EvalReport r;
  r.n = static_cast<int>(data.size());
  r.macro_f1 = macro_f1(gold, pred);
  r.accuracy = data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
  for (const auto& [article, gp] : by_article) r.per_article_f1[article] = macro_f1(gp.first, gp.second);
  return r;
}

// --- checkpoints -------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'I', 'E', 'V', 'W', 'E', 'I', 'G', '1'};
}

void save_checkpoint(const std::filesystem::path& dir, const TransformerClassifier& model,
                     const Vocabulary& vocab, const TrainConfig& train) {
  std::filesystem::create_directories(dir);
  const TransformerConfig& c = model.config();
  json cfg = {{"backend", model.backend()},
              {"vocab_size", c.vocab_size},
              {"d_model", c.d_model},
              {"heads", c.heads},
              {"max_chunk_len", c.max_chunk_len},
              {"init_seed", c.seed},
              {"tokenizer", vocab.fingerprint()},
              {"train",
               {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"weight_decay", train.weight_decay},
                {"token_dropout", train.token_dropout},
                {"seed", train.seed}}}};
  std::ofstream(dir / "config.json") << cfg.dump(2) << '\n';
  vocab.save(dir / "vocab.txt");
  std::ofstream out(dir / "weights.bin", std::ios::binary);
  if (!out) throw HarnessError("cannot write weights to " + dir.string());
  out.write(kMagic, sizeof(kMagic));
  const auto params = model.parameters();
  const auto count = static_cast<std::uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [name, mat] : params) {
    const auto len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(name.data(), len);
    const std::int64_t dims[2] = {mat->rows(), mat->cols()};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(mat->data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(mat->size())));
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream cfg_in(dir / "config.json");
  if (!cfg_in) throw HarnessError("missing checkpoint config in " + dir.string());
  const json cfg = json::parse(cfg_in);
  TransformerConfig tc;
  tc.vocab_size = cfg.at("vocab_size").get<int>();
  tc.d_model = cfg.at("d_model").get<int>();
  tc.heads = cfg.at("heads").get<int>();
  tc.max_chunk_len = cfg.at("max_chunk_len").get<int>();
  tc.seed = cfg.at("init_seed").get<std::uint64_t>();
  TrainConfig train;
  const json& t = cfg.at("train");
  train.epochs = t.at("epochs").get<int>();
  train.batch_size = t.at("batch_size").get<int>();
  train.learning_rate = t.at("learning_rate").get<double>();
  train.weight_decay = t.at("weight_decay").get<double>();
  train.token_dropout = t.at("token_dropout").get<double>();
  train.seed = t.at("seed").get<std::uint64_t>();

  Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
  if (vocab.fingerprint() != cfg.at("tokenizer").get<std::string>())
    throw HarnessError("tokenizer fingerprint mismatch in " + dir.string());

  TransformerClassifier model(tc);
  std::ifstream in(dir / "weights.bin", std::ios::binary);
  if (!in) throw HarnessError("missing weights in " + dir.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw HarnessError("bad weights header");
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  auto params = model.parameters();
  if (count != params.size()) throw HarnessError("weights file has wrong parameter count");
  for (auto& [name, mat] : params) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string stored(len, '\0');
    in.read(stored.data(), len);
    std::int64_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (stored != name || dims[0] != mat->rows() || dims[1] != mat->cols())
      throw HarnessError("weights entry mismatch for " + name);
    in.read(reinterpret_cast<char*>(mat->data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(mat->size())));
  }
  if (!in) throw HarnessError("truncated weights file");
  return {std::move(model), std::move(vocab), train};
}

}  // namespace inteval::model

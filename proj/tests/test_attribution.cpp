#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "inteval/attribution.hpp"
#include "inteval/error.hpp"
#include "support.hpp"

using namespace inteval;
using namespace inteval::attribution;
using inteval::testkit::random_ids;
using inteval::testkit::tiny_transformer;
using inteval::testkit::trained_fixture;

namespace {

AttributionConfig serial_config() {
  AttributionConfig c;
  c.policy = ExecutionPolicy::kSerial;
  return c;
}

double logit_of(const model::Classifier& m, const model::ChunkedInput& in,
                const Eigen::MatrixXd& x, ClassId target) {
  model::ForwardOptions o;
  o.target = target;
  return m.forward(in, x, o).objective;
}

// Midpoint-rule path integral of the gradient from zero to x with many
// steps, computed here rather than through the library's IG.
std::vector<double> dense_path_integral(const model::Classifier& m, const model::ChunkedInput& in,
                                        ClassId target, int steps) {
  const Eigen::MatrixXd x = m.embed(in);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  model::ForwardOptions o;
  o.target = target;
  o.grad = model::GradMode::kGradient;
  for (int s = 0; s < steps; ++s) {
    const double a = (s + 0.5) / steps;
    acc += m.forward(in, a * x, o).input_grad;
  }
  acc /= steps;
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = x.row(i).dot(acc.row(i));
  return out;
}

class OpaqueClassifier : public model::ConstantClassifier {
 public:
  OpaqueClassifier() : ConstantClassifier({0.4, 0.6}) {}
  bool supports_gradients() const override { return false; }
  bool supports_attention() const override { return false; }
};

}  // namespace

TEST(IntegratedGradients, CompletenessOnTrainedModel) {
  const auto& fx = trained_fixture();
  // Relative error needs a logit gap well away from zero, which the
  // predicted-positive documents provide.
  int checked = 0;
  for (std::size_t k = 0; k < fx.test.size() && checked < 5; ++k) {
    const auto in = fx.input(fx.test[k]);
    const ClassId target = fx.model->predict(in).predicted;
    if (target != kViolationClass) continue;
    const auto ig = integrated_gradients(*fx.model, in, target, 100, ExecutionPolicy::kParallel);
    const Eigen::MatrixXd x = fx.model->embed(in);
    const double delta = logit_of(*fx.model, in, x, target) -
                         logit_of(*fx.model, in, Eigen::MatrixXd::Zero(x.rows(), x.cols()), target);
    const auto oracle = dense_path_integral(*fx.model, in, target, 1000);
    const double total = std::accumulate(ig.begin(), ig.end(), 0.0);
    const double oracle_total = std::accumulate(oracle.begin(), oracle.end(), 0.0);
    EXPECT_NEAR(oracle_total, delta, 1e-3 * std::abs(delta) + 1e-9);
    EXPECT_LE(std::abs(total - oracle_total), 0.02 * std::abs(oracle_total)) << in.case_id;
    ++checked;
  }
  EXPECT_EQ(checked, 5);
}

TEST(IntegratedGradients, SingleStepEqualsInputTimesGradient) {
  const auto m = tiny_transformer(30, 3);
  const auto in = model::chunk_tokens(random_ids(40, 30, 2), "d", 16, 0);
  auto cfg = serial_config();
  cfg.target = kViolationClass;
  const auto xg = attribute(m, in, Method::kInputXGrad, cfg).scores;
  const auto ig1 = integrated_gradients(m, in, kViolationClass, 1, ExecutionPolicy::kSerial);
  ASSERT_EQ(xg.size(), ig1.size());
  for (std::size_t i = 0; i < xg.size(); ++i) EXPECT_DOUBLE_EQ(xg[i], ig1[i]);
}

TEST(IntegratedGradients, LinearModelIsExact) {
  std::vector<double> w(20);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * static_cast<double>(i) - 0.8;
  const model::LinearBowClassifier m(w, 0.3);
  const std::vector<int> ids{3, 5, 5, 19, 2, 7};
  const auto in = model::chunk_tokens(ids, "d", 16, 0);
  const auto ig = integrated_gradients(m, in, kViolationClass, 7, ExecutionPolicy::kSerial);
  for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_NEAR(ig[i], w[static_cast<std::size_t>(ids[i])], 1e-12);
}

TEST(Attribution, ZeroGradientStubGivesZeroScores) {
  const model::ConstantClassifier stub({0.2, 0.8});
  const auto in = model::chunk_tokens(random_ids(50, 40, 1), "d", 16, 0);
  for (Method m : {Method::kIntegratedGradients, Method::kInputXGrad, Method::kDeepLift,
                   Method::kScaledAttention}) {
    const auto s = attribute(stub, in, m, serial_config());
    ASSERT_EQ(s.scores.size(), 50u);
    for (double v : s.scores) EXPECT_EQ(v, 0.0) << to_string(m);
  }
}

TEST(Attribution, RandomIsDeterministicAndPermutationEquivariant) {
  const model::ConstantClassifier stub({0.2, 0.8});
  std::vector<int> ids(30);
  std::iota(ids.begin(), ids.end(), 2);
  const auto in = model::chunk_tokens(ids, "d", 16, 0);
  const auto a = attribute(stub, in, Method::kRandom, serial_config()).scores;
  EXPECT_EQ(a, attribute(stub, in, Method::kRandom, serial_config()).scores);
  for (double v : a) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  std::vector<std::size_t> perm(ids.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(4));
  std::vector<int> permuted(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) permuted[i] = ids[perm[i]];
  const auto b = attribute(stub, model::chunk_tokens(permuted, "d", 16, 0), Method::kRandom,
                           serial_config()).scores;
  for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(b[i], a[perm[i]]);
  auto other = serial_config();
  other.seed = 18;
  EXPECT_NE(attribute(stub, in, Method::kRandom, other).scores, a);
}

TEST(Attribution, LimeRecoversSignsOfTheStrongestLinearCoefficients) {
  const int vocab = 40;
  std::vector<double> w(vocab, 0.0);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> small(-0.05, 0.05);
  for (auto& v : w) v = small(rng);
  // Five dominant tokens with known signs.
  const std::vector<std::pair<int, double>> strong{{4, 2.0}, {9, -1.8}, {15, 1.5}, {22, -1.6}, {31, 1.7}};
  for (auto [id, v] : strong) w[static_cast<std::size_t>(id)] = v;
  const model::LinearBowClassifier m(w, 0.0);
  std::vector<int> ids(vocab - 2);
  std::iota(ids.begin(), ids.end(), 2);
  const auto in = model::chunk_tokens(ids, "d", 16, 0);
  auto cfg = serial_config();
  cfg.target = kViolationClass;
  const auto lime = attribute(m, in, Method::kLime, cfg).scores;

  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(w[static_cast<std::size_t>(ids[a])]) > std::abs(w[static_cast<std::size_t>(ids[b])]);
  });
  for (std::size_t k = 0; k < 5; ++k) {
    const std::size_t pos = order[k];
    const double truth = w[static_cast<std::size_t>(ids[pos])];
    EXPECT_EQ(std::signbit(lime[pos]), std::signbit(truth)) << "token " << ids[pos];
  }
}

TEST(Attribution, LimeTopKKeepsOnlyKNonZeroWeights) {
  const auto m = tiny_transformer(30, 6);
  const auto in = model::chunk_tokens(random_ids(40, 30, 9), "d", 16, 0);
  auto cfg = serial_config();
  cfg.lime_samples = 200;
  cfg.lime_top_k = 5;
  const auto s = attribute(m, in, Method::kLime, cfg).scores;
  EXPECT_EQ(std::count_if(s.begin(), s.end(), [](double v) { return v != 0.0; }), 5);
}

TEST(Attribution, DeepLiftOnLinearModelIsWeightTimesInput) {
  std::vector<double> w{0.0, 0.0, 0.5, -1.0, 2.0};
  const model::LinearBowClassifier m(w, 0.1);
  const auto in = model::chunk_tokens({2, 3, 4, 4, 2}, "d", 16, 0);
  auto cfg = serial_config();
  cfg.target = kViolationClass;
  const auto s = attribute(m, in, Method::kDeepLift, cfg).scores;
  EXPECT_EQ(s, (std::vector<double>{0.5, -1.0, 2.0, 2.0, 0.5}));
}

TEST(Attribution, AttentionScoresAreTheNormalizedSummary) {
  const auto m = tiny_transformer(30, 7);
  const auto in = model::chunk_tokens(random_ids(45, 30, 10), "d", 16, 0);
  const auto s = attribute(m, in, Method::kAttention, serial_config()).scores;
  EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-9);
  EXPECT_EQ(s, introspect(m, in, kViolationClass).token_attn);
}

TEST(Attribution, CapabilityMismatchIsReported) {
  const OpaqueClassifier opaque;
  const auto in = model::chunk_tokens(random_ids(20, 30, 1), "d", 16, 0);
  for (Method m : {Method::kAttention, Method::kScaledAttention, Method::kIntegratedGradients,
                   Method::kInputXGrad, Method::kDeepLift})
    EXPECT_THROW(attribute(opaque, in, m, serial_config()), CapabilityError) << to_string(m);
  EXPECT_NO_THROW(attribute(opaque, in, Method::kRandom, serial_config()));
  EXPECT_NO_THROW(attribute(opaque, in, Method::kLime, serial_config()));
}

TEST(Attribution, EveryMethodIsDeterministicAcrossPolicies) {
  const auto m = tiny_transformer(30, 11);
  const auto in = model::chunk_tokens(random_ids(50, 30, 12), "d", 16, 0);
  for (Method method : kAllMethods) {
    auto par = serial_config();
    par.policy = ExecutionPolicy::kParallel;
    par.lime_samples = 100;
    auto ser = par;
    ser.policy = ExecutionPolicy::kSerial;
    const auto a = attribute(m, in, method, par);
    const auto b = attribute(m, in, method, ser);
    EXPECT_EQ(a.scores, b.scores) << to_string(method);
    EXPECT_EQ(a.target, m.predict(in).predicted);
    EXPECT_EQ(a.method, method);
  }
}

TEST(Attribution, GradientMethodsFavourThePlantedCue) {
  const auto& fx = trained_fixture();
  for (Method method : {Method::kIntegratedGradients, Method::kInputXGrad, Method::kDeepLift,
                        Method::kScaledAttention}) {
    int docs = 0, ordered = 0;
    for (auto i : fx.test) {
      if (!fx.docs[i].cue) continue;
      const auto in = fx.input(i);
      const auto s = attribute(*fx.model, in, method, AttributionConfig{}).scores;
      const Span cue = *fx.docs[i].cue;
      double inside = 0, outside = 0;
      for (std::size_t t = 0; t < s.size(); ++t) (cue.contains(t) ? inside : outside) += s[t];
      inside /= static_cast<double>(cue.length());
      outside /= static_cast<double>(s.size() - cue.length());
      ++docs;
      ordered += inside > outside;
    }
    ASSERT_GT(docs, 0);
    EXPECT_EQ(ordered, docs) << to_string(method);
  }
}

TEST(Attribution, MethodNames) {
  EXPECT_EQ(method_from_string("ig"), Method::kIntegratedGradients);
  EXPECT_EQ(method_from_string("INPUT_X_GRAD"), Method::kInputXGrad);
  EXPECT_EQ(method_from_string("deeplift"), Method::kDeepLift);
  for (Method m : kAllMethods) EXPECT_EQ(method_from_string(to_string(m)), m);
  EXPECT_THROW(method_from_string("shap"), ValidationError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "inteval/agreement.hpp"
#include "inteval/error.hpp"
#include "reference_kappa.hpp"
#include "support.hpp"

using namespace inteval;
using namespace inteval::agreement;

namespace {

std::filesystem::path table_path(const std::string& criterion, const std::string& mode) {
  return testkit::data_dir() / "judgments" / (criterion + "_" + mode + ".tsv");
}

const JudgmentVector& column(const std::vector<JudgmentVector>& vs, const std::string& id) {
  for (const auto& v : vs)
    if (v.judge_id == id) return v;
  throw std::runtime_error("no column " + id);
}

// Independent reading of a judgment table: raw strings in, two-by-two
// contingency counts out.
struct Table2x2 {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  double n() const { return n11 + n10 + n01 + n00; }
  double p_o() const { return (n11 + n00) / n(); }
  double p_e() const {
    const double a1 = (n11 + n10) / n(), b1 = (n11 + n01) / n();
    return a1 * b1 + (1 - a1) * (1 - b1);
  }
  double kappa() const { return (p_o() - p_e()) / (1 - p_e()); }
};

Table2x2 oracle_counts(const std::filesystem::path& path, const std::string& a, const std::string& b) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) header.push_back(f);
  }
  const auto ia = std::find(header.begin(), header.end(), a) - header.begin();
  const auto ib = std::find(header.begin(), header.end(), b) - header.begin();
  auto positive = [](const std::string& s) { return s == "Support" || s == "Sufficient"; };
  Table2x2 t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, '\t');) f.push_back(x);
    const bool pa = positive(f[ia]), pb = positive(f[ib]);
    (pa ? (pb ? t.n11 : t.n10) : (pb ? t.n01 : t.n00)) += 1;
  }
  return t;
}

JudgmentVector make(const std::vector<int>& labels, const std::string& id = "j") {
  JudgmentVector v;
  v.judge_id = id;
  for (std::size_t i = 0; i < labels.size(); ++i) v.keys.push_back("k" + std::to_string(i));
  v.labels = labels;
  return v;
}

std::vector<int> random_labels(std::size_t n, std::uint64_t seed, double p = 0.5) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution d(p);
  std::vector<int> out(n);
  for (auto& x : out) x = d(rng);
  return out;
}

}  // namespace

TEST(Kappa, ReproducesEveryReportedPointEstimate) {
  for (const auto& ref : testkit::reference_kappas()) {
    const auto vs = read_judgment_table(table_path(ref.criterion, ref.mode), ref.criterion, ref.mode);
    const auto r = cohen_kappa(column(vs, ref.a), column(vs, ref.b));
    ASSERT_TRUE(r.kappa.has_value());
    EXPECT_EQ(r.n, 30);
    // Two-decimal rounding of the reported value; 1e-9 absorbs the one
    // estimate that lands exactly on a rounding boundary.
    EXPECT_LE(std::abs(*r.kappa - ref.kappa), 0.005 + 1e-9)
        << ref.criterion << "/" << ref.mode << " " << ref.a << "-" << ref.b << " got " << *r.kappa;
  }
}

TEST(Kappa, MatchesIndependentContingencyCounts) {
  for (const auto& ref : testkit::reference_kappas()) {
    const auto path = table_path(ref.criterion, ref.mode);
    const auto vs = read_judgment_table(path, ref.criterion, ref.mode);
    const auto r = cohen_kappa(column(vs, ref.a), column(vs, ref.b));
    const auto t = oracle_counts(path, ref.a, ref.b);
    EXPECT_NEAR(r.p_o, t.p_o(), 1e-12);
    EXPECT_NEAR(r.p_e, t.p_e(), 1e-12);
    EXPECT_NEAR(*r.kappa, t.kappa(), 1e-12);
  }
}

TEST(Kappa, HandCheckedComponents) {
  const auto sup = read_judgment_table(table_path("support", "single"), "support", "single");
  const auto r1 = cohen_kappa(column(sup, "expert_b"), column(sup, "saullm"));
  EXPECT_NEAR(r1.p_o, 0.6, 1e-12);
  EXPECT_NEAR(r1.p_e, 0.48, 1e-12);
  EXPECT_NEAR(*r1.kappa, 0.23, 0.005);
  const auto suf = read_judgment_table(table_path("sufficiency", "single"), "sufficiency", "single");
  const auto r2 = cohen_kappa(column(suf, "expert_b"), column(suf, "llama"));
  EXPECT_NEAR(r2.p_o, 0.7, 1e-12);
  EXPECT_NEAR(r2.p_e, 0.58, 1e-12);
  EXPECT_NEAR(*r2.kappa, 0.29, 0.005);
}

TEST(Kappa, IdenticalVectorsAgreePerfectly) {
  const auto v = make({1, 0, 1, 1, 0, 0, 1});
  EXPECT_DOUBLE_EQ(*cohen_kappa(v, v).kappa, 1.0);
}

TEST(Kappa, ConstantIdenticalJudgesAreUndefined) {
  const auto v = make({1, 1, 1, 1});
  const auto r = cohen_kappa(v, v);
  EXPECT_FALSE(r.kappa.has_value());
  EXPECT_DOUBLE_EQ(r.p_e, 1.0);
}

TEST(Kappa, Contracts) {
  EXPECT_THROW(cohen_kappa(make({1, 0, 1}), make({1, 0})), ContractViolation);
  auto b = make({1, 0, 1});
  b.keys[1] = "other";
  EXPECT_THROW(cohen_kappa(make({1, 0, 1}), b), ContractViolation);
  EXPECT_THROW(cohen_kappa(make({1, 0, 2}), make({1, 0, 1})), ContractViolation);
}

TEST(Kappa, RelabelInvarianceAndUpperBound) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto a = random_labels(25, s * 2 + 1, 0.3 + 0.002 * s);
    auto b = random_labels(25, s * 2 + 2);
    const auto r = cohen_kappa(make(a), make(b));
    for (auto& x : a) x = 1 - x;
    for (auto& x : b) x = 1 - x;
    const auto flipped = cohen_kappa(make(a), make(b));
    ASSERT_EQ(r.kappa.has_value(), flipped.kappa.has_value());
    if (!r.kappa) continue;
    EXPECT_NEAR(*r.kappa, *flipped.kappa, 1e-12);
    EXPECT_LE(*r.kappa, r.p_o + 1e-12);
    EXPECT_GE(*r.kappa, -1.0 - 1e-12);
  }
}

TEST(Kappa, OneOnlyForIdenticalNonConstantVectors) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto a = random_labels(8, s + 100);
    const auto b = random_labels(8, s + 900);
    const auto r = cohen_kappa(make(a), make(b));
    const bool constant = std::all_of(a.begin(), a.end(), [&](int x) { return x == a[0]; });
    if (r.kappa && std::abs(*r.kappa - 1.0) < 1e-12) EXPECT_TRUE(a == b && !constant);
    if (a == b && !constant) EXPECT_NEAR(*r.kappa, 1.0, 1e-12);
  }
}

TEST(Bootstrap, DeterministicAndPolicyIndependent) {
  const auto sup = read_judgment_table(table_path("support", "single"), "support", "single");
  const auto& a = column(sup, "expert_b");
  const auto& b = column(sup, "saullm");
  auto r1 = cohen_kappa(a, b), r2 = r1, r3 = r1;
  bootstrap_ci(a, b, 2000, 99, r1);
  bootstrap_ci(a, b, 2000, 99, r2);
  bootstrap_ci(a, b, 2000, 99, r3, ExecutionPolicy::kSerial);
  EXPECT_EQ(*r1.ci_low, *r2.ci_low);
  EXPECT_EQ(*r1.ci_high, *r2.ci_high);
  EXPECT_EQ(*r1.ci_low, *r3.ci_low);
  EXPECT_EQ(*r1.ci_high, *r3.ci_high);
  EXPECT_EQ(r1.resamples, 2000);
}

TEST(Bootstrap, WideIntervalAroundTheSaulLmSupportEstimate) {
  const auto sup = read_judgment_table(table_path("support", "single"), "support", "single");
  const auto& a = column(sup, "expert_b");
  const auto& b = column(sup, "saullm");
  auto r = cohen_kappa(a, b);
  bootstrap_ci(a, b, 10000, 7, r);
  EXPECT_LT(*r.ci_low, 0.23);
  EXPECT_GT(*r.ci_high, 0.23);
  EXPECT_LT(*r.ci_low, 0.0);
  EXPECT_GT(*r.ci_high, 0.4);
  // Reported interval is [-0.10, 0.54]; resampling noise and the percentile
  // rule leave a few hundredths of slack.
  EXPECT_NEAR(*r.ci_low, -0.10, 0.1);
  EXPECT_NEAR(*r.ci_high, 0.54, 0.1);
}

TEST(Bootstrap, StableInResampleCount) {
  const auto suf = read_judgment_table(table_path("sufficiency", "single"), "sufficiency", "single");
  const auto& a = column(suf, "expert_b");
  const auto& b = column(suf, "llama");
  auto r5 = cohen_kappa(a, b), r10 = r5;
  bootstrap_ci(a, b, 5000, 3, r5);
  bootstrap_ci(a, b, 10000, 3, r10);
  EXPECT_LT(std::abs(*r5.ci_low - *r10.ci_low), 0.02);
  EXPECT_LT(std::abs(*r5.ci_high - *r10.ci_high), 0.02);
}

TEST(Bootstrap, IdenticalVectorsCollapseNearOne) {
  const auto v = make(random_labels(30, 5));
  auto r = cohen_kappa(v, v);
  bootstrap_ci(v, v, 2000, 1, r);
  EXPECT_DOUBLE_EQ(*r.ci_low, 1.0);
  EXPECT_DOUBLE_EQ(*r.ci_high, 1.0);
}

TEST(Bootstrap, UndefinedResamplesAreCounted) {
  // One positive item in thirty: a resample that misses it has p_e = 1.
  std::vector<int> labels(30, 0);
  labels[4] = 1;
  const auto v = make(labels);
  auto r = cohen_kappa(v, v);
  bootstrap_ci(v, v, 2000, 11, r);
  // P(miss) = (29/30)^30, about 0.36.
  EXPECT_GT(r.skipped, 600);
  EXPECT_LT(r.skipped, 850);
  EXPECT_DOUBLE_EQ(*r.ci_low, 1.0);
}

TEST(Matrix, UpperTriangleInInputOrder) {
  const auto sup = read_judgment_table(table_path("support", "few"), "support", "few");
  std::vector<JudgmentVector> llms = {column(sup, "saullm"), column(sup, "mistral"), column(sup, "llama")};
  const auto m = agreement_matrix(llms, 1000, 4);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[0].a, "saullm");
  EXPECT_EQ(m[0].b, "mistral");
  EXPECT_EQ(m[2].a, "mistral");
  EXPECT_EQ(m[2].b, "llama");
  EXPECT_NEAR(*m[2].result.kappa, 0.36, 0.005);
  for (const auto& p : m) {
    const auto& a = column(llms, p.a);
    const auto& b = column(llms, p.b);
    EXPECT_NEAR(*cohen_kappa(b, a).kappa, *p.result.kappa, 1e-12);
    EXPECT_LE(*p.result.ci_low, *p.result.ci_high);
  }
}

TEST(Matrix, ThreeCopiesAgreePerfectly) {
  const auto v = make(random_labels(20, 8));
  auto w = v, x = v;
  w.judge_id = "w";
  x.judge_id = "x";
  for (const auto& p : agreement_matrix({v, w, x}, 1000, 2)) EXPECT_DOUBLE_EQ(*p.result.kappa, 1.0);
}

TEST(Table, ReadsAllJudgeColumns) {
  const auto vs = read_judgment_table(table_path("support", "single"), "support", "single");
  ASSERT_EQ(vs.size(), 4u);
  EXPECT_EQ(vs[0].judge_id, "expert_b");
  EXPECT_EQ(vs[0].criterion, "support");
  EXPECT_EQ(vs[0].mode, "single");
  EXPECT_EQ(vs[0].keys.size(), 30u);
  EXPECT_EQ(vs[0].keys[0], "001-94578|MARC");
}

TEST(Table, RejectsMalformedInput) {
  testkit::TempDir dir("tables");
  std::ofstream(dir / "bad_header.tsv") << "case_id\tsource\tx\n";
  std::ofstream(dir / "bad_label.tsv") << "source\tcase_id\tx\nMARC\t1\tMaybe\n";
  std::ofstream(dir / "short.tsv") << "source\tcase_id\tx\ty\nMARC\t1\tSupport\n";
  EXPECT_THROW(read_judgment_table(dir / "bad_header.tsv", "support", "single"), ValidationError);
  EXPECT_THROW(read_judgment_table(dir / "bad_label.tsv", "support", "single"), ValidationError);
  EXPECT_THROW(read_judgment_table(dir / "short.tsv", "support", "single"), ValidationError);
  EXPECT_THROW(read_judgment_table(dir / "absent.tsv", "support", "single"), ValidationError);
}

TEST(Align, RestrictsToSharedKeys) {
  JudgmentVector a = make({1, 0, 1, 1}, "a");
  JudgmentVector b;
  b.judge_id = "b";
  b.keys = {"k3", "zz", "k0"};
  b.labels = {0, 1, 1};
  const auto [x, y] = align(a, b);
  EXPECT_EQ(x.keys, (std::vector<std::string>{"k0", "k3"}));
  EXPECT_EQ(y.keys, x.keys);
  EXPECT_EQ(x.labels, (std::vector<int>{1, 1}));
  EXPECT_EQ(y.labels, (std::vector<int>{1, 0}));
}

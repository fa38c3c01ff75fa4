#include "inteval/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "inteval/error.hpp"
#include "inteval/judge.hpp"

namespace inteval::agreement {

namespace {

struct Counts {
  double p_o = 0.0;
  double p_e = 0.0;
};

Counts counts(const std::vector<int>& a, const std::vector<int>& b,
              const std::vector<std::size_t>* idx) {
  const std::size_t n = idx ? idx->size() : a.size();
  double agree = 0.0, a1 = 0.0, b1 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = idx ? (*idx)[k] : k;
    agree += a[i] == b[i];
    a1 += a[i];
    b1 += b[i];
  }
  const double dn = static_cast<double>(n);
  Counts c;
  c.p_o = agree / dn;
  c.p_e = (a1 / dn) * (b1 / dn) + (1.0 - a1 / dn) * (1.0 - b1 / dn);
  return c;
}

std::optional<double> kappa_of(const Counts& c) {
  if (std::abs(1.0 - c.p_e) < 1e-12) return std::nullopt;
  return (c.p_o - c.p_e) / (1.0 - c.p_e);
}

void check_pair(const JudgmentVector& a, const JudgmentVector& b) {
  INTEVAL_EXPECT(a.labels.size() == b.labels.size(), "judgment vectors differ in length");
  INTEVAL_EXPECT(a.keys == b.keys, "judgment vectors are not aligned by key");
  INTEVAL_EXPECT(a.labels.size() >= 2, "kappa needs at least two items");
  for (const auto* v : {&a, &b})
    for (int l : v->labels) INTEVAL_EXPECT(l == 0 || l == 1, "labels must be binary");
}

// Linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

AgreementResult cohen_kappa(const JudgmentVector& a, const JudgmentVector& b) {
  check_pair(a, b);
  const Counts c = counts(a.labels, b.labels, nullptr);
  AgreementResult r;
  r.n = static_cast<int>(a.labels.size());
  r.p_o = c.p_o;
  r.p_e = c.p_e;
  r.kappa = kappa_of(c);
  return r;
}

void bootstrap_ci(const JudgmentVector& a, const JudgmentVector& b, int resamples,
                  std::uint64_t seed, AgreementResult& result, ExecutionPolicy policy) {
  check_pair(a, b);
  INTEVAL_EXPECT(resamples >= 1000, "bootstrap needs at least 1000 resamples");
  const std::size_t n = a.labels.size();
  std::vector<std::optional<double>> kappas(static_cast<std::size_t>(resamples));
  for_each_index(kappas.size(), policy, [&](std::size_t r) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(r + 1)));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng);
    kappas[r] = kappa_of(counts(a.labels, b.labels, &idx));
  });
  std::vector<double> valid;
  for (const auto& k : kappas)
    if (k) valid.push_back(*k);
  result.resamples = resamples;
  result.skipped = resamples - static_cast<int>(valid.size());
  result.ci_low.reset();
  result.ci_high.reset();
  if (valid.empty()) return;
  std::sort(valid.begin(), valid.end());
  result.ci_low = quantile(valid, 0.025);
  result.ci_high = quantile(valid, 0.975);
}

std::vector<PairResult> agreement_matrix(const std::vector<JudgmentVector>& vectors,
                                         int resamples, std::uint64_t seed,
                                         ExecutionPolicy policy) {
  INTEVAL_EXPECT(vectors.size() >= 2, "agreement matrix needs at least two judges");
  std::vector<PairResult> out;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      PairResult p{vectors[i].judge_id, vectors[j].judge_id, cohen_kappa(vectors[i], vectors[j])};
      if (resamples > 0) bootstrap_ci(vectors[i], vectors[j], resamples, seed, p.result, policy);
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<JudgmentVector> read_judgment_table(const std::filesystem::path& path,
                                                const std::string& criterion,
                                                const std::string& mode) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open judgment table " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "source" || header[1] != "case_id")
    throw ValidationError(path.string() + ": header must start with source, case_id");
  std::vector<std::size_t> judge_cols;
  std::vector<JudgmentVector> out;
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c] == "article") continue;
    judge_cols.push_back(c);
    out.push_back({header[c], criterion, mode, {}, {}});
  }
  const judge::Criterion crit = judge::criterion_from_string(criterion);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ValidationError(fmt::format("{}:{}: expected {} columns", path.string(), lineno,
                                        header.size()));
    const std::string key = cells[1] + "|" + cells[0];
    for (std::size_t k = 0; k < judge_cols.size(); ++k) {
      const judge::Answer a = judge::answer_from_string(cells[judge_cols[k]]);
      if (judge::criterion_of(a) != crit)
        throw ValidationError(fmt::format("{}:{}: '{}' is not a {} label", path.string(), lineno,
                                          cells[judge_cols[k]], criterion));
      out[k].keys.push_back(key);
      out[k].labels.push_back(judge::binary(a));
    }
  }
  return out;
}

std::pair<JudgmentVector, JudgmentVector> align(const JudgmentVector& a, const JudgmentVector& b) {
  std::map<std::string, int> b_labels;
  for (std::size_t i = 0; i < b.keys.size(); ++i) b_labels[b.keys[i]] = b.labels[i];
  JudgmentVector ra{a.judge_id, a.criterion, a.mode, {}, {}};
  JudgmentVector rb{b.judge_id, b.criterion, b.mode, {}, {}};
  for (std::size_t i = 0; i < a.keys.size(); ++i) {
    auto it = b_labels.find(a.keys[i]);
    if (it == b_labels.end()) continue;
    ra.keys.push_back(a.keys[i]);
    ra.labels.push_back(a.labels[i]);
    rb.keys.push_back(a.keys[i]);
    rb.labels.push_back(it->second);
  }
  return {ra, rb};
}

}  // namespace inteval::agreement

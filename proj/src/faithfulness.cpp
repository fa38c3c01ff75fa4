#include "inteval/faithfulness.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "inteval/error.hpp"
#include "inteval/transformer.hpp"

namespace inteval::faithfulness {

using model::MaskSpec;

double sufficiency(double p_full, double p_keep) { return 1.0 - std::max(0.0, p_full - p_keep); }

double comprehensiveness(double p_full, double p_removed) {
  return std::max(0.0, p_full - p_removed);
}

namespace {

Normalized clamp_unit(double raw) {
  Normalized n;
  n.raw = raw;
  n.value = std::clamp(raw, 0.0, 1.0);
  n.clamped = n.value != raw;
  return n;
}

}  // namespace

Normalized normalize_sufficiency(double suff, double suff0) {
  if (suff0 >= 1.0) {
    Normalized n;
    n.value = n.raw = suff;
    n.degenerate = true;
    return n;
  }
  return clamp_unit((suff - suff0) / (1.0 - suff0));
}

Normalized normalize_comprehensiveness(double comp, double suff0) {
  const double comp0 = 1.0 - suff0;
  if (comp0 <= 0.0) {
    Normalized n;
    n.value = n.raw = comp;
    n.degenerate = true;
    return n;
  }
  return clamp_unit(comp / comp0);
}

DocumentRow score_document(const model::Classifier& model, const model::ChunkedInput& input,
                           const RationaleSet& rationale, const std::string& technique) {
  std::vector<Span> spans = rationale.spans;
  normalize_spans(spans, input.token_count());
  const auto full = model.predict(input);
  const auto y = static_cast<std::size_t>(full.predicted);
  const auto keep = MaskSpec::keep_only(spans);
  const auto removed = MaskSpec::remove(spans);
  const auto empty = MaskSpec::keep_none();

  DocumentRow row;
  row.case_id = input.case_id;
  row.technique = technique;
  row.predicted = full.predicted;
  row.p_full = full.probs[y];
  row.p_keep = model.predict(input, &keep).probs[y];
  row.p_removed = model.predict(input, &removed).probs[y];
  row.p_empty = model.predict(input, &empty).probs[y];
  row.suff0 = sufficiency(row.p_full, row.p_empty);
  row.comp0 = 1.0 - row.suff0;
  row.norm_suff = normalize_sufficiency(sufficiency(row.p_full, row.p_keep), row.suff0);
  row.norm_comp = normalize_comprehensiveness(comprehensiveness(row.p_full, row.p_removed), row.suff0);
  row.rationale_tokens = rationale.token_count();
  return row;
}

RationaleSet random_control(const RationaleSet& reference, std::size_t tokens, std::uint64_t seed) {
  RationaleSet out;
  out.case_id = reference.case_id;
  out.technique = Technique::kRandom;
  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  for (const auto& s : reference.spans) {
    lengths.push_back(s.length());
    total += s.length();
  }
  INTEVAL_EXPECT(total <= tokens, "reference rationales exceed the document");
  std::mt19937_64 rng(splitmix64(seed ^ hash_string(reference.case_id.data(), reference.case_id.size())));
  std::shuffle(lengths.begin(), lengths.end(), rng);
  // Uniform placement: choose where the free tokens fall between the spans.
  std::uniform_int_distribution<std::size_t> gap(0, tokens - total);
  std::vector<std::size_t> offsets(lengths.size());
  for (auto& o : offsets) o = gap(rng);
  std::sort(offsets.begin(), offsets.end());
  std::size_t consumed = 0;
  for (std::size_t k = 0; k < lengths.size(); ++k) {
    const std::size_t start = offsets[k] + consumed;
    out.spans.push_back({start, start + lengths[k]});
    consumed += lengths[k];
  }
  return out;
}

F1Result f1_metrics(const model::Classifier& model, const std::vector<EvalDoc>& docs,
                    const std::map<std::string, RationaleSet>& rationales,
                    ExecutionPolicy policy) {
  F1Result r;
  std::vector<const EvalDoc*> usable;
  for (const auto& d : docs) {
    if (rationales.count(d.input->case_id)) {
      usable.push_back(&d);
    } else {
      r.missing.push_back(d.input->case_id);
    }
  }
  std::vector<ClassId> gold(usable.size()), keep(usable.size()), removed(usable.size());
  for_each_index(usable.size(), policy, [&](std::size_t i) {
    const EvalDoc& d = *usable[i];
    const auto& spans = rationales.at(d.input->case_id).spans;
    const auto k = MaskSpec::keep_only(spans);
    const auto m = MaskSpec::remove(spans);
    gold[i] = d.gold;
    keep[i] = model.predict(*d.input, &k).predicted;
    removed[i] = model.predict(*d.input, &m).predicted;
  });
  r.evaluated = static_cast<int>(usable.size());
  r.f1_suff = model::macro_f1(gold, keep);
  r.f1_comp = model::macro_f1(gold, removed);
  return r;
}

Summary summarize(const std::string& technique, const std::vector<DocumentRow>& rows) {
  Summary s;
  s.technique = technique;
  for (const auto& r : rows) {
    if (r.technique != technique) continue;
    ++s.n;
    s.mean_norm_suff += r.norm_suff.value;
    s.mean_norm_comp += r.norm_comp.value;
    s.clamp_events += static_cast<int>(r.norm_suff.clamped) + static_cast<int>(r.norm_comp.clamped);
    s.degenerate += static_cast<int>(r.norm_suff.degenerate || r.norm_comp.degenerate);
  }
  if (s.n > 0) {
    s.mean_norm_suff /= s.n;
    s.mean_norm_comp /= s.n;
  }
  return s;
}

MetricReport evaluate_technique(const model::Classifier& model, const std::string& technique,
                                const std::vector<EvalDoc>& docs,
                                const std::map<std::string, RationaleSet>& archive,
                                std::uint64_t control_seed, ExecutionPolicy policy) {
  std::vector<std::string> missing;
  for (const auto& d : docs)
    if (!archive.count(d.input->case_id)) missing.push_back(d.input->case_id);
  if (!missing.empty())
    throw ValidationError(fmt::format("{} rationale archive lacks {} test documents: {}", technique,
                                      missing.size(), fmt::join(missing, ", ")));

  const std::string control_name = "RANDOM";
  std::map<std::string, RationaleSet> controls;
  for (const auto& d : docs) {
    const auto& id = d.input->case_id;
    controls[id] = random_control(archive.at(id), d.input->token_count(), control_seed);
  }

  const std::size_t n = docs.size();
  std::vector<DocumentRow> rows(2 * n);
  for_each_index(2 * n, policy, [&](std::size_t i) {
    const EvalDoc& d = docs[i % n];
    const auto& id = d.input->case_id;
    rows[i] = i < n ? score_document(model, *d.input, archive.at(id), technique)
                    : score_document(model, *d.input, controls.at(id), control_name);
  });

  MetricReport report;
  report.control_seed = control_seed;
  report.rows = std::move(rows);
  report.technique = summarize(technique, report.rows);
  report.control = summarize(control_name, report.rows);
  const F1Result f1 = f1_metrics(model, docs, archive, policy);
  report.technique.f1_suff = f1.f1_suff;
  report.technique.f1_comp = f1.f1_comp;
  const F1Result f1c = f1_metrics(model, docs, controls, policy);
  report.control.f1_suff = f1c.f1_suff;
  report.control.f1_comp = f1c.f1_comp;
  return report;
}

int superset_violations(const model::Classifier& model, const model::ChunkedInput& input,
                        const RationaleSet& rationale, int samples, double eps,
                        std::uint64_t seed) {
  const std::size_t n = input.token_count();
  const double base = score_document(model, input, rationale, "R").norm_suff.value;
  std::vector<bool> in(n, false);
  for (const auto& s : rationale.spans)
    for (std::size_t i = s.start; i < s.end; ++i) in[i] = true;
  std::vector<std::size_t> outside;
  for (std::size_t i = 0; i < n; ++i)
    if (!in[i]) outside.push_back(i);
  if (outside.empty()) return 0;

  std::mt19937_64 rng(seed);
  int violations = 0;
  for (int s = 0; s < samples; ++s) {
    std::uniform_int_distribution<std::size_t> count(1, outside.size());
    std::vector<std::size_t> pool = outside;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(count(rng));
    std::vector<bool> mark = in;
    for (auto i : pool) mark[i] = true;
    RationaleSet bigger;
    bigger.case_id = rationale.case_id;
    for (std::size_t i = 0; i < n;) {
      if (!mark[i]) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n && mark[j]) ++j;
      bigger.spans.push_back({i, j});
      i = j;
    }
    if (score_document(model, input, bigger, "R+").norm_suff.value < base - eps) ++violations;
  }
  return violations;
}

void write_report(const MetricReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write report " + path.string());
  out << "case_id\ttechnique\tnorm_suff\tnorm_comp\tp_full\tp_keep\tp_removed\tp_empty\t"
         "rationale_tokens\tclamped\tdegenerate\n";
  for (const auto& r : report.rows) {
    out << fmt::format("{}\t{}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\t{}\t{}\t{}\n",
                       r.case_id, r.technique, r.norm_suff.value, r.norm_comp.value, r.p_full,
                       r.p_keep, r.p_removed, r.p_empty, r.rationale_tokens,
                       static_cast<int>(r.norm_suff.clamped) + static_cast<int>(r.norm_comp.clamped),
                       r.norm_suff.degenerate || r.norm_comp.degenerate ? 1 : 0);
  }
  auto summary_json = [](const Summary& s) {
    return nlohmann::json{{"technique", s.technique},       {"n", s.n},
                          {"mean_norm_suff", s.mean_norm_suff}, {"mean_norm_comp", s.mean_norm_comp},
                          {"f1_suff", s.f1_suff},           {"f1_comp", s.f1_comp},
                          {"clamp_events", s.clamp_events}, {"degenerate", s.degenerate}};
  };
  const nlohmann::json meta = {{"technique", summary_json(report.technique)},
                               {"control", summary_json(report.control)},
                               {"control_seed", report.control_seed},
                               {"masking", "pad substitution"}};
  std::ofstream(path.string() + ".json") << meta.dump(2) << '\n';
}

}  // namespace inteval::faithfulness

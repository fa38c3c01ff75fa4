#include "inteval/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/spdlog.h>

#include "inteval/agreement.hpp"
#include "inteval/annotate.hpp"
#include "inteval/archive.hpp"
#include "inteval/attribution.hpp"
#include "inteval/error.hpp"
#include "inteval/faithfulness.hpp"
#include "inteval/isr.hpp"
#include "inteval/judge.hpp"
#include "inteval/marc.hpp"

namespace inteval::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::vector<std::string>>& default_needs() {
  static const std::map<std::string, std::vector<std::string>> needs = {
      {"corpus", {}},
      {"fit", {"corpus"}},
      {"attribute", {"corpus", "fit"}},
      {"extract_isr", {"corpus", "fit", "attribute"}},
      {"extract_marc", {"corpus", "fit"}},
      {"evaluate", {"corpus", "fit", "extract_isr", "extract_marc"}},
      {"judge", {"corpus", "extract_isr", "extract_marc"}},
      {"agree", {"judge"}},
  };
  return needs;
}

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::string hash_text(const std::string& s) { return hex(hash_string(s.data(), s.size())); }

template <class T>
T param(const json& params, const char* key, T fallback) {
  return params.contains(key) ? params[key].get<T>() : fallback;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const json& j, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

// Everything a stage needs while running.
struct Context {
  fs::path root;
  std::uint64_t seed;
  const json& params;
  spdlog::logger& log;

  fs::path at(const std::string& rel) const { return root / rel; }
};

corpus::LoadedCorpus load(const Context& ctx) {
  return corpus::load_corpus(ctx.at("corpus/manifest.json"));
}

model::Checkpoint checkpoint(const Context& ctx) { return model::load_checkpoint(ctx.at("model")); }

// Documents explained and evaluated downstream: test split, predicted VIOLATION
// unless the stage asks for every prediction.
std::vector<PreparedDoc> population(const Context& ctx, const corpus::LoadedCorpus& c,
                                    const model::Checkpoint& ck) {
  const bool all = param<std::string>(ctx.params, "population", "violation") == "all";
  return prepare_documents(c, ck, c.manifest.split.test, !all);
}

// --- stages ------------------------------------------------------------------

void run_corpus(const Context& ctx) {
  const json& p = ctx.params;
  std::vector<CaseDocument> docs;
  std::vector<RationaleSet> expert;
  const std::string source = param<std::string>(p, "source", "fixture");
  if (source == "fixture") {
    corpus::FixtureSpec spec;
    const json f = param<json>(p, "fixture", json::object());
    spec.num_docs = param(f, "num_docs", spec.num_docs);
    spec.min_len = param(f, "min_len", spec.min_len);
    spec.max_len = param(f, "max_len", spec.max_len);
    spec.cue_len = param(f, "cue_len", spec.cue_len);
    spec.filler_vocab = param(f, "filler_vocab", spec.filler_vocab);
    spec.cue_vocab = param(f, "cue_vocab", spec.cue_vocab);
    for (auto& fd : corpus::make_fixture_corpus(spec, ctx.seed)) {
      if (fd.cue) expert.push_back({fd.doc.case_id, Technique::kExpert, {*fd.cue}, 0.0, "planted"});
      docs.push_back(std::move(fd.doc));
    }
  } else if (source == "directory") {
    docs = corpus::read_case_directory(p.at("cases_dir").get<std::string>());
    if (p.contains("expert_rationales"))
      expert = archive::read_rationales(p["expert_rationales"].get<std::string>());
  } else {
    throw ConfigError("corpus.source must be 'fixture' or 'directory'");
  }

  const auto rules = p.contains("rules") ? corpus::load_rules(p["rules"].get<std::string>())
                                         : corpus::default_rules();
  const auto labels = corpus::label_corpus(docs, rules);
  std::vector<corpus::LabeledDoc> kept;
  std::map<std::string, int> excluded;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (labels[i].value == LabelValue::kExcluded) {
      ++excluded[std::string(to_string(*labels[i].exclusion_reason))];
      continue;
    }
    kept.push_back({&docs[i], labels[i].value});
  }
  for (const auto& [reason, n] : excluded) ctx.log.info("excluded {} cases: {}", n, reason);

  corpus::Manifest m;
  m.config.seed = ctx.seed;
  m.config.tolerance_pp = param(p, "tolerance_pp", m.config.tolerance_pp);
  m.split = corpus::balance_corpus(kept, m.config);
  for (const auto& w : m.split.warnings) ctx.log.warn("{}", w);
  m.cases_file = "cases.jsonl";
  std::vector<CaseDocument> out;
  for (const auto& k : kept) {
    m.labels[k.doc->case_id] = k.label;
    out.push_back(*k.doc);
  }
  corpus::write_cases(out, ctx.at("corpus/cases.jsonl"));
  corpus::write_manifest(m, ctx.at("corpus/manifest.json"));
  archive::write_rationales(expert, ctx.at("corpus/rationales_expert.jsonl"));
  ctx.log.info("{} positives, {} negatives, {} train / {} dev / {} test", m.split.positives,
               m.split.negatives, m.split.train.size(), m.split.dev.size(), m.split.test.size());
}

void run_fit(const Context& ctx) {
  const json& p = ctx.params;
  const auto c = load(ctx);
  std::vector<std::vector<std::string>> texts;
  for (const auto& id : c.manifest.split.train) texts.push_back(c.at(id).facts);
  const Vocabulary vocab = Vocabulary::build(texts);

  model::TransformerConfig mc;
  mc.vocab_size = vocab.size();
  mc.d_model = param(p, "d_model", mc.d_model);
  mc.heads = param(p, "heads", mc.heads);
  mc.max_chunk_len = param(p, "max_chunk_len", mc.max_chunk_len);
  mc.seed = ctx.seed;
  model::TrainConfig tc;
  tc.epochs = param(p, "epochs", tc.epochs);
  tc.batch_size = param(p, "batch_size", tc.batch_size);
  tc.learning_rate = param(p, "learning_rate", tc.learning_rate);
  tc.token_dropout = param(p, "token_dropout", tc.token_dropout);
  tc.seed = splitmix64(ctx.seed);

  const auto train = make_examples(c, vocab, c.manifest.split.train, mc.max_chunk_len);
  const auto test = make_examples(c, vocab, c.manifest.split.test, mc.max_chunk_len);
  model::TransformerClassifier clf(mc);
  const auto report = clf.fit(train, test, tc);
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e)
    ctx.log.info("epoch {} loss {:.5f}", e + 1, report.epoch_loss[e]);
  ctx.log.info("test macro-F1 {:.4f}", report.test.macro_f1);
  model::save_checkpoint(ctx.at("model"), clf, vocab, tc);
  write_json({{"macro_f1", report.test.macro_f1},
              {"accuracy", report.test.accuracy},
              {"per_article_f1", report.test.per_article_f1},
              {"n", report.test.n},
              {"epoch_loss", report.epoch_loss}},
             ctx.at("model/eval.json"));
}

void run_attribute(const Context& ctx) {
  const json& p = ctx.params;
  const auto c = load(ctx);
  const auto ck = checkpoint(ctx);
  attribution::AttributionConfig cfg;
  cfg.seed = ctx.seed;
  cfg.ig_steps = param(p, "ig_steps", cfg.ig_steps);
  cfg.lime_samples = param(p, "lime_samples", cfg.lime_samples);
  std::vector<attribution::Method> methods(attribution::kAllMethods.begin(),
                                           attribution::kAllMethods.end());
  if (p.contains("methods")) {
    methods.clear();
    for (const auto& m : p["methods"]) methods.push_back(attribution::method_from_string(m.get<std::string>()));
  }
  std::vector<attribution::TokenScores> out;
  for (const auto& d : population(ctx, c, ck)) {
    for (auto m : methods) out.push_back(attribution::attribute(ck.model, d.input, m, cfg));
  }
  ctx.log.info("{} score vectors", out.size());
  archive::write_scores(out, ctx.at("attribution/scores.jsonl"));
}

void run_extract_isr(const Context& ctx) {
  const json& p = ctx.params;
  const auto c = load(ctx);
  const auto ck = checkpoint(ctx);
  const auto scores = archive::scores_by_case(archive::read_scores(ctx.at("attribution/scores.jsonl")));
  isr::IsrConfig cfg;
  cfg.mode = isr::selection_mode_from_string(param<std::string>(p, "mode", "sufficiency"));
  cfg.budget_fraction = param(p, "budget_fraction", cfg.budget_fraction);
  cfg.max_length_fraction = param(p, "max_length_fraction", cfg.max_length_fraction);
  cfg.min_length = param(p, "min_length", cfg.min_length);
  cfg.weight_by_chunk_attention = param(p, "weight_by_chunk_attention", false);
  std::vector<RationaleSet> out;
  int fallbacks = 0;
  for (const auto& d : population(ctx, c, ck)) {
    auto it = scores.find(d.doc->case_id);
    if (it == scores.end())
      throw ValidationError("no attribution scores for " + d.doc->case_id + " (stage 'attribute')");
    auto sel = isr::select_rationales(ck.model, d.input, it->second, cfg);
    fallbacks += sel.fallback;
    out.push_back(std::move(sel.rationale));
  }
  if (fallbacks) ctx.log.warn("{} documents used the length-5 fallback", fallbacks);
  archive::write_rationales(out, ctx.at("rationales/isr.jsonl"));
}

void run_extract_marc(const Context& ctx) {
  const json& p = ctx.params;
  const auto c = load(ctx);
  const auto ck = checkpoint(ctx);
  marc::MarcConfig cfg;
  cfg.steps = param(p, "steps", cfg.steps);
  cfg.learning_rate = param(p, "learning_rate", cfg.learning_rate);
  cfg.binarize_threshold = param(p, "threshold", cfg.binarize_threshold);
  cfg.alpha_lambda = param(p, "alpha_lambda", cfg.alpha_lambda);
  cfg.alpha_sigma = param(p, "alpha_sigma", cfg.alpha_sigma);
  cfg.validate();
  std::vector<RationaleSet> out;
  for (const auto& d : population(ctx, c, ck)) {
    const auto mask = marc::optimize_mask(ck.model, d.input, cfg,
                                          ctx.seed ^ hash_string(d.doc->case_id.data(), d.doc->case_id.size()));
    out.push_back(marc::binarize(mask, cfg.binarize_threshold, d.doc->case_id));
  }
  archive::write_rationales(out, ctx.at("rationales/marc.jsonl"));
}

std::vector<std::string> techniques(const json& params) {
  return param<std::vector<std::string>>(params, "techniques", {"ISR", "MARC"});
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

void run_evaluate(const Context& ctx) {
  const auto c = load(ctx);
  const auto ck = checkpoint(ctx);
  const auto docs = population(ctx, c, ck);
  std::vector<faithfulness::EvalDoc> eval;
  for (const auto& d : docs) eval.push_back({&d.input, d.gold});
  for (const auto& t : techniques(ctx.params)) {
    const Technique tech = technique_from_string(t);
    const auto file = tech == Technique::kExpert ? fs::path("corpus/rationales_expert.jsonl")
                                                 : fs::path("rationales") / (lower(t) + ".jsonl");
    const auto sets = archive::rationales_by_case(archive::read_rationales(ctx.at(file.string())), tech);
    const auto report = faithfulness::evaluate_technique(ck.model, t, eval, sets, ctx.seed);
    ctx.log.info("{}: NormSuff {:.4f} NormComp {:.4f} (RANDOM {:.4f} / {:.4f})", t,
                 report.technique.mean_norm_suff, report.technique.mean_norm_comp,
                 report.control.mean_norm_suff, report.control.mean_norm_comp);
    faithfulness::write_report(report, ctx.at("reports/" + lower(t) + ".tsv"));
  }
}

std::string join_tokens(const CaseDocument& doc, const Span& s) {
  std::string out;
  for (std::size_t i = s.start; i < s.end; ++i) {
    if (i > s.start) out += ' ';
    out += doc.facts[i];
  }
  return out;
}

// Offline stand-in judge for fixture runs: answers from planted-cue overlap,
// flipping a seeded share of its verdicts.
judge::Answer oracle_answer(const RationaleSet& r, const Span& cue,
                            judge::Criterion criterion) {
  std::size_t inside = 0;
  for (const auto& s : r.spans)
    inside += std::min(s.end, cue.end) > std::max(s.start, cue.start)
                  ? std::min(s.end, cue.end) - std::max(s.start, cue.start)
                  : 0;
  if (criterion == judge::Criterion::kSupport)
    return inside > 0 ? judge::Answer::kSupport : judge::Answer::kDoNotSupport;
  return 2 * inside >= cue.length() ? judge::Answer::kSufficient : judge::Answer::kInsufficient;
}

void run_judge(const Context& ctx) {
  const json& p = ctx.params;
  const auto c = load(ctx);
  const auto expert = archive::rationales_by_case(
      archive::read_rationales(ctx.at("corpus/rationales_expert.jsonl")), Technique::kExpert);
  const auto isr_sets = archive::rationales_by_case(archive::read_rationales(ctx.at("rationales/isr.jsonl")),
                                                    Technique::kIsr);
  const auto marc_sets = archive::rationales_by_case(
      archive::read_rationales(ctx.at("rationales/marc.jsonl")), Technique::kMarc);

  const int per_article = param(p, "cases_per_article", 5);
  std::map<int, int> taken;
  std::vector<judge::GridCase> cases;
  judge::ShotLabels labels;
  // Oracle answers per (case, source, criterion), used for shots and offline judges.
  for (const auto& id : c.manifest.split.test) {
    if (!expert.count(id) || !isr_sets.count(id) || !marc_sets.count(id)) continue;
    const CaseDocument& doc = c.at(id);
    const int article = annotate::primary_article(doc);
    if ((article != 6 && article != 8) || taken[article] >= per_article) continue;
    ++taken[article];
    judge::GridCase gc{id, article, {}};
    const Span cue = expert.at(id).spans.front();
    const std::pair<judge::Source, const RationaleSet*> sources[] = {
        {judge::Source::kMarc, &marc_sets.at(id)},
        {judge::Source::kIsr, &isr_sets.at(id)},
        {judge::Source::kExpertA, &expert.at(id)}};
    for (const auto& [src, set] : sources) {
      for (const auto& s : set->spans) gc.rationales[src].push_back(join_tokens(doc, s));
      for (auto crit : {judge::Criterion::kSupport, judge::Criterion::kSufficiency})
        labels[{id, src, crit}] = oracle_answer(*set, cue, crit);
    }
    cases.push_back(std::move(gc));
  }
  std::vector<judge::GridCase> usable;
  for (const auto& gc : cases)
    if (taken[gc.article] >= 5) usable.push_back(gc);
  if (usable.empty()) throw CorpusError("judge stage needs at least five cases of one article");
  const auto tasks = judge::build_grid(usable, labels);
  judge::write_tasks(tasks, ctx.at("judge/tasks.jsonl"));
  ctx.log.info("{} tasks over {} cases", tasks.size(), usable.size());

  judge::PanelConfig panel;
  panel.temperatures = param(p, "temperatures", panel.temperatures);
  std::vector<std::shared_ptr<judge::ChatClient>> clients;
  const fs::path cache = ctx.at("judge/cache");
  if (p.contains("endpoints")) {
    for (const auto& e : judge::load_endpoints(p["endpoints"].get<std::string>()))
      clients.push_back(std::make_shared<judge::CachingClient>(
          cache, e.id, std::make_shared<judge::HttpChatClient>(e)));
  } else {
    std::map<std::string, const judge::JudgeTask*> by_prompt;
    for (const auto& t : tasks) by_prompt[judge::build_prompt(t)] = &t;
    const json offline = param<json>(p, "offline_judges",
                                     json::array({{{"id", "oracle"}, {"flip", 0.0}},
                                                  {{"id", "noisy-a"}, {"flip", 0.15}},
                                                  {{"id", "noisy-b"}, {"flip", 0.3}}}));
    for (const auto& jd : offline) {
      const std::string jid = jd.at("id").get<std::string>();
      const double flip = jd.value("flip", 0.0);
      const std::uint64_t jseed = ctx.seed ^ hash_string(jid.data(), jid.size());
      auto fn = [by_prompt, labels, flip, jseed](const std::string& prompt, double temp, int) {
        const judge::JudgeTask& t = *by_prompt.at(prompt);
        judge::Answer a = labels.at({t.case_id, t.source, t.criterion});
        const std::uint64_t h =
            splitmix64(jseed ^ hash_string(prompt.data(), prompt.size()) ^
                       static_cast<std::uint64_t>(temp * 1000));
        if (static_cast<double>(h >> 11) * 0x1.0p-53 < flip) {
          a = t.criterion == judge::Criterion::kSupport
                  ? (a == judge::Answer::kSupport ? judge::Answer::kDoNotSupport : judge::Answer::kSupport)
                  : (a == judge::Answer::kSufficient ? judge::Answer::kInsufficient
                                                     : judge::Answer::kSufficient);
        }
        return fmt::format("Answer: {}\nConfidence: {}\nExplanation: offline fixture judge.",
                           judge::to_string(a), h % 3 == 0 ? "Medium" : "High");
      };
      clients.push_back(std::make_shared<judge::CachingClient>(
          cache, jid, std::make_shared<judge::FunctionClient>(jid, fn)));
    }
  }

  std::vector<judge::PanelResult> results;
  for (const auto& client : clients) {
    auto r = judge::run_panel(tasks, *client, panel);
    const auto unavailable = std::count_if(r.begin(), r.end(), [](const auto& x) { return x.unavailable(); });
    if (unavailable) ctx.log.warn("{}: {} UNAVAILABLE results", client->id(), unavailable);
    results.insert(results.end(), r.begin(), r.end());
  }
  judge::write_panel_results(results, ctx.at("judge/panel.jsonl"));

  // Reference column in the judgment-table layout, one file per criterion.
  for (auto crit : {judge::Criterion::kSupport, judge::Criterion::kSufficiency}) {
    std::ofstream out(ctx.at(fmt::format("judge/reference_{}.tsv", lower(std::string(judge::to_string(crit))))));
    out << "source\tcase_id\treference\tarticle\n";
    for (const auto& gc : usable)
      for (const auto& [src, texts] : gc.rationales)
        out << judge::to_string(src) << '\t' << gc.case_id << '\t'
            << judge::to_string(labels.at({gc.case_id, src, crit})) << '\t' << gc.article << '\n';
  }
}

json result_json(const agreement::AgreementResult& r) {
  json j = {{"p_o", r.p_o}, {"p_e", r.p_e}, {"n", r.n}, {"resamples", r.resamples}, {"skipped", r.skipped}};
  j["kappa"] = r.kappa ? json(*r.kappa) : json(nullptr);
  j["ci_low"] = r.ci_low ? json(*r.ci_low) : json(nullptr);
  j["ci_high"] = r.ci_high ? json(*r.ci_high) : json(nullptr);
  return j;
}

void run_agree(const Context& ctx) {
  const json& p = ctx.params;
  const int resamples = param(p, "resamples", 1000);
  const auto results = judge::read_panel_results(ctx.at("judge/panel.jsonl"));
  json out = json::array();
  for (auto crit : {judge::Criterion::kSupport, judge::Criterion::kSufficiency}) {
    for (auto mode : {judge::ShotMode::kZero, judge::ShotMode::kFew}) {
      const std::string crit_name(judge::to_string(crit));
      const std::string mode_name(judge::to_string(mode));
      std::vector<agreement::JudgmentVector> vectors = agreement::read_judgment_table(
          ctx.at(fmt::format("judge/reference_{}.tsv", lower(crit_name))), crit_name, mode_name);
      std::map<std::string, std::size_t> slot;
      for (const auto& r : results) {
        if (r.criterion != crit || r.mode != mode || r.unavailable()) continue;
        auto [it, fresh] = slot.emplace(r.judge_id, vectors.size());
        if (fresh) vectors.push_back({r.judge_id, crit_name, mode_name, {}, {}});
        auto& v = vectors[it->second];
        v.keys.push_back(r.case_id + "|" + std::string(judge::to_string(r.source)));
        v.labels.push_back(judge::binary(*r.majority));
      }
      for (const auto& pr : agreement::agreement_matrix(vectors, resamples, ctx.seed)) {
        out.push_back({{"criterion", crit_name}, {"mode", mode_name}, {"a", pr.a}, {"b", pr.b},
                       {"result", result_json(pr.result)}});
      }
    }
  }
  write_json(out, ctx.at("agreement/agreement.json"));
  ctx.log.info("{} judge pairs", out.size());
}

using StageFn = void (*)(const Context&);

StageFn stage_fn(const std::string& name) {
  static const std::map<std::string, StageFn> fns = {
      {"corpus", run_corpus},         {"fit", run_fit},
      {"attribute", run_attribute},   {"extract_isr", run_extract_isr},
      {"extract_marc", run_extract_marc}, {"evaluate", run_evaluate},
      {"judge", run_judge},           {"agree", run_agree},
  };
  return fns.at(name);
}

}  // namespace

const std::vector<std::string>& known_stages() {
  static const std::vector<std::string> names = {"corpus",       "fit",      "attribute", "extract_isr",
                                                 "extract_marc", "evaluate", "judge",     "agree"};
  return names;
}

std::vector<std::string> stage_outputs(const std::string& stage, const json& params) {
  if (stage == "corpus") return {"corpus/cases.jsonl", "corpus/manifest.json", "corpus/rationales_expert.jsonl"};
  if (stage == "fit") return {"model/config.json", "model/vocab.txt", "model/weights.bin", "model/eval.json"};
  if (stage == "attribute") return {"attribution/scores.jsonl"};
  if (stage == "extract_isr") return {"rationales/isr.jsonl"};
  if (stage == "extract_marc") return {"rationales/marc.jsonl"};
  if (stage == "evaluate") {
    std::vector<std::string> out;
    for (const auto& t : techniques(params)) {
      out.push_back("reports/" + lower(t) + ".tsv");
      out.push_back("reports/" + lower(t) + ".tsv.json");
    }
    return out;
  }
  if (stage == "judge")
    return {"judge/tasks.jsonl", "judge/panel.jsonl", "judge/reference_support.tsv",
            "judge/reference_sufficiency.tsv"};
  if (stage == "agree") return {"agreement/agreement.json"};
  throw ConfigError("unknown stage '" + stage + "'");
}

std::string producer_of(const std::string& artifact) {
  for (const auto& s : known_stages()) {
    const auto outs = stage_outputs(s, json::object());
    if (std::find(outs.begin(), outs.end(), artifact) != outs.end()) return s;
  }
  if (artifact.rfind("reports/", 0) == 0) return "evaluate";
  return "";
}

namespace {

// Files a stage reads, relative to the run directory.
std::vector<std::string> stage_inputs(const std::string& stage, const json& params) {
  const std::vector<std::string> corpus = {"corpus/cases.jsonl", "corpus/manifest.json"};
  const std::vector<std::string> model = {"model/config.json", "model/vocab.txt", "model/weights.bin"};
  auto cat = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  if (stage == "corpus") return {};
  if (stage == "fit") return corpus;
  if (stage == "attribute" || stage == "extract_marc") return cat(corpus, model);
  if (stage == "extract_isr") return cat(cat(corpus, model), {"attribution/scores.jsonl"});
  if (stage == "evaluate") {
    auto in = cat(corpus, model);
    for (const auto& t : techniques(params))
      in.push_back(technique_from_string(t) == Technique::kExpert ? "corpus/rationales_expert.jsonl"
                                                                  : "rationales/" + lower(t) + ".jsonl");
    return in;
  }
  if (stage == "judge")
    return cat(corpus, {"corpus/rationales_expert.jsonl", "rationales/isr.jsonl", "rationales/marc.jsonl"});
  if (stage == "agree")
    return {"judge/panel.jsonl", "judge/reference_support.tsv", "judge/reference_sufficiency.tsv"};
  throw ConfigError("unknown stage '" + stage + "'");
}

}  // namespace

std::string content_hash(const fs::path& file) { return hash_text(read_file(file)); }

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out", c.out_dir.string());
  if (!j.contains("stages")) {
    for (const auto& s : known_stages()) c.stages.push_back({s, default_needs().at(s), json::object()});
    return c;
  }
  for (const auto& s : j.at("stages")) {
    StageSpec spec;
    if (s.is_string()) {
      spec.name = s.get<std::string>();
    } else {
      spec.name = s.at("name").get<std::string>();
      spec.params = s;
      spec.params.erase("name");
      spec.params.erase("needs");
    }
    if (!default_needs().count(spec.name)) throw ConfigError("unknown stage '" + spec.name + "'");
    spec.needs = s.is_object() && s.contains("needs") ? s["needs"].get<std::vector<std::string>>()
                                                      : default_needs().at(spec.name);
    c.stages.push_back(std::move(spec));
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read pipeline config " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

PipelineConfig PipelineConfig::fixture(const fs::path& out_dir, std::uint64_t seed) {
  json j = {{"seed", seed},
            {"out", out_dir.string()},
            {"stages",
             {{{"name", "corpus"}, {"source", "fixture"}, {"fixture", {{"num_docs", 200}}}},
              {{"name", "fit"}},
              {{"name", "attribute"}},
              {{"name", "extract_isr"}},
              {{"name", "extract_marc"}},
              {{"name", "evaluate"}},
              {{"name", "judge"}},
              {{"name", "agree"}}}}};
  return from_json(j);
}

void PipelineConfig::restrict_to(const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (!find(n)) throw ConfigError("stage '" + n + "' is not configured");
  std::erase_if(stages, [&](const StageSpec& s) {
    return std::find(names.begin(), names.end(), s.name) == names.end();
  });
}

const StageSpec* PipelineConfig::find(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<std::string> stage_order(const PipelineConfig& config) {
  std::map<std::string, std::vector<std::string>> edges;  // enabled deps only
  std::map<std::string, int> indegree;
  for (const auto& s : config.stages) {
    if (!default_needs().count(s.name)) throw ConfigError("unknown stage '" + s.name + "'");
    if (indegree.count(s.name)) throw ConfigError("stage '" + s.name + "' listed twice");
    indegree[s.name] = 0;
  }
  for (const auto& s : config.stages) {
    for (const auto& d : s.needs) {
      if (!default_needs().count(d)) throw ConfigError("stage '" + s.name + "' needs unknown stage '" + d + "'");
      if (!indegree.count(d)) continue;
      edges[d].push_back(s.name);
      ++indegree[s.name];
    }
  }
  // Kahn's algorithm, breaking ties by configuration order.
  std::vector<std::string> order;
  std::set<std::string> done;
  while (order.size() < config.stages.size()) {
    const StageSpec* next = nullptr;
    for (const auto& s : config.stages)
      if (!done.count(s.name) && indegree[s.name] == 0) {
        next = &s;
        break;
      }
    if (!next) {
      std::string cycle;
      for (const auto& s : config.stages)
        if (!done.count(s.name)) cycle += (cycle.empty() ? "" : ", ") + s.name;
      throw ConfigError("stage dependencies form a cycle among: " + cycle);
    }
    done.insert(next->name);
    order.push_back(next->name);
    for (const auto& m : edges[next->name]) --indegree[m];
  }
  return order;
}

json RunManifest::to_json() const {
  json stages_json = json::array();
  for (const auto& s : stages)
    stages_json.push_back({{"name", s.name},
                           {"hash", s.hash},
                           {"status", s.skipped ? "skipped" : "ran"},
                           {"seconds", s.seconds},
                           {"artifacts", s.artifacts},
                           {"log", s.log}});
  return {{"seed", seed}, {"stages", stages_json}};
}

RunManifest run_pipeline(const PipelineConfig& config) {
  const auto order = stage_order(config);
  const fs::path root = config.out_dir;
  fs::create_directories(root / "logs");

  // Every input must exist already or come from an enabled upstream stage.
  std::set<std::string> will_produce;
  for (const auto& name : order) {
    const StageSpec& spec = *config.find(name);
    for (const auto& in : stage_inputs(name, spec.params)) {
      if (will_produce.count(in) || fs::exists(root / in)) continue;
      const std::string producer = producer_of(in);
      throw ConfigError(fmt::format("stage '{}' needs {} which does not exist; run stage '{}' first",
                                    name, (root / in).string(), producer.empty() ? "?" : producer));
    }
    for (const auto& out : stage_outputs(name, spec.params)) will_produce.insert(out);
  }

  RunManifest manifest;
  manifest.seed = config.seed;
  for (const auto& name : order) {
    const StageSpec& spec = *config.find(name);
    StageRecord rec;
    rec.name = name;
    rec.log = "logs/" + name + ".log";

    std::string key = fmt::format("{}|{}|{}", name, config.seed, spec.params.dump());
    for (const auto& in : stage_inputs(name, spec.params)) key += "|" + in + "=" + content_hash(root / in);
    rec.hash = hash_text(key);

    const fs::path state = root / "logs" / (name + ".state.json");
    const auto outputs = stage_outputs(name, spec.params);
    if (fs::exists(state)) {
      std::ifstream in(state);
      const json prev = json::parse(in, nullptr, false);
      bool same = !prev.is_discarded() && prev.value("hash", "") == rec.hash;
      for (const auto& out : outputs) {
        if (!same) break;
        same = fs::exists(root / out) && prev["artifacts"].value(out, "") == content_hash(root / out);
      }
      if (same) {
        rec.skipped = true;
        rec.artifacts = prev["artifacts"].get<std::map<std::string, std::string>>();
        spdlog::info("[{}] up to date, skipped", name);
        manifest.stages.push_back(std::move(rec));
        continue;
      }
    }

    auto sink = std::make_shared<spdlog::sinks::basic_file_sink_mt>((root / rec.log).string(), true);
    std::vector<spdlog::sink_ptr> sinks = spdlog::default_logger()->sinks();
    sinks.push_back(sink);
    spdlog::logger log(name, sinks.begin(), sinks.end());
    log.set_level(spdlog::level::info);
    log.flush_on(spdlog::level::info);
    log.info("seed {} params {}", config.seed, spec.params.dump());
    const auto t0 = std::chrono::steady_clock::now();
    try {
      stage_fn(name)(Context{root, config.seed, spec.params, log});
    } catch (const std::exception& e) {
      log.error("{}", e.what());
      throw Error(fmt::format("stage '{}' failed: {} (log: {})", name, e.what(), (root / rec.log).string()));
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& out : outputs) {
      if (!fs::exists(root / out))
        throw Error(fmt::format("stage '{}' did not write {} (log: {})", name, out, (root / rec.log).string()));
      rec.artifacts[out] = content_hash(root / out);
    }
    write_json({{"hash", rec.hash}, {"artifacts", rec.artifacts}}, state);
    log.info("done in {:.2f}s", rec.seconds);
    manifest.stages.push_back(std::move(rec));
  }
  write_json(manifest.to_json(), root / "run_manifest.json");
  return manifest;
}

std::vector<model::Example> make_examples(const corpus::LoadedCorpus& corpus, const Vocabulary& vocab,
                                          const std::vector<std::string>& ids,
                                          std::size_t max_chunk_len) {
  std::vector<model::Example> out;
  for (const auto& id : ids) {
    const CaseDocument& doc = corpus.at(id);
    const auto label = corpus.manifest.labels.at(id);
    out.push_back({model::chunk_document(doc, vocab, max_chunk_len),
                   label == LabelValue::kViolation ? kViolationClass : kNoViolationClass,
                   std::to_string(annotate::primary_article(doc))});
  }
  return out;
}

std::vector<PreparedDoc> prepare_documents(const corpus::LoadedCorpus& corpus,
                                           const model::Checkpoint& checkpoint,
                                           const std::vector<std::string>& ids,
                                           bool violation_only) {
  const auto examples = make_examples(corpus, checkpoint.vocab, ids,
                                      static_cast<std::size_t>(checkpoint.model.config().max_chunk_len));
  std::vector<PreparedDoc> out(examples.size());
  for_each_index(examples.size(), ExecutionPolicy::kParallel, [&](std::size_t i) {
    out[i] = {&corpus.at(ids[i]), examples[i].input, examples[i].label,
              checkpoint.model.predict(examples[i].input).predicted};
  });
  if (violation_only)
    std::erase_if(out, [](const PreparedDoc& d) { return d.predicted != kViolationClass; });
  return out;
}

}  // namespace inteval::pipeline

// Command-line entry point: one subcommand per pipeline stage plus the full
// pipeline runner.
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "inteval/agreement.hpp"
#include "inteval/annotate.hpp"
#include "inteval/archive.hpp"
#include "inteval/attribution.hpp"
#include "inteval/corpus.hpp"
#include "inteval/error.hpp"
#include "inteval/faithfulness.hpp"
#include "inteval/isr.hpp"
#include "inteval/judge.hpp"
#include "inteval/marc.hpp"
#include "inteval/pipeline.hpp"
#include "inteval/transformer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace inteval;

namespace {

struct Globals {
  std::uint64_t seed = 7;
  std::string config;
  std::string out = ".";
};

json load_config(const Globals& g) {
  if (g.config.empty()) return json::object();
  std::ifstream in(g.config);
  if (!in) throw ConfigError("cannot read config " + g.config);
  return json::parse(in);
}

template <class T>
T cfg(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j[key].get<T>() : fallback;
}

std::vector<pipeline::PreparedDoc> population(const corpus::LoadedCorpus& c,
                                              const model::Checkpoint& ck, bool all) {
  return pipeline::prepare_documents(c, ck, c.manifest.split.test, !all);
}

annotate::AnnotationServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rationale extraction and faithfulness evaluation for judgment classifiers"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Global seed")->capture_default_str();
  app.add_option("--config", g.config, "JSON file with stage parameters");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "Label, screen and balance a case corpus");
  corpus_cmd->require_subcommand(1);
  auto* build = corpus_cmd->add_subcommand("build", "Build a corpus from a directory of case records");
  std::string cases_dir, rules_file;
  double tolerance = 2.0;
  build->add_option("--cases", cases_dir, "Directory of .json/.jsonl case records")->required();
  build->add_option("--rules", rules_file, "Filter rule file (defaults to the shipped rules)");
  build->add_option("--tolerance", tolerance, "Marginal tolerance in percentage points")->capture_default_str();
  auto* fixture = corpus_cmd->add_subcommand("fixture", "Generate the planted-cue fixture corpus");
  int num_docs = 200;
  fixture->add_option("--num-docs", num_docs)->capture_default_str();

  // model
  auto* model_cmd = app.add_subcommand("model", "Train or evaluate the classifier");
  model_cmd->require_subcommand(1);
  std::string manifest, checkpoint_dir = "model";
  auto* fit = model_cmd->add_subcommand("fit", "Train on the train split, report on test");
  fit->add_option("--corpus", manifest, "Corpus manifest")->required();
  auto* eval = model_cmd->add_subcommand("eval", "Macro-F1 on the test split");
  eval->add_option("--corpus", manifest, "Corpus manifest")->required();
  eval->add_option("--checkpoint", checkpoint_dir)->capture_default_str();

  // attribute
  auto* attr = app.add_subcommand("attribute", "Token attribution scores");
  std::vector<std::string> methods;
  bool all_docs = false;
  attr->add_option("--method", methods, "Method(s); all when omitted");
  attr->add_option("--corpus", manifest)->required();
  attr->add_option("--checkpoint", checkpoint_dir)->capture_default_str();
  attr->add_flag("--all-predictions", all_docs, "Explain every test document, not only VIOLATION");

  // extract
  auto* extract = app.add_subcommand("extract", "Rationale extraction");
  extract->require_subcommand(1);
  auto* isr_cmd = extract->add_subcommand("isr", "Instance-specific rationale selection");
  std::string scores_dir, mode = "sufficiency";
  isr_cmd->add_option("--corpus", manifest)->required();
  isr_cmd->add_option("--checkpoint", checkpoint_dir)->capture_default_str();
  isr_cmd->add_option("--scores", scores_dir, "Directory holding scores.jsonl")->required();
  isr_cmd->add_option("--mode", mode)->check(CLI::IsMember({"sufficiency", "comprehensiveness"}))->capture_default_str();
  isr_cmd->add_flag("--all-predictions", all_docs);
  auto* marc_cmd = extract->add_subcommand("marc", "Soft-mask rationale optimization");
  marc::MarcConfig marc_cfg;
  marc_cmd->add_option("--corpus", manifest)->required();
  marc_cmd->add_option("--checkpoint", checkpoint_dir)->capture_default_str();
  marc_cmd->add_option("--steps", marc_cfg.steps)->capture_default_str();
  marc_cmd->add_option("--threshold", marc_cfg.binarize_threshold)->capture_default_str();
  marc_cmd->add_flag("--all-predictions", all_docs);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Faithfulness metrics against a RANDOM control");
  std::string technique, rationale_dir;
  evaluate->add_option("--technique", technique)->required();
  evaluate->add_option("--corpus", manifest)->required();
  evaluate->add_option("--checkpoint", checkpoint_dir)->capture_default_str();
  evaluate->add_option("--rationales", rationale_dir, "Directory holding <technique>.jsonl")->required();
  evaluate->add_flag("--all-predictions", all_docs);

  // judge
  auto* judge_cmd = app.add_subcommand("judge", "LLM judge panel");
  judge_cmd->require_subcommand(1);
  auto* judge_run = judge_cmd->add_subcommand("run", "Run every task against every configured judge");
  std::string tasks_file, judges_file, shots = "zero", cache_dir;
  judge_run->add_option("--tasks", tasks_file)->required();
  judge_run->add_option("--judges", judges_file, "Endpoint configuration")->required();
  judge_run->add_option("--shots", shots)->check(CLI::IsMember({"zero", "few"}))->capture_default_str();
  judge_run->add_option("--cache", cache_dir, "Response cache (default <out>/cache)");
  bool replay = false;
  judge_run->add_flag("--replay", replay, "Answer from the cache only");

  // agree
  auto* agree = app.add_subcommand("agree", "Cohen's kappa between two judges");
  std::string table, judge_a, judge_b, criterion = "support";
  int resamples = 10000;
  agree->add_option("--table", table, "Judgment table (tab-separated)")->required();
  agree->add_option("--a", judge_a)->required();
  agree->add_option("--b", judge_b)->required();
  agree->add_option("--criterion", criterion)->capture_default_str();
  agree->add_option("--shots", shots)->capture_default_str();
  agree->add_option("--resamples", resamples)->capture_default_str();

  // annotate
  auto* annotate_cmd = app.add_subcommand("annotate", "Expert annotation service");
  annotate_cmd->require_subcommand(1);
  auto* serve = annotate_cmd->add_subcommand("serve", "Serve annotation tasks over HTTP");
  int port = 8080;
  std::string journal, host = "127.0.0.1";
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--tasks", tasks_file, "Task file (JSON lines)")->required();
  serve->add_option("--journal", journal, "Judgment journal (default <out>/judgments.jsonl)");
  auto* make_tasks = annotate_cmd->add_subcommand("tasks", "Create annotation tasks from rationale archives");
  std::vector<std::string> archives;
  bool highlighted = false;
  make_tasks->add_option("--corpus", manifest)->required();
  make_tasks->add_option("--rationales", archives, "Rationale archive file(s)")->required();
  make_tasks->add_flag("--highlighted", highlighted, "Also create full-text presentations");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run the stage pipeline");
  std::vector<std::string> only;
  bool use_fixture = false;
  pipe->add_option("--stages", only, "Run only these stages");
  pipe->add_flag("--fixture", use_fixture, "Use the fixture configuration instead of --config");

  CLI11_PARSE(app, argc, argv);

  try {
    const json conf = load_config(g);
    const fs::path out = g.out;

    if (*build || *fixture) {
      pipeline::PipelineConfig pc;
      pc.seed = g.seed;
      pc.out_dir = out;
      json params = conf;
      if (*build) {
        params["source"] = "directory";
        params["cases_dir"] = cases_dir;
        if (!rules_file.empty()) params["rules"] = rules_file;
        params["tolerance_pp"] = tolerance;
      } else {
        params["source"] = "fixture";
        params["fixture"]["num_docs"] = num_docs;
      }
      pc.stages.push_back({"corpus", {}, params});
      pipeline::run_pipeline(pc);
      std::cout << (out / "corpus/manifest.json").string() << '\n';
      return 0;
    }

    if (*fit) {
      // The fit stage reads <out>/corpus; point it at the given manifest.
      pipeline::PipelineConfig pc;
      pc.seed = g.seed;
      pc.out_dir = out;
      const fs::path want = fs::absolute(out / "corpus/manifest.json");
      if (fs::weakly_canonical(manifest) != fs::weakly_canonical(want)) {
        fs::create_directories(out / "corpus");
        const auto c = corpus::load_corpus(manifest);
        corpus::write_cases(c.docs, out / "corpus/cases.jsonl");
        auto m = c.manifest;
        m.cases_file = "cases.jsonl";
        corpus::write_manifest(m, want);
      }
      pc.stages.push_back({"fit", {}, conf});
      pipeline::run_pipeline(pc);
      std::ifstream in(out / "model/eval.json");
      std::cout << json::parse(in).dump(2) << '\n';
      return 0;
    }

    const auto corpus_data = manifest.empty() ? corpus::LoadedCorpus{} : corpus::load_corpus(manifest);

    if (*eval) {
      const auto ck = model::load_checkpoint(checkpoint_dir);
      const auto test = pipeline::make_examples(corpus_data, ck.vocab, corpus_data.manifest.split.test,
                                                ck.model.config().max_chunk_len);
      const auto r = model::evaluate_classifier(ck.model, test);
      json j = {{"macro_f1", r.macro_f1}, {"accuracy", r.accuracy}, {"per_article_f1", r.per_article_f1}, {"n", r.n}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }

    if (*attr) {
      const auto ck = model::load_checkpoint(checkpoint_dir);
      attribution::AttributionConfig ac;
      ac.seed = g.seed;
      ac.ig_steps = cfg(conf, "ig_steps", ac.ig_steps);
      ac.lime_samples = cfg(conf, "lime_samples", ac.lime_samples);
      std::vector<attribution::Method> ms;
      for (const auto& m : methods) ms.push_back(attribution::method_from_string(m));
      if (ms.empty()) ms.assign(attribution::kAllMethods.begin(), attribution::kAllMethods.end());
      std::vector<attribution::TokenScores> scores;
      for (const auto& d : population(corpus_data, ck, all_docs))
        for (auto m : ms) scores.push_back(attribution::attribute(ck.model, d.input, m, ac));
      archive::write_scores(scores, out / "scores.jsonl");
      std::cout << (out / "scores.jsonl").string() << '\n';
      return 0;
    }

    if (*isr_cmd) {
      const auto ck = model::load_checkpoint(checkpoint_dir);
      const auto scores = archive::scores_by_case(archive::read_scores(fs::path(scores_dir) / "scores.jsonl"));
      isr::IsrConfig ic;
      ic.mode = isr::selection_mode_from_string(mode);
      ic.budget_fraction = cfg(conf, "budget_fraction", ic.budget_fraction);
      std::vector<RationaleSet> sets;
      for (const auto& d : population(corpus_data, ck, all_docs)) {
        auto it = scores.find(d.doc->case_id);
        if (it == scores.end()) throw ValidationError("no scores for " + d.doc->case_id);
        sets.push_back(isr::select_rationales(ck.model, d.input, it->second, ic).rationale);
      }
      archive::write_rationales(sets, out / "isr.jsonl");
      std::cout << (out / "isr.jsonl").string() << '\n';
      return 0;
    }

    if (*marc_cmd) {
      const auto ck = model::load_checkpoint(checkpoint_dir);
      marc_cfg.validate();
      std::vector<RationaleSet> sets;
      for (const auto& d : population(corpus_data, ck, all_docs)) {
        const auto& id = d.doc->case_id;
        const auto mask = marc::optimize_mask(ck.model, d.input, marc_cfg, g.seed ^ hash_string(id.data(), id.size()));
        sets.push_back(marc::binarize(mask, marc_cfg.binarize_threshold, id));
      }
      archive::write_rationales(sets, out / "marc.jsonl");
      std::cout << (out / "marc.jsonl").string() << '\n';
      return 0;
    }

    if (*evaluate) {
      const Technique tech = technique_from_string(technique);
      std::string stem = technique;
      std::transform(stem.begin(), stem.end(), stem.begin(), [](unsigned char ch) { return std::tolower(ch); });
      const fs::path file = fs::path(rationale_dir) / (stem + ".jsonl");
      if (!fs::exists(file))
        throw ConfigError(fmt::format("rationale archive {} not found; produce it with `inteval extract {}`",
                                      file.string(), stem));
      const auto ck = model::load_checkpoint(checkpoint_dir);
      const auto docs = population(corpus_data, ck, all_docs);
      std::vector<faithfulness::EvalDoc> ed;
      for (const auto& d : docs) ed.push_back({&d.input, d.gold});
      const auto report = faithfulness::evaluate_technique(
          ck.model, std::string(to_string(tech)), ed,
          archive::rationales_by_case(archive::read_rationales(file), tech), g.seed);
      faithfulness::write_report(report, out / (stem + ".tsv"));
      fmt::print("{}\tNormSuff {:.4f}\tNormComp {:.4f}\tF1-Suff {:.4f}\tF1-Comp {:.4f}\n", technique,
                 report.technique.mean_norm_suff, report.technique.mean_norm_comp, report.technique.f1_suff,
                 report.technique.f1_comp);
      fmt::print("RANDOM\tNormSuff {:.4f}\tNormComp {:.4f}\n", report.control.mean_norm_suff,
                 report.control.mean_norm_comp);
      return 0;
    }

    if (*judge_run) {
      auto tasks = judge::read_tasks(tasks_file);
      const auto want = judge::shot_mode_from_string(shots);
      std::erase_if(tasks, [&](const judge::JudgeTask& t) { return t.mode() != want; });
      judge::PanelConfig panel;
      panel.temperatures = cfg(conf, "temperatures", panel.temperatures);
      const fs::path cache = cache_dir.empty() ? out / "cache" : fs::path(cache_dir);
      std::vector<judge::PanelResult> results;
      for (const auto& e : judge::load_endpoints(judges_file)) {
        std::shared_ptr<judge::ChatClient> inner;
        if (!replay) inner = std::make_shared<judge::HttpChatClient>(e);
        judge::CachingClient client(cache, e.id, inner);
        auto r = judge::run_panel(tasks, client, panel);
        results.insert(results.end(), r.begin(), r.end());
      }
      judge::write_panel_results(results, out / "panel.jsonl");
      std::cout << (out / "panel.jsonl").string() << '\n';
      return 0;
    }

    if (*agree) {
      const auto vectors = agreement::read_judgment_table(table, criterion, shots);
      auto pick = [&](const std::string& id) {
        for (const auto& v : vectors)
          if (v.judge_id == id) return v;
        throw ValidationError("table has no judge column '" + id + "'");
      };
      const auto [a, b] = agreement::align(pick(judge_a), pick(judge_b));
      auto r = agreement::cohen_kappa(a, b);
      agreement::bootstrap_ci(a, b, resamples, g.seed, r);
      fmt::print("{} vs {} ({}, {}): kappa {} [{}, {}] n={} p_o={:.4f} p_e={:.4f}\n", judge_a, judge_b, criterion,
                 shots, r.kappa ? fmt::format("{:.3f}", *r.kappa) : "undefined",
                 r.ci_low ? fmt::format("{:.3f}", *r.ci_low) : "-", r.ci_high ? fmt::format("{:.3f}", *r.ci_high) : "-",
                 r.n, r.p_o, r.p_e);
      return 0;
    }

    if (*make_tasks) {
      std::map<std::string, CaseDocument> docs;
      for (const auto& d : corpus_data.docs) docs[d.case_id] = d;
      std::vector<RationaleSet> sets;
      for (const auto& a : archives) {
        auto more = archive::read_rationales(a);
        sets.insert(sets.end(), more.begin(), more.end());
      }
      const auto tasks = annotate::create_tasks(docs, sets, highlighted);
      fs::create_directories(out);
      std::ofstream f(out / "annotation_tasks.jsonl");
      for (const auto& t : tasks) f << annotate::to_json(t).dump() << '\n';
      std::cout << (out / "annotation_tasks.jsonl").string() << '\n';
      return 0;
    }

    if (*serve) {
      std::vector<annotate::AnnotationTask> tasks;
      std::ifstream in(tasks_file);
      if (!in) throw ConfigError("cannot read " + tasks_file);
      for (std::string line; std::getline(in, line);)
        if (!line.empty()) tasks.push_back(annotate::task_from_json(json::parse(line)));
      fs::create_directories(out);
      annotate::AnnotationStore store(std::move(tasks),
                                      journal.empty() ? out / "judgments.jsonl" : fs::path(journal));
      const char* token = std::getenv("INTEVAL_ANNOTATE_TOKEN");
      annotate::AnnotationServer server(store, token ? token : "");
      if (!server.bind(host, port)) throw ConfigError(fmt::format("cannot bind {}:{}", host, port));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      spdlog::info("serving {} tasks on http://{}:{}", store.tasks().size(), host, port);
      server.listen_after_bind();
      return 0;
    }

    if (*pipe) {
      auto pc = use_fixture || g.config.empty() ? pipeline::PipelineConfig::fixture(out, g.seed)
                                                : pipeline::PipelineConfig::from_json(conf);
      if (app.get_option("--seed")->count()) pc.seed = g.seed;
      if (app.get_option("--out")->count()) pc.out_dir = out;
      if (!only.empty()) pc.restrict_to(only);
      const auto m = pipeline::run_pipeline(pc);
      for (const auto& s : m.stages)
        fmt::print("{:<13} {} {}\n", s.name, s.skipped ? "skipped" : "ran    ", s.hash);
      return 0;
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

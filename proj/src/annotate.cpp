#include "inteval/annotate.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <mutex>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "inteval/error.hpp"

namespace inteval::annotate {

using json = nlohmann::json;

namespace {

std::string_view presentation_name(Presentation p) {
  return p == Presentation::kRationalesOnly ? "RATIONALES_ONLY" : "HIGHLIGHTED_FULL_TEXT";
}

Presentation presentation_from(const std::string& s) {
  if (s == "RATIONALES_ONLY") return Presentation::kRationalesOnly;
  if (s == "HIGHLIGHTED_FULL_TEXT") return Presentation::kHighlightedFullText;
  throw ValidationError("unknown presentation '" + s + "'");
}

constexpr std::pair<Subcategory, std::string_view> kSubcategories[] = {
    {Subcategory::kRelevantButUnsupportive, "RELEVANT_BUT_UNSUPPORTIVE"},
    {Subcategory::kSupportsContrary, "SUPPORTS_CONTRARY"},
    {Subcategory::kIrrelevant, "IRRELEVANT"},
    {Subcategory::kIncompleteConflict, "INCOMPLETE_CONFLICT"},
};

std::string_view subcategory_name(Subcategory s) {
  for (const auto& [k, v] : kSubcategories)
    if (k == s) return v;
  return "?";
}

Subcategory subcategory_from(const std::string& s) {
  for (const auto& [k, v] : kSubcategories)
    if (v == s) return k;
  throw ValidationError("unknown local-support subcategory '" + s + "'");
}

std::string now_utc() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                  std::chrono::system_clock::now())));
}

json global_json(const std::optional<GlobalJudgment>& g) {
  if (!g) return nullptr;
  json j = {{"answer", judge::to_string(g->answer)}};
  j["confidence"] = g->confidence ? json(judge::to_string(*g->confidence)) : json(nullptr);
  return j;
}

std::optional<GlobalJudgment> global_from(const json& j, const char* field) {
  if (!j.contains(field) || j[field].is_null()) return std::nullopt;
  const json& g = j[field];
  if (!g.is_object() || !g.contains("answer"))
    throw ValidationError(std::string(field) + " needs an answer");
  GlobalJudgment out;
  out.answer = judge::answer_from_string(g["answer"].get<std::string>());
  if (g.contains("confidence") && !g["confidence"].is_null())
    out.confidence = judge::confidence_from_string(g["confidence"].get<std::string>());
  return out;
}

}  // namespace

// --- tasks -------------------------------------------------------------------

std::vector<RationaleUnit> rationale_units(const CaseDocument& doc, const std::vector<Span>& spans) {
  std::vector<Span> sorted = spans;
  normalize_spans(sorted, doc.facts.size());
  std::vector<RationaleUnit> units;
  for (const Span& s : sorted) {
    if (!units.empty() && units.back().span.end == s.start) {
      units.back().span.end = s.end;
    } else {
      units.push_back({s, {}});
    }
  }
  for (auto& u : units) {
    for (std::size_t i = u.span.start; i < u.span.end; ++i) {
      if (i > u.span.start) u.text += ' ';
      u.text += doc.facts[i];
    }
  }
  return units;
}

judge::Source source_of(Technique t) {
  switch (t) {
    case Technique::kIsr: return judge::Source::kIsr;
    case Technique::kMarc: return judge::Source::kMarc;
    case Technique::kExpert: return judge::Source::kExpertA;
    case Technique::kRandom: break;
  }
  throw ValidationError("RANDOM rationales are not annotated");
}

int primary_article(const CaseDocument& doc) {
  for (const char* a : {"6", "8"})
    if (doc.articles.count(a)) return std::stoi(a);
  for (const auto& [a, o] : doc.articles)
    if (!a.empty() && std::isdigit(static_cast<unsigned char>(a[0]))) return std::stoi(a);
  return 0;
}

std::vector<AnnotationTask> create_tasks(const std::map<std::string, CaseDocument>& docs,
                                         const std::vector<RationaleSet>& archive,
                                         bool highlighted) {
  std::vector<AnnotationTask> tasks;
  for (const auto& rs : archive) {
    auto it = docs.find(rs.case_id);
    if (it == docs.end()) throw ValidationError("rationales for unknown case " + rs.case_id);
    const CaseDocument& doc = it->second;
    AnnotationTask t;
    t.case_id = rs.case_id;
    t.source = source_of(rs.technique);
    t.article = primary_article(doc);
    t.units = rationale_units(doc, rs.spans);
    t.empty_set = t.units.empty();
    t.id = fmt::format("{}:{}:R", t.case_id, judge::to_string(t.source));
    for (std::size_t k = 0; k < t.units.size(); ++k) {
      if (k) t.rendered += "\n\n";
      t.rendered += t.units[k].text;
    }
    tasks.push_back(t);
    if (!highlighted) continue;

    AnnotationTask h = t;
    h.presentation = Presentation::kHighlightedFullText;
    h.id = fmt::format("{}:{}:H", t.case_id, judge::to_string(t.source));
    h.rendered.clear();
    std::size_t unit = 0;
    std::size_t next_para = 0;
    for (std::size_t i = 0; i < doc.facts.size(); ++i) {
      while (next_para < doc.paragraph_starts.size() && doc.paragraph_starts[next_para] < i) ++next_para;
      if (i > 0) {
        const bool para = next_para < doc.paragraph_starts.size() && doc.paragraph_starts[next_para] == i;
        h.rendered += para ? "\n\n" : " ";
      }
      if (unit < h.units.size() && h.units[unit].span.start == i) h.rendered += "[[";
      h.rendered += doc.facts[i];
      if (unit < h.units.size() && h.units[unit].span.end == i + 1) {
        h.rendered += "]]";
        ++unit;
      }
    }
    tasks.push_back(std::move(h));
  }
  return tasks;
}

void validate(const ExpertJudgment& j, const AnnotationTask& task) {
  if (j.annotator.empty()) throw ValidationError("annotator is required");
  auto check_global = [&](const std::optional<GlobalJudgment>& g, judge::Criterion c,
                          const char* name) {
    if (!g) return;
    if (judge::criterion_of(g->answer) != c)
      throw ValidationError(fmt::format("{} answer '{}' belongs to another criterion", name,
                                        judge::to_string(g->answer)));
    if (!g->confidence && !j.imported)
      throw ValidationError(fmt::format("{} needs a confidence level", name));
  };
  check_global(j.global_support, judge::Criterion::kSupport, "global_support");
  check_global(j.global_sufficiency, judge::Criterion::kSufficiency, "global_sufficiency");
  for (const auto& l : j.local_support) {
    if (l.has_confidence) throw ValidationError("local support takes no confidence level");
    if (l.unit >= task.units.size())
      throw ValidationError(fmt::format("local support refers to unit {} of {}", l.unit,
                                        task.units.size()));
    if (l.answer == LocalAnswer::kDoNotSupport && !l.subcategory)
      throw ValidationError("local Do Not Support needs a subcategory");
    if (l.answer == LocalAnswer::kSupports && l.subcategory)
      throw ValidationError("subcategories apply to Do Not Support only");
  }
  if (j.ex_post_sufficiency && judge::criterion_of(*j.ex_post_sufficiency) != judge::Criterion::kSufficiency)
    throw ValidationError("ex-post sufficiency must be Sufficient or Insufficient");
  if (!j.global_support && !j.global_sufficiency && j.local_support.empty() && !j.ex_post_sufficiency)
    throw ValidationError("judgment carries no answers");
}

json to_json(const AnnotationTask& t) {
  json units = json::array();
  for (const auto& u : t.units)
    units.push_back({{"start", u.span.start}, {"end", u.span.end}, {"text", u.text}});
  return {{"id", t.id},
          {"case_id", t.case_id},
          {"source", judge::to_string(t.source)},
          {"article", t.article},
          {"presentation", presentation_name(t.presentation)},
          {"units", units},
          {"rendered", t.rendered},
          {"empty_set", t.empty_set}};
}

json to_json(const ExpertJudgment& j) {
  json local = json::array();
  for (const auto& l : j.local_support) {
    json item = {{"unit", l.unit},
                 {"answer", l.answer == LocalAnswer::kSupports ? "Supports" : "Do Not Support"}};
    if (l.subcategory) item["subcategory"] = subcategory_name(*l.subcategory);
    local.push_back(std::move(item));
  }
  json out = {{"task_id", j.task_id},
              {"annotator", j.annotator},
              {"global_support", global_json(j.global_support)},
              {"global_sufficiency", global_json(j.global_sufficiency)},
              {"local_support", local},
              {"started_at", j.started_at},
              {"submitted_at", j.submitted_at},
              {"version", j.version},
              {"current", j.current},
              {"imported", j.imported}};
  out["ex_post_sufficiency"] =
      j.ex_post_sufficiency ? json(judge::to_string(*j.ex_post_sufficiency)) : json(nullptr);
  return out;
}

AnnotationTask task_from_json(const json& in) {
  try {
    AnnotationTask t;
    t.id = in.at("id").get<std::string>();
    t.case_id = in.at("case_id").get<std::string>();
    t.source = judge::source_from_string(in.at("source").get<std::string>());
    t.article = in.value("article", 0);
    t.presentation = presentation_from(in.value("presentation", "RATIONALES_ONLY"));
    for (const auto& u : in.value("units", json::array()))
      t.units.push_back({{u.at("start").get<std::size_t>(), u.at("end").get<std::size_t>()},
                         u.value("text", "")});
    t.rendered = in.value("rendered", "");
    t.empty_set = t.units.empty();
    return t;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed task: ") + e.what());
  }
}

ExpertJudgment judgment_from_json(const json& in) {
  if (!in.is_object()) throw ValidationError("judgment must be a JSON object");
  try {
    ExpertJudgment j;
    j.task_id = in.at("task_id").get<std::string>();
    j.annotator = in.value("annotator", "");
    j.global_support = global_from(in, "global_support");
    j.global_sufficiency = global_from(in, "global_sufficiency");
    for (const auto& item : in.value("local_support", json::array())) {
      LocalJudgment l;
      l.unit = item.at("unit").get<std::size_t>();
      const std::string a = item.at("answer").get<std::string>();
      if (a == "Supports" || a == "Support" || a == "SUPPORTS") {
        l.answer = LocalAnswer::kSupports;
      } else if (a == "Do Not Support" || a == "DNS" || a == "DO_NOT_SUPPORT") {
        l.answer = LocalAnswer::kDoNotSupport;
      } else {
        throw ValidationError("unknown local answer '" + a + "'");
      }
      if (item.contains("subcategory") && !item["subcategory"].is_null())
        l.subcategory = subcategory_from(item["subcategory"].get<std::string>());
      l.has_confidence = item.contains("confidence") && !item["confidence"].is_null();
      j.local_support.push_back(l);
    }
    if (in.contains("ex_post_sufficiency") && !in["ex_post_sufficiency"].is_null())
      j.ex_post_sufficiency = judge::answer_from_string(in["ex_post_sufficiency"].get<std::string>());
    j.started_at = in.value("started_at", "");
    j.submitted_at = in.value("submitted_at", "");
    j.version = in.value("version", 0);
    j.current = in.value("current", false);
    j.imported = in.value("imported", false);
    return j;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed judgment: ") + e.what());
  }
}

// --- store -------------------------------------------------------------------

AnnotationStore::AnnotationStore(std::vector<AnnotationTask> tasks,
                                 std::optional<std::filesystem::path> journal)
    : journal_(std::move(journal)) {
  for (auto& t : tasks) add_task(std::move(t));
  if (!journal_ || !std::filesystem::exists(*journal_)) return;
  std::ifstream in(*journal_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ExpertJudgment j = judgment_from_json(json::parse(line));
    for (auto& prev : judgments_)
      if (prev.task_id == j.task_id && prev.annotator == j.annotator) prev.current = false;
    j.current = true;
    judgments_.push_back(std::move(j));
  }
}

bool AnnotationStore::add_task(AnnotationTask task) {
  std::unique_lock lock(mutex_);
  if (task_index_.count(task.id)) return false;
  task_index_[task.id] = tasks_.size();
  tasks_.push_back(std::move(task));
  return true;
}

std::vector<AnnotationTask> AnnotationStore::tasks() const {
  std::shared_lock lock(mutex_);
  return tasks_;
}

std::optional<AnnotationTask> AnnotationStore::task(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = task_index_.find(id);
  if (it == task_index_.end()) return std::nullopt;
  return tasks_[it->second];
}

std::size_t AnnotationStore::size() const {
  std::shared_lock lock(mutex_);
  return judgments_.size();
}

ExpertJudgment AnnotationStore::append_locked(ExpertJudgment j) {
  int version = 0;
  for (auto& prev : judgments_) {
    if (prev.task_id == j.task_id && prev.annotator == j.annotator) {
      version = std::max(version, prev.version);
      prev.current = false;
    }
  }
  j.version = version + 1;
  j.current = true;
  if (j.submitted_at.empty()) j.submitted_at = now_utc();
  if (journal_) {
    std::ofstream out(*journal_, std::ios::app);
    if (!out) throw ValidationError("cannot append to journal " + journal_->string());
    out << to_json(j).dump() << '\n';
  }
  judgments_.push_back(j);
  return j;
}

ExpertJudgment AnnotationStore::submit(ExpertJudgment j) {
  std::unique_lock lock(mutex_);
  auto it = task_index_.find(j.task_id);
  if (it == task_index_.end()) throw CorpusError("unknown task " + j.task_id);
  validate(j, tasks_[it->second]);
  return append_locked(std::move(j));
}

std::vector<ExpertJudgment> AnnotationStore::history(const std::string& task_id,
                                                     const std::string& annotator) const {
  std::shared_lock lock(mutex_);
  std::vector<ExpertJudgment> out;
  for (const auto& j : judgments_)
    if (j.task_id == task_id && (annotator.empty() || j.annotator == annotator)) out.push_back(j);
  return out;
}

const ExpertJudgment* AnnotationStore::current_locked(const std::string& task_id,
                                                      const std::string& annotator) const {
  const ExpertJudgment* latest = nullptr;
  for (const auto& j : judgments_) {
    if (j.task_id != task_id || !j.current) continue;
    if (!annotator.empty() && j.annotator != annotator) continue;
    latest = &j;
  }
  return latest;
}

Export AnnotationStore::export_annotations(judge::Criterion criterion,
                                           const std::string& annotator) const {
  std::shared_lock lock(mutex_);
  Export e;
  e.vector.judge_id = annotator.empty() ? "expert" : annotator;
  e.vector.criterion = std::string(judge::to_string(criterion));
  e.vector.mode = "human";
  for (const auto& t : tasks_) {
    if (t.presentation != Presentation::kRationalesOnly) continue;
    const std::string key = t.case_id + "|" + std::string(judge::to_string(t.source));
    const ExpertJudgment* j = current_locked(t.id, annotator);
    const auto& g = !j ? std::nullopt
                       : (criterion == judge::Criterion::kSupport ? j->global_support
                                                                  : j->global_sufficiency);
    if (!g) {
      e.missing.push_back(key);
      continue;
    }
    e.vector.keys.push_back(key);
    e.vector.labels.push_back(judge::binary(g->answer));
  }
  return e;
}

int AnnotationStore::import_table(const std::filesystem::path& path, judge::Criterion criterion,
                                  const std::string& column, const std::string& annotator) {
  const auto vectors =
      agreement::read_judgment_table(path, std::string(judge::to_string(criterion)), "human");
  auto it = std::find_if(vectors.begin(), vectors.end(),
                         [&](const agreement::JudgmentVector& v) { return v.judge_id == column; });
  if (it == vectors.end()) throw ValidationError("table has no column '" + column + "'");
  const bool support = criterion == judge::Criterion::kSupport;

  int imported = 0;
  for (std::size_t i = 0; i < it->keys.size(); ++i) {
    const std::string& key = it->keys[i];
    const auto bar = key.find('|');
    const std::string case_id = key.substr(0, bar);
    const judge::Source source = judge::source_from_string(key.substr(bar + 1));
    AnnotationTask t;
    t.case_id = case_id;
    t.source = source;
    t.id = fmt::format("{}:{}:R", case_id, judge::to_string(source));
    t.empty_set = true;
    add_task(t);

    std::unique_lock lock(mutex_);
    ExpertJudgment j;
    if (const ExpertJudgment* prev = current_locked(t.id, annotator)) j = *prev;
    j.task_id = t.id;
    j.annotator = annotator;
    j.imported = true;
    j.submitted_at.clear();
    const int label = it->labels[i];
    GlobalJudgment g;
    g.answer = support ? (label ? judge::Answer::kSupport : judge::Answer::kDoNotSupport)
                       : (label ? judge::Answer::kSufficient : judge::Answer::kInsufficient);
    (support ? j.global_support : j.global_sufficiency) = g;
    validate(j, tasks_[task_index_.at(t.id)]);
    append_locked(std::move(j));
    ++imported;
  }
  return imported;
}

// --- HTTP --------------------------------------------------------------------

AnnotationServer::AnnotationServer(AnnotationStore& store, std::string token)
    : store_(store), token_(std::move(token)), server_(std::make_unique<httplib::Server>()) {
  auto authorized = [this](const httplib::Request& req, httplib::Response& res) {
    if (token_.empty() || req.get_header_value("Authorization") == "Bearer " + token_) return true;
    res.status = 401;
    res.set_content(json{{"error", "missing or wrong token"}}.dump(), "application/json");
    return false;
  };
  auto reply = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };

  server_->Get("/tasks", [=, this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    json out = json::array();
    for (const auto& t : store_.tasks()) {
      out.push_back({{"id", t.id},
                     {"case_id", t.case_id},
                     {"source", judge::to_string(t.source)},
                     {"article", t.article},
                     {"presentation", presentation_name(t.presentation)},
                     {"units", t.units.size()},
                     {"empty_set", t.empty_set}});
    }
    reply(res, 200, out);
  });

  server_->Get(R"(/tasks/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    const auto t = store_.task(req.matches[1]);
    if (!t) return reply(res, 404, {{"error", "unknown task " + std::string(req.matches[1])}});
    reply(res, 200, to_json(*t));
  });

  server_->Post("/judgments", [=, this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    try {
      ExpertJudgment j = judgment_from_json(json::parse(req.body));
      j.imported = false;
      j.version = 0;
      reply(res, 201, to_json(store_.submit(std::move(j))));
    } catch (const json::parse_error& e) {
      reply(res, 400, {{"error", std::string("invalid JSON: ") + e.what()}});
    } catch (const ValidationError& e) {
      reply(res, 400, {{"error", e.what()}});
    } catch (const CorpusError& e) {
      reply(res, 404, {{"error", e.what()}});
    }
  });

  server_->Get("/export", [=, this](const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    try {
      const auto criterion = judge::criterion_from_string(req.get_param_value("criterion"));
      const Export e = store_.export_annotations(criterion, req.get_param_value("annotator"));
      reply(res, 200,
            {{"judge_id", e.vector.judge_id},
             {"criterion", e.vector.criterion},
             {"keys", e.vector.keys},
             {"labels", e.vector.labels},
             {"missing", e.missing}});
    } catch (const ValidationError& e) {
      reply(res, 400, {{"error", e.what()}});
    }
  });
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind_to_any_port(const std::string& host) {
  return server_->bind_to_any_port(host);
}

bool AnnotationServer::bind(const std::string& host, int port) {
  return server_->bind_to_port(host, port);
}

void AnnotationServer::listen_after_bind() { server_->listen_after_bind(); }

void AnnotationServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace inteval::annotate

#pragma once

// Expert annotation service: task construction, an append-only judgment
// store and its HTTP front end.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "inteval/agreement.hpp"
#include "inteval/judge.hpp"
#include "inteval/types.hpp"

namespace httplib {
class Server;
}

namespace inteval::annotate {

enum class Presentation { kRationalesOnly, kHighlightedFullText };

struct RationaleUnit {
  Span span;
  std::string text;
};

struct AnnotationTask {
  std::string id;
  std::string case_id;
  judge::Source source = judge::Source::kIsr;
  int article = 0;
  Presentation presentation = Presentation::kRationalesOnly;
  std::vector<RationaleUnit> units;
  std::string rendered;
  bool empty_set = false;
};

enum class LocalAnswer { kSupports, kDoNotSupport };
enum class Subcategory {
  kRelevantButUnsupportive,
  kSupportsContrary,
  kIrrelevant,
  kIncompleteConflict,
};

struct GlobalJudgment {
  judge::Answer answer = judge::Answer::kSupport;
  std::optional<judge::Confidence> confidence;
};

struct LocalJudgment {
  std::size_t unit = 0;
  LocalAnswer answer = LocalAnswer::kSupports;
  std::optional<Subcategory> subcategory;
  bool has_confidence = false;  // set when a submission carried one (rejected)
};

struct ExpertJudgment {
  std::string task_id;
  std::string annotator;
  std::optional<GlobalJudgment> global_support;
  std::optional<GlobalJudgment> global_sufficiency;
  std::vector<LocalJudgment> local_support;
  std::optional<judge::Answer> ex_post_sufficiency;
  std::string started_at;
  std::string submitted_at;
  // Assigned by the store.
  int version = 0;
  bool current = false;
  // Imported from a published table; confidence may be absent.
  bool imported = false;
};

// Maximal runs of highlighted tokens; touching spans form one unit, any gap
// starts a new one. Unit text is the covered tokens joined by spaces.
std::vector<RationaleUnit> rationale_units(const CaseDocument& doc, const std::vector<Span>& spans);

judge::Source source_of(Technique t);
int primary_article(const CaseDocument& doc);

// One RATIONALES_ONLY task per rationale set, plus a HIGHLIGHTED_FULL_TEXT
// task per set when `highlighted` is true.
std::vector<AnnotationTask> create_tasks(const std::map<std::string, CaseDocument>& docs,
                                         const std::vector<RationaleSet>& archive,
                                         bool highlighted = false);

// Throws ValidationError describing the first schema violation.
void validate(const ExpertJudgment& j, const AnnotationTask& task);

nlohmann::json to_json(const AnnotationTask& t);
nlohmann::json to_json(const ExpertJudgment& j);
// Throws ValidationError on malformed or unknown fields.
ExpertJudgment judgment_from_json(const nlohmann::json& j);
AnnotationTask task_from_json(const nlohmann::json& j);

struct Export {
  agreement::JudgmentVector vector;
  std::vector<std::string> missing;  // task keys without a judgment
};

class AnnotationStore {
 public:
  // With a journal path, judgments are appended to it and replayed on start.
  explicit AnnotationStore(std::vector<AnnotationTask> tasks,
                           std::optional<std::filesystem::path> journal = std::nullopt);

  std::vector<AnnotationTask> tasks() const;
  std::optional<AnnotationTask> task(const std::string& id) const;
  bool add_task(AnnotationTask task);

  // Validates, assigns the next version for (task, annotator) and appends.
  ExpertJudgment submit(ExpertJudgment j);
  std::vector<ExpertJudgment> history(const std::string& task_id,
                                      const std::string& annotator) const;
  std::size_t size() const;

  // Binary labels of the current judgments on RATIONALES_ONLY tasks, keyed
  // "case_id|SOURCE" in task order. An empty annotator takes the latest
  // submission of any annotator.
  Export export_annotations(judge::Criterion criterion, const std::string& annotator = "") const;

  // Loads one annotator column of a judgment table (see
  // agreement::read_judgment_table) as imported judgments, creating empty
  // RATIONALES_ONLY tasks for unknown (case, source) pairs.
  int import_table(const std::filesystem::path& path, judge::Criterion criterion,
                   const std::string& column, const std::string& annotator);

 private:
  ExpertJudgment append_locked(ExpertJudgment j);
  const ExpertJudgment* current_locked(const std::string& task_id,
                                       const std::string& annotator) const;

  mutable std::shared_mutex mutex_;
  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> task_index_;
  std::vector<ExpertJudgment> judgments_;
  std::optional<std::filesystem::path> journal_;
};

// HTTP front end:
//   GET  /tasks                 task summaries
//   GET  /tasks/{id}            full task payload
//   POST /judgments             submit an ExpertJudgment (201, 400, 404)
//   GET  /export?criterion=...  binary vector for the agreement module
// Every request must carry "Authorization: Bearer <token>" when a token is set.
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, std::string token);
  ~AnnotationServer();

  int bind_to_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  void listen_after_bind();  // blocks until stop()
  void stop();

 private:
  AnnotationStore& store_;
  std::string token_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace inteval::annotate

#pragma once

// LLM-as-a-judge panel: prompt rendering, verdict parsing, temperature
// majority vote and the chat-completion clients.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace inteval::judge {

enum class Source { kMarc, kIsr, kExpertA };
enum class Criterion { kSupport, kSufficiency };
enum class ShotMode { kZero, kFew };
enum class Answer { kSupport, kDoNotSupport, kSufficient, kInsufficient };
enum class Confidence { kLow, kMedium, kHigh };

std::string_view to_string(Source s);
std::string_view to_string(Criterion c);
std::string_view to_string(ShotMode m);
std::string_view to_string(Answer a);  // as written in prompts: "Do Not Support"
std::string_view to_string(Confidence c);
Source source_from_string(std::string_view s);
Criterion criterion_from_string(std::string_view s);
ShotMode shot_mode_from_string(std::string_view s);  // "zero"/"single" or "few"
// Accepts prompt spellings and table spellings ("Not support").
Answer answer_from_string(std::string_view s);
Confidence confidence_from_string(std::string_view s);
Criterion criterion_of(Answer a);
// Positive class of each criterion (SUPPORT / SUFFICIENT) maps to 1.
int binary(Answer a);

struct Shot {
  std::string case_id;
  std::vector<std::string> rationales;
  Answer answer = Answer::kSupport;
};

struct JudgeTask {
  std::string case_id;
  Source source = Source::kIsr;
  Criterion criterion = Criterion::kSupport;
  int article = 6;
  std::vector<std::string> rationale_texts;
  std::vector<Shot> shots;  // empty or exactly four

  ShotMode mode() const { return shots.empty() ? ShotMode::kZero : ShotMode::kFew; }
};

// Text of Article 6 or 8 with its paragraphs, read from <data_dir>/articles.
const std::string& article_text(int article);
void set_data_dir(const std::filesystem::path& dir);

// Throws ContractViolation for a few-shot task without exactly four shots or
// an article other than 6 and 8.
std::string build_prompt(const JudgeTask& task);

struct Verdict {
  bool parsed = false;
  std::optional<Answer> answer;
  std::optional<Confidence> confidence;
  std::string explanation;
  double temperature = 0.0;
  std::string judge_id;
  std::string raw_response;
  int attempts = 0;
  std::string error;  // transport failure, when no response was obtained
};

// Tolerates whitespace, case and markdown bold; answers outside the
// criterion's closed set yield parsed == false.
Verdict parse_verdict(const std::string& raw, Criterion criterion);

struct PanelResult {
  std::string case_id;
  Source source = Source::kIsr;
  Criterion criterion = Criterion::kSupport;
  ShotMode mode = ShotMode::kZero;
  std::string judge_id;
  std::vector<Verdict> verdicts;  // one per temperature, in configured order
  std::optional<Answer> majority;  // unset = UNAVAILABLE
  int dissent = 0;
  std::optional<Confidence> median_confidence;

  bool unavailable() const { return !majority.has_value(); }
  std::string key() const;
};

// Majority over parsed verdicts. A tie (possible once a verdict failed to
// parse) goes to the parsed verdict with the lowest temperature.
void vote(PanelResult& result);

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  // Returns the raw completion text; throws HarnessError on transport failure.
  virtual std::string complete(const std::string& prompt, double temperature,
                               int attempt) = 0;
  virtual std::string id() const = 0;
};

struct Endpoint {
  std::string id;
  std::string base_url;  // e.g. http://localhost:8000
  std::string model;
  std::string auth_env;  // environment variable holding the bearer token
  std::string path = "/v1/chat/completions";
  int max_tokens = 512;
  int timeout_seconds = 120;
};

std::vector<Endpoint> load_endpoints(const std::filesystem::path& path);

// OpenAI-style chat-completion endpoint with a single user message.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(Endpoint endpoint);
  std::string complete(const std::string& prompt, double temperature, int attempt) override;
  std::string id() const override { return endpoint_.id; }

 private:
  Endpoint endpoint_;
};

// Stores raw responses keyed by (judge, temperature, attempt, prompt). With no
// inner client it replays only and a miss is a HarnessError.
class CachingClient : public ChatClient {
 public:
  CachingClient(std::filesystem::path dir, std::string judge_id,
                std::shared_ptr<ChatClient> inner = nullptr);
  std::string complete(const std::string& prompt, double temperature, int attempt) override;
  std::string id() const override { return judge_id_; }

 private:
  std::filesystem::path file_for(const std::string& prompt, double temperature,
                                 int attempt) const;
  std::filesystem::path dir_;
  std::string judge_id_;
  std::shared_ptr<ChatClient> inner_;
};

// Answers through a callback; used for offline runs and tests.
class FunctionClient : public ChatClient {
 public:
  using Fn = std::function<std::string(const std::string&, double, int)>;
  FunctionClient(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string complete(const std::string& prompt, double temperature, int attempt) override {
    return fn_(prompt, temperature, attempt);
  }
  std::string id() const override { return id_; }

 private:
  std::string id_;
  Fn fn_;
};

struct PanelConfig {
  std::vector<double> temperatures{0.05, 0.5, 1.0};
  int max_retries = 2;
  int fan_out = 4;
};

// One PanelResult per task, in task order.
std::vector<PanelResult> run_panel(const std::vector<JudgeTask>& tasks, ChatClient& client,
                                   const PanelConfig& cfg = {});

// --- task grid ----------------------------------------------------------------

struct GridCase {
  std::string case_id;
  int article = 6;
  std::map<Source, std::vector<std::string>> rationales;
};

// Reference answers used as few-shot labels, keyed by (case_id, source, criterion).
using ShotLabels = std::map<std::tuple<std::string, Source, Criterion>, Answer>;

// Four examples for `task_case` from other cases of the same article, source
// and criterion, taken cyclically after the judged case in input order.
std::vector<Shot> select_shots(const std::vector<GridCase>& cases, std::size_t task_case,
                               Source source, Criterion criterion, const ShotLabels& labels);

// Every (case, source, criterion, shot mode) combination.
std::vector<JudgeTask> build_grid(const std::vector<GridCase>& cases, const ShotLabels& labels);

// Tasks as JSON lines and panel results as JSON lines.
void write_tasks(const std::vector<JudgeTask>& tasks, const std::filesystem::path& path);
std::vector<JudgeTask> read_tasks(const std::filesystem::path& path);
void write_panel_results(const std::vector<PanelResult>& results, const std::filesystem::path& path);
std::vector<PanelResult> read_panel_results(const std::filesystem::path& path);

}  // namespace inteval::judge
